#include "doctest.h"
#include "helpers.hpp"

#include "uareg/audio.hpp"
#include "uareg/common.hpp"
#include "uareg/data.hpp"
#include "uareg/feature_io.hpp"
#include "uareg/rng.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

using namespace uareg;
namespace fs = std::filesystem;

namespace {

AudioSegment tone_segment(double freq, double sr, double dur) {
    AudioSegment seg;
    seg.samples = testutil::make_tone(freq, sr, dur);
    seg.sample_rate = sr;
    seg.record_id = "seg";
    seg.duration_s = dur;
    return seg;
}

FeatureConfig base_config(FeatureKind kind, double f_lo, double f_hi, std::size_t n_filters) {
    FeatureConfig cfg;
    cfg.kind = kind;
    cfg.band.f_lo = f_lo;
    cfg.band.f_hi = f_hi;
    cfg.n_filters = n_filters;
    return cfg;
}

// Two labeled one-record corpora plus a manifest pointing into them.
struct MiniCorpus {
    testutil::TempDir dir{"data"};
    Manifest manifest;

    MiniCorpus() {
        // Frequencies whose period does not divide the 2 s hop, so different
        // offsets into one record yield genuinely different windows.
        save_wav_16bit(dir.sub("a0.wav"), testutil::make_tone(203.7, 2000.0, 4.0), 2000.0);
        save_wav_16bit(dir.sub("b0.wav"), testutil::make_tone(497.3, 2000.0, 4.0), 2000.0);
        manifest.class_names = {"a", "b"};
        manifest.entries = {
            {"a0.wav", 0.0, "a", "a0", "train"},
            {"a0.wav", 2.0, "a", "a0", "val"},
            {"b0.wav", 0.0, "b", "b0", "test"},
        };
    }
};

} // namespace

TEST_CASE("feature kind names round-trip") {
    for (const char* name : {"stft", "mel", "bark", "cqt"})
        CHECK(feature_kind_name(feature_kind_from_name(name)) == std::string(name));
    CHECK_THROWS_WITH_AS(feature_kind_from_name("mfcc"),
                         doctest::Contains("unknown feature kind 'mfcc'"), Error);
}

TEST_CASE("feature config survives a json round trip") {
    FeatureConfig cfg = base_config(FeatureKind::cqt, 5.0, 900.0, 64);
    cfg.frame.frame_len_s = 0.04;
    cfg.frame.frame_shift_s = 0.02;
    cfg.cqt_octave_resolution = 24;
    cfg.cqt_f_base = 8.0;
    cfg.cqt_fps = 25;

    const auto back = FeatureConfig::from_json(cfg.to_json());
    CHECK(back.kind == FeatureKind::cqt);
    CHECK(back.frame.frame_len_s == cfg.frame.frame_len_s);
    CHECK(back.frame.frame_shift_s == cfg.frame.frame_shift_s);
    CHECK(back.band.f_lo == cfg.band.f_lo);
    CHECK(back.band.f_hi == cfg.band.f_hi);
    CHECK(back.n_filters == cfg.n_filters);
    CHECK(back.cqt_octave_resolution == 24);
    CHECK(back.cqt_f_base == 8.0);
    CHECK(back.cqt_fps == 25);
    CHECK(back.hash(2000.0) == cfg.hash(2000.0));
}

TEST_CASE("config hashes separate every cache-relevant field") {
    const FeatureConfig cfg = base_config(FeatureKind::mel, 100.0, 1000.0, 40);
    const std::string h = cfg.hash(2000.0);
    CHECK(h.size() == 16);
    CHECK(h == cfg.hash(2000.0));

    CHECK(cfg.hash(4000.0) != h);
    FeatureConfig other = cfg;
    other.kind = FeatureKind::bark;
    CHECK(other.hash(2000.0) != h);
    other = cfg;
    other.n_filters = 41;
    CHECK(other.hash(2000.0) != h);
    other = cfg;
    other.band.f_hi = 999.0;
    CHECK(other.hash(2000.0) != h);
    other = cfg;
    other.frame.frame_shift_s = 0.02;
    CHECK(other.hash(2000.0) != h);
}

TEST_CASE("extract_feature dispatches to every extractor with full metadata") {
    AudioSegment seg = tone_segment(300.0, 2000.0, 10.0);
    seg.record_id = "rec-x";
    seg.offset_s = 7.5;

    const auto stft_cfg = base_config(FeatureKind::stft, 100.0, 1000.0, 40);
    const auto stft = extract_feature(seg, stft_cfg);
    CHECK(stft.values.rows == 399);
    CHECK(stft.values.cols == 50);
    CHECK(stft.meta.feature_kind == "stft");
    CHECK(stft.meta.record_id == "rec-x");
    CHECK(stft.meta.offset_s == 7.5);
    CHECK(stft.meta.config_hash == stft_cfg.hash(2000.0));

    const auto mel = extract_feature(seg, base_config(FeatureKind::mel, 100.0, 1000.0, 40));
    CHECK(mel.values.rows == 399);
    CHECK(mel.values.cols == 40);
    CHECK(mel.meta.feature_kind == "mel");

    const auto bark = extract_feature(seg, base_config(FeatureKind::bark, 100.0, 1000.0, 40));
    CHECK(bark.values.rows == 399);
    CHECK(bark.values.cols == 40);
    CHECK(bark.meta.feature_kind == "bark");

    // 1000/10 spans log2(100) octaves: floor(30 * 6.6438...) = 199 bins.
    const auto cqt = extract_feature(seg, base_config(FeatureKind::cqt, 0.0, 1000.0, 40));
    CHECK(cqt.values.rows == 299);
    CHECK(cqt.values.cols == 199);
    CHECK(cqt.meta.feature_kind == "cqt");
}

TEST_CASE("non-positive f_hi resolves to Nyquist at extraction time") {
    const AudioSegment seg = tone_segment(300.0, 2000.0, 10.0);
    auto open_cfg = base_config(FeatureKind::mel, 100.0, 0.0, 40);
    auto pinned_cfg = base_config(FeatureKind::mel, 100.0, 1000.0, 40);

    const auto open_spec = extract_feature(seg, open_cfg);
    const auto pinned_spec = extract_feature(seg, pinned_cfg);
    CHECK(open_spec.meta.band.f_hi == 1000.0);
    CHECK(open_spec.values.data == pinned_spec.values.data);

    // The cache key hashes the unresolved config, so "Nyquist" and "1000 Hz"
    // stay distinct keys even where they produce the same matrix.
    CHECK(open_spec.meta.config_hash == open_cfg.hash(2000.0));
    CHECK(open_spec.meta.config_hash != pinned_cfg.hash(2000.0));
}

TEST_CASE("provider exposes manifest structure") {
    MiniCorpus c;
    DatasetProvider provider(c.manifest, base_config(FeatureKind::mel, 50.0, 1000.0, 24),
                             c.dir.str(), 2.0);
    CHECK(provider.class_names() == std::vector<std::string>{"a", "b"});
    CHECK(provider.segment_s() == 2.0);
    CHECK(provider.split_indices("train") == std::vector<std::size_t>{0});
    CHECK(provider.split_indices("val") == std::vector<std::size_t>{1});
    CHECK(provider.split_indices("test") == std::vector<std::size_t>{2});
    CHECK(provider.split_indices("other").empty());
    CHECK(provider.label(0) == 0);
    CHECK(provider.label(2) == 1);
    CHECK(provider.entry(1).offset_s == 2.0);

    const AudioSegment seg = provider.segment(1);
    CHECK(seg.record_id == "a0");
    CHECK(seg.offset_s == 2.0);
    CHECK(seg.samples.size() == 4000);
}

TEST_CASE("provider construction validates its inputs") {
    MiniCorpus c;
    const auto cfg = base_config(FeatureKind::mel, 50.0, 1000.0, 24);
    CHECK_THROWS_WITH_AS(DatasetProvider(Manifest{}, cfg, c.dir.str(), 2.0),
                         doctest::Contains("no manifest entries"), Error);
    CHECK_THROWS_WITH_AS(DatasetProvider(c.manifest, cfg, c.dir.str(), 0.0),
                         doctest::Contains("segment length must be positive"), Error);

    Manifest broken = c.manifest;
    broken.entries[0].path = "missing.wav";
    DatasetProvider provider(broken, cfg, c.dir.str(), 2.0);
    CHECK_THROWS_AS(provider.feature(0), Error);
}

TEST_CASE("clean features are memoized in memory") {
    MiniCorpus c;
    DatasetProvider provider(c.manifest, base_config(FeatureKind::mel, 50.0, 1000.0, 24),
                             c.dir.str(), 2.0);
    const Matrix& first = provider.feature(0);
    CHECK(first.rows == 79);
    CHECK(first.cols == 24);
    const Matrix& second = provider.feature(0);
    CHECK(&first == &second);

    // Distinct entries on the same record differ (different audio windows).
    CHECK(provider.feature(1).data != first.data);
}

TEST_CASE("disk cache round-trips and is actually read back") {
    MiniCorpus c;
    const auto cfg = base_config(FeatureKind::mel, 50.0, 1000.0, 24);
    const std::string cache = c.dir.sub("cache");
    std::vector<float> original;
    std::string cached_file;
    {
        DatasetProvider provider(c.manifest, cfg, c.dir.str(), 2.0, cache);
        original = provider.feature(0).data;
        std::size_t n_files = 0;
        for (const auto& e : fs::directory_iterator(cache)) {
            cached_file = e.path().string();
            ++n_files;
        }
        REQUIRE(n_files == 1);
        CHECK(cached_file.find(".uaspec") != std::string::npos);
    }

    // Tamper with the cached payload; a fresh provider must serve the
    // tampered values, proving the disk copy is what it reads.
    Spectrogram spec = load_feature(cached_file);
    spec.values.data[0] += 1.0f;
    save_feature(spec, cached_file);
    {
        DatasetProvider provider(c.manifest, cfg, c.dir.str(), 2.0, cache);
        const Matrix& served = provider.feature(0);
        CHECK(served.data[0] == original[0] + 1.0f);
    }

    // A stale hash invalidates the file: the provider re-extracts and rewrites.
    spec.meta.config_hash = std::string(16, '0');
    spec.values.data[0] += 100.0f;
    save_feature(spec, cached_file);
    {
        DatasetProvider provider(c.manifest, cfg, c.dir.str(), 2.0, cache);
        CHECK(provider.feature(0).data == original);
    }
    CHECK(load_feature(cached_file).values.data == original);
}

TEST_CASE("noisy features resample the noise on every call") {
    MiniCorpus c;
    DatasetProvider provider(c.manifest, base_config(FeatureKind::mel, 50.0, 1000.0, 24),
                             c.dir.str(), 2.0);
    const Matrix& clean = provider.feature(0);
    Rng rng(7);
    const Matrix n1 = provider.noisy_feature(0, 10.0, rng);
    const Matrix n2 = provider.noisy_feature(0, 10.0, rng);
    CHECK(n1.rows == clean.rows);
    CHECK(n1.cols == clean.cols);
    CHECK(n1.data != clean.data);
    CHECK(n1.data != n2.data);

    // Infinite SNR is the clean path, bit for bit.
    const Matrix quiet = provider.noisy_feature(0, std::numeric_limits<double>::infinity(), rng);
    CHECK(quiet.data == clean.data);
}
