#include "uareg/synth.hpp"

#include "uareg/audio.hpp"
#include "uareg/augment.hpp"
#include "uareg/common.hpp"
#include "uareg/rng.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace fs = std::filesystem;

namespace uareg {

SynthConfig SynthConfig::perturbed_task(std::string out_dir, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.out_dir = std::move(out_dir);
    cfg.seed = seed;
    cfg.freq_jitter = 0.03;
    cfg.amp_jitter = 0.5;
    cfg.snr_lo_db = 0.0;
    cfg.snr_hi_db = 15.0;
    return cfg;
}

namespace {

void validate(const SynthConfig& cfg) {
    if (cfg.out_dir.empty()) throw Error("synth: out_dir is required");
    if (cfg.sample_rate < 8.0) throw Error("synth: sample rate too low");
    if (cfg.segment_s <= 0.0) throw Error("synth: segment length must be positive");
    if (cfg.train_records < 2 || cfg.test_records < 2)
        throw Error("synth: need at least two records per split");
    if (cfg.tone_lo_hz <= 0.0 || cfg.tone_hi_hz <= cfg.tone_lo_hz ||
        cfg.tone_hi_hz >= cfg.sample_rate / 2.0)
        throw Error("synth: tones must satisfy 0 < lo < hi < Nyquist");
    if (cfg.freq_jitter < 0.0 || cfg.freq_jitter >= 0.5 || cfg.amp_jitter < 0.0 ||
        cfg.amp_jitter >= 1.0)
        throw Error("synth: jitter fractions out of range");
    if (cfg.snr_lo_db > cfg.snr_hi_db) throw Error("synth: snr_lo_db must be <= snr_hi_db");
}

std::vector<float> render_record(const SynthConfig& cfg, int cls, std::uint64_t stream) {
    Rng rng = Rng(cfg.seed).split(stream);
    const double base = cls == 0 ? cfg.tone_lo_hz : cfg.tone_hi_hz;
    const double f = base * (1.0 + cfg.freq_jitter * rng.uniform(-1.0, 1.0));
    const double a = cfg.amplitude * (1.0 + cfg.amp_jitter * rng.uniform(-1.0, 1.0));
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    const auto n = static_cast<std::size_t>(seconds_to_samples(cfg.segment_s, cfg.sample_rate));
    std::vector<float> x(n);
    const double w = 2.0 * std::numbers::pi * f / cfg.sample_rate;
    for (std::size_t i = 0; i < n; ++i)
        x[i] = static_cast<float>(a * std::sin(w * static_cast<double>(i) + phase) +
                                  cfg.noise_sd * rng.normal());

    if (std::isfinite(cfg.snr_lo_db)) {
        AudioSegment seg;
        seg.samples = std::move(x);
        seg.sample_rate = cfg.sample_rate;
        seg.duration_s = cfg.segment_s;
        const double snr = rng.uniform(cfg.snr_lo_db, cfg.snr_hi_db);
        x = add_noise_snr(seg, snr, rng).samples;
    }
    return x;
}

} // namespace

SynthResult synth_dataset(const SynthConfig& cfg) {
    validate(cfg);
    const std::array<const char*, 2> class_dirs = {"tone-lo", "tone-hi"};
    const std::array<const char*, 2> stems = {"lo", "hi"};
    for (const char* d : class_dirs) fs::create_directories(fs::path(cfg.out_dir) / d);

    SplitSpec spec;
    spec.default_split = "train";
    nlohmann::json split_json;

    // Global record index feeds the per-record RNG stream, so adding records
    // to one split never reshuffles the audio of another.
    std::uint64_t stream = 0;
    const auto emit = [&](int count, const char* split) {
        for (int i = 0; i < count; ++i, ++stream) {
            const int cls = i % 2;
            char name[32];
            std::snprintf(name, sizeof(name), "%s-%04llu", stems[static_cast<std::size_t>(cls)],
                          static_cast<unsigned long long>(stream));
            const fs::path path =
                fs::path(cfg.out_dir) / class_dirs[static_cast<std::size_t>(cls)] /
                (std::string(name) + ".wav");
            save_wav_16bit(path.string(), render_record(cfg, cls, stream), cfg.sample_rate);
            if (std::string(split) == "test") {
                spec.assign[name] = "test";
                split_json[name] = "test";
            }
        }
    };
    emit(cfg.train_records, "train");
    emit(cfg.test_records, "test");
    split_json["*"] = "train";

    SynthResult out;
    out.wav_root = cfg.out_dir;
    out.split_path = (fs::path(cfg.out_dir) / "split.json").string();
    {
        std::ofstream f(out.split_path);
        if (!f) throw Error("cannot write split spec: " + out.split_path);
        f << split_json.dump(2) << '\n';
    }

    std::vector<std::pair<std::string, std::string>> labeled_dirs;
    for (std::size_t c = 0; c < class_dirs.size(); ++c)
        labeled_dirs.emplace_back(class_dirs[c],
                                  (fs::path(cfg.out_dir) / class_dirs[c]).string());
    BuildOptions opts;
    opts.seg_len_s = cfg.segment_s;
    opts.overlap_s = 0.0;
    opts.val_fraction = cfg.val_fraction;
    opts.seed = cfg.seed;
    out.manifest = build_manifest(labeled_dirs, spec, opts, nullptr);
    out.manifest_path = (fs::path(cfg.out_dir) / "manifest.jsonl").string();
    save_manifest(out.manifest, out.manifest_path);
    return out;
}

} // namespace uareg
