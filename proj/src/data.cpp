#include "uareg/data.hpp"

#include "uareg/augment.hpp"
#include "uareg/common.hpp"
#include "uareg/feature_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

namespace uareg {

FeatureKind feature_kind_from_name(const std::string& name) {
    if (name == "stft") return FeatureKind::stft;
    if (name == "mel") return FeatureKind::mel;
    if (name == "bark") return FeatureKind::bark;
    if (name == "cqt") return FeatureKind::cqt;
    throw Error("unknown feature kind '" + name + "' (expected stft|mel|bark|cqt)");
}

const char* feature_kind_name(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::stft: return "stft";
        case FeatureKind::mel: return "mel";
        case FeatureKind::bark: return "bark";
        case FeatureKind::cqt: return "cqt";
    }
    return "unknown";
}

nlohmann::json FeatureConfig::to_json() const {
    return {{"kind", feature_kind_name(kind)},
            {"frame_len_s", frame.frame_len_s},
            {"frame_shift_s", frame.frame_shift_s},
            {"window", frame.window == WindowKind::hann ? "hann" : "rectangular"},
            {"f_lo", band.f_lo},
            {"f_hi", band.f_hi},
            {"n_filters", n_filters},
            {"cqt_octave_resolution", cqt_octave_resolution},
            {"cqt_f_base", cqt_f_base},
            {"cqt_fps", cqt_fps}};
}

FeatureConfig FeatureConfig::from_json(const nlohmann::json& j) {
    FeatureConfig c;
    c.kind = feature_kind_from_name(j.at("kind").get<std::string>());
    c.frame.frame_len_s = j.at("frame_len_s").get<double>();
    c.frame.frame_shift_s = j.at("frame_shift_s").get<double>();
    c.frame.window = j.at("window").get<std::string>() == "rectangular" ? WindowKind::rectangular
                                                                        : WindowKind::hann;
    c.band.f_lo = j.at("f_lo").get<double>();
    c.band.f_hi = j.at("f_hi").get<double>();
    c.n_filters = j.at("n_filters").get<std::size_t>();
    c.cqt_octave_resolution = j.at("cqt_octave_resolution").get<int>();
    c.cqt_f_base = j.at("cqt_f_base").get<double>();
    c.cqt_fps = j.at("cqt_fps").get<int>();
    return c;
}

std::string FeatureConfig::hash(double sample_rate) const {
    std::ostringstream text;
    text << to_json().dump() << "|sr=" << sample_rate;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text.str()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Spectrogram extract_feature(const AudioSegment& segment, const FeatureConfig& raw_cfg) {
    FeatureConfig cfg = raw_cfg;
    // f_hi <= 0 means "up to Nyquist"; concrete sample rates are only known here.
    if (cfg.band.f_hi <= 0.0) cfg.band.f_hi = segment.sample_rate / 2.0;
    Spectrogram out;
    switch (cfg.kind) {
        case FeatureKind::stft:
            out = stft_spectrogram(segment, cfg.frame, cfg.band);
            break;
        case FeatureKind::mel:
        case FeatureKind::bark: {
            const FrameGrid grid = frame_grid(static_cast<std::int64_t>(segment.samples.size()),
                                              segment.sample_rate, cfg.frame.frame_len_s,
                                              cfg.frame.frame_shift_s);
            const double delta_f = segment.sample_rate / static_cast<double>(grid.n_per_frame);
            const auto n_bins =
                static_cast<std::size_t>(std::llround(grid.n_per_frame / 2.0));
            const FilterBank fb =
                build_filterbank(cfg.kind == FeatureKind::mel ? "mel" : "bark", cfg.n_filters,
                                 cfg.band, delta_f, n_bins);
            out = filterbank_spectrogram(segment, fb, cfg.frame, cfg.band);
            break;
        }
        case FeatureKind::cqt: {
            CqtConfig cq;
            cq.octave_resolution = cfg.cqt_octave_resolution;
            cq.f_base = cfg.cqt_f_base;
            cq.f_max = cfg.band.f_hi;
            cq.fps = cfg.cqt_fps;
            out = cqt_spectrogram(segment, cq);
            break;
        }
    }
    // Hash the unresolved config so the provider's cache key matches.
    out.meta.config_hash = raw_cfg.hash(segment.sample_rate);
    return out;
}

DatasetProvider::DatasetProvider(Manifest manifest, FeatureConfig feature, std::string audio_root,
                                 double segment_s, std::string cache_dir)
    : manifest_(std::move(manifest)), feature_(std::move(feature)),
      audio_root_(std::move(audio_root)), segment_s_(segment_s), cache_dir_(std::move(cache_dir)) {
    if (manifest_.entries.empty()) throw Error("dataset has no manifest entries");
    if (segment_s_ <= 0.0) throw Error("segment length must be positive");
    if (!cache_dir_.empty()) std::filesystem::create_directories(cache_dir_);
}

std::vector<std::size_t> DatasetProvider::split_indices(const std::string& split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < manifest_.entries.size(); ++i)
        if (manifest_.entries[i].split == split) out.push_back(i);
    return out;
}

int DatasetProvider::label(std::size_t i) const {
    return manifest_.label_index(entry(i).label);
}

const AudioSignal& DatasetProvider::source(const std::string& path) {
    auto it = audio_cache_.find(path);
    if (it != audio_cache_.end()) return it->second;
    std::filesystem::path p(path);
    if (p.is_relative() && !audio_root_.empty()) p = std::filesystem::path(audio_root_) / p;
    return audio_cache_.emplace(path, load_wav(p.string())).first->second;
}

AudioSegment DatasetProvider::segment(std::size_t i) {
    const ManifestEntry& e = entry(i);
    AudioSegment seg = cut_segment(source(e.path), e.offset_s, segment_s_);
    seg.record_id = e.record_id;
    return seg;
}

std::string DatasetProvider::cache_path(const ManifestEntry& e, double sample_rate) const {
    std::string id = e.record_id;
    for (char& ch : id)
        if (ch == '/' || ch == '\\') ch = '-';
    std::ostringstream name;
    name << id << "_" << std::llround(e.offset_s * 1000.0) << "ms_" << feature_.hash(sample_rate)
         << ".uaspec";
    return (std::filesystem::path(cache_dir_) / name.str()).string();
}

const Matrix& DatasetProvider::feature(std::size_t i) {
    auto it = feature_cache_.find(i);
    if (it != feature_cache_.end()) return it->second;

    AudioSegment seg = segment(i);
    if (!cache_dir_.empty()) {
        const std::string path = cache_path(entry(i), seg.sample_rate);
        if (std::filesystem::exists(path)) {
            Spectrogram cached = load_feature(path);
            if (cached.meta.config_hash == feature_.hash(seg.sample_rate))
                return feature_cache_.emplace(i, std::move(cached.values)).first->second;
        }
        Spectrogram spec = extract_feature(seg, feature_);
        save_feature(spec, path);
        return feature_cache_.emplace(i, std::move(spec.values)).first->second;
    }
    return feature_cache_.emplace(i, extract_feature(seg, feature_).values).first->second;
}

Matrix DatasetProvider::noisy_feature(std::size_t i, double snr_db, Rng& rng) {
    const AudioSegment noisy = add_noise_snr(segment(i), snr_db, rng);
    return extract_feature(noisy, feature_).values;
}

} // namespace uareg
