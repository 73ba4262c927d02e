#pragma once

#include "uareg/audio.hpp"
#include "uareg/dsp.hpp"
#include "uareg/manifest.hpp"
#include "uareg/rng.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace uareg {

enum class FeatureKind { stft, mel, bark, cqt };

FeatureKind feature_kind_from_name(const std::string& name);
const char* feature_kind_name(FeatureKind kind);

// Everything that determines a feature matrix besides the audio itself; its
// hash keys the on-disk feature cache.
struct FeatureConfig {
    FeatureKind kind = FeatureKind::mel;
    FrameConfig frame;
    BandConfig band; // the CQT reads f_hi as its top analysis frequency
    std::size_t n_filters = 300;
    int cqt_octave_resolution = 30;
    double cqt_f_base = 10.0;
    int cqt_fps = 30;

    nlohmann::json to_json() const;
    static FeatureConfig from_json(const nlohmann::json& j);
    std::string hash(double sample_rate) const;
};

// Dispatch to the right extractor; meta comes back fully filled, including
// the record id and offset carried by the segment.
Spectrogram extract_feature(const AudioSegment& segment, const FeatureConfig& cfg);

// Serves features for manifest entries. Source audio and clean features are
// memoized in RAM; clean features can additionally persist in cache_dir.
// Noisy features are always freshly extracted, so every call sees a new
// noise realization.
class DatasetProvider {
public:
    DatasetProvider(Manifest manifest, FeatureConfig feature, std::string audio_root,
                    double segment_s, std::string cache_dir = "");

    const Manifest& manifest() const { return manifest_; }
    const FeatureConfig& feature_config() const { return feature_; }
    const std::vector<std::string>& class_names() const { return manifest_.class_names; }
    double segment_s() const { return segment_s_; }

    std::vector<std::size_t> split_indices(const std::string& split) const;
    const ManifestEntry& entry(std::size_t i) const { return manifest_.entries.at(i); }
    int label(std::size_t i) const;

    const Matrix& feature(std::size_t i);
    Matrix noisy_feature(std::size_t i, double snr_db, Rng& rng);

    // Cut the entry's waveform segment (RAM-cached source file).
    AudioSegment segment(std::size_t i);

private:
    const AudioSignal& source(const std::string& path);
    std::string cache_path(const ManifestEntry& e, double sample_rate) const;

    Manifest manifest_;
    FeatureConfig feature_;
    std::string audio_root_;
    double segment_s_;
    std::string cache_dir_;
    std::map<std::string, AudioSignal> audio_cache_;
    std::map<std::size_t, Matrix> feature_cache_;
};

} // namespace uareg
