#pragma once

#include "uareg/manifest.hpp"

#include <cstdint>
#include <limits>
#include <string>

namespace uareg {

// Two-class tone corpus, separable by construction: every record is one
// segment holding a sine at its class frequency over a white noise floor.
// Jitter and per-record SNR produce the label-preserving perturbed variant
// used to measure robustness benefits.
struct SynthConfig {
    std::string out_dir;
    double sample_rate = 2000.0;
    double segment_s = 10.0;
    int train_records = 200; // across both classes; alternating assignment
    int test_records = 50;
    double tone_lo_hz = 300.0;
    double tone_hi_hz = 600.0;
    double amplitude = 0.5;
    double noise_sd = 0.05;
    double freq_jitter = 0.0; // relative, drawn once per record
    double amp_jitter = 0.0;  // relative, drawn once per record
    // Extra white noise at a per-record SNR from this range; +inf disables.
    double snr_lo_db = std::numeric_limits<double>::infinity();
    double snr_hi_db = std::numeric_limits<double>::infinity();
    double val_fraction = 0.15;
    std::uint64_t seed = 1;

    // Harder, label-preserving variant of the same task.
    static SynthConfig perturbed_task(std::string out_dir, std::uint64_t seed);
};

struct SynthResult {
    std::string wav_root;
    std::string split_path;
    std::string manifest_path;
    Manifest manifest;
};

// Writes WAV files under out_dir/<class>/, a record split spec, and a
// manifest. Deterministic in the seed, independent of generation order.
SynthResult synth_dataset(const SynthConfig& cfg);

} // namespace uareg
