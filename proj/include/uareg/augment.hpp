#pragma once

#include "uareg/audio.hpp"
#include "uareg/dsp.hpp"
#include "uareg/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace uareg {

// Rectangular replacement region: a frames wide (time), b bins tall
// (frequency), top-left corner (t0, f0).
struct LmrPatch {
    std::int64_t a = 0;
    std::int64_t b = 0;
    std::int64_t t0 = 0;
    std::int64_t f0 = 0;
};

struct MixedSample {
    Matrix values;
    double lambda = 1.0; // weight of parent i
    int label_i = -1;
    int label_j = -1;
    bool has_patch = false;
    LmrPatch patch;
};

// Adds i.i.d. Gaussian noise with variance P_signal / 10^(snr_db/10).
// snr_db = +inf is the "clean" sentinel and returns the input unchanged.
AudioSegment add_noise_snr(const AudioSegment& segment, double snr_db, Rng& rng);

// Spectrogram-domain variant, off by default in training; useful for quick
// experiments without re-extracting features.
Matrix add_noise_snr(const Matrix& values, double snr_db, Rng& rng);

// a ~ U{1..W-1}, b ~ U{1..H-1}, corner uniform over placements that keep the
// patch inside a W (time) x H (frequency) spectrogram.
LmrPatch sample_lmr_patch(std::int64_t w, std::int64_t h, Rng& rng);

// Copy of x_i with the patch region replaced by x_j; lambda = 1 - a*b/(W*H).
MixedSample lmr_mix(const Matrix& x_i, const Matrix& x_j, const LmrPatch& patch, int label_i = -1,
                    int label_j = -1);

// Elementwise lambda*x_i + (1-lambda)*x_j, lambda ~ U(0,1) (or Beta(alpha,
// alpha) when beta_alpha > 0).
MixedSample mixup_mix(const Matrix& x_i, const Matrix& x_j, Rng& rng, int label_i = -1,
                      int label_j = -1, double beta_alpha = 0.0);

struct BatchMix {
    bool applied = false;             // result of the per-batch coin
    std::vector<MixedSample> samples; // size of the batch when applied
    std::vector<std::size_t> partner; // j chosen for each i
};

// One coin per batch: with probability p_lmr every sample is replaced by an
// LMR mix with a uniformly drawn partner j != i (with replacement across i).
// A singleton batch passes through with a warning when the coin fires.
BatchMix batch_policy(const std::vector<Matrix>& batch, const std::vector<int>& labels,
                      double p_lmr, Rng& rng, std::string* warning = nullptr);

} // namespace uareg
