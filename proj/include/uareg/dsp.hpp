#pragma once

#include "uareg/audio.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace uareg {

// Row-major float matrix. Heavy math runs in double internally; storage is
// 32-bit to match the feature file format.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

    float& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    const float* row(std::size_t r) const { return data.data() + r * cols; }
    float* row(std::size_t r) { return data.data() + r * cols; }
};

enum class WindowKind { hann, rectangular };

struct FrameConfig {
    double frame_len_s = 0.05;
    double frame_shift_s = 0.025;
    WindowKind window = WindowKind::hann;
};

struct BandConfig {
    double f_lo = 0.0;
    double f_hi = 0.0;

    // Enforces 0 <= f_lo < f_hi <= sample_rate/2.
    void validate(double sample_rate) const;
};

struct CqtConfig {
    int octave_resolution = 30; // bins per octave
    double f_base = 10.0;       // geometric anchor; see README on bin counts
    double f_max = 0.0;
    int fps = 30;               // output frames per second
};

struct SpectrogramMeta {
    std::string feature_kind; // stft | mel | bark | cqt
    double sample_rate = 0.0;
    BandConfig band;
    std::string config_hash;
    std::string record_id;
    double offset_s = 0.0;
};

struct Spectrogram {
    Matrix values; // T x F
    std::vector<double> frame_times_s;
    std::vector<double> bin_freqs_hz;
    SpectrogramMeta meta;
};

struct FilterBank {
    std::string kind; // mel | bark
    std::size_t n_filters = 0;
    Matrix weights; // n_filters x n_bins, bin j holds DFT bin j+1
    std::vector<double> center_freqs;
};

// Frame layout on an exact integer grid. Sample rates are integral (WAV
// carries u32 Hz) and frame lengths are resolved to whole microseconds, so
// frame counts never drift with float rounding: a 30 s segment yields 1199
// frames at 50/25 ms regardless of sample rate.
struct FrameGrid {
    std::int64_t n_per_frame = 0; // N
    std::int64_t count = 0;       // T = floor((duration - frame_len)/shift) + 1
    std::int64_t sr = 0;
    std::int64_t shift_us = 0;

    std::int64_t start(std::int64_t t) const { return t * shift_us * sr / 1000000; }
};

FrameGrid frame_grid(std::int64_t n_samples, double sample_rate, double frame_len_s,
                     double frame_shift_s);

// T x N windowed frames. Hann uses w[n] = 0.5 - 0.5*cos(2*pi*n/(N-1)).
Matrix frame_and_window(const AudioSegment& segment, const FrameConfig& cfg);

// Per frame: DFT magnitudes for bins 1..round(N/2), DC dropped. With
// real_part, |Re X[k]| is taken instead of |X[k]|.
Matrix power_spectrum(const Matrix& frames, bool real_part = false);

Spectrogram stft_spectrogram(const AudioSegment& segment, const FrameConfig& cfg,
                             const BandConfig& band, bool real_part = false);

// Warped frequency scales. The mel constant 2595 pairs with log10.
double mel_scale(double f_hz);
double mel_inverse(double mel);
double bark_scale(double f_hz);
double bark_inverse(double bark);

// n_filters triangles with apexes equally spaced on the warped scale inside
// [f_lo, f_hi], evaluated at DFT bin centers k*delta_f for k = 1..n_bins.
// Triangles narrower than the bin spacing yield all-zero rows; downstream the
// log floor keeps those cells finite.
FilterBank build_filterbank(const std::string& kind, std::size_t n_filters, const BandConfig& band,
                            double delta_f, std::size_t n_bins);

Spectrogram filterbank_spectrogram(const AudioSegment& segment, const FilterBank& fb,
                                   const FrameConfig& cfg, const BandConfig& band,
                                   bool real_part = false);

// f_k = f_base * 2^(k/b) for k = 0..K-1, K = floor(b*log2(f_max/f_base)).
std::vector<double> cqt_frequencies(const CqtConfig& cfg);

Spectrogram cqt_spectrogram(const AudioSegment& segment, const CqtConfig& cfg);

// Log floor shared by all spectrogram kinds.
inline constexpr double kLogEps = 1e-10;

} // namespace uareg
