#include "uareg/dsp.hpp"
#include "uareg/common.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

namespace uareg {

namespace {

// FFTW planning is not thread-safe; execution on private buffers is.
std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

class RealDft {
public:
    explicit RealDft(int n) : n_(n) {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        in_ = fftw_alloc_real(n);
        out_ = fftw_alloc_complex(n / 2 + 1);
        plan_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
        if (!plan_) throw Error("DFT plan creation failed for length " + std::to_string(n));
    }
    ~RealDft() {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(in_);
        fftw_free(out_);
    }
    RealDft(const RealDft&) = delete;
    RealDft& operator=(const RealDft&) = delete;

    // Writes magnitudes of bins 1..n_keep into dst.
    void magnitudes(const float* frame, std::size_t n_keep, bool real_part, float* dst) {
        for (int i = 0; i < n_; ++i) in_[i] = frame[i];
        fftw_execute(plan_);
        const std::size_t half = static_cast<std::size_t>(n_) / 2; // last unique bin index
        for (std::size_t k = 1; k <= n_keep; ++k) {
            // Bins above the unique range mirror their conjugates (odd n only).
            const std::size_t src = k <= half ? k : static_cast<std::size_t>(n_) - k;
            const double re = out_[src][0];
            const double im = out_[src][1];
            dst[k - 1] = static_cast<float>(real_part ? std::abs(re) : std::hypot(re, im));
        }
    }

private:
    int n_;
    double* in_;
    fftw_complex* out_;
    fftw_plan plan_;
};

std::vector<double> make_window(WindowKind kind, std::int64_t n) {
    std::vector<double> w(static_cast<std::size_t>(n), 1.0);
    if (kind == WindowKind::hann && n > 1) {
        for (std::int64_t i = 0; i < n; ++i)
            w[static_cast<std::size_t>(i)] =
                0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                     static_cast<double>(n - 1));
    }
    return w;
}

std::size_t half_spectrum_bins(std::int64_t n) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) / 2.0));
}

void apply_log(Matrix& m) {
    for (float& v : m.data) v = static_cast<float>(std::log(static_cast<double>(v) + kLogEps));
}

std::vector<double> frame_times(const FrameGrid& grid) {
    std::vector<double> t(static_cast<std::size_t>(grid.count));
    for (std::int64_t i = 0; i < grid.count; ++i)
        t[static_cast<std::size_t>(i)] =
            static_cast<double>(grid.start(i)) / static_cast<double>(grid.sr);
    return t;
}

} // namespace

void BandConfig::validate(double sample_rate) const {
    if (f_lo < 0.0 || f_lo >= f_hi)
        throw Error("band requires 0 <= f_lo < f_hi, got " + std::to_string(f_lo) + ":" +
                    std::to_string(f_hi));
    if (f_hi > sample_rate / 2.0)
        throw Error("band upper edge " + std::to_string(f_hi) + " Hz exceeds Nyquist " +
                    std::to_string(sample_rate / 2.0) + " Hz");
}

FrameGrid frame_grid(std::int64_t n_samples, double sample_rate, double frame_len_s,
                     double frame_shift_s) {
    if (frame_shift_s <= 0.0 || frame_shift_s > frame_len_s)
        throw Error("frame config requires 0 < shift <= length");
    FrameGrid g;
    g.sr = std::llround(sample_rate);
    const std::int64_t len_us = std::llround(frame_len_s * 1e6);
    g.shift_us = std::llround(frame_shift_s * 1e6);
    g.n_per_frame = len_us * g.sr / 1000000;
    if (g.n_per_frame < 1 || g.n_per_frame > n_samples)
        throw Error("segment shorter than one frame");
    g.count = (n_samples * 1000000 - len_us * g.sr) / (g.shift_us * g.sr) + 1;
    return g;
}

Matrix frame_and_window(const AudioSegment& segment, const FrameConfig& cfg) {
    const FrameGrid grid = frame_grid(static_cast<std::int64_t>(segment.samples.size()),
                                      segment.sample_rate, cfg.frame_len_s, cfg.frame_shift_s);
    const std::vector<double> w = make_window(cfg.window, grid.n_per_frame);

    Matrix frames(static_cast<std::size_t>(grid.count), static_cast<std::size_t>(grid.n_per_frame));
    for (std::int64_t t = 0; t < grid.count; ++t) {
        const float* src = segment.samples.data() + grid.start(t);
        float* dst = frames.row(static_cast<std::size_t>(t));
        for (std::int64_t i = 0; i < grid.n_per_frame; ++i)
            dst[i] = static_cast<float>(src[i] * w[static_cast<std::size_t>(i)]);
    }
    return frames;
}

Matrix power_spectrum(const Matrix& frames, bool real_part) {
    if (frames.cols < 2) throw Error("frames too short for a spectrum");
    const std::size_t n_keep = half_spectrum_bins(static_cast<std::int64_t>(frames.cols));
    Matrix spec(frames.rows, n_keep);
    RealDft dft(static_cast<int>(frames.cols));
    for (std::size_t t = 0; t < frames.rows; ++t)
        dft.magnitudes(frames.row(t), n_keep, real_part, spec.row(t));
    return spec;
}

Spectrogram stft_spectrogram(const AudioSegment& segment, const FrameConfig& cfg,
                             const BandConfig& band, bool real_part) {
    band.validate(segment.sample_rate);
    const Matrix frames = frame_and_window(segment, cfg);
    const Matrix spec = power_spectrum(frames, real_part);
    const FrameGrid grid = frame_grid(static_cast<std::int64_t>(segment.samples.size()),
                                      segment.sample_rate, cfg.frame_len_s, cfg.frame_shift_s);

    const double delta_f = segment.sample_rate / static_cast<double>(grid.n_per_frame);
    const auto n_bins = static_cast<std::size_t>(std::llround(band.f_hi / delta_f));
    if (n_bins < 1 || n_bins > spec.cols)
        throw Error("band " + std::to_string(band.f_lo) + ":" + std::to_string(band.f_hi) +
                    " does not fit the DFT geometry");

    Spectrogram out;
    out.values = Matrix(spec.rows, n_bins);
    out.bin_freqs_hz.resize(n_bins);
    for (std::size_t k = 1; k <= n_bins; ++k) {
        const double f = static_cast<double>(k) * delta_f;
        out.bin_freqs_hz[k - 1] = f;
        if (f < band.f_lo) continue; // below-band bins stay zero to keep indices aligned
        for (std::size_t t = 0; t < spec.rows; ++t)
            out.values.at(t, k - 1) = spec.at(t, k - 1);
    }
    apply_log(out.values);
    out.frame_times_s = frame_times(grid);
    out.meta.feature_kind = "stft";
    out.meta.sample_rate = segment.sample_rate;
    out.meta.band = band;
    out.meta.record_id = segment.record_id;
    out.meta.offset_s = segment.offset_s;
    return out;
}

double mel_scale(double f_hz) {
    if (f_hz < 0.0) throw Error("negative frequency");
    return 2595.0 * std::log10(1.0 + f_hz / 700.0);
}

double mel_inverse(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double bark_scale(double f_hz) {
    if (f_hz < 0.0) throw Error("negative frequency");
    return 6.0 * std::asinh(f_hz / 600.0);
}

double bark_inverse(double bark) { return 600.0 * std::sinh(bark / 6.0); }

FilterBank build_filterbank(const std::string& kind, std::size_t n_filters, const BandConfig& band,
                            double delta_f, std::size_t n_bins) {
    if (n_filters < 1) throw Error("filterbank needs at least one filter");
    if (n_bins < 1) throw Error("filterbank needs at least one spectrum bin");
    double (*fwd)(double) = nullptr;
    double (*inv)(double) = nullptr;
    if (kind == "mel") {
        fwd = mel_scale;
        inv = mel_inverse;
    } else if (kind == "bark") {
        fwd = bark_scale;
        inv = bark_inverse;
    } else {
        throw Error("unknown filterbank kind: " + kind);
    }

    const double lo = fwd(band.f_lo);
    const double hi = fwd(band.f_hi);
    if (!(hi > lo)) throw Error("band too narrow for a filterbank");

    std::vector<double> edges_hz(n_filters + 2);
    for (std::size_t i = 0; i < n_filters + 2; ++i) {
        const double warped =
            lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_filters + 1);
        edges_hz[i] = inv(warped);
    }

    FilterBank fb;
    fb.kind = kind;
    fb.n_filters = n_filters;
    fb.center_freqs.assign(edges_hz.begin() + 1, edges_hz.end() - 1);
    fb.weights = Matrix(n_filters, n_bins);
    for (std::size_t i = 0; i < n_filters; ++i) {
        const double l = edges_hz[i];
        const double c = edges_hz[i + 1];
        const double r = edges_hz[i + 2];
        for (std::size_t j = 0; j < n_bins; ++j) {
            const double f = static_cast<double>(j + 1) * delta_f;
            double w = 0.0;
            if (f > l && f <= c)
                w = (f - l) / (c - l);
            else if (f > c && f < r)
                w = (r - f) / (r - c);
            fb.weights.at(i, j) = static_cast<float>(w);
        }
    }
    return fb;
}

Spectrogram filterbank_spectrogram(const AudioSegment& segment, const FilterBank& fb,
                                   const FrameConfig& cfg, const BandConfig& band,
                                   bool real_part) {
    band.validate(segment.sample_rate);
    const Matrix frames = frame_and_window(segment, cfg);
    const Matrix spec = power_spectrum(frames, real_part);
    if (fb.weights.cols != spec.cols)
        throw Error("filterbank built for " + std::to_string(fb.weights.cols) +
                    " bins, spectrum has " + std::to_string(spec.cols));

    Spectrogram out;
    out.values = Matrix(spec.rows, fb.n_filters);
    for (std::size_t t = 0; t < spec.rows; ++t) {
        const float* x = spec.row(t);
        for (std::size_t i = 0; i < fb.n_filters; ++i) {
            const float* w = fb.weights.row(i);
            double acc = 0.0;
            for (std::size_t j = 0; j < spec.cols; ++j) acc += static_cast<double>(w[j]) * x[j];
            out.values.at(t, i) = static_cast<float>(acc);
        }
    }
    apply_log(out.values);
    const FrameGrid grid = frame_grid(static_cast<std::int64_t>(segment.samples.size()),
                                      segment.sample_rate, cfg.frame_len_s, cfg.frame_shift_s);
    out.frame_times_s = frame_times(grid);
    out.bin_freqs_hz = fb.center_freqs;
    out.meta.feature_kind = fb.kind;
    out.meta.sample_rate = segment.sample_rate;
    out.meta.band = band;
    out.meta.record_id = segment.record_id;
    out.meta.offset_s = segment.offset_s;
    return out;
}

std::vector<double> cqt_frequencies(const CqtConfig& cfg) {
    if (cfg.octave_resolution < 1) throw Error("octave resolution must be >= 1");
    if (cfg.f_base <= 0.0 || cfg.f_base >= cfg.f_max)
        throw Error("CQT requires 0 < f_base < f_max");
    const auto k_count = static_cast<std::int64_t>(
        std::floor(cfg.octave_resolution * std::log2(cfg.f_max / cfg.f_base)));
    std::vector<double> freqs(static_cast<std::size_t>(k_count));
    for (std::int64_t k = 0; k < k_count; ++k)
        freqs[static_cast<std::size_t>(k)] =
            cfg.f_base * std::pow(2.0, static_cast<double>(k) / cfg.octave_resolution);
    return freqs;
}

Spectrogram cqt_spectrogram(const AudioSegment& segment, const CqtConfig& cfg) {
    if (cfg.fps < 1) throw Error("CQT time resolution must be >= 1");
    if (cfg.f_max > segment.sample_rate / 2.0)
        throw Error("CQT f_max " + std::to_string(cfg.f_max) + " Hz exceeds Nyquist");
    const std::vector<double> freqs = cqt_frequencies(cfg);

    const auto sr = std::llround(segment.sample_rate);
    const auto n_samples = static_cast<std::int64_t>(segment.samples.size());
    const std::int64_t n_frame = 2 * sr / cfg.fps;
    if (n_frame < 2 || n_frame > n_samples) throw Error("segment shorter than one CQT frame");
    const std::int64_t count = (n_samples * cfg.fps - 2 * sr) / sr + 1;

    // One kernel per bin: complex exponential at f_k under a Hann window
    // spanning Q = 1/(2^(1/b) - 1) cycles, capped at the frame length and
    // normalized by the window sum. Kernels are centered in the frame.
    const double q_factor = 1.0 / (std::pow(2.0, 1.0 / cfg.octave_resolution) - 1.0);
    std::vector<std::vector<std::complex<double>>> kernels(freqs.size());
    std::vector<std::int64_t> kernel_offset(freqs.size());
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        const double f = freqs[k];
        std::int64_t len = std::llround(q_factor * segment.sample_rate / f);
        len = std::clamp<std::int64_t>(len, 2, n_frame);
        const std::vector<double> w = make_window(WindowKind::hann, len);
        double w_sum = 0.0;
        for (double v : w) w_sum += v;
        auto& kern = kernels[k];
        kern.resize(static_cast<std::size_t>(len));
        for (std::int64_t n = 0; n < len; ++n) {
            const double phase = -2.0 * std::numbers::pi * f * static_cast<double>(n) /
                                 segment.sample_rate;
            kern[static_cast<std::size_t>(n)] =
                w[static_cast<std::size_t>(n)] / w_sum *
                std::complex<double>(std::cos(phase), std::sin(phase));
        }
        kernel_offset[k] = (n_frame - len) / 2;
    }

    Spectrogram out;
    out.values = Matrix(static_cast<std::size_t>(count), freqs.size());
    out.frame_times_s.resize(static_cast<std::size_t>(count));
    for (std::int64_t t = 0; t < count; ++t) {
        const std::int64_t start = t * sr / cfg.fps;
        out.frame_times_s[static_cast<std::size_t>(t)] =
            static_cast<double>(start) / segment.sample_rate;
        const float* frame = segment.samples.data() + start;
        for (std::size_t k = 0; k < freqs.size(); ++k) {
            const auto& kern = kernels[k];
            const float* x = frame + kernel_offset[k];
            std::complex<double> acc = 0.0;
            for (std::size_t n = 0; n < kern.size(); ++n)
                acc += static_cast<double>(x[n]) * kern[n];
            out.values.at(static_cast<std::size_t>(t), k) = static_cast<float>(std::abs(acc));
        }
    }
    apply_log(out.values);
    out.bin_freqs_hz = freqs;
    out.meta.feature_kind = "cqt";
    out.meta.sample_rate = segment.sample_rate;
    out.meta.band = BandConfig{cfg.f_base, cfg.f_max};
    out.meta.record_id = segment.record_id;
    out.meta.offset_s = segment.offset_s;
    return out;
}

} // namespace uareg
