#include "uareg/augment.hpp"
#include "uareg/common.hpp"

#include <cmath>

namespace uareg {

namespace {

double noise_sigma(double power, double snr_db) {
    return std::sqrt(power / std::pow(10.0, snr_db / 10.0));
}

void check_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw Error("mix inputs differ in shape: " + std::to_string(a.rows) + "x" +
                    std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                    std::to_string(b.cols));
}

} // namespace

AudioSegment add_noise_snr(const AudioSegment& segment, double snr_db, Rng& rng) {
    if (std::isinf(snr_db) && snr_db > 0.0) return segment;
    if (!std::isfinite(snr_db)) throw Error("SNR must be finite or +inf");
    double power = 0.0;
    for (float s : segment.samples) power += static_cast<double>(s) * s;
    power /= static_cast<double>(segment.samples.size());
    if (power <= 0.0) throw Error("all-zero segment has undefined SNR");

    const double sigma = noise_sigma(power, snr_db);
    AudioSegment out = segment;
    for (float& s : out.samples) s = static_cast<float>(s + rng.normal(0.0, sigma));
    return out;
}

Matrix add_noise_snr(const Matrix& values, double snr_db, Rng& rng) {
    if (std::isinf(snr_db) && snr_db > 0.0) return values;
    if (!std::isfinite(snr_db)) throw Error("SNR must be finite or +inf");
    double power = 0.0;
    for (float v : values.data) power += static_cast<double>(v) * v;
    power /= static_cast<double>(values.data.size());
    if (power <= 0.0) throw Error("all-zero input has undefined SNR");

    const double sigma = noise_sigma(power, snr_db);
    Matrix out = values;
    for (float& v : out.data) v = static_cast<float>(v + rng.normal(0.0, sigma));
    return out;
}

LmrPatch sample_lmr_patch(std::int64_t w, std::int64_t h, Rng& rng) {
    if (w < 2 || h < 2)
        throw Error("LMR needs at least a 2x2 spectrogram, got " + std::to_string(w) + "x" +
                    std::to_string(h));
    LmrPatch p;
    p.a = rng.uniform_int(1, w - 1);
    p.b = rng.uniform_int(1, h - 1);
    p.t0 = rng.uniform_int(0, w - p.a);
    p.f0 = rng.uniform_int(0, h - p.b);
    return p;
}

MixedSample lmr_mix(const Matrix& x_i, const Matrix& x_j, const LmrPatch& patch, int label_i,
                    int label_j) {
    check_same_shape(x_i, x_j);
    const auto w = static_cast<std::int64_t>(x_i.rows);
    const auto h = static_cast<std::int64_t>(x_i.cols);
    if (patch.a < 1 || patch.b < 1 || patch.t0 < 0 || patch.f0 < 0 || patch.t0 + patch.a > w ||
        patch.f0 + patch.b > h)
        throw Error("LMR patch outside the spectrogram");

    MixedSample out;
    out.values = x_i;
    for (std::int64_t t = patch.t0; t < patch.t0 + patch.a; ++t)
        for (std::int64_t f = patch.f0; f < patch.f0 + patch.b; ++f)
            out.values.at(static_cast<std::size_t>(t), static_cast<std::size_t>(f)) =
                x_j.at(static_cast<std::size_t>(t), static_cast<std::size_t>(f));
    // Exact integer area ratio before the division.
    out.lambda = static_cast<double>(w * h - patch.a * patch.b) / static_cast<double>(w * h);
    out.label_i = label_i;
    out.label_j = label_j;
    out.has_patch = true;
    out.patch = patch;
    return out;
}

MixedSample mixup_mix(const Matrix& x_i, const Matrix& x_j, Rng& rng, int label_i, int label_j,
                      double beta_alpha) {
    check_same_shape(x_i, x_j);
    MixedSample out;
    out.lambda = beta_alpha > 0.0 ? rng.beta(beta_alpha, beta_alpha) : rng.uniform();
    out.values = Matrix(x_i.rows, x_i.cols);
    for (std::size_t i = 0; i < x_i.data.size(); ++i)
        out.values.data[i] = static_cast<float>(out.lambda * x_i.data[i] +
                                                (1.0 - out.lambda) * x_j.data[i]);
    out.label_i = label_i;
    out.label_j = label_j;
    return out;
}

BatchMix batch_policy(const std::vector<Matrix>& batch, const std::vector<int>& labels,
                      double p_lmr, Rng& rng, std::string* warning) {
    if (batch.size() != labels.size()) throw Error("batch and label counts differ");
    if (batch.empty()) throw Error("empty batch");

    BatchMix out;
    if (rng.uniform() >= p_lmr) return out; // pass-through
    if (batch.size() == 1) {
        if (warning) *warning = "LMR skipped: batch has a single sample";
        return out;
    }

    out.applied = true;
    out.samples.reserve(batch.size());
    out.partner.reserve(batch.size());
    const auto n = static_cast<std::int64_t>(batch.size());
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t j = rng.uniform_int(0, n - 2);
        if (j >= i) ++j; // uniform over the n-1 others
        const LmrPatch patch = sample_lmr_patch(static_cast<std::int64_t>(batch[i].rows),
                                                static_cast<std::int64_t>(batch[i].cols), rng);
        out.samples.push_back(lmr_mix(batch[static_cast<std::size_t>(i)],
                                      batch[static_cast<std::size_t>(j)], patch,
                                      labels[static_cast<std::size_t>(i)],
                                      labels[static_cast<std::size_t>(j)]));
        out.partner.push_back(static_cast<std::size_t>(j));
    }
    return out;
}

} // namespace uareg
