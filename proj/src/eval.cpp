#include "uareg/eval.hpp"

#include "uareg/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace uareg {

std::int64_t ConfusionMatrix::total() const {
    std::int64_t s = 0;
    for (std::int64_t c : counts) s += c;
    return s;
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t s = 0;
    for (std::int64_t i = 0; i < n(); ++i) s += at(i, i);
    return s;
}

double ConfusionMatrix::accuracy() const {
    const std::int64_t t = total();
    return t == 0 ? 0.0 : static_cast<double>(trace()) / static_cast<double>(t);
}

std::string ConfusionMatrix::to_csv() const {
    std::ostringstream out;
    out << "true\\predicted";
    for (const auto& name : class_names) out << ',' << name;
    out << '\n';
    for (std::int64_t i = 0; i < n(); ++i) {
        out << class_names[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < n(); ++j) out << ',' << at(i, j);
        out << '\n';
    }
    return out.str();
}

void ConfusionMatrix::write_pgm(const std::string& path, std::size_t cell_px) const {
    if (cell_px < 1) throw Error("confusion heat map needs cell_px >= 1");
    std::int64_t mx = 1;
    for (std::int64_t c : counts) mx = std::max(mx, c);

    const std::size_t side = static_cast<std::size_t>(n()) * cell_px;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write heat map: " + path);
    out << "P5\n" << side << ' ' << side << "\n255\n";
    std::vector<unsigned char> row(side);
    for (std::int64_t i = 0; i < n(); ++i) {
        for (std::int64_t j = 0; j < n(); ++j) {
            const auto v = static_cast<unsigned char>(
                std::llround(255.0 * static_cast<double>(at(i, j)) / static_cast<double>(mx)));
            std::fill_n(row.begin() + static_cast<std::ptrdiff_t>(cell_px * static_cast<std::size_t>(j)),
                        cell_px, v);
        }
        for (std::size_t r = 0; r < cell_px; ++r)
            out.write(reinterpret_cast<const char*>(row.data()),
                      static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw Error("cannot write heat map: " + path);
}

namespace {

// Argmax per row plus the batch CE, computed from raw logit values.
void score_batch(const ad::Tensor<float>& logits, const std::vector<int>& labels,
                 ConfusionMatrix& cm, double& ce_sum) {
    const std::int64_t n = logits.dim(0), k = logits.dim(1);
    for (std::int64_t i = 0; i < n; ++i) {
        const float* row = logits.values.data() + i * k;
        std::int64_t best = 0;
        for (std::int64_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;
        const int truth = labels[static_cast<std::size_t>(i)];
        cm.at(truth, best) += 1;

        double mx = -1e300;
        for (std::int64_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double denom = 0.0;
        for (std::int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        ce_sum += mx + std::log(denom) - static_cast<double>(row[truth]);
    }
}

} // namespace

EvalResult evaluate(Model<float>& model, DatasetProvider& data, const std::string& split,
                    std::int64_t batch) {
    const auto n_classes = static_cast<std::int64_t>(data.class_names().size());
    if (model.cfg.n_classes != n_classes)
        throw Error("checkpoint expects " + std::to_string(model.cfg.n_classes) +
                    " classes but the manifest has " + std::to_string(n_classes));
    const std::vector<std::size_t> idx = data.split_indices(split);
    if (idx.empty()) throw Error("split '" + split + "' is empty");
    if (batch < 1) throw Error("batch must be >= 1");

    EvalResult res;
    res.confusion.class_names = data.class_names();
    res.confusion.counts.assign(static_cast<std::size_t>(n_classes * n_classes), 0);

    const bool was_training = model.training;
    model.set_training(false);
    double ce_sum = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t stop = std::min(idx.size(), start + static_cast<std::size_t>(batch));
        std::vector<const Matrix*> feats;
        std::vector<int> labels;
        for (std::size_t k = start; k < stop; ++k) {
            feats.push_back(&data.feature(idx[k]));
            labels.push_back(data.label(idx[k]));
        }
        score_batch(predict(model, feats), labels, res.confusion, ce_sum);
    }
    model.set_training(was_training);

    res.accuracy = res.confusion.accuracy();
    res.mean_ce = ce_sum / static_cast<double>(idx.size());
    return res;
}

std::vector<SnrRange> default_snr_ranges() {
    return {{5.0, 30.0}, {-5.0, 20.0}, {-15.0, 10.0}};
}

std::vector<SnrRange> parse_snr_ranges(const std::string& text) {
    std::vector<SnrRange> out;
    std::stringstream ss(text);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        if (token == "clean") {
            out.push_back(SnrRange{});
            continue;
        }
        const auto colon = token.find(':');
        if (colon == std::string::npos)
            throw Error("SNR range '" + token + "' is not LO:HI");
        SnrRange r;
        try {
            r.lo_db = std::stod(token.substr(0, colon));
            r.hi_db = std::stod(token.substr(colon + 1));
        } catch (const std::exception&) {
            throw Error("SNR range '" + token + "' is not numeric");
        }
        if (r.lo_db > r.hi_db) throw Error("SNR range '" + token + "' has lo > hi");
        out.push_back(r);
    }
    if (out.empty()) throw Error("no SNR ranges given");
    return out;
}

std::string SnrSweepResult::to_csv() const {
    std::ostringstream out;
    out << "snr_lo_db,snr_hi_db,accuracy\n";
    out << "clean,clean," << clean_accuracy << '\n';
    for (const auto& row : rows) {
        if (row.range.clean())
            out << "clean,clean," << row.accuracy << '\n';
        else
            out << row.range.lo_db << ',' << row.range.hi_db << ',' << row.accuracy << '\n';
    }
    return out.str();
}

SnrSweepResult snr_sweep(Model<float>& model, DatasetProvider& data,
                         const std::vector<SnrRange>& ranges, std::uint64_t seed, int repeats,
                         const std::string& split) {
    if (repeats < 1 || repeats > 4096) throw Error("snr_sweep repeats must lie in [1, 4096]");
    const std::vector<std::size_t> idx = data.split_indices(split);
    if (idx.empty()) throw Error("split '" + split + "' is empty");

    SnrSweepResult res;
    res.clean_accuracy = evaluate(model, data, split).accuracy;

    const bool was_training = model.training;
    model.set_training(false);
    const Rng base(seed);
    constexpr std::size_t kBatch = 64;
    for (std::size_t ri = 0; ri < ranges.size(); ++ri) {
        const SnrRange& range = ranges[ri];
        if (range.clean()) {
            res.rows.push_back({range, res.clean_accuracy});
            continue;
        }
        double acc_sum = 0.0;
        for (int rep = 0; rep < repeats; ++rep) {
            Rng rng = base.split(ri * 4096 + static_cast<std::size_t>(rep));
            std::int64_t correct = 0;
            for (std::size_t start = 0; start < idx.size(); start += kBatch) {
                const std::size_t stop = std::min(idx.size(), start + kBatch);
                std::vector<Matrix> feats;
                feats.reserve(stop - start);
                std::vector<const Matrix*> ptrs;
                std::vector<int> labels;
                for (std::size_t k = start; k < stop; ++k) {
                    const double snr = rng.uniform(range.lo_db, range.hi_db);
                    feats.push_back(data.noisy_feature(idx[k], snr, rng));
                    ptrs.push_back(&feats.back());
                    labels.push_back(data.label(idx[k]));
                }
                const ad::Tensor<float> logits = predict(model, ptrs);
                const std::int64_t n = logits.dim(0), kk = logits.dim(1);
                for (std::int64_t i = 0; i < n; ++i) {
                    const float* row = logits.values.data() + i * kk;
                    std::int64_t best = 0;
                    for (std::int64_t j = 1; j < kk; ++j)
                        if (row[j] > row[best]) best = j;
                    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
                }
            }
            acc_sum += static_cast<double>(correct) / static_cast<double>(idx.size());
        }
        res.rows.push_back({range, acc_sum / repeats});
    }
    model.set_training(was_training);
    return res;
}

std::vector<AlphaSweepRow> alpha_sweep(DatasetProvider& data, const ModelConfig& mcfg,
                                       const TrainConfig& base, const std::vector<double>& alphas,
                                       const std::string& out_dir) {
    if (alphas.empty()) throw Error("alpha_sweep needs at least one alpha");
    std::vector<AlphaSweepRow> rows;
    for (double alpha : alphas) {
        TrainConfig cfg = base;
        cfg.alpha = alpha;
        char tag[32];
        std::snprintf(tag, sizeof(tag), "alpha-%g", alpha);
        const std::string run_dir = (std::filesystem::path(out_dir) / tag).string();
        const TrainResult tr = train_model(data, mcfg, cfg, run_dir);
        auto [model, trailer] = load_checkpoint(tr.checkpoint_path);
        const EvalResult ev = evaluate(model, data, "test");
        rows.push_back({alpha, tr.best_val_acc, ev.accuracy});
    }
    return rows;
}

std::string alpha_table_csv(const std::vector<AlphaSweepRow>& rows) {
    std::ostringstream out;
    out << "alpha,val_acc,test_acc\n";
    for (const auto& r : rows) out << r.alpha << ',' << r.val_acc << ',' << r.test_acc << '\n';
    return out.str();
}

} // namespace uareg
