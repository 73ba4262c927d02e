#include "uareg/train.hpp"

#include "uareg/augment.hpp"
#include "uareg/common.hpp"
#include "uareg/eval.hpp"
#include "uareg/loss.hpp"
#include "uareg/optimizer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>

namespace uareg {

void TrainConfig::validate() const {
    if (alpha < 0.0) throw Error("train: alpha must be >= 0");
    if (p_lmr < 0.0 || p_lmr > 1.0) throw Error("train: p_lmr must lie in [0, 1]");
    if (snr_lo_db > snr_hi_db) throw Error("train: snr_lo_db must be <= snr_hi_db");
    if (!(lr > 0.0)) throw Error("train: lr must be > 0");
    if (batch < 1) throw Error("train: batch must be >= 1");
    if (epochs < 1) throw Error("train: epochs must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"alpha", alpha},
            {"p_lmr", p_lmr},
            {"snr_lo_db", snr_lo_db},
            {"snr_hi_db", snr_hi_db},
            {"lr", lr},
            {"batch", batch},
            {"weight_decay", weight_decay},
            {"epochs", epochs},
            {"beta1", beta1},
            {"beta2", beta2},
            {"eps", eps},
            {"seed", seed},
            {"kl_on_mixed", kl_on_mixed},
            {"fixed_noise", fixed_noise}};
}

namespace {

std::string csv_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

TrainResult train_model(DatasetProvider& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const std::string& out_dir) {
    tcfg.validate();
    mcfg.validate();
    const auto n_classes = static_cast<std::int64_t>(data.class_names().size());
    if (mcfg.n_classes != n_classes)
        throw Error("model declares " + std::to_string(mcfg.n_classes) +
                    " classes but the manifest has " + std::to_string(n_classes));

    const std::vector<std::size_t> train_idx = data.split_indices("train");
    if (train_idx.empty()) throw Error("training split is empty");
    const std::vector<std::size_t> val_idx = data.split_indices("val");

    std::filesystem::create_directories(out_dir);

    Rng master(tcfg.seed);
    Rng init_rng = master.split(0);
    Model<float> model = build_model<float>(mcfg, init_rng);

    AdamWConfig ocfg;
    ocfg.lr = tcfg.lr;
    ocfg.beta1 = tcfg.beta1;
    ocfg.beta2 = tcfg.beta2;
    ocfg.eps = tcfg.eps;
    ocfg.weight_decay = tcfg.weight_decay;
    AdamW<float> opt(model.params, ocfg);

    TrainResult result;
    result.metrics_path = (std::filesystem::path(out_dir) / "metrics.csv").string();
    result.checkpoint_path = (std::filesystem::path(out_dir) / "best.ckpt").string();
    std::ofstream csv(result.metrics_path);
    if (!csv) throw Error("cannot write metrics: " + result.metrics_path);
    csv << "epoch,train_loss,ce,reg,val_acc\n";

    const nlohmann::json trailer{{"classes", data.class_names()},
                                 {"feature", data.feature_config().to_json()},
                                 {"segment_s", data.segment_s()},
                                 {"train", tcfg.to_json()}};

    std::map<std::size_t, Matrix> fixed_noisy; // only populated under fixed_noise
    double best_val_loss = 0.0;
    bool warned_singleton = false;

    // Epoch streams split from the master seed; stream 0 initialized the model.
    for (std::int64_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        Rng erng = master.split(static_cast<std::uint64_t>(epoch));
        std::vector<std::size_t> order = train_idx;
        erng.shuffle(order);
        model.set_training(true);

        double loss_sum = 0.0, ce_sum = 0.0, reg_sum = 0.0;
        std::int64_t seen = 0;

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(tcfg.batch)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch));
            const std::vector<std::size_t> bidx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(stop));
            const auto n = static_cast<std::int64_t>(bidx.size());

            std::vector<const Matrix*> raw_ptrs(bidx.size());
            std::vector<int> labels(bidx.size());
            std::vector<std::int64_t> labels_i(bidx.size());
            for (std::size_t k = 0; k < bidx.size(); ++k) {
                raw_ptrs[k] = &data.feature(bidx[k]);
                labels[k] = data.label(bidx[k]);
                labels_i[k] = labels[k];
            }

            BatchMix mix;
            if (tcfg.p_lmr > 0.0) {
                std::vector<Matrix> raw_copy;
                raw_copy.reserve(raw_ptrs.size());
                for (const Matrix* m : raw_ptrs) raw_copy.push_back(*m);
                std::string warning;
                mix = batch_policy(raw_copy, labels, tcfg.p_lmr, erng, &warning);
                if (!warning.empty() && !warned_singleton) {
                    std::cerr << "warning: " << warning << '\n';
                    warned_singleton = true;
                }
            }

            std::vector<std::int64_t> labels_j;
            std::vector<double> lambdas;
            std::vector<const Matrix*> main_ptrs = raw_ptrs;
            if (mix.applied) {
                labels_j.resize(mix.samples.size());
                lambdas.resize(mix.samples.size());
                for (std::size_t k = 0; k < mix.samples.size(); ++k) {
                    main_ptrs[k] = &mix.samples[k].values;
                    labels_j[k] = mix.samples[k].label_j;
                    lambdas[k] = mix.samples[k].lambda;
                }
            }

            auto forward = [&](const std::vector<const Matrix*>& feats) {
                auto x = ad::leaf(prepare_batch<float>(feats, mcfg.crop_frames));
                return forward_logits(model, x);
            };

            TaggedLogits<float> main{forward(main_ptrs),
                                     mix.applied ? LogitsKind::mixed : LogitsKind::raw};
            TaggedLogits<float> consist, noisy;
            std::vector<Matrix> noisy_feats;
            if (tcfg.alpha > 0.0) {
                noisy_feats.reserve(bidx.size());
                std::vector<const Matrix*> noisy_ptrs(bidx.size());
                for (std::size_t k = 0; k < bidx.size(); ++k) {
                    if (tcfg.fixed_noise) {
                        auto it = fixed_noisy.find(bidx[k]);
                        if (it == fixed_noisy.end()) {
                            const double snr = erng.uniform(tcfg.snr_lo_db, tcfg.snr_hi_db);
                            it = fixed_noisy.emplace(bidx[k],
                                                     data.noisy_feature(bidx[k], snr, erng))
                                     .first;
                        }
                        noisy_ptrs[k] = &it->second;
                    } else {
                        const double snr = erng.uniform(tcfg.snr_lo_db, tcfg.snr_hi_db);
                        noisy_feats.push_back(data.noisy_feature(bidx[k], snr, erng));
                        noisy_ptrs[k] = &noisy_feats.back();
                    }
                }
                noisy = {forward(noisy_ptrs), LogitsKind::noisy};
                if (mix.applied && !tcfg.kl_on_mixed)
                    consist = {forward(raw_ptrs), LogitsKind::raw};
                else
                    consist = main;
            }

            LossBreakdown<float> parts =
                total_loss(main, labels_i, labels_j, lambdas, consist, noisy, tcfg.alpha);
            ad::backward(parts.total);
            opt.step();
            opt.zero_grad();

            const auto w = static_cast<double>(n);
            loss_sum += static_cast<double>(parts.total->value.values[0]) * w;
            ce_sum += static_cast<double>(parts.main_term->value.values[0]) * w;
            reg_sum += (parts.reg_term ? static_cast<double>(parts.reg_term->value.values[0])
                                       : 0.0) *
                       w;
            seen += n;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(seen);
        stats.ce = ce_sum / static_cast<double>(seen);
        stats.reg = reg_sum / static_cast<double>(seen);

        if (!val_idx.empty()) {
            const EvalResult val = evaluate(model, data, "val", tcfg.batch);
            stats.val_acc = val.accuracy;
            stats.val_loss = val.mean_ce;
        } else {
            stats.val_acc = std::numeric_limits<double>::quiet_NaN();
            stats.val_loss = stats.train_loss;
        }

        csv << stats.epoch << ',' << csv_num(stats.train_loss) << ',' << csv_num(stats.ce) << ','
            << csv_num(stats.reg) << ',' << csv_num(stats.val_acc) << '\n';
        csv.flush();
        result.history.push_back(stats);

        // Selection: accuracy first, ties to the lower validation loss. With
        // no validation split the lowest training loss wins.
        const bool better =
            val_idx.empty()
                ? (result.best_epoch < 0 || stats.val_loss < best_val_loss)
                : (result.best_epoch < 0 || stats.val_acc > result.best_val_acc ||
                   (stats.val_acc == result.best_val_acc && stats.val_loss < best_val_loss));
        if (better) {
            result.best_epoch = epoch;
            result.best_val_acc = stats.val_acc;
            best_val_loss = stats.val_loss;
            save_checkpoint(model, result.checkpoint_path, trailer);
        }
    }
    return result;
}

double objective_gradient_check() {
    Rng rng(7);
    ModelConfig mc;
    mc.stem_channels = 4;
    mc.stage_widths = {4, 8};
    mc.blocks_per_stage = 1;
    mc.attention_heads = 2;
    mc.n_classes = 3;
    mc.crop_frames = 16;
    Model<double> model = build_model<double>(mc, rng);
    model.set_training(true);

    const std::size_t t = 16, f = 8;
    const auto rand_feat = [&rng](std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        for (float& v : m.data) v = static_cast<float>(rng.normal(0.0, 1.0));
        return m;
    };
    std::vector<Matrix> raw = {rand_feat(t, f), rand_feat(t, f)};
    std::vector<Matrix> noisy = raw;
    for (Matrix& m : noisy)
        for (float& v : m.data) v += static_cast<float>(rng.normal(0.0, 0.3));

    // Cross-mix the two samples so the mixture term carries both labels.
    Rng patch_rng(11);
    const LmrPatch p0 = sample_lmr_patch(static_cast<std::int64_t>(t),
                                         static_cast<std::int64_t>(f), patch_rng);
    const LmrPatch p1 = sample_lmr_patch(static_cast<std::int64_t>(t),
                                         static_cast<std::int64_t>(f), patch_rng);
    const MixedSample m0 = lmr_mix(raw[0], raw[1], p0, 0, 1);
    const MixedSample m1 = lmr_mix(raw[1], raw[0], p1, 1, 0);

    const std::vector<const Matrix*> mixed_ptrs = {&m0.values, &m1.values};
    const std::vector<const Matrix*> raw_ptrs = {&raw[0], &raw[1]};
    const std::vector<const Matrix*> noisy_ptrs = {&noisy[0], &noisy[1]};
    const std::vector<std::int64_t> labels_i = {0, 1}, labels_j = {1, 0};
    const std::vector<double> lambdas = {m0.lambda, m1.lambda};

    const std::function<ad::NodePtr<double>()> loss_fn = [&]() {
        const auto fwd = [&](const std::vector<const Matrix*>& ptrs) {
            return forward_logits(model,
                                  ad::leaf(prepare_batch<double>(ptrs, mc.crop_frames)));
        };
        const TaggedLogits<double> main{fwd(mixed_ptrs), LogitsKind::mixed};
        const TaggedLogits<double> consist{fwd(raw_ptrs), LogitsKind::raw};
        const TaggedLogits<double> perturbed{fwd(noisy_ptrs), LogitsKind::noisy};
        return total_loss(main, labels_i, labels_j, lambdas, consist, perturbed, 0.5).total;
    };

    std::vector<ad::NodePtr<double>> params;
    params.reserve(model.params.size());
    for (const auto& [name, p] : model.params) params.push_back(p);
    // Step balances truncation against cancellation; batch-norm curvature
    // dominates above ~1e-4.
    return ad::grad_check<double>(loss_fn, params, 3e-5);
}

} // namespace uareg
