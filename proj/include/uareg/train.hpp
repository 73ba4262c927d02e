#pragma once

#include "uareg/data.hpp"
#include "uareg/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace uareg {

struct TrainConfig {
    double alpha = 0.0; // weight of the consistency term; 0 disables it
    double p_lmr = 0.0; // per-batch probability of patch mixing
    double snr_lo_db = 5.0;
    double snr_hi_db = 30.0;
    double lr = 5e-4;
    std::int64_t batch = 64;
    double weight_decay = 1e-5;
    std::int64_t epochs = 100;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    bool kl_on_mixed = false; // ablation: consistency on mixed instead of raw logits
    bool fixed_noise = false; // reuse first-epoch noise realizations

    void validate() const;
    nlohmann::json to_json() const;
};

struct EpochStats {
    std::int64_t epoch = 0;
    double train_loss = 0.0;
    double ce = 0.0;  // supervision term: plain CE, or the LMR mixture
    double reg = 0.0; // consistency term before the alpha weight
    double val_acc = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::int64_t best_epoch = -1; // 1-based; -1 when no epoch ran
    double best_val_acc = 0.0;
    std::string checkpoint_path;
    std::string metrics_path;
};

// Full training run. Writes metrics.csv (epoch,train_loss,ce,reg,val_acc) and
// the best-validation checkpoint under out_dir; ties in accuracy go to the
// lower validation loss. Bit-deterministic in (data, configs, seed).
TrainResult train_model(DatasetProvider& data, const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const std::string& out_dir);

// Central-difference check of the full objective (the LMR mixture term plus
// both KL directions at alpha = 0.5) through a tiny double-precision model,
// over every parameter coordinate. Returns the max relative error.
double objective_gradient_check();

} // namespace uareg
