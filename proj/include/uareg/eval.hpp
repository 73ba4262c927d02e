#pragma once

#include "uareg/data.hpp"
#include "uareg/model.hpp"
#include "uareg/train.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace uareg {

struct ConfusionMatrix {
    std::vector<std::string> class_names;
    std::vector<std::int64_t> counts; // square, rows = true label, cols = predicted

    std::int64_t n() const { return static_cast<std::int64_t>(class_names.size()); }
    std::int64_t& at(std::int64_t t, std::int64_t p) {
        return counts[static_cast<std::size_t>(t * n() + p)];
    }
    std::int64_t at(std::int64_t t, std::int64_t p) const {
        return counts[static_cast<std::size_t>(t * n() + p)];
    }
    std::int64_t total() const;
    std::int64_t trace() const;
    double accuracy() const; // trace / total

    std::string to_csv() const;
    // Grayscale heat map, one block per cell, white = largest count.
    void write_pgm(const std::string& path, std::size_t cell_px = 32) const;
};

struct EvalResult {
    double accuracy = 0.0;
    double mean_ce = 0.0;
    ConfusionMatrix confusion;
};

// Clean-feature evaluation of one split; the model runs in eval mode and is
// restored to its previous mode afterwards.
EvalResult evaluate(Model<float>& model, DatasetProvider& data, const std::string& split,
                    std::int64_t batch = 64);

// SNR interval for one sweep point; +inf bounds mean the clean baseline.
struct SnrRange {
    double lo_db = std::numeric_limits<double>::infinity();
    double hi_db = std::numeric_limits<double>::infinity();

    bool clean() const { return !std::isfinite(lo_db); }
};

std::vector<SnrRange> default_snr_ranges(); // (5,30), (-5,20), (-15,10)
std::vector<SnrRange> parse_snr_ranges(const std::string& text); // "5:30,-5:20,-15:10"

struct SnrSweepRow {
    SnrRange range;
    double accuracy = 0.0;
};

struct SnrSweepResult {
    double clean_accuracy = 0.0;
    std::vector<SnrSweepRow> rows;

    std::string to_csv() const;
};

// Per range, every test segment is perturbed with SNR ~ U(range) and
// re-featurized; repeats > 1 averages over fresh realizations. Deterministic
// in the seed.
SnrSweepResult snr_sweep(Model<float>& model, DatasetProvider& data,
                         const std::vector<SnrRange>& ranges, std::uint64_t seed, int repeats = 1,
                         const std::string& split = "test");

struct AlphaSweepRow {
    double alpha = 0.0;
    double val_acc = 0.0;
    double test_acc = 0.0;
};

// One full training per alpha under a shared seed; each run lands in
// out_dir/alpha-<value>. Rows follow the alphas order.
std::vector<AlphaSweepRow> alpha_sweep(DatasetProvider& data, const ModelConfig& mcfg,
                                       const TrainConfig& base,
                                       const std::vector<double>& alphas,
                                       const std::string& out_dir);

std::string alpha_table_csv(const std::vector<AlphaSweepRow>& rows);

} // namespace uareg
