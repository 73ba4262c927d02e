#pragma once

#include "uareg/autodiff.hpp"
#include "uareg/common.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace uareg {

struct AdamWConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-5;
};

void validate(const AdamWConfig& cfg);

// AdamW with decoupled decay: the decay term is subtracted from the parameter
// directly and never enters the moment estimates, so weight_decay = 0 is plain
// Adam, step for step. Moments are kept in double whatever the parameter
// precision.
template <typename T>
class AdamW {
public:
    AdamW(std::vector<std::pair<std::string, ad::NodePtr<T>>> params, AdamWConfig cfg)
        : params_(std::move(params)), cfg_(cfg) {
        validate(cfg_);
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            if (!params_[i].second)
                throw Error("optimizer: null parameter '" + params_[i].first + "'");
            m_[i].assign(params_[i].second->value.values.size(), 0.0);
            v_[i].assign(params_[i].second->value.values.size(), 0.0);
        }
    }

    // One update from the gradients currently stored on the parameters. A
    // parameter the backward pass never reached counts as zero gradient. Any
    // non-finite gradient aborts before any parameter or moment is touched.
    void step() {
        for (const auto& [name, p] : params_) {
            const auto& g = p->grad.values;
            if (g.empty()) continue;
            if (g.size() != p->value.values.size())
                throw Error("optimizer: gradient shape mismatch for '" + name + "'");
            for (std::size_t k = 0; k < g.size(); ++k)
                if (!std::isfinite(static_cast<double>(g[k])))
                    throw Error("optimizer: non-finite gradient in '" + name + "' (entry " +
                                std::to_string(k) + " = " +
                                std::to_string(static_cast<double>(g[k])) + ") at step " +
                                std::to_string(t_ + 1) + "; update aborted");
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& p = *params_[i].second;
            const bool has_grad = !p.grad.values.empty();
            for (std::size_t k = 0; k < p.value.values.size(); ++k) {
                const double g = has_grad ? static_cast<double>(p.grad.values[k]) : 0.0;
                double& m = m_[i][k];
                double& v = v_[i][k];
                m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
                v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                const double theta = static_cast<double>(p.value.values[k]);
                p.value.values[k] =
                    static_cast<T>(theta - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) -
                                   cfg_.lr * cfg_.weight_decay * theta);
            }
        }
    }

    void zero_grad() {
        for (auto& [name, p] : params_) p->zero_grad();
    }

    std::int64_t steps_taken() const { return t_; }

private:
    std::vector<std::pair<std::string, ad::NodePtr<T>>> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamWConfig cfg_;
    std::int64_t t_ = 0;
};

} // namespace uareg
