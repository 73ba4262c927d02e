#pragma once

#include "uareg/autodiff.hpp"
#include "uareg/common.hpp"

#include <cstdint>
#include <string>
#include <vector>

// Loss assembly. Logits carry a provenance tag so that ground-truth labels can
// only ever pair with raw or mixed logits; noise-perturbed logits enter the
// loss exclusively through the KL consistency term.
namespace uareg {

enum class LogitsKind { raw, noisy, mixed };

const char* logits_kind_name(LogitsKind kind);

template <typename T>
struct TaggedLogits {
    ad::NodePtr<T> node;
    LogitsKind kind = LogitsKind::raw;
};

// Batch mean of KL(softmax(z) || softmax(zt)) in nats, differentiable through
// both arguments.
template <typename T>
ad::NodePtr<T> kl_term(const ad::NodePtr<T>& z, const ad::NodePtr<T>& zt) {
    if (!z || !zt) throw Error("kl_term: null logits");
    if (z->value.rank() != 2 || z->value.shape != zt->value.shape)
        throw Error("kl_term: logits must share one [batch, classes] shape, got " +
                    ad::shape_str(z->value.shape) + " vs " + ad::shape_str(zt->value.shape));
    const auto p = ad::softmax(z, 1);
    const auto diff = ad::sub(ad::log_softmax(z, 1), ad::log_softmax(zt, 1));
    return ad::scale(ad::sum(ad::mul(p, diff)), 1.0 / static_cast<double>(z->value.dim(0)));
}

// Symmetrized consistency term, KL both ways.
template <typename T>
ad::NodePtr<T> smooth_reg(const ad::NodePtr<T>& z, const ad::NodePtr<T>& zt) {
    return ad::add(kl_term(z, zt), kl_term(zt, z));
}

template <typename T>
ad::NodePtr<T> cross_entropy(const TaggedLogits<T>& logits, const std::vector<std::int64_t>& labels) {
    if (!logits.node) throw Error("cross-entropy: null logits");
    if (logits.kind == LogitsKind::noisy)
        throw Error("cross-entropy over noisy logits is forbidden; noisy batches feed only the "
                    "consistency term");
    return ad::cross_entropy(logits.node, labels);
}

// Mixture supervision for patched batches: per sample, lambda weights the CE
// against the host label and (1 - lambda) against the donor label.
template <typename T>
ad::NodePtr<T> lmr_loss(const TaggedLogits<T>& logits, const std::vector<std::int64_t>& labels_i,
                        const std::vector<std::int64_t>& labels_j,
                        const std::vector<double>& lambdas) {
    if (!logits.node) throw Error("lmr_loss: null logits");
    if (logits.kind == LogitsKind::noisy)
        throw Error("cross-entropy over noisy logits is forbidden; noisy batches feed only the "
                    "consistency term");
    if (labels_i.size() != labels_j.size() || labels_i.size() != lambdas.size())
        throw Error("lmr_loss: labels_i, labels_j, and lambdas must have one length");
    std::vector<double> complement(lambdas.size());
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        if (!(lambdas[i] >= 0.0 && lambdas[i] <= 1.0))
            throw Error("lmr_loss: mixing weight " + std::to_string(lambdas[i]) +
                        " outside [0, 1] at sample " + std::to_string(i));
        complement[i] = 1.0 - lambdas[i];
    }
    return ad::add(ad::cross_entropy_weighted(logits.node, labels_i, lambdas),
                   ad::cross_entropy_weighted(logits.node, labels_j, complement));
}

template <typename T>
ad::NodePtr<T> lmr_loss(const TaggedLogits<T>& logits, const std::vector<std::int64_t>& labels_i,
                        const std::vector<std::int64_t>& labels_j, double lambda) {
    return lmr_loss(logits, labels_i, labels_j, std::vector<double>(labels_i.size(), lambda));
}

template <typename T>
struct LossBreakdown {
    ad::NodePtr<T> total;
    ad::NodePtr<T> main_term; // CE, or the LMR mixture when the batch was patched
    ad::NodePtr<T> reg_term;  // null when alpha == 0
};

// Full objective: main supervision plus alpha times the consistency term.
// labels_j/lambdas empty means the LMR coin came up tails for this batch.
// The consistency pair is passed explicitly; by default the caller hands the
// unmixed raw logits even when the supervision ran on mixed ones.
template <typename T>
LossBreakdown<T> total_loss(const TaggedLogits<T>& main, const std::vector<std::int64_t>& labels_i,
                            const std::vector<std::int64_t>& labels_j,
                            const std::vector<double>& lambdas, const TaggedLogits<T>& consist,
                            const TaggedLogits<T>& noisy, double alpha) {
    if (alpha < 0.0) throw Error("total_loss: alpha must be >= 0");
    if (labels_j.empty() != lambdas.empty())
        throw Error("total_loss: labels_j and lambdas must be both present or both absent");
    LossBreakdown<T> out;
    out.main_term = labels_j.empty() ? cross_entropy(main, labels_i)
                                     : lmr_loss(main, labels_i, labels_j, lambdas);
    if (alpha > 0.0) {
        if (!consist.node || !noisy.node)
            throw Error("total_loss: alpha > 0 requires a noisy counterpart batch");
        if (noisy.kind != LogitsKind::noisy)
            throw Error("total_loss: consistency counterpart must be tagged noisy, got " +
                        std::string(logits_kind_name(noisy.kind)));
        out.reg_term = smooth_reg(consist.node, noisy.node);
        out.total = ad::add(out.main_term, ad::scale(out.reg_term, alpha));
    } else {
        out.total = out.main_term;
    }
    return out;
}

} // namespace uareg
