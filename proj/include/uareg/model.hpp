#pragma once

#include "uareg/autodiff.hpp"
#include "uareg/dsp.hpp"
#include "uareg/rng.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace uareg {

struct ModelConfig {
    std::int64_t in_channels = 1;
    std::int64_t stem_channels = 16;
    std::vector<std::int64_t> stage_widths = {16, 32, 64, 128}; // full scale: 64,128,256,512
    std::int64_t blocks_per_stage = 2;
    std::int64_t attention_heads = 4;
    std::int64_t n_classes = 2;
    std::int64_t crop_frames = 384;        // time-axis crop/pad before the stem
    std::int64_t stem_freq_stride_above = 512; // frequency stride 4 when F exceeds this

    void validate() const;
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
};

template <typename T>
struct ConvBn {
    ad::NodePtr<T> w;
    ad::NodePtr<T> gamma;
    ad::NodePtr<T> beta;
    ad::BnStats<T>* stats = nullptr;
};

template <typename T>
struct ResidualBlock {
    ConvBn<T> conv1; // stride carried by the stage layout
    ConvBn<T> conv2;
    std::optional<ConvBn<T>> proj; // 1x1 skip projection on width/stride change
    std::int64_t stride = 1;
};

template <typename T>
struct Model {
    ModelConfig cfg;
    bool training = false;

    ConvBn<T> stem;
    std::vector<std::vector<ResidualBlock<T>>> stages;
    ad::NodePtr<T> attn_query, attn_wq, attn_wk, attn_wv, attn_wo;
    ad::NodePtr<T> fc_w, fc_b;

    std::vector<std::pair<std::string, ad::NodePtr<T>>> params; // trainable, stable order
    std::vector<std::pair<std::string, ad::Tensor<T>*>> buffers; // BN running stats
    std::vector<std::unique_ptr<ad::BnStats<T>>> stats_storage;

    void set_training(bool on) { training = on; }
    std::int64_t param_count() const {
        std::int64_t n = 0;
        for (const auto& [name, p] : params) n += p->value.numel();
        return n;
    }
};

template <typename T>
Model<T> build_model(const ModelConfig& cfg, Rng& rng);

// Center-crops or zero-pads the time axis of each T x F feature to
// crop_frames and stacks the batch as [N, 1, crop_frames, F].
template <typename T>
ad::Tensor<T> prepare_batch(const std::vector<const Matrix*>& feats, std::int64_t crop_frames);

// Builds the forward graph on the model's parameter leaves. attn_out, when
// given, receives the attention-weight node ([N*heads, 1, L]).
template <typename T>
ad::NodePtr<T> forward_logits(Model<T>& model, const ad::NodePtr<T>& x,
                              ad::NodePtr<T>* attn_out = nullptr);

// Convenience: prepare + forward under the model's current mode.
template <typename T>
ad::Tensor<T> predict(Model<T>& model, const std::vector<const Matrix*>& feats);

// Binary checkpoint: magic "UAMODEL1", u32 entry count, per entry u32 name
// length + name, u32 rank, u32 dims, float32 payload; entries cover trainable
// parameters and BN running statistics. A JSON trailer at the end records the
// model config plus whatever the caller passes (class names, feature config).
void save_checkpoint(const Model<float>& model, const std::string& path,
                     const nlohmann::json& extra);
std::pair<Model<float>, nlohmann::json> load_checkpoint(const std::string& path);

} // namespace uareg

// ---- template definitions ----

namespace uareg {

namespace model_detail {

template <typename T>
ad::NodePtr<T> he_conv(std::vector<std::int64_t> shape, Rng& rng) {
    ad::Tensor<T> t(shape);
    const double fan_in = static_cast<double>(shape[1] * shape[2] * shape[3]);
    const double sd = std::sqrt(2.0 / fan_in);
    for (T& v : t.values) v = static_cast<T>(rng.normal(0.0, sd));
    return ad::leaf(std::move(t), true);
}

template <typename T>
ad::NodePtr<T> he_linear(std::int64_t in, std::int64_t out, Rng& rng) {
    ad::Tensor<T> t({in, out});
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    for (T& v : t.values) v = static_cast<T>(rng.normal(0.0, sd));
    return ad::leaf(std::move(t), true);
}

} // namespace model_detail

template <typename T>
Model<T> build_model(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    Model<T> m;
    m.cfg = cfg;

    auto track = [&m](const std::string& name, const ad::NodePtr<T>& p) {
        p->name = name;
        m.params.emplace_back(name, p);
        return p;
    };
    auto make_bn = [&m](const std::string& prefix, std::int64_t channels) {
        ConvBn<T> cb;
        cb.gamma = ad::leaf(ad::Tensor<T>::full({channels}, T(1)), true);
        cb.beta = ad::leaf(ad::Tensor<T>({channels}), true);
        cb.gamma->name = prefix + ".gamma";
        cb.beta->name = prefix + ".beta";
        m.params.emplace_back(cb.gamma->name, cb.gamma);
        m.params.emplace_back(cb.beta->name, cb.beta);
        m.stats_storage.push_back(std::make_unique<ad::BnStats<T>>(channels));
        cb.stats = m.stats_storage.back().get();
        m.buffers.emplace_back(prefix + ".running_mean", &cb.stats->running_mean);
        m.buffers.emplace_back(prefix + ".running_var", &cb.stats->running_var);
        return cb;
    };

    // Stem: 7x7 stride-2 conv, BN, ReLU, 3x3 stride-2 max pool.
    {
        ConvBn<T> stem = make_bn("stem.bn", cfg.stem_channels);
        stem.w = track("stem.conv.w",
                       model_detail::he_conv<T>({cfg.stem_channels, cfg.in_channels, 7, 7}, rng));
        m.stem = stem;
    }

    std::int64_t in_ch = cfg.stem_channels;
    for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
        const std::int64_t out_ch = cfg.stage_widths[s];
        std::vector<ResidualBlock<T>> blocks;
        for (std::int64_t b = 0; b < cfg.blocks_per_stage; ++b) {
            const std::string prefix =
                "layer" + std::to_string(s + 1) + ".block" + std::to_string(b);
            ResidualBlock<T> blk;
            blk.stride = (s > 0 && b == 0) ? 2 : 1;
            blk.conv1 = make_bn(prefix + ".bn1", out_ch);
            blk.conv1.w =
                track(prefix + ".conv1.w", model_detail::he_conv<T>({out_ch, in_ch, 3, 3}, rng));
            blk.conv2 = make_bn(prefix + ".bn2", out_ch);
            blk.conv2.w =
                track(prefix + ".conv2.w", model_detail::he_conv<T>({out_ch, out_ch, 3, 3}, rng));
            if (blk.stride != 1 || in_ch != out_ch) {
                ConvBn<T> proj = make_bn(prefix + ".proj_bn", out_ch);
                proj.w = track(prefix + ".proj.w",
                               model_detail::he_conv<T>({out_ch, in_ch, 1, 1}, rng));
                blk.proj = proj;
            }
            blocks.push_back(std::move(blk));
            in_ch = out_ch;
        }
        m.stages.push_back(std::move(blocks));
    }

    const std::int64_t c = cfg.stage_widths.back();
    {
        ad::Tensor<T> q({1, c});
        const double sd = std::sqrt(1.0 / static_cast<double>(c));
        for (T& v : q.values) v = static_cast<T>(rng.normal(0.0, sd));
        m.attn_query = track("attn.query", ad::leaf(std::move(q), true));
    }
    m.attn_wq = track("attn.wq.w", model_detail::he_linear<T>(c, c, rng));
    m.attn_wk = track("attn.wk.w", model_detail::he_linear<T>(c, c, rng));
    m.attn_wv = track("attn.wv.w", model_detail::he_linear<T>(c, c, rng));
    m.attn_wo = track("attn.wo.w", model_detail::he_linear<T>(c, c, rng));
    m.fc_w = track("fc.w", model_detail::he_linear<T>(c, cfg.n_classes, rng));
    m.fc_b = track("fc.b", ad::leaf(ad::Tensor<T>({cfg.n_classes}), true));
    return m;
}

template <typename T>
ad::Tensor<T> prepare_batch(const std::vector<const Matrix*>& feats, std::int64_t crop_frames) {
    if (feats.empty()) throw Error("empty batch");
    const auto f = static_cast<std::int64_t>(feats[0]->cols);
    for (const Matrix* m : feats)
        if (static_cast<std::int64_t>(m->cols) != f)
            throw Error("batch mixes feature widths");

    const auto n = static_cast<std::int64_t>(feats.size());
    ad::Tensor<T> x({n, 1, crop_frames, f});
    for (std::int64_t i = 0; i < n; ++i) {
        const Matrix& src = *feats[static_cast<std::size_t>(i)];
        const auto t_in = static_cast<std::int64_t>(src.rows);
        // Center alignment both ways: crop the middle or pad symmetrically.
        const std::int64_t src0 = t_in > crop_frames ? (t_in - crop_frames) / 2 : 0;
        const std::int64_t dst0 = t_in < crop_frames ? (crop_frames - t_in) / 2 : 0;
        const std::int64_t rows = std::min(t_in, crop_frames);
        for (std::int64_t r = 0; r < rows; ++r) {
            const float* s = src.row(static_cast<std::size_t>(src0 + r));
            T* d = x.values.data() + ((i * crop_frames) + dst0 + r) * f;
            for (std::int64_t j = 0; j < f; ++j) d[j] = static_cast<T>(s[j]);
        }
    }
    return x;
}

namespace model_detail {

template <typename T>
ad::NodePtr<T> conv_bn_relu(Model<T>& m, const ConvBn<T>& cb, const ad::NodePtr<T>& x,
                            std::int64_t stride_h, std::int64_t stride_w, std::int64_t pad,
                            bool with_relu) {
    auto y = ad::conv2d<T>(x, cb.w, nullptr, stride_h, stride_w, pad);
    y = ad::batch_norm2d(y, cb.gamma, cb.beta, *cb.stats, m.training);
    return with_relu ? ad::relu(y) : y;
}

} // namespace model_detail

template <typename T>
ad::NodePtr<T> forward_logits(Model<T>& model, const ad::NodePtr<T>& x,
                              ad::NodePtr<T>* attn_out) {
    if (x->value.rank() != 4 || x->value.dim(1) != model.cfg.in_channels)
        throw Error("model input must be [N," + std::to_string(model.cfg.in_channels) +
                    ",T,F], got " + ad::shape_str(x->value.shape));

    const std::int64_t freq_stride = x->value.dim(3) > model.cfg.stem_freq_stride_above ? 4 : 2;
    auto h = model_detail::conv_bn_relu(model, model.stem, x, 2, freq_stride, 3, true);
    h = ad::max_pool2d(h, 3, 2);

    for (const auto& stage : model.stages)
        for (const auto& blk : stage) {
            auto branch = model_detail::conv_bn_relu(model, blk.conv1, h, blk.stride, blk.stride,
                                                     1, true);
            branch = model_detail::conv_bn_relu(model, blk.conv2, branch, 1, 1, 1, false);
            auto skip = blk.proj ? model_detail::conv_bn_relu(model, *blk.proj, h, blk.stride,
                                                              blk.stride, 0, false)
                                 : h;
            h = ad::relu(ad::add(branch, skip));
        }

    // Attention pooling: learned query attends over the flattened grid, heads
    // are concatenated and flattened into one vector per sample.
    const std::int64_t n = h->value.dim(0), c = h->value.dim(1),
                       l = h->value.dim(2) * h->value.dim(3);
    auto tokens = permute(reshape(h, {n, c, l}), {0, 2, 1}); // [N, L, C]
    auto project = [&](const ad::NodePtr<T>& w) {
        return reshape(matmul(reshape(tokens, {n * l, c}), w), {n, l, c});
    };
    auto q = expand_batch(matmul(model.attn_query, model.attn_wq), n); // [N, 1, C]
    auto pooled = scaled_dot_product_attention(q, project(model.attn_wk), project(model.attn_wv),
                                               model.cfg.attention_heads, attn_out);
    auto vec = matmul(reshape(pooled, {n, c}), model.attn_wo);
    return linear(vec, model.fc_w, model.fc_b);
}

template <typename T>
ad::Tensor<T> predict(Model<T>& model, const std::vector<const Matrix*>& feats) {
    auto x = ad::leaf(prepare_batch<T>(feats, model.cfg.crop_frames));
    return forward_logits(model, x)->value;
}

} // namespace uareg
