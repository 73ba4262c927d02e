#include "doctest.h"
#include "helpers.hpp"

#include "uareg/common.hpp"
#include "uareg/model.hpp"
#include "uareg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

using namespace uareg;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.stem_channels = 4;
    cfg.stage_widths = {4, 8};
    cfg.blocks_per_stage = 1;
    cfg.attention_heads = 2;
    cfg.n_classes = 3;
    cfg.crop_frames = 32;
    return cfg;
}

// Mirror of the documented layer layout: 7x7 stem conv, two 3x3 convs per
// block with batch norm pairs, a 1x1 projection on width or stride changes,
// four square attention projections plus a learned query, and the classifier.
std::int64_t expected_param_count(const ModelConfig& cfg) {
    auto bn = [](std::int64_t ch) { return 2 * ch; };
    std::int64_t n = cfg.stem_channels * cfg.in_channels * 49 + bn(cfg.stem_channels);
    std::int64_t in_ch = cfg.stem_channels;
    for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
        const std::int64_t w = cfg.stage_widths[s];
        for (std::int64_t b = 0; b < cfg.blocks_per_stage; ++b) {
            const bool strided = s > 0 && b == 0;
            n += w * in_ch * 9 + bn(w);
            n += w * w * 9 + bn(w);
            if (strided || in_ch != w) n += w * in_ch + bn(w);
            in_ch = w;
        }
    }
    const std::int64_t c = cfg.stage_widths.back();
    n += c;             // query
    n += 4 * c * c;     // wq, wk, wv, wo
    n += c * cfg.n_classes + cfg.n_classes;
    return n;
}

Matrix constant_feature(std::size_t rows, std::size_t cols, float value) {
    Matrix m(rows, cols);
    for (float& v : m.data) v = value;
    return m;
}

} // namespace

TEST_CASE("config validation rejects broken settings") {
    CHECK_THROWS_AS(
        ([] { ModelConfig c = tiny_config(); c.stage_widths = {8, 4}; c.validate(); }()),
        Error); // shrinking widths
    CHECK_THROWS_AS([] { ModelConfig c = tiny_config(); c.n_classes = 1; c.validate(); }(), Error);
    CHECK_THROWS_AS([] { ModelConfig c = tiny_config(); c.attention_heads = 3; c.validate(); }(),
                    Error); // 3 does not divide 8
    CHECK_THROWS_AS([] { ModelConfig c = tiny_config(); c.stage_widths = {}; c.validate(); }(),
                    Error);
    CHECK_THROWS_AS([] { ModelConfig c = tiny_config(); c.crop_frames = 4; c.validate(); }(),
                    Error);
    CHECK_NOTHROW(tiny_config().validate());

    const auto j = tiny_config().to_json();
    const auto back = ModelConfig::from_json(j);
    CHECK(back.stage_widths == tiny_config().stage_widths);
    CHECK(back.n_classes == 3);
    CHECK(back.crop_frames == 32);
}

TEST_CASE("parameter count matches the documented layout") {
    Rng rng(1);
    const auto cfg = tiny_config();
    auto model = build_model<float>(cfg, rng);
    CHECK(model.param_count() == expected_param_count(cfg));

    ModelConfig wide = cfg;
    wide.stage_widths = {8, 16};
    wide.stem_channels = 8;
    Rng rng2(1);
    auto model2 = build_model<float>(wide, rng2);
    CHECK(model2.param_count() == expected_param_count(wide));

    // Doubling every width multiplies each square 3x3 conv exactly by four.
    auto conv2_numel = [](const Model<float>& m) {
        std::int64_t n = 0;
        for (const auto& [name, p] : m.params)
            if (name.find("conv2.w") != std::string::npos) n += p->value.numel();
        return n;
    };
    CHECK(conv2_numel(model2) == 4 * conv2_numel(model));

    // Nine classes give a nine-dimensional classifier output.
    ModelConfig nine = cfg;
    nine.n_classes = 9;
    Rng rng3(2);
    auto model9 = build_model<float>(nine, rng3);
    const auto feats = constant_feature(32, 24, 0.5f);
    const auto logits = predict(model9, {&feats});
    CHECK(logits.shape == std::vector<std::int64_t>{1, 9});
}

TEST_CASE("prepare_batch center-crops or center-pads the time axis") {
    Matrix longer(10, 3);
    for (std::size_t i = 0; i < longer.data.size(); ++i)
        longer.data[i] = static_cast<float>(i);

    // Crop 10 -> 4: keep rows 3..6.
    const auto cropped = prepare_batch<float>({&longer}, 4);
    REQUIRE(cropped.shape == std::vector<std::int64_t>{1, 1, 4, 3});
    for (std::int64_t r = 0; r < 4; ++r)
        for (std::int64_t j = 0; j < 3; ++j)
            REQUIRE(cropped.values[static_cast<std::size_t>(r * 3 + j)] ==
                    longer.at(static_cast<std::size_t>(r + 3), static_cast<std::size_t>(j)));

    // Pad 10 -> 14: rows 0..1 and 12..13 are zero, the middle is the input.
    const auto padded = prepare_batch<float>({&longer}, 14);
    REQUIRE(padded.shape == std::vector<std::int64_t>{1, 1, 14, 3});
    for (std::int64_t r = 0; r < 14; ++r)
        for (std::int64_t j = 0; j < 3; ++j) {
            const float v = padded.values[static_cast<std::size_t>(r * 3 + j)];
            if (r < 2 || r >= 12)
                REQUIRE(v == 0.0f);
            else
                REQUIRE(v == longer.at(static_cast<std::size_t>(r - 2), static_cast<std::size_t>(j)));
        }

    CHECK_THROWS_AS(prepare_batch<float>({}, 4), Error);
    Matrix other(10, 4);
    CHECK_THROWS_AS(prepare_batch<float>({&longer, &other}, 4), Error);
}

TEST_CASE("forward produces [batch, classes] logits and per-row attention distributions") {
    Rng rng(3);
    auto model = build_model<float>(tiny_config(), rng);
    model.set_training(false);

    const auto f1 = constant_feature(40, 24, 0.3f);
    const auto f2 = constant_feature(28, 24, -0.2f);
    auto x = ad::leaf(prepare_batch<float>({&f1, &f2}, model.cfg.crop_frames));
    ad::NodePtr<float> attn;
    const auto logits = forward_logits(model, x, &attn);
    CHECK(logits->value.shape == std::vector<std::int64_t>{2, 3});

    REQUIRE(attn->value.rank() == 3);
    CHECK(attn->value.dim(0) == 2 * model.cfg.attention_heads);
    CHECK(attn->value.dim(1) == 1); // one learned query
    const auto lk = attn->value.dim(2);
    for (std::int64_t r = 0; r < attn->value.dim(0); ++r) {
        double row = 0.0;
        for (std::int64_t c = 0; c < lk; ++c)
            row += attn->value.values[static_cast<std::size_t>(r * lk + c)];
        CHECK(row == doctest::Approx(1.0).epsilon(1e-5));
    }

    auto bad = ad::leaf(ad::Tensor<float>({2, 3, 4}));
    CHECK_THROWS_AS(forward_logits(model, bad), Error);
}

TEST_CASE("batch order does not change per-sample logits in eval mode") {
    Rng rng(4);
    auto model = build_model<float>(tiny_config(), rng);
    model.set_training(false);

    Rng fr(5);
    Matrix a(36, 20), b(36, 20), c(36, 20);
    for (Matrix* m : {&a, &b, &c})
        for (float& v : m->data) v = static_cast<float>(fr.uniform(-1.0, 1.0));

    const auto abc = predict(model, {&a, &b, &c});
    const auto cab = predict(model, {&c, &a, &b});
    for (std::int64_t j = 0; j < 3; ++j) {
        CHECK(abc.values[static_cast<std::size_t>(j)] ==
              doctest::Approx(cab.values[static_cast<std::size_t>(3 + j)]).epsilon(1e-5));
        CHECK(abc.values[static_cast<std::size_t>(3 + j)] ==
              doctest::Approx(cab.values[static_cast<std::size_t>(6 + j)]).epsilon(1e-5));
    }

    // Same input twice in eval mode is bit-identical.
    const auto again = predict(model, {&a, &b, &c});
    CHECK(abc.values == again.values);
}

TEST_CASE("training-mode forwards update batch norm running statistics") {
    Rng rng(6);
    auto model = build_model<float>(tiny_config(), rng);
    model.set_training(true);

    std::vector<float> before;
    for (const auto& [name, t] : model.buffers) before.push_back(t->values[0]);

    const auto f = constant_feature(32, 20, 0.7f);
    (void)predict(model, {&f, &f});

    bool changed = false;
    std::size_t i = 0;
    for (const auto& [name, t] : model.buffers) changed = changed || t->values[0] != before[i++];
    CHECK(changed);

    // Eval-mode forwards leave them alone.
    model.set_training(false);
    std::vector<float> frozen;
    for (const auto& [name, t] : model.buffers) frozen.push_back(t->values[0]);
    (void)predict(model, {&f});
    i = 0;
    for (const auto& [name, t] : model.buffers) REQUIRE(t->values[0] == frozen[i++]);
}

TEST_CASE("zero input with a zeroed classifier yields equal logits") {
    Rng rng(7);
    auto model = build_model<float>(tiny_config(), rng);
    model.set_training(false);
    for (auto& [name, p] : model.params)
        if (name == "fc.w" || name == "fc.b")
            std::fill(p->value.values.begin(), p->value.values.end(), 0.0f);

    const auto zeros = constant_feature(32, 20, 0.0f);
    const auto logits = predict(model, {&zeros});
    REQUIRE(logits.values.size() == 3);
    CHECK(logits.values[0] == logits.values[1]);
    CHECK(logits.values[1] == logits.values[2]);
}

TEST_CASE("identity skip connections are used when shape is preserved") {
    Rng rng(8);
    auto model = build_model<float>(tiny_config(), rng);
    // Stage 1 block 0: stride 1 and stem width equals stage width -> no proj.
    CHECK_FALSE(model.stages[0][0].proj.has_value());
    // Stage 2 block 0: stride 2 -> projection present.
    CHECK(model.stages[1][0].proj.has_value());

    ModelConfig deeper = tiny_config();
    deeper.blocks_per_stage = 2;
    Rng rng2(9);
    auto model2 = build_model<float>(deeper, rng2);
    CHECK_FALSE(model2.stages[1][1].proj.has_value()); // second block: same width, stride 1
}

TEST_CASE("checkpoints round-trip parameters bit for bit with the extra trailer") {
    Rng rng(10);
    auto model = build_model<float>(tiny_config(), rng);
    model.set_training(true);
    const auto f = constant_feature(32, 20, 0.4f);
    (void)predict(model, {&f, &f}); // move the running stats off their defaults

    testutil::TempDir tmp("ckpt");
    const auto path = tmp.sub("model.ckpt");
    nlohmann::json extra;
    extra["classes"] = {"a", "b", "c"};
    extra["note"] = 42;
    save_checkpoint(model, path, extra);

    auto [back, trailer] = load_checkpoint(path);
    CHECK(trailer["classes"] == nlohmann::json({"a", "b", "c"}));
    CHECK(trailer["note"] == 42);
    CHECK(back.cfg.stage_widths == model.cfg.stage_widths);
    CHECK(back.cfg.n_classes == model.cfg.n_classes);

    REQUIRE(back.params.size() == model.params.size());
    for (std::size_t i = 0; i < model.params.size(); ++i) {
        CHECK(back.params[i].first == model.params[i].first);
        REQUIRE(back.params[i].second->value.values == model.params[i].second->value.values);
    }
    REQUIRE(back.buffers.size() == model.buffers.size());
    for (std::size_t i = 0; i < model.buffers.size(); ++i)
        REQUIRE(back.buffers[i].second->values == model.buffers[i].second->values);

    // The restored model predicts identically.
    back.set_training(false);
    model.set_training(false);
    const auto a = predict(model, {&f});
    const auto b = predict(back, {&f});
    CHECK(a.values == b.values);

    CHECK_THROWS_AS(load_checkpoint(tmp.sub("missing.ckpt")), Error);
    std::ofstream(tmp.sub("junk.ckpt"), std::ios::binary) << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(tmp.sub("junk.ckpt")), Error);
}

TEST_CASE("model construction is deterministic in the seed") {
    Rng a(11), b(11), c(12);
    auto m1 = build_model<float>(tiny_config(), a);
    auto m2 = build_model<float>(tiny_config(), b);
    auto m3 = build_model<float>(tiny_config(), c);
    bool same = true, diff = false;
    for (std::size_t i = 0; i < m1.params.size(); ++i) {
        same = same && m1.params[i].second->value.values == m2.params[i].second->value.values;
        diff = diff || m1.params[i].second->value.values != m3.params[i].second->value.values;
    }
    CHECK(same);
    CHECK(diff);
}
