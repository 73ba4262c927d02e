#include "doctest.h"

#include "uareg/loss.hpp"
#include "uareg/rng.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

using namespace uareg;

namespace {

ad::NodePtr<double> logits_node(std::vector<double> vals, std::int64_t batch, std::int64_t classes,
                                bool track = false) {
    ad::Tensor<double> t({batch, classes});
    t.values = std::move(vals);
    return ad::leaf(std::move(t), track);
}

double value_of(const ad::NodePtr<double>& n) { return n->value.values[0]; }

} // namespace

TEST_CASE("kl_term vanishes when both arguments agree") {
    auto z = logits_node({0.3, -1.2, 2.0, 0.0, 0.5, -0.5}, 2, 3);
    auto same = logits_node({0.3, -1.2, 2.0, 0.0, 0.5, -0.5}, 2, 3);
    CHECK(value_of(kl_term(z, same)) == 0.0);
}

TEST_CASE("kl_term reproduces the two-class hand computation") {
    // softmax([0,0]) = (1/2, 1/2); softmax([0, ln 3]) = (1/4, 3/4).
    auto z = logits_node({0.0, 0.0}, 1, 2);
    auto zt = logits_node({0.0, std::log(3.0)}, 1, 2);

    // Forward: 0.5*ln(0.5/0.25) + 0.5*ln(0.5/0.75) = 0.5*ln(4/3).
    const double fwd = 0.5 * std::log(4.0 / 3.0);
    CHECK(value_of(kl_term(z, zt)) == doctest::Approx(fwd).epsilon(1e-12));
    CHECK(fwd == doctest::Approx(0.14384103622589045).epsilon(1e-15));

    // Reverse: 0.25*ln(0.25/0.5) + 0.75*ln(0.75/0.5).
    const double rev = 0.25 * std::log(0.25 / 0.5) + 0.75 * std::log(0.75 / 0.5);
    CHECK(value_of(kl_term(zt, z)) == doctest::Approx(rev).epsilon(1e-12));
    CHECK(rev == doctest::Approx(0.130812035941137).epsilon(1e-12));

    CHECK(value_of(smooth_reg(z, zt)) == doctest::Approx(fwd + rev).epsilon(1e-12));
}

TEST_CASE("kl_term averages over the batch") {
    // Two identical rows give the same value as one.
    auto z1 = logits_node({1.0, -0.5}, 1, 2);
    auto zt1 = logits_node({-0.2, 0.7}, 1, 2);
    auto z2 = logits_node({1.0, -0.5, 1.0, -0.5}, 2, 2);
    auto zt2 = logits_node({-0.2, 0.7, -0.2, 0.7}, 2, 2);
    CHECK(value_of(kl_term(z2, zt2)) == doctest::Approx(value_of(kl_term(z1, zt1))).epsilon(1e-12));
}

TEST_CASE("kl_term is nonnegative on random logit pairs") {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> a(20), b(20);
        for (double& v : a) v = rng.uniform(-4.0, 4.0);
        for (double& v : b) v = rng.uniform(-4.0, 4.0);
        auto z = logits_node(std::move(a), 4, 5);
        auto zt = logits_node(std::move(b), 4, 5);
        CHECK(value_of(kl_term(z, zt)) >= -1e-12);
    }
}

TEST_CASE("smooth_reg is symmetric in its arguments") {
    Rng rng(102);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(6), b(6);
        for (double& v : a) v = rng.uniform(-3.0, 3.0);
        for (double& v : b) v = rng.uniform(-3.0, 3.0);
        auto z = logits_node(std::move(a), 2, 3);
        auto zt = logits_node(std::move(b), 2, 3);
        CHECK(value_of(smooth_reg(z, zt)) ==
              doctest::Approx(value_of(smooth_reg(zt, z))).epsilon(1e-12));
    }
}

TEST_CASE("kl_term rejects mismatched or non-2d logits") {
    auto a = logits_node({0.0, 0.0}, 1, 2);
    auto b = logits_node({0.0, 0.0, 0.0}, 1, 3);
    CHECK_THROWS_WITH_AS(kl_term(a, b), doctest::Contains("one [batch, classes] shape"), Error);
    ad::Tensor<double> cube({1, 2, 1});
    auto c = ad::leaf(std::move(cube));
    CHECK_THROWS_AS(kl_term(c, c), Error);
}

TEST_CASE("kl_term gradients agree with finite differences") {
    Rng rng(103);
    ad::Tensor<double> za({2, 3}), zb({2, 3});
    for (double& v : za.values) v = rng.uniform(-2.0, 2.0);
    for (double& v : zb.values) v = rng.uniform(-2.0, 2.0);
    auto z = ad::leaf(std::move(za), true);
    auto zt = ad::leaf(std::move(zb), true);
    const double rel = ad::grad_check<double>([&] { return smooth_reg(z, zt); }, {z, zt}, 1e-4);
    CHECK(rel < 1e-6);
}

TEST_CASE("cross-entropy over two equal logits is ln 2 and is shift invariant") {
    auto z = logits_node({0.0, 0.0}, 1, 2);
    TaggedLogits<double> tagged{z, LogitsKind::raw};
    CHECK(value_of(cross_entropy(tagged, {0})) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    Rng rng(104);
    std::vector<double> base(8);
    for (double& v : base) v = rng.uniform(-3.0, 3.0);
    std::vector<double> shifted = base;
    for (std::size_t i = 0; i < 4; ++i) shifted[i] += 100.0;     // row 0
    for (std::size_t i = 4; i < 8; ++i) shifted[i] += -250.0;    // row 1
    TaggedLogits<double> t0{logits_node(std::vector<double>(base), 2, 4), LogitsKind::raw};
    TaggedLogits<double> t1{logits_node(std::move(shifted), 2, 4), LogitsKind::raw};
    const std::vector<std::int64_t> labels = {2, 1};
    CHECK(value_of(cross_entropy(t0, labels)) ==
          doctest::Approx(value_of(cross_entropy(t1, labels))).epsilon(1e-9));
}

TEST_CASE("cross-entropy stays finite and exact at extreme logits") {
    TaggedLogits<double> confident{logits_node({1000.0, 0.0}, 1, 2), LogitsKind::raw};
    const double right = value_of(cross_entropy(confident, {0}));
    CHECK(std::isfinite(right));
    CHECK(right == doctest::Approx(0.0).epsilon(1e-9));

    TaggedLogits<double> wrong{logits_node({-1000.0, 0.0}, 1, 2), LogitsKind::raw};
    const double missed = value_of(cross_entropy(wrong, {0}));
    CHECK(std::isfinite(missed));
    CHECK(missed == doctest::Approx(1000.0).epsilon(1e-9));
}

TEST_CASE("cross-entropy refuses noisy-tagged logits") {
    TaggedLogits<double> noisy{logits_node({0.0, 0.0}, 1, 2), LogitsKind::noisy};
    CHECK_THROWS_WITH_AS(cross_entropy(noisy, {0}),
                         doctest::Contains("noisy logits is forbidden"), Error);
    CHECK_THROWS_WITH_AS(lmr_loss(noisy, {0}, {1}, 0.5),
                         doctest::Contains("noisy logits is forbidden"), Error);
    // Mixed-tagged logits are legal supervision targets.
    TaggedLogits<double> mixed{logits_node({0.0, 0.0}, 1, 2), LogitsKind::mixed};
    CHECK_NOTHROW(cross_entropy(mixed, {0}));
}

TEST_CASE("mixture loss at lambda one collapses to plain cross-entropy") {
    Rng rng(105);
    std::vector<double> vals(12);
    for (double& v : vals) v = rng.uniform(-2.0, 2.0);
    TaggedLogits<double> t{logits_node(std::move(vals), 3, 4), LogitsKind::mixed};
    const std::vector<std::int64_t> yi = {0, 2, 3}, yj = {1, 1, 0};
    CHECK(value_of(lmr_loss(t, yi, yj, 1.0)) == value_of(cross_entropy(t, yi)));
    CHECK(value_of(lmr_loss(t, yi, yj, 0.0)) == value_of(cross_entropy(t, yj)));
}

TEST_CASE("mixture loss with equal labels is plain cross-entropy at any lambda") {
    TaggedLogits<double> t{logits_node({0.4, -0.3, 1.1}, 1, 3), LogitsKind::mixed};
    const double plain = value_of(cross_entropy(t, {1}));
    for (double lam : {0.1, 0.37, 0.5, 0.93})
        CHECK(value_of(lmr_loss(t, {1}, {1}, lam)) == doctest::Approx(plain).epsilon(1e-12));
}

TEST_CASE("mixture loss matches the two-term hand formula") {
    // Single sample, logits (1, 0, -1), host label 0, donor label 2, lambda 0.3.
    TaggedLogits<double> t{logits_node({1.0, 0.0, -1.0}, 1, 3), LogitsKind::mixed};
    const double lse = std::log(std::exp(1.0) + std::exp(0.0) + std::exp(-1.0));
    const double expected = 0.3 * (lse - 1.0) + 0.7 * (lse - (-1.0));
    CHECK(value_of(lmr_loss(t, {0}, {2}, 0.3)) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mixture loss is affine in lambda") {
    Rng rng(106);
    std::vector<double> vals(8);
    for (double& v : vals) v = rng.uniform(-2.0, 2.0);
    TaggedLogits<double> t{logits_node(std::move(vals), 2, 4), LogitsKind::mixed};
    const std::vector<std::int64_t> yi = {0, 3}, yj = {2, 1};
    const double l0 = value_of(lmr_loss(t, yi, yj, 0.0));
    const double l1 = value_of(lmr_loss(t, yi, yj, 1.0));
    const double lh = value_of(lmr_loss(t, yi, yj, 0.5));
    CHECK(std::abs(lh - 0.5 * (l0 + l1)) <= 1e-12);
}

TEST_CASE("mixture loss validates weights and lengths") {
    TaggedLogits<double> t{logits_node({0.0, 0.0, 0.0, 0.0}, 2, 2), LogitsKind::mixed};
    CHECK_THROWS_WITH_AS(lmr_loss(t, {0, 1}, {1, 0}, {1.2, 0.5}),
                         doctest::Contains("outside [0, 1]"), Error);
    CHECK_THROWS_WITH_AS(lmr_loss(t, {0, 1}, {1, 0}, {-0.1, 0.5}),
                         doctest::Contains("outside [0, 1]"), Error);
    CHECK_THROWS_WITH_AS(lmr_loss(t, {0, 1}, {1}, {0.5, 0.5}),
                         doctest::Contains("one length"), Error);
}

TEST_CASE("total loss with alpha zero is the bare supervision term") {
    TaggedLogits<double> main{logits_node({0.0, 0.0}, 1, 2), LogitsKind::raw};
    TaggedLogits<double> none{};
    auto out = total_loss(main, {0}, {}, {}, none, none, 0.0);
    CHECK(out.reg_term == nullptr);
    CHECK(out.total == out.main_term);
    CHECK(value_of(out.total) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("total loss adds alpha times the consistency term") {
    auto z = logits_node({0.0, 0.0}, 1, 2);
    auto zt = logits_node({0.0, std::log(3.0)}, 1, 2);
    TaggedLogits<double> main{z, LogitsKind::raw};
    TaggedLogits<double> consist{z, LogitsKind::raw};
    TaggedLogits<double> noisy{zt, LogitsKind::noisy};

    auto out = total_loss(main, {0}, {}, {}, consist, noisy, 2.0);
    REQUIRE(out.reg_term != nullptr);
    const double ce = value_of(out.main_term);
    const double reg = value_of(out.reg_term);
    CHECK(ce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(reg == doctest::Approx(0.27465307216702745).epsilon(1e-12));
    CHECK(value_of(out.total) == doctest::Approx(ce + 2.0 * reg).epsilon(1e-12));

    // The alpha = 2 composition quoted to four decimals stays consistent.
    CHECK(1.0 + 2.0 * 0.271547 == doctest::Approx(1.5431).epsilon(1e-5));
}

TEST_CASE("total loss with identical clean and noisy logits reduces to supervision") {
    auto z = logits_node({0.7, -0.4, 0.1}, 1, 3);
    auto zsame = logits_node({0.7, -0.4, 0.1}, 1, 3);
    TaggedLogits<double> main{z, LogitsKind::raw};
    TaggedLogits<double> consist{z, LogitsKind::raw};
    TaggedLogits<double> noisy{zsame, LogitsKind::noisy};
    auto out = total_loss(main, {2}, {}, {}, consist, noisy, 0.5);
    CHECK(value_of(out.reg_term) == 0.0);
    CHECK(value_of(out.total) == value_of(out.main_term));
}

TEST_CASE("total loss routes patched batches through the mixture term") {
    TaggedLogits<double> main{logits_node({1.0, 0.0, -1.0}, 1, 3), LogitsKind::mixed};
    TaggedLogits<double> none{};
    auto out = total_loss(main, {0}, {2}, {0.3}, none, none, 0.0);
    CHECK(value_of(out.total) == value_of(lmr_loss(main, {0}, {2}, 0.3)));
}

TEST_CASE("total loss validates its contract") {
    TaggedLogits<double> main{logits_node({0.0, 0.0}, 1, 2), LogitsKind::raw};
    TaggedLogits<double> none{};
    CHECK_THROWS_WITH_AS(total_loss(main, {0}, {}, {}, none, none, -1.0),
                         doctest::Contains("alpha must be >= 0"), Error);
    CHECK_THROWS_WITH_AS(total_loss(main, {0}, {1}, {}, none, none, 0.0),
                         doctest::Contains("both present or both absent"), Error);
    CHECK_THROWS_WITH_AS(total_loss(main, {0}, {}, {}, none, none, 0.5),
                         doctest::Contains("requires a noisy counterpart"), Error);
    TaggedLogits<double> mislabeled{logits_node({0.0, 0.0}, 1, 2), LogitsKind::raw};
    CHECK_THROWS_WITH_AS(total_loss(main, {0}, {}, {}, main, mislabeled, 0.5),
                         doctest::Contains("must be tagged noisy"), Error);
}
