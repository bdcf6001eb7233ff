#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "actflow/numerics.hpp"

using namespace actflow;

namespace {

struct ToyParams {
    Tensor a;
    Tensor b;
    template <typename F>
    void for_each_tensor(F&& f) {
        f(std::string("a"), a);
        f(std::string("b"), b);
    }
};

struct ScalarParams {
    Tensor theta{1, 1};
    template <typename F>
    void for_each_tensor(F&& f) { f(std::string("theta"), theta); }
};

}  // namespace

TEST(Rng, SameSeedSameStream) {
    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformInUnitInterval) {
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        double u = rng.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
    }
}

TEST(Rng, ShuffleIsPermutation) {
    Rng rng(5);
    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
    auto orig = v;
    rng.shuffle(v);
    std::sort(v.begin(), v.end());
    EXPECT_EQ(v, orig);
}

TEST(GlorotInit, SingleValueWithinBound) {
    Rng rng(7);
    Tensor t = glorot_init(1, 1, rng);
    EXPECT_LE(std::fabs(t[0]), std::sqrt(3.0));
}

TEST(GlorotInit, Deterministic) {
    Rng r1(42), r2(42);
    Tensor a = glorot_init(2, 3, r1);
    Tensor b = glorot_init(2, 3, r2);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(GlorotInit, LargeSampleMeanNearZero) {
    Rng rng(1);
    Tensor t = glorot_init(100, 100, rng);
    double sum = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) sum += t[i];
    double mean = sum / static_cast<double>(t.size());
    EXPECT_NEAR(mean, 0.0, 0.01);
    // regression pin of the exact seeded value
    EXPECT_NEAR(mean, -0.0036220359625627617, 1e-15);
}

TEST(GlorotInit, ZeroDimensionRejected) {
    Rng rng(3);
    EXPECT_THROW(glorot_init(0, 4, rng), std::invalid_argument);
    EXPECT_THROW(glorot_init(4, 0, rng), std::invalid_argument);
}

TEST(SgdStep, ZeroLearningRateIsIdentity) {
    ToyParams p{Tensor(2, 2, {1, 2, 3, 4}), Tensor(1, 2, {5, 6})};
    ToyParams g{Tensor(2, 2, {1, 1, 1, 1}), Tensor(1, 2, {1, 1})};
    ToyParams before = p;
    sgd_step(p, g, 0.0, 5.0);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p.a[i], before.a[i]);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(p.b[i], before.b[i]);
}

TEST(SgdStep, PlainArithmetic) {
    ToyParams p{Tensor(1, 1, {1.0}), Tensor(1, 1, {0.0})};
    ToyParams g{Tensor(1, 1, {0.5}), Tensor(1, 1, {0.0})};
    sgd_step(p, g, 0.1, 100.0);
    EXPECT_DOUBLE_EQ(p.a[0], 0.95);
}

TEST(SgdStep, ClippingHalvesOversizedGradient) {
    // single gradient vector with L2 norm 10, clip_norm 5 -> effective grad halved
    ToyParams p{Tensor(1, 2, {0.0, 0.0}), Tensor(1, 1, {0.0})};
    ToyParams g{Tensor(1, 2, {6.0, 8.0}), Tensor(1, 1, {0.0})};
    sgd_step(p, g, 1.0, 5.0);
    EXPECT_DOUBLE_EQ(p.a[0], -3.0);
    EXPECT_DOUBLE_EQ(p.a[1], -4.0);
}

TEST(SgdStep, ClipNoOpExactlyWhenNormWithinBound) {
    // at norm == clip_norm the update must be bitwise identical to unclipped
    ToyParams g{Tensor(1, 2, {3.0, 4.0}), Tensor(1, 1, {0.0})};  // norm 5
    ToyParams clipped{Tensor(1, 2, {0.1, -0.2}), Tensor(1, 1, {0.7})};
    ToyParams unclipped = clipped;
    sgd_step(clipped, g, 0.3, 5.0);
    sgd_step(unclipped, g, 0.3, 1e100);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(clipped.a[i], unclipped.a[i]);
}

TEST(SgdStep, NonzeroGradChangesAtLeastOneParam) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        ToyParams p{glorot_init(2, 3, rng), glorot_init(1, 4, rng)};
        ToyParams g{glorot_init(2, 3, rng), glorot_init(1, 4, rng)};
        ToyParams before = p;
        sgd_step(p, g, 0.01, 5.0);
        bool changed = false;
        for (std::size_t i = 0; i < 6; ++i) changed |= p.a[i] != before.a[i];
        for (std::size_t i = 0; i < 4; ++i) changed |= p.b[i] != before.b[i];
        EXPECT_TRUE(changed);
    }
}

TEST(SgdStep, ShapeMismatchRejected) {
    ToyParams p{Tensor(2, 2), Tensor(1, 2)};
    ToyParams g{Tensor(2, 3), Tensor(1, 2)};
    EXPECT_THROW(sgd_step(p, g, 0.1, 5.0), std::invalid_argument);
}

TEST(FiniteDiff, QuadraticAnalyticDerivative) {
    ScalarParams p;
    p.theta[0] = 3.0;
    auto loss = [](const ScalarParams& q) { return q.theta[0] * q.theta[0]; };
    ScalarParams g = finite_diff_grad(loss, p);
    EXPECT_NEAR(g.theta[0], 6.0, 1e-6);
}

TEST(FiniteDiff, ConstantLossGivesZeroGrads) {
    ToyParams p{Tensor(2, 2, {1, 2, 3, 4}), Tensor(1, 2, {5, 6})};
    auto loss = [](const ToyParams&) { return 42.0; };
    ToyParams g = finite_diff_grad(loss, p);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(g.a[i], 0.0);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(g.b[i], 0.0);
}

TEST(FiniteDiff, PolynomialsWithinTenEpsSquared) {
    // cubic truncation error is a3*eps^2; with |a3| <= 2 that sits well
    // inside the 10*eps^2 contract
    const double eps = 1e-5;
    std::mt19937 gen(77);
    std::uniform_real_distribution<double> coef(-2.0, 2.0), point(-1.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        double a0 = coef(gen), a1 = coef(gen), a2 = coef(gen), a3 = coef(gen);
        ScalarParams p;
        p.theta[0] = point(gen);
        auto loss = [&](const ScalarParams& q) {
            double x = q.theta[0];
            return a0 + a1 * x + a2 * x * x + a3 * x * x * x;
        };
        ScalarParams g = finite_diff_grad(loss, p, eps);
        double x = p.theta[0];
        double analytic = a1 + 2 * a2 * x + 3 * a3 * x * x;
        EXPECT_NEAR(g.theta[0], analytic, 10 * eps * eps);
    }
}

TEST(FiniteDiff, NonFiniteLossRejected) {
    ScalarParams p;
    p.theta[0] = 1.0;
    auto loss = [](const ScalarParams& q) { return std::log(-1.0 + 0.0 * q.theta[0]); };
    EXPECT_THROW(finite_diff_grad(loss, p), NumericalError);
}

TEST(FiniteDiff, ZeroEpsRejected) {
    ScalarParams p;
    auto loss = [](const ScalarParams&) { return 0.0; };
    EXPECT_THROW(finite_diff_grad(loss, p, 0.0), std::invalid_argument);
}

TEST(Argmax, TiesResolveToLowestIndex) {
    double v[4] = {1.0, 3.0, 3.0, 2.0};
    EXPECT_EQ(argmax(v, 4), 1u);
    double u[3] = {0.0, 0.0, 0.0};
    EXPECT_EQ(argmax(u, 3), 0u);
}
