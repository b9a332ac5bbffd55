#include <gtest/gtest.h>

#include <cmath>

#include "prpl/core/constants.hpp"
#include "prpl/numerics/adamw.hpp"
#include "reference_mlp.hpp"

using namespace prpl;

TEST(Tensor, ShapeAndAccess) {
    Tensor2 t = Tensor2::from_rows({{1, 2, 3}, {4, 5, 6}});
    EXPECT_EQ(t.rows(), 2u);
    EXPECT_EQ(t.cols(), 3u);
    EXPECT_EQ(t(1, 2), 6.0f);
    EXPECT_EQ(t.reshaped(3, 2)(2, 1), 6.0f);
    EXPECT_EQ(t.slice_rows(1, 1).row(0)[0], 4.0f);
    EXPECT_THROW(t.reshaped(4, 2), Error);
    EXPECT_THROW(t.slice_rows(1, 2), Error);
}

TEST(Tensor, ShapeMismatchIsContractError) {
    try {
        require_same_shape(Tensor2(2, 3), Tensor2(3, 2), "test");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::contract);
    }
}

TEST(Rng, SameSeedSameStream) {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_NE(Rng(1).next_u64(), Rng(2).next_u64());
}

TEST(Rng, ForkDependsOnlyOnSeedAndStream) {
    Rng a(7), b(7);
    a.next_u64();
    EXPECT_EQ(a.fork(3).next_u64(), b.fork(3).next_u64());
    EXPECT_NE(a.fork(3).next_u64(), a.fork(4).next_u64());
}

TEST(Rng, NormalMoments) {
    Rng r(1);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 0.01);
    EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, BelowStaysInRange) {
    Rng r(3);
    for (int i = 0; i < 10000; ++i) EXPECT_LT(r.below(7), 7u);
}

TEST(Ops, LinearMatchesNaive) {
    Rng r(5);
    Tensor2 x = randn(r, 4, 3), w = randn(r, 3, 5), b = randn(r, 1, 5), y;
    ops::linear_forward(x, w, b, y);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double s = b[j];
            for (std::size_t k = 0; k < 3; ++k) s += double(x(i, k)) * w(k, j);
            EXPECT_NEAR(y(i, j), s, 1e-5);
        }
}

TEST(Ops, MishValues) {
    EXPECT_FLOAT_EQ(ops::mish(0.0f), 0.0f);
    EXPECT_NEAR(ops::mish(1.0f), 0.8650984, 1e-6);
    EXPECT_NEAR(ops::mish(-1.0f), -0.3034014, 1e-6);
    EXPECT_FLOAT_EQ(ops::mish(30.0f), 30.0f);
    for (float x : {-3.0f, -0.5f, 0.2f, 2.0f}) {
        const double h = 1e-3;
        const double fd = (reference::ref_mish(x + h) - reference::ref_mish(x - h)) / (2 * h);
        EXPECT_NEAR(ops::mish_grad(x), fd, 1e-5);
    }
}

TEST(Ops, LayerNormNormalizesRows) {
    Rng r(9);
    Tensor2 x = randn(r, 3, 16), y, xhat;
    std::vector<float> inv;
    ops::layernorm_forward(x, Tensor2(1, 16, 1.0f), Tensor2(1, 16, 0.0f), y, xhat, inv);
    for (std::size_t i = 0; i < 3; ++i) {
        double m = 0.0, v = 0.0;
        for (float e : y.row(i)) m += e;
        m /= 16;
        for (float e : y.row(i)) v += (e - m) * (e - m);
        EXPECT_NEAR(m, 0.0, 1e-6);
        EXPECT_NEAR(v / 16, 1.0, 1e-3);
    }
}

TEST(Mlp, GradientsMatchDoubleFiniteDifferences) {
    Rng rng(11);
    for (int net = 0; net < 10; ++net) {
        const std::size_t in = 2 + rng.below(4), out = 1 + rng.below(3), batch = 1 + rng.below(4);
        const MlpParams p = reference::random_small_mlp(rng, in, out);
        const Tensor2 x = randn(rng, batch, in), w = randn(rng, batch, out);
        const auto r = reference::check_mlp_gradients(p, x, w, tol::kFiniteDiffStep);
        EXPECT_LT(r.param_rel, tol::kGradRelError) << "network " << net;
        EXPECT_LT(r.input_rel, tol::kGradRelError) << "network " << net;
    }
}

TEST(Mlp, BackwardRejectsStaleCache) {
    Rng rng(1);
    MlpParams p = make_mlp({2, 4, 1}, Activation::mish, Activation::identity, rng);
    const MlpForward f = mlp_forward(p, randn(rng, 3, 2));
    ++p.version;
    EXPECT_THROW(mlp_backward(p, f.cache, Tensor2(3, 1, 1.0f)), Error);
}

TEST(Mlp, RejectsWrongInputWidth) {
    Rng rng(1);
    const MlpParams p = make_mlp({2, 4, 1}, Activation::mish, Activation::identity, rng);
    EXPECT_THROW(mlp_apply(p, Tensor2(1, 3)), Error);
}

TEST(AdamW, FirstStepMovesByLearningRate) {
    Tensor2 p(1, 3, 1.0f), g = Tensor2::from_rows({{0.5f, -2.0f, 0.0f}});
    ParamList list;
    list.add(p, 0);
    AdamWState st(list, AdamWConfig{0.1, 0.0});
    adamw_step(list, {&g}, st);
    EXPECT_NEAR(p[0], 0.9, 1e-6);
    EXPECT_NEAR(p[1], 1.1, 1e-6);
    EXPECT_NEAR(p[2], 1.0, 1e-6);
}

TEST(AdamW, DecoupledDecayWithZeroGradient) {
    Tensor2 p(1, 1, 2.0f), g(1, 1, 0.0f);
    ParamList list;
    list.add(p, 0);
    AdamWState st(list, AdamWConfig{0.1, 0.5});
    adamw_step(list, {&g}, st);
    EXPECT_NEAR(p[0], 2.0 * (1.0 - 0.05), 1e-6);
}

TEST(AdamW, NonFiniteGradientLeavesParametersUntouched) {
    Tensor2 p(1, 2, 1.0f), g = Tensor2::from_rows({{0.1f, NAN}});
    ParamList list;
    list.add(p, 3);
    AdamWState st(list, AdamWConfig{});
    try {
        adamw_step(list, {&g}, st);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::training);
    }
    EXPECT_EQ(p[0], 1.0f);
    EXPECT_EQ(st.step, 0u);
}

TEST(AdamW, FitsLinearRegression) {
    Rng rng(2);
    MlpParams p = make_mlp({3, 1}, Activation::identity, Activation::identity, rng);
    AdamWState st(p.params(), AdamWConfig{0.05, 0.0});
    const float true_w[3] = {0.5f, -1.0f, 2.0f};
    double loss = 0.0;
    for (int it = 0; it < 500; ++it) {
        Tensor2 x = randn(rng, 32, 3), y(32, 1);
        for (std::size_t r = 0; r < 32; ++r) y(r, 0) = true_w[0] * x(r, 0) + true_w[1] * x(r, 1) + true_w[2] * x(r, 2) + 0.3f;
        MlpForward f = mlp_forward(p, x);
        Tensor2 dy(32, 1);
        loss = 0.0;
        for (std::size_t r = 0; r < 32; ++r) {
            const double e = f.output(r, 0) - y(r, 0);
            loss += e * e / 32;
            dy(r, 0) = static_cast<float>(2 * e / 32);
        }
        MlpBackward b = mlp_backward(p, f.cache, dy);
        adamw_step(p, b.grads, st);
    }
    EXPECT_LT(loss, 1e-4);
}
