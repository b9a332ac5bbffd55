#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "prpl/core/constants.hpp"
#include "prpl/numerics/rng.hpp"
#include "prpl/schedules/solvers.hpp"

using namespace prpl;

namespace {

double closed_form_alpha_bar(double t, double T) {
    auto f = [&](double u) {
        const double c = std::cos((u / T + 0.008) / 1.008 * std::numbers::pi / 2.0);
        return c * c;
    };
    return f(t) / f(0.0);
}

/// E[eps | x_s] for data ~ N(m, v) per coordinate.
Tensor2 optimal_eps(const Schedule& sch, const Tensor2& x, int s, double m, double v) {
    const double a = sch.alpha[s], sg = sch.sigma[s];
    Tensor2 e(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) e[i] = static_cast<float>(sg * (x[i] - a * m) / (a * a * v + sg * sg));
    return e;
}

struct Moments {
    std::vector<double> mean, var;
};

Moments column_moments(const Tensor2& x) {
    Moments m{std::vector<double>(x.cols(), 0.0), std::vector<double>(x.cols(), 0.0)};
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) m.mean[c] += x(r, c);
    for (auto& v : m.mean) v /= static_cast<double>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) m.var[c] += std::pow(x(r, c) - m.mean[c], 2);
    for (auto& v : m.var) v /= static_cast<double>(x.rows() - 1);
    return m;
}

Tensor2 run_ddim_chain(const Schedule& sch, Tensor2 x, const std::vector<int>& grid, double m, double v) {
    for (std::size_t k = 0; k + 1 < grid.size(); ++k)
        x = ddim_step(sch, x, optimal_eps(sch, x, grid[k], m, v), grid[k], grid[k + 1]);
    return x;
}

}  // namespace

TEST(CosineSchedule, MidpointMatchesClosedForm) {
    const Schedule s = make_cosine_schedule(1000);
    const double bar = closed_form_alpha_bar(500, 1000);
    EXPECT_NEAR(s.alpha[500], std::sqrt(bar), tol::kScheduleAbs);
    EXPECT_NEAR(s.sigma[500], std::sqrt(1.0 - bar), tol::kScheduleAbs);
    EXPECT_NEAR(s.alpha[500], 0.7035, 1e-3);
    EXPECT_NEAR(s.sigma[500], 0.7107, 1e-3);
}

TEST(CosineSchedule, EndpointsAndVariancePreserving) {
    const Schedule s = make_cosine_schedule(1000);
    EXPECT_DOUBLE_EQ(s.alpha[0], 1.0);
    EXPECT_DOUBLE_EQ(s.sigma[0], 0.0);
    EXPECT_GT(s.alpha[1000], 0.0);
    EXPECT_LT(s.alpha[1000], 1e-2);
    for (int t = 0; t <= 1000; ++t)
        EXPECT_NEAR(s.alpha[t] * s.alpha[t] + s.sigma[t] * s.sigma[t], 1.0, tol::kVariancePreserving);
}

TEST(CosineSchedule, SnrStrictlyDecreasing) {
    const Schedule s = make_cosine_schedule(1000);
    for (int t = 1; t < 1000; ++t) EXPECT_LT(s.snr(t + 1), s.snr(t)) << "t=" << t;
}

TEST(CosineSchedule, RejectsTinyHorizon) { EXPECT_THROW(make_cosine_schedule(1), Error); }

TEST(ForwardNoise, Endpoints) {
    const Schedule s = make_cosine_schedule(100);
    Rng r(1);
    const Tensor2 x0 = randn(r, 4, 3), eps = randn(r, 4, 3);
    EXPECT_LT(max_abs_diff(forward_noise(s, x0, 0, eps), x0), tol::kForwardNoiseEndpoint);
    const Tensor2 xT = forward_noise(s, x0, 100, eps);
    EXPECT_LT(max_abs_diff(xT, eps), 2e-2);
}

TEST(DdimGrid, DefaultThreeSteps) {
    EXPECT_EQ(ddim_grid(1000, 3), (std::vector<int>{1000, 667, 333, 0}));
    EXPECT_EQ(ddim_grid(1000, 4, 0.8), (std::vector<int>{800, 600, 400, 200, 0}));
    EXPECT_EQ(ddim_grid(10, 10).size(), 11u);
    EXPECT_THROW(ddim_grid(10, 11), Error);
    EXPECT_THROW(ddim_grid(10, 0), Error);
    EXPECT_THROW(ddim_grid(1000, 3, 0.0), Error);
}

TEST(FlowGrid, Uniform) { EXPECT_EQ(flow_grid(4), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0})); }

TEST(DdimStep, ExactNoiseRecoversData) {
    const Schedule s = make_cosine_schedule(1000);
    Rng r(2);
    const Tensor2 x0 = randn(r, 5, 4), eps = randn(r, 5, 4);
    const Tensor2 xs = forward_noise(s, x0, 600, eps);
    EXPECT_LT(max_abs_diff(ddim_step(s, xs, eps, 600, 0), x0), 1e-5);
    const Tensor2 mid = ddim_step(s, xs, eps, 600, 200);
    EXPECT_LT(max_abs_diff(mid, forward_noise(s, x0, 200, eps)), 1e-5);
}

TEST(DdimStep, SameStepIsIdentityAndOrderIsChecked) {
    const Schedule s = make_cosine_schedule(10);
    const Tensor2 x(2, 2, 0.5f), e(2, 2, 0.1f);
    EXPECT_EQ(ddim_step(s, x, e, 5, 5), x);
    EXPECT_THROW(ddim_step(s, x, e, 3, 5), Error);
}

TEST(DdimStep, ClipBoundsReconstruction) {
    const Schedule s = make_cosine_schedule(1000);
    const Tensor2 x(1, 1, 5.0f), e(1, 1, 0.0f);
    const Tensor2 out = ddim_step(s, x, e, 500, 0, nullptr, 3.0);
    EXPECT_NEAR(out[0], 3.0, 1e-6);
}

TEST(DdimStep, MaskClampsSlots) {
    const Schedule s = make_cosine_schedule(100);
    InpaintMask m(3, 2);
    m.clamp(1, {7.0f, -7.0f});
    Rng r(3);
    const Tensor2 out = ddim_step(s, randn(r, 4, 6), randn(r, 4, 6), 50, 10, &m);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(out(i, 2), 7.0f);
        EXPECT_EQ(out(i, 3), -7.0f);
    }
}

TEST(DdimOracle, StandardGaussianFullChain) {
    const Schedule s = make_cosine_schedule(1000);
    Rng r(4);
    const Tensor2 x = run_ddim_chain(s, randn(r, 10000, 2), ddim_grid(1000, 1000), 0.0, 1.0);
    const Moments m = column_moments(x);
    for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_LT(std::abs(m.mean[c]), 0.05);
        EXPECT_NEAR(m.var[c], 1.0, 0.1);
    }
}

TEST(DdimOracle, ShiftedGaussianFewSteps) {
    const Schedule s = make_cosine_schedule(1000);
    Rng r(5);
    const Tensor2 x = run_ddim_chain(s, randn(r, 10000, 1), ddim_grid(1000, 50), 2.0, 0.25);
    const Moments m = column_moments(x);
    EXPECT_NEAR(m.mean[0], 2.0, 0.05);
    EXPECT_NEAR(m.var[0], 0.25, 0.03);
}

TEST(EulerFlow, StepAndOrder) {
    const Tensor2 x = Tensor2::from_rows({{1.0f, 2.0f}}), v = Tensor2::from_rows({{2.0f, -4.0f}});
    const Tensor2 out = euler_flow_step(x, v, 0.25, 0.75);
    EXPECT_FLOAT_EQ(out[0], 2.0f);
    EXPECT_FLOAT_EQ(out[1], 0.0f);
    EXPECT_THROW(euler_flow_step(x, v, 0.75, 0.25), Error);
}

TEST(EulerFlow, ConstantVelocityIsExactInOneStep) {
    Rng r(6);
    const Tensor2 x0 = randn(r, 3, 4), x1 = randn(r, 3, 4);
    Tensor2 v(3, 4);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = x1[i] - x0[i];
    EXPECT_LT(max_abs_diff(euler_flow_step(x0, v, 0.0, 1.0), x1), 1e-6);
}

TEST(CfgCombine, Identities) {
    Rng r(7);
    const Tensor2 c = randn(r, 4, 5), u = randn(r, 4, 5);
    EXPECT_EQ(cfg_combine(c, u, 1.0), c);
    EXPECT_EQ(cfg_combine(c, u, 0.0), u);
    const Tensor2 h = cfg_combine(c, u, 2.0);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_NEAR(h[i], 2.0 * c[i] - u[i], 1e-5);
}

TEST(InpaintMask, ApplyAndValidate) {
    InpaintMask m(3, 2);
    EXPECT_TRUE(m.empty());
    m.clamp(0, {1.0f, 2.0f});
    m.clamp(0, {3.0f, 4.0f});
    EXPECT_EQ(m.slots().size(), 1u);
    Tensor2 x(2, 6);
    m.apply(x);
    EXPECT_EQ(x(1, 0), 3.0f);
    EXPECT_EQ(x(1, 1), 4.0f);
    EXPECT_EQ(m.free_columns(), (std::vector<float>{0, 0, 1, 1, 1, 1}));
    EXPECT_THROW(m.clamp(3, {0.0f, 0.0f}), Error);
    EXPECT_THROW(m.clamp(1, {0.0f}), Error);
    EXPECT_THROW(m.clamp(1, {NAN, 0.0f}), Error);
}
