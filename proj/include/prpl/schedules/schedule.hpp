#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "prpl/core/constants.hpp"
#include "prpl/numerics/tensor.hpp"

namespace prpl {

/// Discretized variance-preserving noise schedule over integer steps 0..T.
/// Index 0 is the data end (alpha ~ 1, sigma ~ 0).
struct Schedule {
    int steps = 0;
    std::vector<double> alpha;
    std::vector<double> sigma;

    double snr(int s) const { return alpha.at(s) * alpha.at(s) / (sigma.at(s) * sigma.at(s)); }
};

/// Offset of the cosine schedule.
inline constexpr double kCosineOffset = 0.008;
/// Per-step beta ceiling; keeps alpha_T strictly positive. Only the final step is affected.
inline constexpr double kMaxBeta = 0.999;

inline double cosine_f(double t, int T) {
    const double c = std::cos(((t / T + kCosineOffset) / (1.0 + kCosineOffset)) * std::numbers::pi / 2.0);
    return c * c;
}

/// alpha_bar_t = f(t) / f(0) with f(t) = cos^2(((t/T + 0.008) / 1.008) pi/2);
/// alpha = sqrt(alpha_bar), sigma = sqrt(1 - alpha_bar).
inline Schedule make_cosine_schedule(int T) {
    require(T >= 2, ErrorKind::configuration, "cosine schedule needs T >= 2, got " + std::to_string(T));
    Schedule s;
    s.steps = T;
    s.alpha.resize(T + 1);
    s.sigma.resize(T + 1);
    const double f0 = cosine_f(0.0, T);
    double prev_bar = 1.0;
    for (int t = 0; t <= T; ++t) {
        double bar = cosine_f(t, T) / f0;
        if (t > 0 && 1.0 - bar / prev_bar > kMaxBeta) bar = prev_bar * (1.0 - kMaxBeta);
        s.alpha[t] = std::sqrt(bar);
        s.sigma[t] = std::sqrt(std::max(0.0, 1.0 - bar));
        prev_bar = bar;
    }
    return s;
}

/// x_s = alpha_s x0 + sigma_s eps
inline Tensor2 forward_noise(const Schedule& schedule, const Tensor2& x0, int s, const Tensor2& eps) {
    require_same_shape(x0, eps, "forward_noise");
    require(s >= 0 && s <= schedule.steps, ErrorKind::contract, "forward_noise: step out of range");
    const float a = static_cast<float>(schedule.alpha[s]);
    const float sg = static_cast<float>(schedule.sigma[s]);
    Tensor2 out(x0.rows(), x0.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + sg * eps[i];
    return out;
}

}  // namespace prpl
