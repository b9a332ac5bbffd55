#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "prpl/schedules/schedule.hpp"

namespace prpl {

enum class BackboneKind { diffusion, flow };

inline const char* to_string(BackboneKind k) { return k == BackboneKind::diffusion ? "diffusion" : "rf"; }

inline BackboneKind backbone_kind_from_string(const std::string& s) {
    if (s == "diffusion") return BackboneKind::diffusion;
    if (s == "rf" || s == "flow") return BackboneKind::flow;
    fail(ErrorKind::configuration, "unknown backbone kind '" + s + "'");
}

/// Sequence slots clamped to fixed values. Each row of a sample tensor is one flattened
/// sequence of `token_count` tokens of `token_width` floats.
class InpaintMask {
public:
    InpaintMask() = default;
    InpaintMask(std::size_t token_count, std::size_t token_width)
        : token_count_(token_count), token_width_(token_width) {}

    void clamp(std::size_t slot, std::vector<float> value) {
        require(slot < token_count_, ErrorKind::contract,
                "inpaint slot " + std::to_string(slot) + " outside sequence of " + std::to_string(token_count_));
        require(value.size() == token_width_, ErrorKind::contract, "inpaint value width mismatch");
        for (float v : value) require(std::isfinite(v), ErrorKind::contract, "inpaint value not finite");
        for (auto& [s, v] : slots_)
            if (s == slot) {
                v = std::move(value);
                return;
            }
        slots_.emplace_back(slot, std::move(value));
    }

    bool empty() const { return slots_.empty(); }
    std::size_t token_count() const { return token_count_; }
    std::size_t token_width() const { return token_width_; }
    const auto& slots() const { return slots_; }

    void apply(Tensor2& x) const {
        if (slots_.empty()) return;
        require(x.cols() == token_count_ * token_width_, ErrorKind::contract, "inpaint mask/sequence width mismatch");
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (const auto& [slot, value] : slots_)
                std::copy(value.begin(), value.end(), x.row(r).begin() + static_cast<std::ptrdiff_t>(slot * token_width_));
    }

    /// 1 for free entries, 0 for clamped ones, per flattened column.
    std::vector<float> free_columns() const {
        std::vector<float> w(token_count_ * token_width_, 1.0f);
        for (const auto& [slot, value] : slots_)
            std::fill_n(w.begin() + static_cast<std::ptrdiff_t>(slot * token_width_), token_width_, 0.0f);
        return w;
    }

private:
    std::size_t token_count_ = 0;
    std::size_t token_width_ = 0;
    std::vector<std::pair<std::size_t, std::vector<float>>> slots_;
};

struct SamplerConfig {
    BackboneKind kind = BackboneKind::diffusion;
    int sampling_steps = 3;
    /// Guidance strength; 1 = conditional predictor only, 0 = unconditional only.
    double guidance = 1.0;
    /// Bound applied to the reconstructed x0 inside DDIM steps (diffusion only); <= 0 disables.
    double x0_clip = 0.0;
    /// DDIM chains start from noise at step round(start_fraction * T) (diffusion only).
    double start_fraction = 1.0;
};

/// Uniform integer grid S -> 0 with S = round(start_fraction * T), e.g. T = 1000 with 3 steps
/// gives {1000, 667, 333, 0}.
inline std::vector<int> ddim_grid(int T, int steps, double start_fraction = 1.0) {
    require(start_fraction > 0.0 && start_fraction <= 1.0, ErrorKind::configuration,
            "ddim grid: start fraction must lie in (0, 1]");
    const double S = std::round(start_fraction * T);
    require(steps >= 1 && steps <= S, ErrorKind::configuration, "ddim grid: steps must be in [1, start step]");
    std::vector<int> g(steps + 1);
    for (int k = 0; k <= steps; ++k) g[k] = static_cast<int>(std::lround(S * (steps - k) / steps));
    return g;
}

/// Uniform grid 0 -> 1 for Euler flow integration.
inline std::vector<double> flow_grid(int steps) {
    require(steps >= 1, ErrorKind::configuration, "flow grid: steps must be >= 1");
    std::vector<double> g(steps + 1);
    for (int k = 0; k <= steps; ++k) g[k] = static_cast<double>(k) / steps;
    return g;
}

/// Deterministic DDIM update from step s to s' <= s:
/// x0_hat = (x_s - sigma_s eps_hat) / alpha_s, x_{s'} = alpha_{s'} x0_hat + sigma_{s'} eps_hat.
/// With a positive `x0_clip`, x0_hat is clipped and eps_hat re-derived from it.
inline Tensor2 ddim_step(const Schedule& sch, const Tensor2& x_s, const Tensor2& eps_hat, int s, int s_next,
                         const InpaintMask* mask = nullptr, double x0_clip = 0.0) {
    require_same_shape(x_s, eps_hat, "ddim_step");
    require(s >= 0 && s <= sch.steps && s_next >= 0 && s_next <= s, ErrorKind::contract,
            "ddim_step requires 0 <= s' <= s <= T (got s=" + std::to_string(s) + ", s'=" + std::to_string(s_next) + ")");
    if (s_next == s) return x_s;
    const double a = sch.alpha[s], sg = sch.sigma[s];
    if (a < tol::kAlphaGuard) fail(ErrorKind::numerical, "alpha_s below guard at step " + std::to_string(s));
    const double an = sch.alpha[s_next], sn = sch.sigma[s_next];
    Tensor2 out(x_s.rows(), x_s.cols());
    const bool clip = x0_clip > 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double x0 = (static_cast<double>(x_s[i]) - sg * eps_hat[i]) / a;
        double e = eps_hat[i];
        if (clip && std::abs(x0) > x0_clip) {
            x0 = std::clamp(x0, -x0_clip, x0_clip);
            if (sg > 0.0) e = (x_s[i] - a * x0) / sg;
        }
        out[i] = static_cast<float>(an * x0 + sn * e);
    }
    if (mask) mask->apply(out);
    return out;
}

/// x_{s'} = x_s + (s' - s) v_hat on the flow time axis [0, 1] (0 = noise, 1 = data).
inline Tensor2 euler_flow_step(const Tensor2& x_s, const Tensor2& v_hat, double s, double s_next,
                               const InpaintMask* mask = nullptr) {
    require_same_shape(x_s, v_hat, "euler_flow_step");
    require(s >= 0.0 && s <= s_next && s_next <= 1.0, ErrorKind::contract, "euler_flow_step requires 0 <= s <= s' <= 1");
    const float h = static_cast<float>(s_next - s);
    Tensor2 out(x_s.rows(), x_s.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x_s[i] + h * v_hat[i];
    if (mask) mask->apply(out);
    return out;
}

/// w * cond + (1 - w) * uncond, for noise or velocity predictions alike.
inline Tensor2 cfg_combine(const Tensor2& cond, const Tensor2& uncond, double w) {
    require_same_shape(cond, uncond, "cfg_combine");
    const float wc = static_cast<float>(w), wu = static_cast<float>(1.0 - w);
    Tensor2 out(cond.rows(), cond.cols());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = wc * cond[i] + wu * uncond[i];
    return out;
}

}  // namespace prpl
