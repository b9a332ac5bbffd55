#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prpl/backbones/denoiser.hpp"
#include "prpl/numerics/adamw.hpp"
#include "prpl/schedules/solvers.hpp"

namespace prpl {

/// Diffusion (noise prediction, DDIM sampling) or rectified flow (velocity prediction, Euler
/// sampling) over fixed-length token sequences, conditioned on one scalar with a null token.
struct GenerativeBackbone {
    BackboneKind kind = BackboneKind::diffusion;
    DenoiserParams net;
    Schedule schedule;  // diffusion only
    AdamWState optimizer;

    // instrumentation
    std::uint64_t rows_seen = 0;
    std::uint64_t conditional_rows = 0;

    std::size_t token_count() const { return net.shape.token_count; }
    std::size_t token_width() const { return net.shape.token_width; }
    std::size_t sequence_width() const { return net.shape.sequence_width(); }

    /// Network time input in [0, 1] for a diffusion step index or a flow time.
    double net_time(double s) const { return kind == BackboneKind::diffusion ? s / schedule.steps : s; }
};

inline GenerativeBackbone make_backbone(BackboneKind kind, const DenoiserShape& shape, int diffusion_steps,
                                        const AdamWConfig& opt, Rng& rng) {
    GenerativeBackbone bb;
    bb.kind = kind;
    bb.net = make_denoiser(shape, rng);
    if (kind == BackboneKind::diffusion) bb.schedule = make_cosine_schedule(diffusion_steps);
    bb.optimizer = AdamWState(bb.net.params(), opt);
    return bb;
}

struct TrainBatchSpec {
    /// Probability that a row keeps its condition (otherwise the null token is used).
    double keep_condition = 0.75;
    /// Token slots clamped to the data (first token, and last token for refinement levels).
    std::vector<std::size_t> clamped_slots;
};

namespace detail {

inline void validate_batch(const GenerativeBackbone& bb, const Tensor2& x, std::span<const float> cond,
                           const TrainBatchSpec& spec) {
    require(x.cols() == bb.sequence_width(), ErrorKind::contract,
            "batch width " + std::to_string(x.cols()) + " != sequence width " + std::to_string(bb.sequence_width()));
    require(cond.size() == x.rows() && x.rows() > 0, ErrorKind::contract, "batch/condition size mismatch");
    require(spec.keep_condition >= 0.0 && spec.keep_condition <= 1.0, ErrorKind::contract,
            "condition keep-probability must be in [0, 1]");
    for (auto s : spec.clamped_slots)
        require(s < bb.token_count(), ErrorKind::contract, "clamped slot outside sequence");
}

inline std::vector<float> masked_conditions(GenerativeBackbone& bb, std::span<const float> cond, double keep,
                                            Rng& rng) {
    std::vector<float> c(cond.begin(), cond.end());
    for (auto& v : c) {
        ++bb.rows_seen;
        if (keep >= 1.0 || rng.bernoulli(keep))
            ++bb.conditional_rows;
        else
            v = kNullCondition;
    }
    return c;
}

inline void copy_slots(const Tensor2& from, Tensor2& to, const std::vector<std::size_t>& slots, std::size_t width) {
    for (std::size_t r = 0; r < to.rows(); ++r)
        for (auto s : slots)
            for (std::size_t k = 0; k < width; ++k) to(r, s * width + k) = from(r, s * width + k);
}

/// Regression step on prediction targets; returns the mean over rows of the squared error
/// summed over the sequence.
inline double regress(GenerativeBackbone& bb, const Tensor2& input, std::span<const double> times,
                      std::span<const float> cond, const Tensor2& target) {
    DenoiserCache cache;
    Tensor2 pred = denoiser_forward(bb.net, input, times, cond, &cache);
    const double inv_b = 1.0 / static_cast<double>(input.rows());
    double loss = 0.0;
    Tensor2 grad(pred.rows(), pred.cols());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = static_cast<double>(pred[i]) - target[i];
        loss += e * e;
        grad[i] = static_cast<float>(2.0 * e * inv_b);
    }
    loss *= inv_b;
    if (!std::isfinite(loss))
        fail(ErrorKind::training, "non-finite loss (batch " + std::to_string(input.rows()) + " rows, pred finite: " +
                                      (pred.all_finite() ? "yes" : "no") + ")");
    DenoiserParams grads = zeros_like(bb.net);
    denoiser_backward(bb.net, cache, grad, grads);
    adamw_step(bb.net.params(), const_view(grads.params()), bb.optimizer);
    ++bb.net.version;
    return loss;
}

}  // namespace detail

/// Noise-matching step: s ~ U{1..T}, eps ~ N(0, I), clamped slots of eps take the data values and
/// clamped slots of x_s stay at the data, loss ||eps_theta(x_s, s, c) - eps||^2.
inline double diffusion_train_step(GenerativeBackbone& bb, const Tensor2& x0, std::span<const float> cond, Rng& rng,
                                   const TrainBatchSpec& spec) {
    require(bb.kind == BackboneKind::diffusion, ErrorKind::contract, "diffusion_train_step on a flow backbone");
    detail::validate_batch(bb, x0, cond, spec);
    const std::size_t B = x0.rows(), d = bb.token_width();
    Tensor2 eps = randn(rng, B, x0.cols());
    detail::copy_slots(x0, eps, spec.clamped_slots, d);
    Tensor2 xs(B, x0.cols());
    std::vector<double> times(B);
    for (std::size_t r = 0; r < B; ++r) {
        const int s = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(bb.schedule.steps)));
        times[r] = bb.net_time(s);
        const float a = static_cast<float>(bb.schedule.alpha[s]), sg = static_cast<float>(bb.schedule.sigma[s]);
        for (std::size_t k = 0; k < x0.cols(); ++k) xs(r, k) = a * x0(r, k) + sg * eps(r, k);
    }
    detail::copy_slots(x0, xs, spec.clamped_slots, d);
    auto c = detail::masked_conditions(bb, cond, spec.keep_condition, rng);
    return detail::regress(bb, xs, times, c, eps);
}

/// Velocity-matching step on a given coupling: x_s = (1 - s) x0 + s x1, target x1 - x0.
/// Clamped slots of x0 take the data values (zero target velocity there).
inline double rf_train_step(GenerativeBackbone& bb, const Tensor2& x0_in, const Tensor2& x1,
                            std::span<const float> cond, Rng& rng, const TrainBatchSpec& spec) {
    require(bb.kind == BackboneKind::flow, ErrorKind::contract, "rf_train_step on a diffusion backbone");
    detail::validate_batch(bb, x1, cond, spec);
    require_same_shape(x0_in, x1, "rf_train_step coupling");
    const std::size_t B = x1.rows(), d = bb.token_width();
    Tensor2 x0 = x0_in;
    detail::copy_slots(x1, x0, spec.clamped_slots, d);
    Tensor2 xs(B, x1.cols()), target(B, x1.cols());
    std::vector<double> times(B);
    for (std::size_t r = 0; r < B; ++r) {
        const double s = rng.uniform();
        times[r] = s;
        const float fs = static_cast<float>(s);
        for (std::size_t k = 0; k < x1.cols(); ++k) {
            xs(r, k) = (1.0f - fs) * x0(r, k) + fs * x1(r, k);
            target(r, k) = x1(r, k) - x0(r, k);
        }
    }
    auto c = detail::masked_conditions(bb, cond, spec.keep_condition, rng);
    return detail::regress(bb, xs, times, c, target);
}

/// Independent coupling: x0 ~ N(0, I).
inline double rf_train_step(GenerativeBackbone& bb, const Tensor2& x1, std::span<const float> cond, Rng& rng,
                            const TrainBatchSpec& spec) {
    Tensor2 x0 = randn(rng, x1.rows(), x1.cols());
    return rf_train_step(bb, x0, x1, cond, rng, spec);
}

/// Guided prediction for one solver evaluation. Evaluates the network once when w is 0 or 1,
/// otherwise conditional and unconditional rows in one batched pass.
inline Tensor2 guided_prediction(const GenerativeBackbone& bb, const Tensor2& x, double s,
                                 std::span<const float> cond, double w) {
    const std::size_t B = x.rows();
    std::vector<double> times(B, bb.net_time(s));
    if (w == 1.0) return denoiser_forward(bb.net, x, times, cond);
    std::vector<float> null(B, kNullCondition);
    if (w == 0.0) return denoiser_forward(bb.net, x, times, null);
    Tensor2 both(2 * B, x.cols());
    std::copy(x.span().begin(), x.span().end(), both.span().begin());
    std::copy(x.span().begin(), x.span().end(), both.span().begin() + static_cast<std::ptrdiff_t>(x.size()));
    std::vector<double> t2(2 * B, bb.net_time(s));
    std::vector<float> c2(cond.begin(), cond.end());
    c2.insert(c2.end(), null.begin(), null.end());
    Tensor2 out = denoiser_forward(bb.net, both, t2, c2);
    return cfg_combine(out.slice_rows(0, B), out.slice_rows(B, B), w);
}

/// Integrates from initial noise to data. Slots listed in `clamped` are re-clamped to the
/// values they hold in `x_init` after every step.
inline Tensor2 integrate(const GenerativeBackbone& bb, const Tensor2& x_init, std::span<const float> cond,
                         const std::vector<std::size_t>& clamped, const SamplerConfig& cfg) {
    require(std::isfinite(cfg.guidance), ErrorKind::configuration, "guidance strength must be finite");
    const std::size_t d = bb.token_width();
    Tensor2 x = x_init;
    auto check = [&](const Tensor2& t, int step) {
        if (!t.all_finite()) fail(ErrorKind::sampling, "non-finite sample after solver step " + std::to_string(step));
    };
    if (bb.kind == BackboneKind::diffusion) {
        const auto grid = ddim_grid(bb.schedule.steps, cfg.sampling_steps, cfg.start_fraction);
        for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
            Tensor2 eps = guided_prediction(bb, x, grid[k], cond, cfg.guidance);
            x = ddim_step(bb.schedule, x, eps, grid[k], grid[k + 1], nullptr, cfg.x0_clip);
            detail::copy_slots(x_init, x, clamped, d);
            check(x, static_cast<int>(k));
        }
    } else {
        const auto grid = flow_grid(cfg.sampling_steps);
        for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
            Tensor2 v = guided_prediction(bb, x, grid[k], cond, cfg.guidance);
            x = euler_flow_step(x, v, grid[k], grid[k + 1]);
            detail::copy_slots(x_init, x, clamped, d);
            check(x, static_cast<int>(k));
        }
    }
    return x;
}

/// Initial noise for `n` candidates; candidate i draws from its own stream derived from `key`,
/// so results do not depend on evaluation order.
inline Tensor2 candidate_noise(std::size_t n, std::size_t width, std::uint64_t key) {
    Tensor2 x(n, width);
    for (std::size_t i = 0; i < n; ++i) {
        Rng r(Rng::mix(key + 0x9e3779b97f4a7c15ull * (i + 1)));
        for (auto& v : x.row(i)) v = static_cast<float>(r.normal());
    }
    return x;
}

/// Draws `n_candidates` sequences under one condition, with the mask's slots clamped in the
/// initial noise and after every solver step.
inline Tensor2 sample(const GenerativeBackbone& bb, std::size_t n_candidates, float condition,
                      const SamplerConfig& cfg, const InpaintMask& mask, Rng& rng) {
    require(n_candidates >= 1, ErrorKind::contract, "sample needs at least one candidate");
    require(cfg.kind == bb.kind, ErrorKind::configuration, "sampler kind does not match backbone");
    if (!mask.empty())
        require(mask.token_count() == bb.token_count() && mask.token_width() == bb.token_width(), ErrorKind::contract,
                "inpaint mask geometry does not match backbone");
    Tensor2 x = candidate_noise(n_candidates, bb.sequence_width(), rng.next_u64());
    mask.apply(x);
    std::vector<std::size_t> slots;
    for (const auto& [s, v] : mask.slots()) slots.push_back(s);
    std::vector<float> cond(n_candidates, condition);
    return integrate(bb, x, cond, slots, cfg);
}

/// (x0, x1) pairs from the current flow, with their conditions.
struct ReflowPairs {
    Tensor2 x0;
    Tensor2 x1;
    std::vector<float> cond;
};

/// Draws x0 ~ N(0, I) (clamped slots taken from `clamp_source` when given) and integrates the
/// flow with `sampling_steps` Euler steps to x1.
inline ReflowPairs reflow_generate(const GenerativeBackbone& bb, std::size_t n_pairs, int sampling_steps, Rng& rng,
                                   std::span<const float> cond = {}, const Tensor2* clamp_source = nullptr,
                                   const std::vector<std::size_t>& clamped = {}) {
    require(bb.kind == BackboneKind::flow, ErrorKind::configuration, "reflow needs a rectified-flow backbone");
    require(cond.empty() || cond.size() == n_pairs, ErrorKind::contract, "reflow: condition count mismatch");
    ReflowPairs p;
    p.x0 = randn(rng, n_pairs, bb.sequence_width());
    if (clamp_source) {
        require(clamp_source->rows() == n_pairs && clamp_source->cols() == bb.sequence_width(), ErrorKind::contract,
                "reflow: clamp source shape");
        detail::copy_slots(*clamp_source, p.x0, clamped, bb.token_width());
    }
    p.cond.assign(cond.begin(), cond.end());
    if (p.cond.empty()) p.cond.assign(n_pairs, kNullCondition);
    SamplerConfig cfg;
    cfg.kind = BackboneKind::flow;
    cfg.sampling_steps = sampling_steps;
    cfg.guidance = 1.0;
    // chunked so memory stays bounded for large pair counts
    p.x1 = Tensor2(n_pairs, bb.sequence_width());
    const std::size_t chunk = 4096;
    for (std::size_t b = 0; b < n_pairs; b += chunk) {
        const std::size_t m = std::min(chunk, n_pairs - b);
        Tensor2 x1 = integrate(bb, p.x0.slice_rows(b, m), std::span<const float>(p.cond).subspan(b, m), clamped, cfg);
        std::copy(x1.span().begin(), x1.span().end(), p.x1.span().begin() + static_cast<std::ptrdiff_t>(b * x1.cols()));
    }
    return p;
}

/// Same objective as rf_train_step with the stored deterministic coupling.
inline double reflow_train_step(GenerativeBackbone& bb, const ReflowPairs& pairs,
                                const std::vector<std::size_t>& rows, Rng& rng, const TrainBatchSpec& spec) {
    Tensor2 x0(rows.size(), pairs.x0.cols()), x1(rows.size(), pairs.x1.cols());
    std::vector<float> c(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::copy(pairs.x0.row(rows[i]).begin(), pairs.x0.row(rows[i]).end(), x0.row(i).begin());
        std::copy(pairs.x1.row(rows[i]).begin(), pairs.x1.row(rows[i]).end(), x1.row(i).begin());
        c[i] = pairs.cond[rows[i]];
    }
    // The stored condition already encodes the null token where the pair was unconditional.
    TrainBatchSpec s = spec;
    s.keep_condition = 1.0;
    return rf_train_step(bb, x0, x1, c, rng, s);
}

/// Mean over an s-grid of ||(x1 - x0) - v(x_s, s)||^2 along the flow's own coupling
/// (x1 from `sampling_steps` Euler steps). Zero for a perfectly straight flow.
inline double straightness(const GenerativeBackbone& bb, const Tensor2& x0, std::span<const float> cond,
                           int sampling_steps = 20, int grid_points = 10) {
    SamplerConfig cfg;
    cfg.kind = BackboneKind::flow;
    cfg.sampling_steps = sampling_steps;
    Tensor2 x1 = integrate(bb, x0, cond, {}, cfg);
    double total = 0.0;
    for (int g = 0; g < grid_points; ++g) {
        const double s = (g + 0.5) / grid_points;
        Tensor2 xs(x0.rows(), x0.cols());
        for (std::size_t i = 0; i < xs.size(); ++i)
            xs[i] = static_cast<float>((1.0 - s) * x0[i] + s * x1[i]);
        std::vector<double> t(x0.rows(), s);
        Tensor2 v = denoiser_forward(bb.net, xs, t, cond);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double e = (static_cast<double>(x1[i]) - x0[i]) - v[i];
            total += e * e;
        }
    }
    return total / (static_cast<double>(grid_points) * x0.rows());
}

}  // namespace prpl
