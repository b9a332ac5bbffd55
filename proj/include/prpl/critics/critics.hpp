#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "prpl/envs/dataset.hpp"
#include "prpl/numerics/adamw.hpp"

namespace prpl {

enum class CriticKind { reward, value };

inline const char* to_string(CriticKind k) { return k == CriticKind::reward ? "reward" : "value"; }

inline CriticKind critic_kind_from_string(const std::string& s) {
    if (s == "reward") return CriticKind::reward;
    if (s == "value") return CriticKind::value;
    fail(ErrorKind::configuration, "unknown critic kind '" + s + "'");
}

/// Cumulative reward of a trajectory: plain sum of its per-step rewards.
inline double reward_property(std::span<const float> rewards) {
    double s = 0.0;
    for (float r : rewards) s += r;
    return s;
}

/// Discounted rewards r_0..r_{H-2} plus gamma^{H-1} V(o_{H-1}); `rewards` holds the H-1 rewards.
inline double value_property(std::span<const float> rewards, double gamma, double terminal_value) {
    double s = 0.0, g = 1.0;
    for (float r : rewards) {
        s += g * r;
        g *= gamma;
    }
    return s + g * terminal_value;
}

/// Discounted returns-to-go per stored observation; the final observation's return is 0.
inline std::vector<double> returns_to_go(const Episode& ep, double gamma) {
    std::vector<double> g(ep.length() + 1, 0.0);
    for (std::size_t t = ep.length(); t-- > 0;) g[t] = ep.rew[t] + gamma * g[t + 1];
    return g;
}

struct TrainReport {
    std::vector<double> losses;  // one entry per gradient step
    double holdout_mse = 0.0;
    std::size_t skipped = 0;
};

/// Scalar state value V(o) on normalized observations; targets are scaled into [-1, 1].
struct ValueCritic {
    MlpParams net;
    ObsStats stats;
    double gamma = 0.99;
    float scale = 1.0f;

    std::vector<float> evaluate(const Tensor2& raw_obs) const {
        Tensor2 x = raw_obs;
        normalize_obs(stats, x.span());
        const Tensor2 y = mlp_apply(net, x);
        std::vector<float> v(y.rows());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = y(i, 0) * scale;
        return v;
    }

    float operator()(std::span<const float> obs) const {
        return evaluate(Tensor2(1, obs.size(), std::vector<float>(obs.begin(), obs.end())))[0];
    }
};

struct CriticTrainConfig {
    std::size_t steps = 20000;
    std::size_t batch = 256;
    std::size_t hidden = 128;
    AdamWConfig opt{1e-3, 1e-5};
    /// Cosine decay of the learning rate to `final_lr_fraction` of its start value.
    double final_lr_fraction = 0.05;
    std::uint64_t seed = 0;

    double lr_at(std::size_t step) const {
        const double p = steps > 1 ? static_cast<double>(step) / static_cast<double>(steps - 1) : 1.0;
        const double f = final_lr_fraction + (1.0 - final_lr_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
        return opt.lr * f;
    }
};

/// Expectile regression of V(o_t) toward Monte-Carlo returns G_t with loss |tau - 1{u<0}| u^2,
/// u = G_t - V(o_t). Terminal observations enter with target 0.
inline ValueCritic train_value(const DatasetFile& ds, double gamma, double tau, const CriticTrainConfig& cfg,
                               TrainReport* report = nullptr) {
    require(gamma > 0.0 && gamma <= 1.0, ErrorKind::configuration, "discount must lie in (0, 1]");
    require(tau > 0.0 && tau < 1.0, ErrorKind::configuration, "expectile must lie in (0, 1)");
    require(!ds.episodes.empty(), ErrorKind::data, "value training needs a non-empty dataset");
    const std::size_t d = ds.obs_dim;
    std::vector<float> obs, target;
    for (const auto& ep : ds.episodes) {
        const auto g = returns_to_go(ep, gamma);
        const std::size_t last = ep.terminal ? ep.length() + 1 : ep.length();
        for (std::size_t t = 0; t < last; ++t) {
            obs.insert(obs.end(), ep.obs.begin() + t * d, ep.obs.begin() + (t + 1) * d);
            target.push_back(static_cast<float>(g[t]));
        }
    }
    require(!target.empty(), ErrorKind::data, "value training found no transitions");
    ValueCritic vc;
    vc.stats = ds.stats;
    vc.gamma = gamma;
    float mx = 0.0f;
    for (float t : target) mx = std::max(mx, std::abs(t));
    vc.scale = mx > 0.0f ? mx : 1.0f;
    normalize_obs(vc.stats, obs);

    Rng rng(cfg.seed);
    vc.net = make_mlp({d, cfg.hidden, cfg.hidden, 1}, Activation::mish, Activation::identity, rng);
    AdamWState opt(vc.net.params(), cfg.opt);
    const std::size_t n = target.size(), B = cfg.batch;
    Tensor2 x(B, d), grad(B, 1);
    std::vector<float> y(B);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t i = rng.below(n);
            std::copy_n(obs.begin() + i * d, d, x.row(b).begin());
            y[b] = target[i] / vc.scale;
        }
        MlpCache cache;
        const Tensor2 v = mlp_forward_into(vc.net, x, &cache);
        double loss = 0.0;
        for (std::size_t b = 0; b < B; ++b) {
            const double u = static_cast<double>(y[b]) - v(b, 0);
            const double w = u < 0.0 ? 1.0 - tau : tau;
            loss += w * u * u;
            grad(b, 0) = static_cast<float>(-2.0 * w * u / B);
        }
        loss /= B;
        if (!std::isfinite(loss)) fail(ErrorKind::training, "value loss diverged at step " + std::to_string(step));
        MlpParams grads = zeros_like(vc.net);
        mlp_backward_into(vc.net, cache, grad, grads);
        opt.config.lr = cfg.lr_at(step);
        adamw_step(vc.net, grads, opt);
        if (report) report->losses.push_back(loss);
    }
    return vc;
}

/// Action from a one-step transition: two Linear-Mish-LayerNorm blocks, then Linear-Tanh scaled
/// to the action bound. The pair (o_t, o_{t+1}) enters as the normalized o_t and the scaled
/// displacement o_{t+1} - o_t.
struct InverseDynamics {
    MlpParams net;
    ObsStats stats;
    std::vector<float> delta_scale;
    float bound = 1.0f;

    Tensor2 inputs(const Tensor2& o, const Tensor2& o_next) const {
        require_same_shape(o, o_next, "inverse dynamics inputs");
        const std::size_t d = o.cols();
        require(stats.mean.size() == d && delta_scale.size() == d, ErrorKind::contract,
                "inverse dynamics input width mismatch");
        Tensor2 x(o.rows(), 2 * d);
        for (std::size_t r = 0; r < o.rows(); ++r)
            for (std::size_t k = 0; k < d; ++k) {
                x(r, k) = (o(r, k) - stats.mean[k]) / stats.std[k];
                x(r, d + k) = (o_next(r, k) - o(r, k)) / delta_scale[k];
            }
        return x;
    }

    Tensor2 act(const Tensor2& o, const Tensor2& o_next) const {
        Tensor2 a = mlp_apply(net, inputs(o, o_next));
        for (auto& v : a.span()) v *= bound;
        return a;
    }

    std::vector<float> operator()(std::span<const float> o, std::span<const float> o_next) const {
        const Tensor2 a = act(Tensor2(1, o.size(), std::vector<float>(o.begin(), o.end())),
                              Tensor2(1, o_next.size(), std::vector<float>(o_next.begin(), o_next.end())));
        return {a.span().begin(), a.span().end()};
    }
};

/// Episodes with index % 10 == 9 are held out for the reported MSE.
inline bool is_holdout_episode(std::size_t e) { return e % 10 == 9; }

/// Supervised regression on (o_t, o_{t+1}) -> a_t over transitions whose action the environment
/// can identify; contact transitions are skipped in training and in the held-out MSE.
inline InverseDynamics train_inverse_dynamics(const DatasetFile& ds, const Environment& env,
                                              const CriticTrainConfig& cfg, TrainReport* report = nullptr) {
    require(!ds.episodes.empty(), ErrorKind::data, "inverse dynamics needs a non-empty dataset");
    const std::size_t d = ds.obs_dim, ad = ds.act_dim;
    require(d == env.obs_dim() && ad == env.act_dim(), ErrorKind::data, "dataset does not match the environment");
    const float action_bound = env.action_bound();
    struct Split {
        std::vector<float> o, o2, a;
        std::size_t size() const { return a.size(); }
    } train, held;
    for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
        const auto& ep = ds.episodes[e];
        auto& dst = is_holdout_episode(e) && ds.episodes.size() >= 10 ? held : train;
        for (std::size_t t = 0; t < ep.length(); ++t) {
            const std::span<const float> act(ep.act.data() + t * ad, ad);
            if (!env.action_identifiable(ds.state(e, t), act, ds.state(e, t + 1))) {
                if (report) ++report->skipped;
                continue;
            }
            dst.o.insert(dst.o.end(), ep.obs.begin() + t * d, ep.obs.begin() + (t + 1) * d);
            dst.o2.insert(dst.o2.end(), ep.obs.begin() + (t + 1) * d, ep.obs.begin() + (t + 2) * d);
            dst.a.insert(dst.a.end(), ep.act.begin() + t * ad, ep.act.begin() + (t + 1) * ad);
        }
    }
    require(!train.a.empty(), ErrorKind::data, "inverse dynamics found no transitions");

    InverseDynamics id;
    id.stats = ds.stats;
    validate_stats(id.stats);
    id.delta_scale.assign(d, 0.0f);
    {
        std::vector<double> sq(d, 0.0);
        for (std::size_t i = 0; i < train.o.size(); ++i) sq[i % d] += std::pow(train.o2[i] - train.o[i], 2.0);
        for (std::size_t k = 0; k < d; ++k) {
            const double rms = std::sqrt(sq[k] / static_cast<double>(train.o.size() / d));
            id.delta_scale[k] = rms > tol::kStdFloor ? static_cast<float>(rms) : 1.0f;
        }
    }
    id.bound = action_bound;
    Rng rng(cfg.seed);
    id.net = make_mlp({2 * d, cfg.hidden, cfg.hidden, ad}, Activation::mish_layernorm, Activation::tanh, rng);
    AdamWState opt(id.net.params(), cfg.opt);

    const std::size_t n = train.size() / ad, B = cfg.batch;
    Tensor2 o(B, d), o2(B, d), a(B, ad), grad(B, ad);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t i = rng.below(n);
            std::copy_n(train.o.begin() + i * d, d, o.row(b).begin());
            std::copy_n(train.o2.begin() + i * d, d, o2.row(b).begin());
            std::copy_n(train.a.begin() + i * ad, ad, a.row(b).begin());
        }
        MlpCache cache;
        const Tensor2 y = mlp_forward_into(id.net, id.inputs(o, o2), &cache);
        double loss = 0.0;
        for (std::size_t k = 0; k < y.size(); ++k) {
            const double e = static_cast<double>(y[k]) * id.bound - a[k];
            loss += e * e;
            grad[k] = static_cast<float>(2.0 * e * id.bound / static_cast<double>(y.size()));
        }
        loss /= static_cast<double>(y.size());
        if (!std::isfinite(loss))
            fail(ErrorKind::training, "inverse dynamics loss diverged at step " + std::to_string(step));
        MlpParams grads = zeros_like(id.net);
        mlp_backward_into(id.net, cache, grad, grads);
        opt.config.lr = cfg.lr_at(step);
        adamw_step(id.net, grads, opt);
        if (report) report->losses.push_back(loss);
    }

    if (report && !held.a.empty()) {
        const std::size_t m = held.size() / ad;
        const Tensor2 pred = id.act(Tensor2(m, d, held.o), Tensor2(m, d, held.o2));
        double mse = 0.0;
        for (std::size_t k = 0; k < pred.size(); ++k) mse += (pred[k] - held.a[k]) * (pred[k] - held.a[k]);
        report->holdout_mse = mse / static_cast<double>(pred.size());
    }
    return id;
}

}  // namespace prpl
