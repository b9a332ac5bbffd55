#pragma once

#include <chrono>
#include <iostream>
#include <string>
#include <vector>

#include "prpl/harness/checkpoint.hpp"

namespace prpl {

struct CurvePoint {
    std::string component;  // "level0", "value", "invdyn", ...
    std::size_t step = 0;
    double loss = 0.0;
};

struct TrainSummary {
    std::vector<CurvePoint> curve;
    double invdyn_holdout_mse = 0.0;
    std::size_t invdyn_skipped = 0;
    double seconds = 0.0;
};

/// Mean of the first and last `fraction` of a loss series.
inline std::pair<double, double> loss_ends(const std::vector<double>& losses, double fraction = 0.1) {
    require(!losses.empty(), ErrorKind::contract, "empty loss series");
    const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * losses.size()));
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        a += losses[i];
        b += losses[losses.size() - 1 - i];
    }
    return {a / k, b / k};
}

inline void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& os) {
    os << "component,step,loss\n";
    os.precision(9);
    for (const auto& p : curve) os << p.component << ',' << p.step << ',' << p.loss << '\n';
}

namespace detail {

/// Dataset observations normalized once, per episode.
inline std::vector<std::vector<float>> normalized_episodes(const DatasetFile& ds, const ObsStats& stats) {
    std::vector<std::vector<float>> out;
    out.reserve(ds.episodes.size());
    for (const auto& ep : ds.episodes) {
        out.push_back(ep.obs);
        normalize_obs(stats, out.back());
    }
    return out;
}

inline std::vector<std::size_t> clamped_slots(const LevelConfig& lvl) {
    if (lvl.index == 0 || lvl.tokens == 1) return {0};
    return {0, lvl.tokens - 1};
}

/// Rows of level `l` jumpy slices for the label-table entries `picks`, with normalized labels.
inline void fill_level_batch(const DatasetFile& ds, const std::vector<std::vector<float>>& norm_obs,
                             const LabelTable& labels, const ConditionNormalizer& normalizer, const LevelConfig& lvl,
                             std::size_t l, const std::vector<std::size_t>& picks, Tensor2& x,
                             std::vector<float>& cond) {
    const std::size_t d = ds.obs_dim;
    x = Tensor2(picks.size(), lvl.tokens * d);
    cond.resize(picks.size());
    for (std::size_t b = 0; b < picks.size(); ++b) {
        const auto [e, t] = labels.starts[picks[b]];
        const auto& ep = ds.episodes[e];
        float* row = x.row(b).data();
        for (std::size_t k = 0; k < lvl.tokens; ++k) {
            const std::size_t i = padded_index(ep, t + k * lvl.jump);
            std::copy_n(norm_obs[e].begin() + static_cast<std::ptrdiff_t>(i * d), d, row + k * d);
        }
        cond[b] = static_cast<float>(normalizer.normalize(labels.labels[l][picks[b]]));
    }
}

}  // namespace detail

/// Trains inverse dynamics, the value critic (value-conditioned runs) and one backbone per level.
/// Every gradient step draws one batch of (episode, start) pairs and updates each level on the
/// jumpy slices sharing those starts.
inline Checkpoint train_planner(const RunConfig& cfg, const DatasetFile& ds, TrainSummary* summary = nullptr,
                                std::ostream* log = nullptr) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const auto env = make_env(cfg.env);
    require(ds.obs_dim == env->obs_dim() && ds.act_dim == env->act_dim(), ErrorKind::data,
            "dataset dimensions do not match environment '" + cfg.env + "'");
    require(ds.env.empty() || ds.env == cfg.env, ErrorKind::data,
            "dataset was generated for '" + ds.env + "', configuration asks for '" + cfg.env + "'");
    validate_stats(ds.stats);
    const Rng root(cfg.seed);
    const std::size_t d = ds.obs_dim;

    Checkpoint ck;
    ck.config = cfg;
    auto& m = ck.model;
    m.levels = cfg.mode_levels();
    m.stats = ds.stats;

    CriticTrainConfig idc;
    idc.steps = cfg.invdyn_steps;
    idc.hidden = cfg.invdyn_hidden;
    idc.opt.lr = cfg.invdyn_lr;
    idc.seed = root.fork(1).next_u64();
    TrainReport idr;
    m.inverse_dynamics = train_inverse_dynamics(ds, *env, idc, &idr);
    if (log) *log << "inverse dynamics: held-out mse " << idr.holdout_mse << " (" << idr.skipped << " contact transitions skipped)\n";

    TrainReport vr;
    if (cfg.critic == CriticKind::value) {
        CriticTrainConfig vc;
        vc.steps = cfg.critic_steps;
        vc.hidden = cfg.critic_hidden;
        vc.opt.lr = cfg.critic_lr;
        vc.seed = root.fork(2).next_u64();
        ck.value = train_value(ds, cfg.gamma, cfg.expectile, vc, &vr);
        if (log && !vr.losses.empty()) *log << "value critic: final loss " << vr.losses.back() << '\n';
    }

    const LabelTable labels =
        build_label_table(ds, m.levels, cfg.critic, cfg.gamma, ck.value ? &*ck.value : nullptr);
    m.normalizers = labels.normalizers;
    const auto norm_obs = detail::normalized_episodes(ds, m.stats);

    Rng init = root.fork(3);
    for (const auto& lvl : m.levels)
        m.backbones.push_back(make_backbone(cfg.kind_at(lvl.index), cfg.shape(lvl, d), cfg.diffusion_steps,
                                            AdamWConfig{cfg.lr, cfg.weight_decay}, init));

    Rng rng = root.fork(4);
    const std::size_t B = cfg.batch, L = m.levels.size();
    std::vector<std::vector<double>> level_losses(L);
    std::vector<std::size_t> picks(B);
    for (std::size_t step = 0; step < cfg.train_steps; ++step) {
        for (auto& p : picks) p = rng.below(labels.starts.size());
        for (std::size_t l = 0; l < L; ++l) {
            const auto& lvl = m.levels[l];
            Tensor2 x;
            std::vector<float> cond;
            detail::fill_level_batch(ds, norm_obs, labels, m.normalizers[l], lvl, l, picks, x, cond);
            TrainBatchSpec spec;
            spec.keep_condition = cfg.keep_condition;
            spec.clamped_slots = detail::clamped_slots(lvl);
            auto& bb = m.backbones[l];
            double loss = 0.0;
            try {
                loss = bb.kind == BackboneKind::diffusion ? diffusion_train_step(bb, x, cond, rng, spec)
                                                          : rf_train_step(bb, x, cond, rng, spec);
            } catch (const Error& err) {
                fail(err.kind(), "level " + std::to_string(l) + ": " + err.what());
            }
            level_losses[l].push_back(loss);
        }
        if (log && (step + 1) % 500 == 0) {
            *log << "step " << step + 1;
            for (std::size_t l = 0; l < L; ++l) {
                double s = 0.0;
                for (std::size_t i = level_losses[l].size() - 500; i < level_losses[l].size(); ++i) s += level_losses[l][i];
                *log << "  level" << l << " " << s / 500.0;
            }
            *log << std::endl;
        }
    }

    if (summary) {
        summary->invdyn_holdout_mse = idr.holdout_mse;
        summary->invdyn_skipped = idr.skipped;
        auto add = [&](const std::string& name, const std::vector<double>& losses) {
            for (std::size_t i = 0; i < losses.size(); ++i) summary->curve.push_back({name, i, losses[i]});
        };
        add("invdyn", idr.losses);
        add("value", vr.losses);
        for (std::size_t l = 0; l < L; ++l) add("level" + std::to_string(l), level_losses[l]);
        summary->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    }
    return ck;
}

}  // namespace prpl
