#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "prpl/harness/train.hpp"

namespace prpl {

struct ReflowLevelReport {
    std::size_t level = 0;
    double straightness_before = 0.0;
    double straightness_after = 0.0;
    std::vector<double> losses;
};

struct ReflowReport {
    std::vector<ReflowLevelReport> levels;
    double seconds = 0.0;
};

inline nlohmann::json to_json(const ReflowReport& r) {
    nlohmann::json j;
    j["schema"] = "prpl-reflow/1";
    j["seconds"] = r.seconds;
    auto& arr = j["levels"] = nlohmann::json::array();
    for (const auto& l : r.levels) {
        const auto [first, last] = loss_ends(l.losses);
        arr.push_back({{"level", l.level},
                       {"straightness_before", l.straightness_before},
                       {"straightness_after", l.straightness_after},
                       {"loss_first", first},
                       {"loss_last", last}});
    }
    return j;
}

/// One reflow pass over every rectified-flow level: couples fresh noise with the current flow's
/// own samples (anchors and conditions drawn from the dataset, conditions masked as in training),
/// then fine-tunes a copy of the level on those pairs. Straightness is measured on a held-out set
/// of noise draws before and after.
inline Checkpoint reflow_checkpoint(const Checkpoint& ck, const DatasetFile& ds, ReflowReport* report = nullptr,
                                    std::ostream* log = nullptr) {
    const auto t_start = std::chrono::steady_clock::now();
    const RunConfig& cfg = ck.config;
    bool any_flow = false;
    for (const auto& bb : ck.model.backbones) any_flow = any_flow || bb.kind == BackboneKind::flow;
    require(any_flow, ErrorKind::configuration, "reflow needs at least one rectified-flow level (backbone.kind = rf)");
    require(ds.obs_dim == ck.model.stats.mean.size(), ErrorKind::data, "dataset does not match the checkpoint");

    const LabelTable labels =
        build_label_table(ds, ck.model.levels, cfg.critic, cfg.gamma, ck.value ? &*ck.value : nullptr);
    const auto norm_obs = detail::normalized_episodes(ds, ck.model.stats);
    const Rng root(cfg.seed);
    const std::size_t holdout = std::min<std::size_t>(1000, cfg.reflow_pairs);

    Checkpoint out = ck;
    ReflowReport rep;
    for (std::size_t l = 0; l < ck.model.levels.size(); ++l) {
        const auto& old = ck.model.backbones[l];
        if (old.kind != BackboneKind::flow) continue;
        const auto& lvl = ck.model.levels[l];
        const auto slots = detail::clamped_slots(lvl);
        Rng rng = root.fork(100 + l);

        auto draw = [&](std::size_t n, Tensor2& source, std::vector<float>& cond) {
            std::vector<std::size_t> picks(n);
            for (auto& p : picks) p = rng.below(labels.starts.size());
            detail::fill_level_batch(ds, norm_obs, labels, ck.model.normalizers[l], lvl, l, picks, source, cond);
            for (auto& c : cond)
                if (!rng.bernoulli(cfg.keep_condition)) c = kNullCondition;
        };

        Tensor2 src;
        std::vector<float> cond;
        draw(cfg.reflow_pairs, src, cond);
        const ReflowPairs pairs = reflow_generate(old, cfg.reflow_pairs, cfg.reflow_generate_steps, rng, cond, &src, slots);

        Tensor2 probe_src;
        std::vector<float> probe_cond;
        draw(holdout, probe_src, probe_cond);
        Tensor2 probe = randn(rng, holdout, old.sequence_width());
        detail::copy_slots(probe_src, probe, slots, old.token_width());

        ReflowLevelReport lr;
        lr.level = l;
        lr.straightness_before = straightness(old, probe, probe_cond, cfg.reflow_generate_steps);

        GenerativeBackbone nb = old;
        nb.optimizer = AdamWState(nb.net.params(), AdamWConfig{cfg.reflow_lr, cfg.weight_decay});
        TrainBatchSpec spec;
        spec.clamped_slots = slots;
        std::vector<std::size_t> rows(std::min(cfg.batch, cfg.reflow_pairs));
        for (std::size_t step = 0; step < cfg.reflow_steps; ++step) {
            for (auto& r : rows) r = rng.below(cfg.reflow_pairs);
            lr.losses.push_back(reflow_train_step(nb, pairs, rows, rng, spec));
        }
        lr.straightness_after = straightness(nb, probe, probe_cond, cfg.reflow_generate_steps);
        if (log)
            *log << "level " << l << ": straightness " << lr.straightness_before << " -> " << lr.straightness_after
                 << std::endl;
        out.model.backbones[l] = std::move(nb);
        rep.levels.push_back(std::move(lr));
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (report) *report = std::move(rep);
    return out;
}

}  // namespace prpl
