#pragma once

#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prpl/backbones/backbone.hpp"
#include "prpl/prp/slicing.hpp"

namespace prpl {

enum class SelectMode { argmax, nearest };

/// Argmax, or argmin |score - target|; ties go to the lowest index.
inline std::size_t select_candidate(std::span<const double> scores, SelectMode mode = SelectMode::argmax,
                                    double target = 0.0) {
    require(!scores.empty(), ErrorKind::contract, "selection needs at least one candidate");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        const bool better = mode == SelectMode::argmax
                                ? scores[i] > scores[best]
                                : std::abs(scores[i] - target) < std::abs(scores[best] - target);
        if (better) best = i;
    }
    return best;
}

struct LevelPlan {
    LevelConfig level;
    Tensor2 candidates;  // raw observations, one flattened sequence per row
    std::vector<double> scores;
    std::size_t selected = 0;

    std::span<const float> chosen() const { return candidates.row(selected); }
};

struct PrpPlan {
    std::vector<float> observation;
    std::vector<LevelPlan> levels;
    std::vector<float> action;
};

struct PlannerSettings {
    std::size_t n_candidates = 32;
    /// Normalized condition fed to level 0 (1 = best property seen in the data).
    double target = 1.0;
    /// Guidance strength at level 0; deeper levels sample unconditionally.
    double guidance = 1.0;
    int sampling_steps = 3;
    double start_fraction = 0.8;
    double x0_clip = 3.0;
    SelectMode select = SelectMode::argmax;
    /// Score and select at every level (otherwise only at level 0).
    bool select_all_levels = true;
};

/// Trained planner components; the backbones work on normalized observations.
struct PlannerModel {
    std::vector<LevelConfig> levels;
    std::vector<GenerativeBackbone> backbones;
    std::vector<ConditionNormalizer> normalizers;
    ObsStats stats;
    InverseDynamics inverse_dynamics;
};

/// Coarse-to-fine planning from one observation: level 0 anchors its first token to the
/// observation; level l > 0 also anchors its last token to the previous level's first key point
/// after the observation. The final level's first transition yields the action.
inline PrpPlan plan_once(const PlannerModel& model, const PlanCritic& critic, std::span<const float> obs,
                         const PlannerSettings& st, Rng& rng) {
    const std::size_t L = model.levels.size();
    require(L > 0 && model.backbones.size() == L && model.normalizers.size() == L, ErrorKind::contract,
            "planner model is incomplete");
    require(st.n_candidates >= 1, ErrorKind::configuration, "need at least one candidate");
    const std::size_t d = model.stats.mean.size();
    require(obs.size() == d, ErrorKind::contract, "observation width mismatch");

    PrpPlan plan;
    plan.observation.assign(obs.begin(), obs.end());
    std::vector<float> anchor(obs.begin(), obs.end());
    normalize_obs(model.stats, anchor);
    std::vector<float> terminal;      // normalized, from the previous level
    std::vector<float> terminal_raw;  // same key point in raw units

    for (std::size_t l = 0; l < L; ++l) {
        const auto& lvl = model.levels[l];
        const auto& bb = model.backbones[l];
        require(bb.token_count() == lvl.tokens && bb.token_width() == d, ErrorKind::contract,
                "backbone geometry does not match level " + std::to_string(l));
        InpaintMask mask(lvl.tokens, d);
        mask.clamp(0, anchor);
        if (l > 0) mask.clamp(lvl.tokens - 1, terminal);
        SamplerConfig cfg;
        cfg.kind = bb.kind;
        cfg.sampling_steps = st.sampling_steps;
        cfg.start_fraction = st.start_fraction;
        cfg.guidance = l == 0 ? st.guidance : 0.0;
        cfg.x0_clip = st.x0_clip;
        const Tensor2 normalized = sample(bb, st.n_candidates, static_cast<float>(st.target), cfg, mask, rng);

        LevelPlan lp;
        lp.level = lvl;
        lp.candidates = normalized;
        denormalize_obs(model.stats, lp.candidates.span());
        // anchored slots carry the raw values exactly, not a normalize round trip
        for (std::size_t r = 0; r < lp.candidates.rows(); ++r) {
            auto row = lp.candidates.row(r);
            std::copy(obs.begin(), obs.end(), row.begin());
            if (l > 0)
                std::copy(terminal_raw.begin(), terminal_raw.end(),
                          row.begin() + static_cast<std::ptrdiff_t>((lvl.tokens - 1) * d));
        }
        if (l == 0 || st.select_all_levels) {
            lp.scores = critic.score(lp.candidates, lvl.tokens, lvl.jump);
            for (std::size_t i = 0; i < lp.scores.size(); ++i)
                if (!std::isfinite(lp.scores[i]))
                    fail(ErrorKind::planning, "non-finite score for candidate " + std::to_string(i) + " at level " +
                                                  std::to_string(l));
            lp.selected = select_candidate(lp.scores, st.select, model.normalizers[l].denormalize(st.target));
        } else {
            lp.scores.assign(st.n_candidates, 0.0);
            lp.selected = 0;
        }
        const auto chosen = normalized.row(lp.selected);
        terminal.assign(chosen.begin() + static_cast<std::ptrdiff_t>(d), chosen.begin() + static_cast<std::ptrdiff_t>(2 * d));
        const auto chosen_raw = lp.chosen();
        terminal_raw.assign(chosen_raw.begin() + static_cast<std::ptrdiff_t>(d),
                            chosen_raw.begin() + static_cast<std::ptrdiff_t>(2 * d));
        plan.levels.push_back(std::move(lp));
    }

    const auto last = plan.levels.back().chosen();
    plan.action = model.inverse_dynamics(last.subspan(0, d), last.subspan(d, d));
    return plan;
}

inline nlohmann::json plan_to_json(const PrpPlan& plan) {
    nlohmann::json j;
    j["schema"] = "prpl-plan/1";
    j["observation"] = plan.observation;
    j["action"] = plan.action;
    auto& levels = j["levels"] = nlohmann::json::array();
    const std::size_t d = plan.observation.size();
    for (const auto& lp : plan.levels) {
        nlohmann::json jl;
        jl["index"] = lp.level.index;
        jl["horizon"] = lp.level.horizon;
        jl["jump"] = lp.level.jump;
        jl["tokens"] = lp.level.tokens;
        jl["selected"] = lp.selected;
        jl["scores"] = lp.scores;
        auto& cands = jl["candidates"] = nlohmann::json::array();
        for (std::size_t r = 0; r < lp.candidates.rows(); ++r) {
            nlohmann::json seq = nlohmann::json::array();
            const auto row = lp.candidates.row(r);
            for (std::size_t k = 0; k < lp.level.tokens; ++k)
                seq.push_back(std::vector<float>(row.begin() + static_cast<std::ptrdiff_t>(k * d),
                                                 row.begin() + static_cast<std::ptrdiff_t>((k + 1) * d)));
            cands.push_back(std::move(seq));
        }
        levels.push_back(std::move(jl));
    }
    return j;
}

}  // namespace prpl
