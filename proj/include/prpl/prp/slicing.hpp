#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "prpl/critics/critics.hpp"
#include "prpl/prp/levels.hpp"

namespace prpl {

/// Monotone affine map of a level's property range onto [-1, 1].
struct ConditionNormalizer {
    double min = 0.0;
    double max = 1.0;

    static ConditionNormalizer fit(std::span<const float> labels) {
        require(!labels.empty(), ErrorKind::data, "no labels to fit a condition normalizer");
        const auto [lo, hi] = std::minmax_element(labels.begin(), labels.end());
        ConditionNormalizer n{*lo, *hi};
        // a constant property still gets a strictly increasing map
        if (!(n.max > n.min)) n.max = n.min + 1.0;
        return n;
    }

    double normalize(double v) const { return 2.0 * (v - min) / (max - min) - 1.0; }
    double denormalize(double c) const { return min + 0.5 * (c + 1.0) * (max - min); }
};

/// Property evaluator used for training labels (dense windows from the data) and for scoring
/// generated jumpy sequences at inference.
struct PlanCritic {
    CriticKind kind = CriticKind::value;
    double gamma = 0.99;
    const Environment* env = nullptr;
    const ValueCritic* value = nullptr;

    void validate() const {
        require(env != nullptr, ErrorKind::contract, "critic needs an environment for rewards");
        if (kind == CriticKind::value) require(value != nullptr, ErrorKind::contract, "value critic not trained");
    }

    /// Scores `m` raw jumpy sequences (rows of tokens x obs_dim) with key points `jump` steps apart.
    /// Reward segments between key points come from the environment's segment estimate.
    std::vector<double> score(const Tensor2& seqs, std::size_t tokens, std::size_t jump) const {
        validate();
        const std::size_t d = seqs.cols() / tokens;
        std::vector<double> out(seqs.rows(), 0.0);
        std::vector<float> tail;
        double seg_weight = 1.0;
        if (kind == CriticKind::value) {
            Tensor2 last(seqs.rows(), d);
            for (std::size_t r = 0; r < seqs.rows(); ++r)
                std::copy_n(seqs.row(r).begin() + static_cast<std::ptrdiff_t>((tokens - 1) * d), d, last.row(r).begin());
            tail = value->evaluate(last);
            double s = 0.0;
            for (std::size_t j = 0; j < jump; ++j) s += std::pow(gamma, static_cast<double>(j));
            seg_weight = s / static_cast<double>(jump);
        }
        for (std::size_t r = 0; r < seqs.rows(); ++r) {
            const auto row = seqs.row(r);
            double total = 0.0;
            for (std::size_t k = 0; k + 1 < tokens; ++k) {
                const float seg = env->segment_reward(row.subspan(k * d, d), row.subspan((k + 1) * d, d),
                                                      static_cast<int>(jump));
                total += kind == CriticKind::value
                             ? std::pow(gamma, static_cast<double>(k * jump)) * seg_weight * seg
                             : static_cast<double>(seg);
            }
            if (kind == CriticKind::value)
                total += std::pow(gamma, static_cast<double>((tokens - 1) * jump)) * tail[r];
            out[r] = total;
        }
        return out;
    }
};

/// Stored observation index for step t + offset, repeating the final state past the end.
inline std::size_t padded_index(const Episode& ep, std::size_t t) { return std::min(t, ep.length()); }

inline float padded_reward(const Episode& ep, std::size_t t) { return t < ep.length() ? ep.rew[t] : 0.0f; }

/// Property of the dense window x_{t..t+H-1}: H recorded rewards for the reward critic;
/// H-1 discounted rewards plus the discounted value of the last state for the value critic.
/// `state_values` holds V for every stored observation of the episode (value critic only).
inline double dense_label(const Episode& ep, std::size_t t, std::size_t horizon, CriticKind kind, double gamma,
                          std::span<const float> state_values) {
    require(ep.length() > 0, ErrorKind::data, "empty episode");
    if (kind == CriticKind::reward) {
        std::vector<float> r(horizon);
        for (std::size_t j = 0; j < horizon; ++j) r[j] = padded_reward(ep, t + j);
        return reward_property(r);
    }
    std::vector<float> r(horizon - 1);
    for (std::size_t j = 0; j + 1 < horizon; ++j) r[j] = padded_reward(ep, t + j);
    return value_property(r, gamma, state_values[padded_index(ep, t + horizon - 1)]);
}

/// Raw key points x_{t : t+H : I} (tokens x obs_dim, row-major) with terminal-state padding.
inline std::vector<float> jumpy_slice(const Episode& ep, std::size_t obs_dim, std::size_t t, const LevelConfig& lvl) {
    require(ep.length() > 0, ErrorKind::data, "empty episode");
    std::vector<float> out;
    out.reserve(lvl.tokens * obs_dim);
    for (std::size_t k = 0; k < lvl.tokens; ++k) {
        const std::size_t i = padded_index(ep, t + k * lvl.jump);
        out.insert(out.end(), ep.obs.begin() + i * obs_dim, ep.obs.begin() + (i + 1) * obs_dim);
    }
    return out;
}

struct LevelSlice {
    std::vector<float> sequence;
    double label = 0.0;
};

/// All levels' (jumpy sequence, raw label) for one start index of one episode.
inline std::vector<LevelSlice> make_training_slices(const Episode& ep, std::size_t obs_dim,
                                                    const std::vector<LevelConfig>& levels, std::size_t t,
                                                    CriticKind kind, double gamma,
                                                    std::span<const float> state_values = {}) {
    require(ep.length() > 0, ErrorKind::data, "empty episode");
    require(t < ep.length(), ErrorKind::contract, "slice start outside the episode");
    std::vector<LevelSlice> out;
    for (const auto& lvl : levels)
        out.push_back({jumpy_slice(ep, obs_dim, t, lvl), dense_label(ep, t, lvl.horizon, kind, gamma, state_values)});
    return out;
}

/// Labels for every (episode, start) pair and level, plus the per-level normalizers.
struct LabelTable {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> starts;  // (episode, t)
    std::vector<std::vector<float>> labels;                       // [level][start]
    std::vector<ConditionNormalizer> normalizers;
};

inline LabelTable build_label_table(const DatasetFile& ds, const std::vector<LevelConfig>& levels, CriticKind kind,
                                    double gamma, const ValueCritic* value) {
    require(!ds.episodes.empty(), ErrorKind::data, "dataset has no episodes");
    LabelTable tab;
    tab.labels.resize(levels.size());
    for (std::size_t e = 0; e < ds.episodes.size(); ++e) {
        const auto& ep = ds.episodes[e];
        require(ep.length() > 0, ErrorKind::data, "episode " + std::to_string(e) + " is empty");
        std::vector<float> values;
        if (kind == CriticKind::value) {
            require(value != nullptr, ErrorKind::contract, "value labels need a trained value critic");
            values = value->evaluate(Tensor2(ep.length() + 1, ds.obs_dim, ep.obs));
        }
        for (std::size_t t = 0; t < ep.length(); ++t) {
            tab.starts.emplace_back(static_cast<std::uint32_t>(e), static_cast<std::uint32_t>(t));
            for (std::size_t l = 0; l < levels.size(); ++l)
                tab.labels[l].push_back(static_cast<float>(dense_label(ep, t, levels[l].horizon, kind, gamma, values)));
        }
    }
    for (const auto& lab : tab.labels) tab.normalizers.push_back(ConditionNormalizer::fit(lab));
    return tab;
}

}  // namespace prpl
