#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "prpl/envs/dataset.hpp"

namespace prpl {

/// Fractions of scripted behaviours in a generated dataset.
struct PolicyMix {
    double expert = 0.4;
    double noisy = 0.3;
    double random = 0.15;
    double dead_end = 0.15;

    void validate() const {
        for (double f : {expert, noisy, random, dead_end})
            require(f >= 0.0 && f <= 1.0, ErrorKind::configuration, "policy fractions must lie in [0, 1]");
        require(std::abs(expert + noisy + random + dead_end - 1.0) < 1e-6, ErrorKind::configuration,
                "policy fractions must sum to 1");
    }

    std::string pick(double u) const {
        if (u < expert) return "expert";
        if (u < expert + noisy) return "noisy";
        if (u < expert + noisy + random) return "random";
        return "dead-end";
    }
};

using Policy = std::function<std::vector<float>(std::span<const float> state, Rng& rng)>;

namespace detail {

inline std::vector<float> toward(std::span<const float> s, std::array<float, 2> target, float speed) {
    const float dx = target[0] - s[0], dy = target[1] - s[1];
    const float dist = std::sqrt(dx * dx + dy * dy);
    if (dist < 1e-6f) return {0.0f, 0.0f};
    // do not overshoot the waypoint within one step
    const float v = std::min(speed, dist / 0.05f);
    return {v * dx / dist, v * dy / dist};
}

inline float gauss(Rng& rng, double sd) { return static_cast<float>(sd * rng.normal()); }

}  // namespace detail

/// Waypoint route along the corridor: bottom -> right column -> top -> goal.
inline std::array<float, 2> maze_expert_waypoint(const PointMaze2D& env, std::span<const float> s) {
    const float x = s[0], y = s[1];
    if (y > 0.65f) return env.goal();
    if (x > 0.70f) return {0.85f, 0.80f};
    if (y > 0.35f) return {0.36f, 0.15f};  // inside the pocket: leave downwards
    if (x > 0.78f) return {0.85f, 0.80f};
    return {0.85f, 0.18f};
}

inline std::array<float, 2> maze_dead_end_waypoint(std::span<const float> s) {
    if (std::abs(s[0] - 0.36f) < 0.03f) return {0.36f, 0.56f};
    return {0.36f, 0.18f};
}

/// Scripted behaviour for one episode; per-episode parameters are drawn from `rng`.
inline Policy make_policy(const Environment& env, const std::string& kind, Rng& rng) {
    if (const auto* maze = dynamic_cast<const PointMaze2D*>(&env)) {
        const float speed = static_cast<float>(rng.uniform(0.22, 0.30));
        if (kind == "expert")
            return [maze, speed](std::span<const float> s, Rng&) {
                return detail::toward(s, maze_expert_waypoint(*maze, s), speed);
            };
        if (kind == "noisy")
            return [maze, speed](std::span<const float> s, Rng& r) {
                auto a = detail::toward(s, maze_expert_waypoint(*maze, s), speed);
                for (auto& v : a) v += detail::gauss(r, 0.4);
                return a;
            };
        if (kind == "dead-end")
            return [speed](std::span<const float> s, Rng& r) {
                auto a = detail::toward(s, maze_dead_end_waypoint(s), speed);
                for (auto& v : a) v += detail::gauss(r, 0.05);
                return a;
            };
        if (kind == "random") {
            auto prev = std::make_shared<std::array<float, 2>>(std::array<float, 2>{0.0f, 0.0f});
            return [prev](std::span<const float>, Rng& r) {
                for (auto& v : *prev) v = std::clamp(0.85f * v + detail::gauss(r, 0.35), -1.0f, 1.0f);
                return std::vector<float>{(*prev)[0], (*prev)[1]};
            };
        }
    } else if (dynamic_cast<const LineRunner*>(&env)) {
        const float target = kind == "dead-end" ? static_cast<float>(rng.uniform(-0.5, 0.2))
                                                : static_cast<float>(rng.uniform(0.8, 1.0));
        if (kind == "expert" || kind == "dead-end")
            return [target](std::span<const float> s, Rng&) {
                return std::vector<float>{std::clamp((target - s[1]) / 0.05f, -1.0f, 1.0f)};
            };
        if (kind == "noisy")
            return [target](std::span<const float> s, Rng& r) {
                return std::vector<float>{std::clamp((target - s[1]) / 0.05f + detail::gauss(r, 0.5), -1.0f, 1.0f)};
            };
        if (kind == "random") {
            auto prev = std::make_shared<float>(0.0f);
            return [prev](std::span<const float>, Rng& r) {
                *prev = std::clamp(0.85f * *prev + detail::gauss(r, 0.35), -1.0f, 1.0f);
                return std::vector<float>{*prev};
            };
        }
    }
    fail(ErrorKind::configuration, "no scripted policy '" + kind + "' for environment " + env.name());
}

/// Dataset start state for one episode of the given behaviour.
inline std::vector<float> dataset_start(const Environment& env, const std::string& kind, Rng& rng) {
    if (const auto* maze = dynamic_cast<const PointMaze2D*>(&env)) {
        for (;;) {
            const float x = static_cast<float>(rng.uniform(0.02, 0.98));
            const float y = static_cast<float>(kind == "dead-end" ? rng.uniform(0.02, 0.33) : rng.uniform(0.02, 0.98));
            std::vector<float> s{x, y};
            if (kind == "dead-end" && x > 0.70f) continue;
            if (!maze->in_wall(x, y) && !maze->in_goal(s)) return s;
        }
    }
    return {0.0f, static_cast<float>(rng.uniform(-0.3, 0.3))};
}

inline Episode rollout(const Environment& env, const Policy& policy, std::vector<float> state, Rng& rng) {
    Episode ep;
    ep.obs = state;
    for (int t = 0; t < env.max_steps(); ++t) {
        const auto a = env.clip_action(policy(state, rng));
        const auto r = env.step(state, a);
        ep.act.insert(ep.act.end(), a.begin(), a.end());
        ep.rew.push_back(r.reward);
        ep.obs.insert(ep.obs.end(), r.next.begin(), r.next.end());
        state = r.next;
        if (r.done) {
            ep.terminal = true;
            break;
        }
    }
    return ep;
}

/// Mixed-quality dataset; every episode draws from its own stream so the file depends only on
/// (env, mix, count, seed).
inline DatasetFile generate_dataset(const Environment& env, const PolicyMix& mix, std::size_t n_episodes,
                                    std::uint64_t seed) {
    mix.validate();
    require(n_episodes > 0, ErrorKind::data, "dataset generation needs at least one episode");
    DatasetFile ds;
    ds.env = env.name();
    ds.obs_dim = static_cast<std::uint32_t>(env.obs_dim());
    ds.act_dim = static_cast<std::uint32_t>(env.act_dim());
    const Rng root(seed);
    for (std::size_t e = 0; e < n_episodes; ++e) {
        Rng rng = root.fork(e);
        const std::string kind = mix.pick(rng.uniform());
        const Policy policy = make_policy(env, kind, rng);
        Episode ep = rollout(env, policy, dataset_start(env, kind, rng), rng);
        ep.policy = kind;
        ds.episodes.push_back(std::move(ep));
    }
    ds.stats = compute_stats(ds.episodes, ds.obs_dim);
    return ds;
}

}  // namespace prpl
