#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "prpl/core/error.hpp"
#include "prpl/numerics/rng.hpp"

namespace prpl {

struct StepResult {
    std::vector<float> next;
    float reward = 0.0f;
    bool done = false;
};

/// Deterministic desk-scale control task. States are observations.
class Environment {
public:
    virtual ~Environment() = default;
    virtual std::string name() const = 0;
    virtual std::size_t obs_dim() const = 0;
    virtual std::size_t act_dim() const = 0;
    virtual float action_bound() const { return 1.0f; }
    virtual int max_steps() const = 0;
    virtual float dt() const = 0;
    /// Pure transition; actions outside the box are clipped.
    virtual StepResult step(std::span<const float> state, std::span<const float> action) const = 0;
    /// Reward of the transition state -> next recomputed from states alone.
    virtual float transition_reward(std::span<const float> state, std::span<const float> next) const = 0;
    /// Estimated total reward of `steps` transitions taking `from` to `to`.
    virtual float segment_reward(std::span<const float> from, std::span<const float> to, int steps) const = 0;
    virtual bool success(std::span<const float> state) const = 0;
    /// False when the transition does not determine the action (e.g. contact with a wall).
    virtual bool action_identifiable(std::span<const float>, std::span<const float>, std::span<const float>) const {
        return true;
    }
    /// Evaluation start state (slightly perturbed per episode).
    virtual std::vector<float> eval_start(Rng& rng) const = 0;

    std::vector<float> clip_action(std::span<const float> a) const {
        std::vector<float> c(a.begin(), a.end());
        for (auto& v : c) v = std::clamp(v, -action_bound(), action_bound());
        return c;
    }
};

/// Axis-aligned wall rectangle.
struct Wall {
    float x0, y0, x1, y1;
    bool strictly_inside(float x, float y) const { return x > x0 && x < x1 && y > y0 && y < y1; }
};

/// Point mass in the unit square with a U-shaped corridor and a dead-end pocket.
/// Sparse reward 1 on entering the goal disc, which ends the episode.
class PointMaze2D final : public Environment {
public:
    PointMaze2D() {
        // central divider with a pocket opening downwards between x = 0.30 and x = 0.42; the left
        // piece extends past the border so the boundary x = 0 is closed too
        walls_ = {
            Wall{-1.00f, 0.35f, 0.30f, 0.65f},
            Wall{0.42f, 0.35f, 0.70f, 0.65f},
            Wall{0.30f, 0.60f, 0.42f, 0.65f},
        };
    }

    std::string name() const override { return "maze"; }
    std::size_t obs_dim() const override { return 2; }
    std::size_t act_dim() const override { return 2; }
    int max_steps() const override { return 200; }
    float dt() const override { return dt_; }

    const std::vector<Wall>& walls() const { return walls_; }
    std::array<float, 2> goal() const { return goal_; }
    float goal_radius() const { return goal_radius_; }
    std::array<float, 2> start() const { return start_; }

    bool in_goal(std::span<const float> s) const {
        const float dx = s[0] - goal_[0], dy = s[1] - goal_[1];
        return dx * dx + dy * dy <= goal_radius_ * goal_radius_;
    }

    bool in_wall(float x, float y) const {
        return std::any_of(walls_.begin(), walls_.end(), [&](const Wall& w) { return w.strictly_inside(x, y); });
    }

    /// Moves along x then y; a move that would enter a wall stops on the face it approached.
    std::array<float, 2> move(float x, float y, float dx, float dy) const {
        float nx = std::clamp(x + dx, 0.0f, 1.0f);
        for (const auto& w : walls_)
            if (w.strictly_inside(nx, y)) nx = dx > 0.0f ? w.x0 : w.x1;
        float ny = std::clamp(y + dy, 0.0f, 1.0f);
        for (const auto& w : walls_)
            if (w.strictly_inside(nx, ny)) ny = dy > 0.0f ? w.y0 : w.y1;
        return {nx, ny};
    }

    StepResult step(std::span<const float> state, std::span<const float> action) const override {
        const auto a = clip_action(action);
        const auto p = move(state[0], state[1], dt_ * a[0], dt_ * a[1]);
        StepResult r;
        r.next = {p[0], p[1]};
        r.reward = transition_reward(state, r.next);
        r.done = in_goal(r.next);
        return r;
    }

    float transition_reward(std::span<const float> s, std::span<const float> next) const override {
        return (!in_goal(s) && in_goal(next)) ? 1.0f : 0.0f;
    }

    float segment_reward(std::span<const float> from, std::span<const float> to, int) const override {
        return transition_reward(from, to);
    }

    bool success(std::span<const float> s) const override { return in_goal(s); }

    bool action_identifiable(std::span<const float> s, std::span<const float> a,
                             std::span<const float> next) const override {
        const auto c = clip_action(a);
        return next[0] == s[0] + dt_ * c[0] && next[1] == s[1] + dt_ * c[1];
    }

    std::vector<float> eval_start(Rng& rng) const override {
        return {start_[0] + static_cast<float>(rng.uniform(-0.02, 0.02)),
                start_[1] + static_cast<float>(rng.uniform(-0.02, 0.02))};
    }

private:
    float dt_ = 0.05f;
    std::vector<Wall> walls_;
    std::array<float, 2> start_{0.10f, 0.17f};
    std::array<float, 2> goal_{0.10f, 0.83f};
    float goal_radius_ = 0.08f;
};

/// 1-D runner: state (position, velocity), thrust in [-1, 1], reward v' - 0.1 a^2.
class LineRunner final : public Environment {
public:
    std::string name() const override { return "runner"; }
    std::size_t obs_dim() const override { return 2; }
    std::size_t act_dim() const override { return 1; }
    int max_steps() const override { return 100; }
    float dt() const override { return dt_; }
    float max_velocity() const { return v_max_; }

    StepResult step(std::span<const float> state, std::span<const float> action) const override {
        const float a = std::clamp(action[0], -1.0f, 1.0f);
        const float v = std::clamp(state[1] + dt_ * a, -v_max_, v_max_);
        StepResult r;
        r.next = {state[0] + dt_ * v, v};
        r.reward = v - 0.1f * a * a;
        return r;
    }

    /// Thrust is recovered from the velocity change.
    float transition_reward(std::span<const float> s, std::span<const float> next) const override {
        const float a = std::clamp((next[1] - s[1]) / dt_, -1.0f, 1.0f);
        return next[1] - 0.1f * a * a;
    }

    /// Sum of v' over the segment is the displacement over dt; thrust spread evenly.
    float segment_reward(std::span<const float> from, std::span<const float> to, int steps) const override {
        if (steps <= 1) return transition_reward(from, to);
        const float a = std::clamp((to[1] - from[1]) / (dt_ * steps), -1.0f, 1.0f);
        return (to[0] - from[0]) / dt_ - 0.1f * a * a * steps;
    }

    bool success(std::span<const float>) const override { return false; }

    bool action_identifiable(std::span<const float> s, std::span<const float> a,
                             std::span<const float>) const override {
        return std::abs(s[1] + dt_ * std::clamp(a[0], -1.0f, 1.0f)) <= v_max_;
    }

    std::vector<float> eval_start(Rng& rng) const override {
        return {0.0f, static_cast<float>(rng.uniform(-0.02, 0.02))};
    }

private:
    float dt_ = 0.05f;
    float v_max_ = 1.0f;
};

inline std::unique_ptr<Environment> make_env(const std::string& name) {
    if (name == "maze") return std::make_unique<PointMaze2D>();
    if (name == "runner") return std::make_unique<LineRunner>();
    fail(ErrorKind::configuration, "unknown environment '" + name + "'");
}

}  // namespace prpl
