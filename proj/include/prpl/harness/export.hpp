#pragma once

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prpl/harness/eval.hpp"

namespace prpl {

/// Mean squared distance of each candidate's last key point from the candidates' centroid.
inline double final_keypoint_dispersion(const LevelPlan& lp) {
    const std::size_t n = lp.candidates.rows(), d = lp.candidates.cols() / lp.level.tokens;
    const std::size_t off = (lp.level.tokens - 1) * d;
    std::vector<double> mean(d, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < d; ++k) mean[k] += lp.candidates(r, off + k);
    for (auto& m : mean) m /= static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < d; ++k) {
            const double e = lp.candidates(r, off + k) - mean[k];
            acc += e * e;
        }
    return acc / static_cast<double>(n);
}

struct PlanExport {
    PrpPlan plan;
    std::string svg;
    nlohmann::json json;
    double dispersion = 0.0;  // level 0, final key point
};

namespace detail {

/// Level colors from coarse (dark blue) to fine (orange).
inline std::string level_color(std::size_t level, std::size_t levels) {
    static const char* palette[] = {"#1f3a93", "#2e86c1", "#17a589", "#d4ac0d", "#e67e22", "#c0392b"};
    const std::size_t n = sizeof(palette) / sizeof(palette[0]);
    const std::size_t i = levels <= 1 ? 0 : level * (n - 1) / (levels - 1);
    return palette[std::min(i, n - 1)];
}

inline std::string render_maze_svg(const PointMaze2D& maze, const PrpPlan& plan) {
    const double S = 600.0;
    auto px = [&](double x) { return x * S; };
    auto py = [&](double y) { return (1.0 - y) * S; };
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << S << "\" height=\"" << S << "\" viewBox=\"0 0 " << S
       << ' ' << S << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << S << "\" height=\"" << S << "\" fill=\"white\" stroke=\"black\"/>\n";
    for (const auto& w : maze.walls()) {
        const double x0 = std::max(0.0f, w.x0), x1 = std::min(1.0f, w.x1);
        os << "<rect class=\"wall\" x=\"" << px(x0) << "\" y=\"" << py(w.y1) << "\" width=\"" << px(x1) - px(x0)
           << "\" height=\"" << py(w.y0) - py(w.y1) << "\" fill=\"#888888\"/>\n";
    }
    const auto g = maze.goal();
    os << "<circle class=\"goal\" cx=\"" << px(g[0]) << "\" cy=\"" << py(g[1]) << "\" r=\"" << maze.goal_radius() * S
       << "\" fill=\"#a9dfbf\"/>\n";
    const std::size_t L = plan.levels.size();
    for (const auto& lp : plan.levels) {
        const std::size_t d = lp.candidates.cols() / lp.level.tokens;
        const std::string color = level_color(lp.level.index, L);
        os << "<g class=\"level\" data-level=\"" << lp.level.index << "\" stroke=\"" << color << "\" fill=\"none\">\n";
        for (std::size_t r = 0; r < lp.candidates.rows(); ++r) {
            const bool sel = r == lp.selected;
            os << "<polyline" << (sel ? " class=\"selected\"" : "") << " stroke-width=\"" << (sel ? 3 : 1)
               << "\" stroke-opacity=\"" << (sel ? 1.0 : 0.35) << "\" points=\"";
            for (std::size_t k = 0; k < lp.level.tokens; ++k)
                os << (k ? " " : "") << px(lp.candidates(r, k * d)) << ',' << py(lp.candidates(r, k * d + 1));
            os << "\"/>\n";
        }
        os << "</g>\n";
    }
    os << "<circle class=\"observation\" cx=\"" << px(plan.observation[0]) << "\" cy=\"" << py(plan.observation[1])
       << "\" r=\"5\" fill=\"black\"/>\n";
    os << "</svg>\n";
    return os.str();
}

}  // namespace detail

/// Plans once from `observation` with `n_candidates` candidates per level and renders every
/// candidate's key points. Only the maze has a spatial observation to draw.
inline PlanExport export_plans(const Checkpoint& ck, std::span<const float> observation, std::size_t n_candidates,
                               std::uint64_t seed) {
    const auto env = make_env(ck.config.env);
    const auto* maze = dynamic_cast<const PointMaze2D*>(env.get());
    if (!maze) fail(ErrorKind::unsupported, "plan export draws 2-D positions; environment '" + ck.config.env + "' has none");
    require(observation.size() == env->obs_dim(), ErrorKind::configuration,
            "observation needs " + std::to_string(env->obs_dim()) + " values");
    PlannerSettings st = ck.config.planner_settings();
    st.n_candidates = n_candidates;
    const PlanCritic critic = make_plan_critic(ck, *env);
    Rng rng(seed);
    PlanExport out;
    out.plan = plan_once(ck.model, critic, observation, st, rng);
    out.svg = detail::render_maze_svg(*maze, out.plan);
    out.dispersion = final_keypoint_dispersion(out.plan.levels.front());
    out.json = plan_to_json(out.plan);
    out.json["mode"] = to_string(ck.config.mode);
    out.json["final_keypoint_dispersion"] = out.dispersion;
    return out;
}

}  // namespace prpl
