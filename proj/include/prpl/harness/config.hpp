#pragma once

// Run configuration: an INI document ([section] key = value). Every key has a default, unknown
// keys are rejected, and the canonical text form is what checkpoints embed.

#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "prpl/backbones/backbone.hpp"
#include "prpl/critics/critics.hpp"
#include "prpl/envs/generate.hpp"
#include "prpl/prp/levels.hpp"
#include "prpl/prp/planner.hpp"

namespace prpl {

enum class PlanMode { prp, one_shot, only_last_level };

inline const char* to_string(PlanMode m) {
    switch (m) {
        case PlanMode::prp: return "prp";
        case PlanMode::one_shot: return "one-shot";
        case PlanMode::only_last_level: return "only-last-level";
    }
    return "prp";
}

inline PlanMode plan_mode_from_string(const std::string& s) {
    if (s == "prp") return PlanMode::prp;
    if (s == "one-shot") return PlanMode::one_shot;
    if (s == "only-last-level") return PlanMode::only_last_level;
    fail(ErrorKind::configuration, "unknown mode '" + s + "' (expected prp, one-shot or only-last-level)");
}

struct RunConfig {
    // [run]
    std::string env = "maze";
    std::uint64_t seed = 0;
    PlanMode mode = PlanMode::prp;

    // [data]
    std::string dataset;
    std::size_t episodes = 2000;
    PolicyMix mix;

    // [levels]
    std::size_t horizon = 129;
    std::vector<std::size_t> jumps{32, 8, 1};

    // [backbone]
    std::vector<BackboneKind> kinds{BackboneKind::diffusion};  // one entry, or one per level
    std::size_t width = 64;
    std::size_t blocks = 2;
    std::size_t time_embed = 32;
    int diffusion_steps = 1000;

    // [train]
    std::size_t train_steps = 3000;
    std::size_t batch = 256;
    double lr = 1e-3;
    double weight_decay = 1e-5;
    double keep_condition = 0.75;

    // [critic]
    CriticKind critic = CriticKind::value;
    double gamma = 0.99;
    double expectile = 0.9;
    std::size_t critic_steps = 5000;
    std::size_t critic_hidden = 128;
    double critic_lr = 1e-3;

    // [invdyn]
    std::size_t invdyn_steps = 5000;
    std::size_t invdyn_hidden = 128;
    double invdyn_lr = 1e-3;

    // [plan]
    std::size_t candidates = 32;
    double target = 1.0;
    double guidance = 0.1;
    int sampling_steps = 3;
    double start_fraction = 0.8;
    double x0_clip = 3.0;
    bool select_all_levels = true;

    // [reflow]
    std::size_t reflow_pairs = 20000;
    int reflow_generate_steps = 20;
    std::size_t reflow_steps = 2000;
    double reflow_lr = 2e-5;

    /// Levels the chosen mode trains and plans with.
    std::vector<LevelConfig> mode_levels() const {
        const auto full = build_levels(horizon, jumps);
        switch (mode) {
            case PlanMode::prp: return full;
            case PlanMode::one_shot: return build_levels(horizon, {1});
            case PlanMode::only_last_level: return build_levels(full.back().horizon, {1});
        }
        return full;
    }

    BackboneKind kind_at(std::size_t level) const { return kinds.size() == 1 ? kinds[0] : kinds.at(level); }

    void validate() const {
        make_env(env);
        mix.validate();
        const auto full = build_levels(horizon, jumps);
        require(kinds.size() == 1 || kinds.size() == full.size(), ErrorKind::configuration,
                "backbone kinds must list one entry or one per level");
        if (mode != PlanMode::prp)
            for (auto k : kinds)
                require(k == kinds[0], ErrorKind::configuration, "ablation modes need a single backbone kind");
        require(episodes > 0, ErrorKind::configuration, "episodes must be positive");
        require(width >= 2 && blocks >= 1 && time_embed >= 2 && time_embed % 2 == 0, ErrorKind::configuration,
                "invalid backbone size");
        require(diffusion_steps >= 2, ErrorKind::configuration, "diffusion steps must be at least 2");
        require(batch >= 1 && lr > 0.0 && weight_decay >= 0.0, ErrorKind::configuration, "invalid training settings");
        require(keep_condition >= 0.0 && keep_condition <= 1.0, ErrorKind::configuration,
                "keep_condition must lie in [0, 1]");
        require(gamma > 0.0 && gamma <= 1.0, ErrorKind::configuration, "gamma must lie in (0, 1]");
        require(expectile > 0.0 && expectile < 1.0, ErrorKind::configuration, "expectile must lie in (0, 1)");
        require(candidates >= 1, ErrorKind::configuration, "candidates must be positive");
        require(std::isfinite(target) && std::isfinite(guidance), ErrorKind::configuration,
                "target and guidance must be finite");
        require(start_fraction > 0.0 && start_fraction <= 1.0, ErrorKind::configuration,
                "start_fraction must lie in (0, 1]");
        require(sampling_steps >= 1 && sampling_steps <= std::round(start_fraction * diffusion_steps),
                ErrorKind::configuration, "sampling steps must lie in [1, start_fraction * diffusion_steps]");
        require(critic_hidden >= 1 && invdyn_hidden >= 1 && critic_lr > 0.0 && invdyn_lr > 0.0,
                ErrorKind::configuration, "invalid critic settings");
        require(reflow_pairs >= 1 && reflow_generate_steps >= 1 && reflow_steps >= 1 && reflow_lr > 0.0,
                ErrorKind::configuration, "invalid reflow settings");
    }

    PlannerSettings planner_settings() const {
        PlannerSettings s;
        s.n_candidates = candidates;
        s.target = target;
        s.guidance = guidance;
        s.sampling_steps = sampling_steps;
        s.start_fraction = start_fraction;
        s.x0_clip = x0_clip;
        s.select_all_levels = select_all_levels;
        return s;
    }

    DenoiserShape shape(const LevelConfig& lvl, std::size_t obs_dim) const {
        return {lvl.tokens, obs_dim, width, blocks, time_embed};
    }
};

namespace detail {

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : ",") + f(x);
    return s;
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

inline std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

/// Flat "section.key" -> value view of a configuration, in canonical order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& c) {
    using detail::fmt_double;
    auto u = [](auto v) { return std::to_string(v); };
    return {
        {"run.env", c.env},
        {"run.seed", u(c.seed)},
        {"run.mode", to_string(c.mode)},
        {"data.dataset", c.dataset},
        {"data.episodes", u(c.episodes)},
        {"data.expert", fmt_double(c.mix.expert)},
        {"data.noisy", fmt_double(c.mix.noisy)},
        {"data.random", fmt_double(c.mix.random)},
        {"data.dead_end", fmt_double(c.mix.dead_end)},
        {"levels.horizon", u(c.horizon)},
        {"levels.jumps", detail::join<std::size_t>(c.jumps, [](const std::size_t& j) { return std::to_string(j); })},
        {"backbone.kind",
         detail::join<BackboneKind>(c.kinds, [](const BackboneKind& k) { return std::string(to_string(k)); })},
        {"backbone.width", u(c.width)},
        {"backbone.blocks", u(c.blocks)},
        {"backbone.time_embed", u(c.time_embed)},
        {"backbone.diffusion_steps", u(c.diffusion_steps)},
        {"train.steps", u(c.train_steps)},
        {"train.batch", u(c.batch)},
        {"train.lr", fmt_double(c.lr)},
        {"train.weight_decay", fmt_double(c.weight_decay)},
        {"train.keep_condition", fmt_double(c.keep_condition)},
        {"critic.kind", to_string(c.critic)},
        {"critic.gamma", fmt_double(c.gamma)},
        {"critic.expectile", fmt_double(c.expectile)},
        {"critic.steps", u(c.critic_steps)},
        {"critic.hidden", u(c.critic_hidden)},
        {"critic.lr", fmt_double(c.critic_lr)},
        {"invdyn.steps", u(c.invdyn_steps)},
        {"invdyn.hidden", u(c.invdyn_hidden)},
        {"invdyn.lr", fmt_double(c.invdyn_lr)},
        {"plan.candidates", u(c.candidates)},
        {"plan.target", fmt_double(c.target)},
        {"plan.guidance", fmt_double(c.guidance)},
        {"plan.sampling_steps", u(c.sampling_steps)},
        {"plan.start_fraction", fmt_double(c.start_fraction)},
        {"plan.x0_clip", fmt_double(c.x0_clip)},
        {"plan.select_all_levels", c.select_all_levels ? "true" : "false"},
        {"reflow.pairs", u(c.reflow_pairs)},
        {"reflow.generate_steps", u(c.reflow_generate_steps)},
        {"reflow.steps", u(c.reflow_steps)},
        {"reflow.lr", fmt_double(c.reflow_lr)},
    };
}

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    T out{};
    is >> out;
    require(!is.fail() && is.eof(), ErrorKind::configuration, "bad value '" + v + "' for " + key);
    if constexpr (std::is_unsigned_v<T>)
        require(v.find('-') == std::string::npos, ErrorKind::configuration, key + " must be non-negative");
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(ErrorKind::configuration, "bad boolean '" + v + "' for " + key);
}

}  // namespace detail

/// Applies one "section.key" = value assignment.
inline void set_config_value(RunConfig& c, const std::string& key, const std::string& v) {
    using detail::parse_number;
    static const std::map<std::string, std::function<void(RunConfig&, const std::string&)>> setters = {
        {"run.env", [](RunConfig& c, const std::string& v) { c.env = v; }},
        {"run.seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("run.seed", v); }},
        {"run.mode", [](RunConfig& c, const std::string& v) { c.mode = plan_mode_from_string(v); }},
        {"data.dataset", [](RunConfig& c, const std::string& v) { c.dataset = v; }},
        {"data.episodes", [](RunConfig& c, const std::string& v) { c.episodes = parse_number<std::size_t>("data.episodes", v); }},
        {"data.expert", [](RunConfig& c, const std::string& v) { c.mix.expert = parse_number<double>("data.expert", v); }},
        {"data.noisy", [](RunConfig& c, const std::string& v) { c.mix.noisy = parse_number<double>("data.noisy", v); }},
        {"data.random", [](RunConfig& c, const std::string& v) { c.mix.random = parse_number<double>("data.random", v); }},
        {"data.dead_end", [](RunConfig& c, const std::string& v) { c.mix.dead_end = parse_number<double>("data.dead_end", v); }},
        {"levels.horizon", [](RunConfig& c, const std::string& v) { c.horizon = parse_number<std::size_t>("levels.horizon", v); }},
        {"levels.jumps",
         [](RunConfig& c, const std::string& v) {
             c.jumps.clear();
             for (const auto& s : detail::split_list(v)) c.jumps.push_back(parse_number<std::size_t>("levels.jumps", s));
         }},
        {"backbone.kind",
         [](RunConfig& c, const std::string& v) {
             c.kinds.clear();
             for (const auto& s : detail::split_list(v)) c.kinds.push_back(backbone_kind_from_string(s));
             require(!c.kinds.empty(), ErrorKind::configuration, "backbone.kind is empty");
         }},
        {"backbone.width", [](RunConfig& c, const std::string& v) { c.width = parse_number<std::size_t>("backbone.width", v); }},
        {"backbone.blocks", [](RunConfig& c, const std::string& v) { c.blocks = parse_number<std::size_t>("backbone.blocks", v); }},
        {"backbone.time_embed", [](RunConfig& c, const std::string& v) { c.time_embed = parse_number<std::size_t>("backbone.time_embed", v); }},
        {"backbone.diffusion_steps", [](RunConfig& c, const std::string& v) { c.diffusion_steps = parse_number<int>("backbone.diffusion_steps", v); }},
        {"train.steps", [](RunConfig& c, const std::string& v) { c.train_steps = parse_number<std::size_t>("train.steps", v); }},
        {"train.batch", [](RunConfig& c, const std::string& v) { c.batch = parse_number<std::size_t>("train.batch", v); }},
        {"train.lr", [](RunConfig& c, const std::string& v) { c.lr = parse_number<double>("train.lr", v); }},
        {"train.weight_decay", [](RunConfig& c, const std::string& v) { c.weight_decay = parse_number<double>("train.weight_decay", v); }},
        {"train.keep_condition", [](RunConfig& c, const std::string& v) { c.keep_condition = parse_number<double>("train.keep_condition", v); }},
        {"critic.kind", [](RunConfig& c, const std::string& v) { c.critic = critic_kind_from_string(v); }},
        {"critic.gamma", [](RunConfig& c, const std::string& v) { c.gamma = parse_number<double>("critic.gamma", v); }},
        {"critic.expectile", [](RunConfig& c, const std::string& v) { c.expectile = parse_number<double>("critic.expectile", v); }},
        {"critic.steps", [](RunConfig& c, const std::string& v) { c.critic_steps = parse_number<std::size_t>("critic.steps", v); }},
        {"critic.hidden", [](RunConfig& c, const std::string& v) { c.critic_hidden = parse_number<std::size_t>("critic.hidden", v); }},
        {"critic.lr", [](RunConfig& c, const std::string& v) { c.critic_lr = parse_number<double>("critic.lr", v); }},
        {"invdyn.steps", [](RunConfig& c, const std::string& v) { c.invdyn_steps = parse_number<std::size_t>("invdyn.steps", v); }},
        {"invdyn.hidden", [](RunConfig& c, const std::string& v) { c.invdyn_hidden = parse_number<std::size_t>("invdyn.hidden", v); }},
        {"invdyn.lr", [](RunConfig& c, const std::string& v) { c.invdyn_lr = parse_number<double>("invdyn.lr", v); }},
        {"plan.candidates", [](RunConfig& c, const std::string& v) { c.candidates = parse_number<std::size_t>("plan.candidates", v); }},
        {"plan.target", [](RunConfig& c, const std::string& v) { c.target = parse_number<double>("plan.target", v); }},
        {"plan.guidance", [](RunConfig& c, const std::string& v) { c.guidance = parse_number<double>("plan.guidance", v); }},
        {"plan.sampling_steps", [](RunConfig& c, const std::string& v) { c.sampling_steps = parse_number<int>("plan.sampling_steps", v); }},
        {"plan.start_fraction", [](RunConfig& c, const std::string& v) { c.start_fraction = parse_number<double>("plan.start_fraction", v); }},
        {"plan.x0_clip", [](RunConfig& c, const std::string& v) { c.x0_clip = parse_number<double>("plan.x0_clip", v); }},
        {"plan.select_all_levels", [](RunConfig& c, const std::string& v) { c.select_all_levels = detail::parse_bool("plan.select_all_levels", v); }},
        {"reflow.pairs", [](RunConfig& c, const std::string& v) { c.reflow_pairs = parse_number<std::size_t>("reflow.pairs", v); }},
        {"reflow.generate_steps", [](RunConfig& c, const std::string& v) { c.reflow_generate_steps = parse_number<int>("reflow.generate_steps", v); }},
        {"reflow.steps", [](RunConfig& c, const std::string& v) { c.reflow_steps = parse_number<std::size_t>("reflow.steps", v); }},
        {"reflow.lr", [](RunConfig& c, const std::string& v) { c.reflow_lr = parse_number<double>("reflow.lr", v); }},
    };
    const auto it = setters.find(key);
    if (it == setters.end()) fail(ErrorKind::configuration, "unknown configuration key '" + key + "'");
    it->second(c, v);
}

/// Parses an INI document over the defaults.
inline RunConfig parse_config(std::istream& is, RunConfig base = {}) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        fail(ErrorKind::configuration, std::string("malformed configuration: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        require(!body.empty() || body.data().empty(), ErrorKind::configuration, "key outside a section: " + section);
        for (const auto& [key, value] : body) set_config_value(base, section + "." + key, value.data());
    }
    return base;
}

inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
    std::istringstream is(text);
    return parse_config(is, std::move(base));
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::configuration, "cannot open configuration '" + path + "'");
    return parse_config(is);
}

/// Canonical INI text (sections in fixed order, every key present).
inline std::string config_to_text(const RunConfig& c) {
    std::string out, section;
    for (const auto& [key, value] : config_entries(c)) {
        const auto dot = key.find('.');
        const std::string sec = key.substr(0, dot);
        if (sec != section) {
            out += (out.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
            section = sec;
        }
        out += key.substr(dot + 1) + " = " + value + "\n";
    }
    return out;
}

/// Keys whose values change the trained model; evaluation refuses checkpoints that disagree.
inline bool is_model_key(const std::string& key) {
    static const std::set<std::string> runtime = {
        "plan.candidates",  "plan.target",  "plan.guidance",         "plan.sampling_steps",
        "plan.start_fraction", "plan.x0_clip", "plan.select_all_levels", "run.seed",
        "data.dataset",     "reflow.pairs", "reflow.generate_steps", "reflow.steps",
        "reflow.lr"};
    return !runtime.count(key);
}

}  // namespace prpl
