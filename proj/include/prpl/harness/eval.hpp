#pragma once

#include <algorithm>
#include <chrono>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prpl/harness/checkpoint.hpp"

namespace prpl {

struct LatencySummary {
    std::size_t samples = 0;
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p90_ms = 0.0;
    double p99_ms = 0.0;
    double max_ms = 0.0;
    double hz = 0.0;
};

/// Nearest-rank percentile of an unsorted sample.
inline double percentile(std::vector<double> v, double q) {
    require(!v.empty(), ErrorKind::contract, "percentile of an empty sample");
    std::sort(v.begin(), v.end());
    const double rank = std::ceil(q / 100.0 * static_cast<double>(v.size()));
    const std::size_t i = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(v.size()))) - 1;
    return v[i];
}

inline LatencySummary summarize_latency(const std::vector<double>& ms) {
    LatencySummary s;
    s.samples = ms.size();
    if (ms.empty()) return s;
    s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
    s.p50_ms = percentile(ms, 50);
    s.p90_ms = percentile(ms, 90);
    s.p99_ms = percentile(ms, 99);
    s.max_ms = *std::max_element(ms.begin(), ms.end());
    s.hz = s.mean_ms > 0.0 ? 1000.0 / s.mean_ms : 0.0;
    return s;
}

inline nlohmann::json to_json(const LatencySummary& s) {
    return {{"samples", s.samples}, {"mean_ms", s.mean_ms}, {"p50_ms", s.p50_ms}, {"p90_ms", s.p90_ms},
            {"p99_ms", s.p99_ms},   {"max_ms", s.max_ms},   {"hz", s.hz}};
}

inline PlanCritic make_plan_critic(const Checkpoint& ck, const Environment& env) {
    PlanCritic c;
    c.kind = ck.config.critic;
    c.gamma = ck.config.gamma;
    c.env = &env;
    c.value = ck.value ? &*ck.value : nullptr;
    c.validate();
    return c;
}

struct EvalReport {
    std::string env;
    std::string mode;
    std::string critic;
    std::vector<bool> success;
    std::vector<double> returns;
    std::vector<std::size_t> lengths;
    std::vector<double> decision_ms;

    double success_rate() const {
        if (success.empty()) return 0.0;
        return static_cast<double>(std::count(success.begin(), success.end(), true)) / static_cast<double>(success.size());
    }
    double mean_return() const {
        return returns.empty() ? 0.0 : std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
    }
};

/// Closed-loop rollouts replanning at every step. Episode i uses stream i of `seed`.
inline EvalReport evaluate(const Checkpoint& ck, const PlannerSettings& settings, std::size_t n_episodes,
                           std::uint64_t seed, std::ostream* log = nullptr) {
    require(n_episodes >= 1, ErrorKind::configuration, "need at least one evaluation episode");
    const auto env = make_env(ck.config.env);
    const PlanCritic critic = make_plan_critic(ck, *env);
    EvalReport rep;
    rep.env = ck.config.env;
    rep.mode = to_string(ck.config.mode);
    rep.critic = to_string(ck.config.critic);
    const Rng root(seed);
    for (std::size_t e = 0; e < n_episodes; ++e) {
        Rng rng = root.fork(e);
        std::vector<float> state = env->eval_start(rng);
        double ret = 0.0;
        bool success = false;
        std::size_t t = 0;
        for (; t < static_cast<std::size_t>(env->max_steps()); ++t) {
            const auto t0 = std::chrono::steady_clock::now();
            const PrpPlan plan = plan_once(ck.model, critic, state, settings, rng);
            rep.decision_ms.push_back(
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
            const StepResult r = env->step(state, plan.action);
            ret += r.reward;
            state = r.next;
            if (env->success(state)) success = true;
            if (r.done) {
                ++t;
                break;
            }
        }
        rep.success.push_back(success);
        rep.returns.push_back(ret);
        rep.lengths.push_back(t);
        if (log)
            *log << "episode " << e << ": " << (success ? "success" : "-") << " return " << ret << " length " << t
                 << std::endl;
    }
    return rep;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json j;
    j["schema"] = "prpl-eval/1";
    j["env"] = r.env;
    j["mode"] = r.mode;
    j["critic"] = r.critic;
    j["episodes"] = r.success.size();
    j["success_rate"] = r.success_rate();
    j["mean_return"] = r.mean_return();
    j["returns"] = r.returns;
    j["lengths"] = r.lengths;
    std::vector<int> s(r.success.begin(), r.success.end());
    j["success"] = s;
    j["decision_latency"] = to_json(summarize_latency(r.decision_ms));
    return j;
}

struct BenchRow {
    std::string label;
    std::string mode;
    std::size_t tokens_per_candidate = 0;
    std::vector<double> decision_ms;
};

/// Observations visited by the scripted expert from the evaluation start; a fixed stream shared
/// by every benchmarked planner.
inline std::vector<std::vector<float>> bench_observations(const Environment& env, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<float>> out;
    std::vector<float> s = env.eval_start(rng);
    const Policy policy = make_policy(env, "expert", rng);
    while (out.size() < n) {
        out.push_back(s);
        const auto r = env.step(s, policy(s, rng));
        s = r.done ? env.eval_start(rng) : r.next;
    }
    return out;
}

/// Times plan_once end to end (environment stepping excluded). The first `warmup` decisions are
/// run but not recorded.
inline BenchRow bench_planner(const Checkpoint& ck, const PlannerSettings& settings, std::size_t n_decisions,
                              std::size_t warmup, std::uint64_t seed, const std::string& label) {
    const auto env = make_env(ck.config.env);
    const PlanCritic critic = make_plan_critic(ck, *env);
    const auto stream = bench_observations(*env, warmup + n_decisions, seed);
    BenchRow row;
    row.label = label;
    row.mode = to_string(ck.config.mode);
    row.tokens_per_candidate = total_tokens(ck.model.levels);
    Rng rng(seed);
    for (std::size_t i = 0; i < stream.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        const PrpPlan plan = plan_once(ck.model, critic, stream[i], settings, rng);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        require(!plan.action.empty(), ErrorKind::planning, "planner returned no action");
        if (i >= warmup) row.decision_ms.push_back(ms);
    }
    return row;
}

inline nlohmann::json bench_to_json(const std::vector<BenchRow>& rows, std::size_t warmup) {
    nlohmann::json j;
    j["schema"] = "prpl-bench/1";
    j["timing"] = "plan_once wall clock (steady_clock), environment stepping excluded";
    j["warmup_decisions"] = warmup;
    auto& arr = j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        auto lat = to_json(summarize_latency(r.decision_ms));
        arr.push_back({{"label", r.label}, {"mode", r.mode}, {"tokens_per_candidate", r.tokens_per_candidate},
                       {"latency", lat}});
    }
    return j;
}

inline void bench_to_csv(const std::vector<BenchRow>& rows, std::ostream& os) {
    os << "label,mode,tokens_per_candidate,decision,ms\n";
    os.precision(9);
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.decision_ms.size(); ++i)
            os << r.label << ',' << r.mode << ',' << r.tokens_per_candidate << ',' << i << ',' << r.decision_ms[i] << '\n';
}

}  // namespace prpl
