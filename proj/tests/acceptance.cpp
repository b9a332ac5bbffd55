// Acceptance run: one PASS/FAIL line per criterion, artifacts under the output directory.
// usage: prpl_acceptance [out-dir]

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "prpl/core/allocator.hpp"
#include "prpl/harness/commands.hpp"
#include "reference_mlp.hpp"
#include "toy_flow.hpp"

using namespace prpl;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

std::string pct(double rate) { return fmt(100.0 * rate, 3) + "%"; }

class Clock {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void progress(const std::string& msg) {
    static const Clock clock;
    std::cerr << "[" << std::fixed << std::setprecision(0) << clock.seconds() << " s] " << msg << std::endl;
    std::cerr.unsetf(std::ios::fixed);
}

struct Trained {
    Checkpoint ck;
    TrainSummary summary;
};

Trained train(const RunConfig& cfg, const DatasetFile& ds, const std::string& name, const fs::path& dir) {
    progress("training " + name);
    Trained t;
    t.ck = train_planner(cfg, ds, &t.summary, &std::cerr);
    save_checkpoint(t.ck, (dir / (name + ".prpl")).string());
    progress("trained " + name + " in " + fmt(t.summary.seconds) + " s");
    return t;
}

EvalReport eval(const Checkpoint& ck, std::size_t episodes, const std::string& name, const fs::path& dir) {
    progress("evaluating " + name);
    const EvalReport rep = evaluate(ck, ck.config.planner_settings(), episodes, 1000);
    std::ofstream((dir / (name + ".eval.json")).string()) << to_json(rep).dump(2) << '\n';
    progress(name + ": success " + pct(rep.success_rate()) + ", mean return " + fmt(rep.mean_return()));
    return rep;
}

Verdict gradient_fidelity() {
    const Clock clock;
    Rng rng(2024);
    double worst = 0.0;
    for (int net = 0; net < 50; ++net) {
        const std::size_t in = 2 + rng.below(4), out = 1 + rng.below(3), batch = 1 + rng.below(4);
        const MlpParams p = reference::random_small_mlp(rng, in, out);
        const Tensor2 x = randn(rng, batch, in), w = randn(rng, batch, out);
        const auto r = reference::check_mlp_gradients(p, x, w, 1e-3);
        worst = std::max({worst, r.param_rel, r.input_rel});
    }
    const double s = clock.seconds();
    return {worst < 1e-4 && s < 10.0, "50 networks, worst relative error " + fmt(worst, 3) + ", " + fmt(s, 3) + " s"};
}

Verdict schedule_correctness() {
    const Schedule s = make_cosine_schedule(1000);
    bool decreasing = true;
    for (int t = 1; t < 1000; ++t) decreasing = decreasing && s.snr(t + 1) < s.snr(t);
    auto f = [](double u) {
        const double c = std::cos((u / 1000.0 + 0.008) / 1.008 * std::numbers::pi / 2.0);
        return c * c;
    };
    const double bar = f(500.0) / f(0.0);
    const double ea = std::abs(s.alpha[500] - std::sqrt(bar)), es = std::abs(s.sigma[500] - std::sqrt(1.0 - bar));
    return {decreasing && ea < 1e-6 && es < 1e-6,
            std::string("SNR ") + (decreasing ? "strictly decreasing" : "NOT decreasing") + ", alpha(500) " +
                fmt(s.alpha[500], 6) + " sigma(500) " + fmt(s.sigma[500], 6) + ", closed-form error " +
                fmt(std::max(ea, es), 2)};
}

Verdict ddim_oracle() {
    const Clock clock;
    const Schedule sch = make_cosine_schedule(1000);
    Rng rng(7);
    Tensor2 x = randn(rng, 10000, 2);
    const auto grid = ddim_grid(1000, 1000);
    for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
        // optimal noise prediction for N(0, I) data
        const double a = sch.alpha[grid[k]], sg = sch.sigma[grid[k]];
        Tensor2 eps(x.rows(), x.cols());
        for (std::size_t i = 0; i < x.size(); ++i) eps[i] = static_cast<float>(sg * x[i] / (a * a + sg * sg));
        x = ddim_step(sch, x, eps, grid[k], grid[k + 1]);
    }
    const auto m = toy::moments(x);
    const double mean = std::max(std::abs(m.mean[0]), std::abs(m.mean[1]));
    const double cov = std::max(std::abs(m.cov[0][0] - 1.0), std::abs(m.cov[1][1] - 1.0));
    const double s = clock.seconds();
    return {mean < 0.05 && cov < 0.1 && s < 30.0, "max |mean| " + fmt(mean, 3) + ", max |var - 1| " + fmt(cov, 3) +
                                                       ", " + fmt(s, 3) + " s"};
}

/// Guided integration against hand-rolled single-branch chains with the same solver settings.
bool cfg_identities_hold(const GenerativeBackbone& bb, const SamplerConfig& base, std::uint64_t key) {
    const std::size_t n = 16;
    const Tensor2 x0 = candidate_noise(n, bb.sequence_width(), key);
    const std::vector<float> cond(n, 0.7f), null(n, kNullCondition);
    auto chain = [&](const std::vector<float>& c) {
        Tensor2 x = x0;
        if (bb.kind == BackboneKind::diffusion) {
            const auto grid = ddim_grid(bb.schedule.steps, base.sampling_steps, base.start_fraction);
            for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
                const std::vector<double> t(n, bb.net_time(grid[k]));
                x = ddim_step(bb.schedule, x, denoiser_forward(bb.net, x, t, c), grid[k], grid[k + 1], nullptr,
                              base.x0_clip);
            }
        } else {
            const auto grid = flow_grid(base.sampling_steps);
            for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
                const std::vector<double> t(n, grid[k]);
                x = euler_flow_step(x, denoiser_forward(bb.net, x, t, c), grid[k], grid[k + 1]);
            }
        }
        return x;
    };
    SamplerConfig one = base, zero = base;
    one.guidance = 1.0;
    zero.guidance = 0.0;
    return integrate(bb, x0, cond, {}, one) == chain(cond) && integrate(bb, x0, cond, {}, zero) == chain(null);
}

struct PlanCheck {
    std::size_t plans = 0;
    std::size_t violations = 0;
};

PlanCheck check_plan_structure(const Checkpoint& ck, std::size_t n_plans) {
    const auto env = make_env(ck.config.env);
    const PlanCritic critic = make_plan_critic(ck, *env);
    const PlannerSettings st = ck.config.planner_settings();
    Rng rng(77);
    PlanCheck out;
    const std::size_t d = env->obs_dim();
    for (; out.plans < n_plans; ++out.plans) {
        const std::vector<float> obs{static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform())};
        const PrpPlan plan = plan_once(ck.model, critic, obs, st, rng);
        for (std::size_t l = 0; l < plan.levels.size(); ++l) {
            const auto& lp = plan.levels[l];
            for (std::size_t r = 0; r < lp.candidates.rows(); ++r) {
                const auto row = lp.candidates.row(r);
                for (std::size_t k = 0; k < d; ++k) {
                    out.violations += row[k] != obs[k];
                    if (l > 0)
                        out.violations += row[(lp.level.tokens - 1) * d + k] != plan.levels[l - 1].chosen()[d + k];
                }
            }
        }
    }
    return out;
}

nlohmann::json metrics_only(const EvalReport& r) {
    nlohmann::json j = to_json(r);
    j.erase("decision_latency");
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    const fs::path dir = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_out");
    fs::create_directories(dir);
    std::map<int, Verdict> v;

    try {
        v[1] = gradient_fidelity();
        v[2] = schedule_correctness();
        v[3] = ddim_oracle();

        progress("two-Gaussian reflow toy");
        const Clock toy_clock;
        const auto toy = toy::run_reflow_toy(toy::ReflowToyConfig{});
        const double toy_s = toy_clock.seconds();
        const double gap = toy::max_moment_gap(toy.before, toy.after), pair_gap = toy::max_moment_gap(toy.pairs, toy.before);
        v[6] = {toy.straightness_after <= 0.5 * toy.straightness_before &&
                    toy.discrepancy_after < toy.discrepancy_before && gap < 0.05 && pair_gap < 0.05 && toy_s < 300.0,
                "straightness " + fmt(toy.straightness_before) + " -> " + fmt(toy.straightness_after) +
                    ", 1 vs 20 step discrepancy " + fmt(toy.discrepancy_before) + " -> " +
                    fmt(toy.discrepancy_after) + ", moment gap " + fmt(gap, 3) + " (pairs " + fmt(pair_gap, 3) +
                    "), " + fmt(toy_s, 3) + " s"};

        RunConfig maze_cfg;
        const auto maze = make_env("maze");
        progress("generating maze dataset");
        const DatasetFile maze_ds = generate_dataset(*maze, maze_cfg.mix, maze_cfg.episodes, maze_cfg.seed);

        const Trained prp = train(maze_cfg, maze_ds, "maze_prp_value", dir);
        const EvalReport prp_eval = eval(prp.ck, 100, "maze_prp_value", dir);

        v[10] = {prp.summary.invdyn_holdout_mse < 1e-3,
                 "held-out MSE " + fmt(prp.summary.invdyn_holdout_mse, 3) + " (" +
                     std::to_string(prp.summary.invdyn_skipped) + " contact transitions excluded)"};

        Rng toy_rng(5);
        const GenerativeBackbone toy_flow = toy::make_toy_flow(toy_rng, 1e-3);
        SamplerConfig flow_sc;
        flow_sc.kind = BackboneKind::flow;
        flow_sc.sampling_steps = 20;
        SamplerConfig diff_sc;
        diff_sc.sampling_steps = maze_cfg.sampling_steps;
        diff_sc.start_fraction = maze_cfg.start_fraction;
        diff_sc.x0_clip = maze_cfg.x0_clip;
        bool cfg_ok = true;
        for (std::uint64_t key = 0; key < 5; ++key)
            cfg_ok = cfg_ok && cfg_identities_hold(prp.ck.model.backbones[0], diff_sc, key) &&
                     cfg_identities_hold(toy_flow, flow_sc, key);
        v[4] = {cfg_ok, "trained diffusion level 0 and a flow backbone, 5 seeds each, w = 1 and w = 0 " +
                            std::string(cfg_ok ? "bit-equal" : "DIFFER")};

        RunConfig os_cfg = maze_cfg;
        os_cfg.mode = PlanMode::one_shot;
        RunConfig oll_cfg = maze_cfg;
        oll_cfg.mode = PlanMode::only_last_level;
        const auto prp_levels = maze_cfg.mode_levels();
        const std::size_t prp_tokens = total_tokens(prp_levels), os_tokens = total_tokens(os_cfg.mode_levels());
        progress("checking 1000 plans");
        const PlanCheck pc = check_plan_structure(prp.ck, 1000);
        v[5] = {describe(prp_levels) == "(129,32,5), (33,8,5), (9,1,9)" && prp_tokens == 19 && os_tokens == 129 &&
                    pc.violations == 0,
                "levels " + describe(prp_levels) + ", tokens " + std::to_string(prp_tokens) + " vs " +
                    std::to_string(os_tokens) + ", " + std::to_string(pc.plans) + " plans with " +
                    std::to_string(pc.violations) + " anchoring/chaining mismatches"};

        const Trained oll = train(oll_cfg, maze_ds, "maze_only_last_level", dir);
        const EvalReport oll_eval = eval(oll.ck, 100, "maze_only_last_level", dir);

        RunConfig reward_cfg = maze_cfg;
        reward_cfg.critic = CriticKind::reward;
        const Trained reward = train(reward_cfg, maze_ds, "maze_prp_reward", dir);
        const EvalReport reward_eval = eval(reward.ck, 100, "maze_prp_reward", dir);

        RunConfig runner_cfg = maze_cfg;
        runner_cfg.env = "runner";
        const auto runner = make_env("runner");
        progress("generating runner dataset");
        const DatasetFile runner_ds = generate_dataset(*runner, runner_cfg.mix, runner_cfg.episodes, runner_cfg.seed);
        const Trained rv = train(runner_cfg, runner_ds, "runner_prp_value", dir);
        const EvalReport rv_eval = eval(rv.ck, 100, "runner_prp_value", dir);
        RunConfig runner_reward_cfg = runner_cfg;
        runner_reward_cfg.critic = CriticKind::reward;
        const Trained rr = train(runner_reward_cfg, runner_ds, "runner_prp_reward", dir);
        const EvalReport rr_eval = eval(rr.ck, 100, "runner_prp_reward", dir);

        const double maze_gap = prp_eval.success_rate() - reward_eval.success_rate();
        const double rv_ret = rv_eval.mean_return(), rr_ret = rr_eval.mean_return();
        const double runner_rel = std::abs(rv_ret - rr_ret) / std::max(std::abs(rv_ret), std::abs(rr_ret));
        v[8] = {maze_gap >= 0.20 && runner_rel <= 0.05,
                "maze value " + pct(prp_eval.success_rate()) + " vs reward " + pct(reward_eval.success_rate()) +
                    "; runner mean return value " + fmt(rv_ret) + " vs reward " + fmt(rr_ret) + " (" +
                    pct(runner_rel) + " apart)"};

        progress("determinism check");
        RunConfig det_cfg = parse_config_text(config_to_text(maze_cfg));
        det_cfg.episodes = 200;
        det_cfg.train_steps = 200;
        det_cfg.critic_steps = 300;
        det_cfg.invdyn_steps = 300;
        std::string det_bytes[2];
        nlohmann::json det_metrics[2];
        for (int run = 0; run < 2; ++run) {
            const DatasetFile ds = generate_dataset(*maze, det_cfg.mix, det_cfg.episodes, det_cfg.seed);
            const Checkpoint ck = train_planner(run == 0 ? det_cfg : parse_config_text(config_to_text(det_cfg)), ds);
            std::ostringstream os;
            write_checkpoint(ck, os);
            det_bytes[run] = os.str();
            det_metrics[run] = metrics_only(evaluate(ck, ck.config.planner_settings(), 5, 31));
        }
        const bool det_ok = det_bytes[0] == det_bytes[1] && det_metrics[0] == det_metrics[1];
        v[11] = {det_ok, "two fixed-seed train + eval runs (200 steps, 5 episodes): checkpoint bytes " +
                             std::string(det_bytes[0] == det_bytes[1] ? "identical" : "DIFFER") + ", metrics " +
                             (det_metrics[0] == det_metrics[1] ? "identical" : "DIFFER")};

        const Trained one_shot = train(os_cfg, maze_ds, "maze_one_shot", dir);

        progress("latency benchmark");
        const auto bench = cmd_bench({{"prp", &prp.ck}, {"one-shot", &one_shot.ck}}, 200, 20, 0, (dir / "bench").string());
        const double prp_ms = bench["rows"][0]["latency"]["mean_ms"], os_ms = bench["rows"][1]["latency"]["mean_ms"];
        v[9] = {prp_ms < os_ms / 3.0, "mean decision latency PRP " + fmt(prp_ms) + " ms (" +
                                          fmt(bench["rows"][0]["latency"]["hz"].get<double>()) + " Hz) vs one-shot " +
                                          fmt(os_ms) + " ms (" +
                                          fmt(bench["rows"][1]["latency"]["hz"].get<double>()) + " Hz), ratio " +
                                          fmt(prp_ms / os_ms, 3)};

        const EvalReport os_eval = eval(one_shot.ck, 100, "maze_one_shot", dir);
        const double prp_rate = prp_eval.success_rate();
        v[7] = {prp_rate >= 0.80 && prp.summary.seconds < 1800.0 && os_eval.success_rate() <= prp_rate - 0.15 &&
                    oll_eval.success_rate() <= prp_rate - 0.30,
                "PRP " + pct(prp_rate) + " after " + fmt(prp.summary.seconds / 60.0, 3) + " min training, one-shot " +
                    pct(os_eval.success_rate()) + ", only-last-level " + pct(oll_eval.success_rate())};

        const std::vector<float> start = maze->eval_start(toy_rng);
        const auto prp_export = cmd_export_plans(prp.ck, start, 100, 3, (dir / "plans_prp").string());
        const auto os_export = cmd_export_plans(one_shot.ck, start, 100, 3, (dir / "plans_one_shot").string());
        std::cout << "info: final key point dispersion PRP " << fmt(prp_export["final_keypoint_dispersion"].get<double>())
                  << ", one-shot " << fmt(os_export["final_keypoint_dispersion"].get<double>()) << '\n';
    } catch (const Error& e) {
        std::cout << "acceptance aborted: " << e.what() << '\n';
    }

    nlohmann::json summary = nlohmann::json::array();
    bool all = true;
    for (int c = 1; c <= 11; ++c) {
        const auto it = v.find(c);
        const bool pass = it != v.end() && it->second.pass;
        const std::string detail = it != v.end() ? it->second.detail : "not reached";
        all = all && pass;
        std::cout << "criterion " << std::setw(2) << c << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << '\n';
        summary.push_back({{"criterion", c}, {"pass", pass}, {"detail", detail}});
    }
    std::ofstream(dir / "acceptance.json") << summary.dump(2) << '\n';
    return all ? 0 : 1;
}
