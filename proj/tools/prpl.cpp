// prpl: command-line front end (gen-data, train, eval, bench, reflow, export-plans).

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prpl/core/allocator.hpp"
#include "prpl/harness/commands.hpp"

namespace {

using namespace prpl;

struct Common {
    std::string config;
    std::string out;
    std::string mode;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::vector<std::string> sets;
    bool quiet = false;
};

std::string read_file(const std::string& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), ErrorKind::configuration, "cannot open configuration '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

/// Applies `--set section.key=value` assignments, then the dedicated flags.
void apply_overrides(RunConfig& cfg, const Common& c) {
    for (const auto& s : c.sets) {
        const auto eq = s.find('=');
        require(eq != std::string::npos && eq > 0, ErrorKind::configuration, "--set expects key=value, got '" + s + "'");
        set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!c.mode.empty()) cfg.mode = plan_mode_from_string(c.mode);
    if (c.seed_given) cfg.seed = c.seed;
}

RunConfig build_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
    apply_overrides(cfg, c);
    cfg.validate();
    return cfg;
}

/// Checkpoint configuration with the file and flags layered on top; model keys must not change.
RunConfig checkpoint_config(const Checkpoint& ck, const Common& c) {
    RunConfig cfg = c.config.empty() ? ck.config : runtime_config(ck.config, read_file(c.config));
    apply_overrides(cfg, c);
    require_same_model(ck.config, cfg);
    cfg.validate();
    return cfg;
}

std::vector<float> parse_floats(const std::string& text) {
    std::vector<float> out;
    for (const auto& s : detail::split_list(text)) out.push_back(detail::parse_number<float>("--obs", s));
    return out;
}

void add_common(CLI::App* app, Common& c, bool with_out_required) {
    app->add_option("--config", c.config, "INI configuration file");
    app->add_option("--mode", c.mode, "prp | one-shot | only-last-level");
    app->add_option_function<std::uint64_t>(
        "--seed", [&c](std::uint64_t v) { c.seed = v; c.seed_given = true; }, "run seed");
    auto* out = app->add_option("--out", c.out, "output path");
    if (with_out_required) out->required();
    app->add_option("--set", c.sets, "override one key, section.key=value (repeatable)");
    app->add_flag("-q,--quiet", c.quiet, "suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Progressive multi-level trajectory planner"};
    app.require_subcommand(1);

    Common gen_c;
    std::string gen_env;
    std::size_t gen_episodes = 0;
    double f_expert = -1, f_noisy = -1, f_random = -1, f_dead_end = -1;
    auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
    add_common(gen, gen_c, true);
    gen->add_option("--env", gen_env, "maze | runner");
    gen->add_option("--episodes", gen_episodes, "episode count");
    gen->add_option("--expert", f_expert, "fraction of expert episodes");
    gen->add_option("--noisy", f_noisy, "fraction of noisy-expert episodes");
    gen->add_option("--random", f_random, "fraction of random episodes");
    gen->add_option("--dead-end", f_dead_end, "fraction of dead-end episodes");

    Common train_c;
    std::string train_data;
    auto* train = app.add_subcommand("train", "train a planner checkpoint");
    add_common(train, train_c, true);
    train->add_option("--data", train_data, "dataset path (overrides data.dataset)");

    Common eval_c;
    std::string eval_ck;
    std::size_t eval_episodes = 100;
    auto* eval = app.add_subcommand("eval", "closed-loop evaluation");
    add_common(eval, eval_c, false);
    eval->add_option("--checkpoint", eval_ck, "checkpoint path")->required();
    eval->add_option("--episodes", eval_episodes, "evaluation episodes");

    Common bench_c;
    std::vector<std::string> bench_cks;
    std::size_t bench_decisions = 200, bench_warmup = 20;
    auto* bench = app.add_subcommand("bench", "per-decision latency benchmark");
    add_common(bench, bench_c, false);
    bench->add_option("--checkpoint", bench_cks, "checkpoint path, optionally label=path (repeatable)")->required();
    bench->add_option("--decisions", bench_decisions, "timed decisions per checkpoint");
    bench->add_option("--warmup", bench_warmup, "untimed warm-up decisions");

    Common reflow_c;
    std::string reflow_ck, reflow_data;
    auto* reflow = app.add_subcommand("reflow", "straighten rectified-flow levels");
    add_common(reflow, reflow_c, true);
    reflow->add_option("--checkpoint", reflow_ck, "checkpoint path")->required();
    reflow->add_option("--data", reflow_data, "dataset path (defaults to data.dataset)");

    Common export_c;
    std::string export_ck, export_obs;
    std::size_t export_candidates = 100;
    auto* exp = app.add_subcommand("export-plans", "render candidate plans as SVG and JSON");
    add_common(exp, export_c, true);
    exp->add_option("--checkpoint", export_ck, "checkpoint path")->required();
    exp->add_option("--obs", export_obs, "observation, comma separated")->required();
    exp->add_option("--candidates", export_candidates, "candidates per level");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            RunConfig cfg = gen_c.config.empty() ? RunConfig{} : load_config(gen_c.config);
            if (!gen_env.empty()) cfg.env = gen_env;
            if (gen_episodes) cfg.episodes = gen_episodes;
            if (f_expert >= 0) cfg.mix.expert = f_expert;
            if (f_noisy >= 0) cfg.mix.noisy = f_noisy;
            if (f_random >= 0) cfg.mix.random = f_random;
            if (f_dead_end >= 0) cfg.mix.dead_end = f_dead_end;
            apply_overrides(cfg, gen_c);
            cmd_gen_data(cfg, gen_c.out, gen_c.quiet ? nullptr : &std::cerr);
        } else if (train->parsed()) {
            RunConfig cfg = build_config(train_c);
            if (!train_data.empty()) cfg.dataset = train_data;
            cmd_train(cfg, cfg.dataset, train_c.out, train_c.quiet ? nullptr : &std::cerr);
        } else if (eval->parsed()) {
            const Checkpoint ck = load_checkpoint(eval_ck);
            const RunConfig cfg = checkpoint_config(ck, eval_c);
            const auto j = cmd_eval(ck, cfg, eval_episodes, cfg.seed, eval_c.out, eval_c.quiet ? nullptr : &std::cerr);
            std::cout << "success_rate " << j["success_rate"].get<double>() << "  mean_return "
                      << j["mean_return"].get<double>() << "  mean_decision_ms "
                      << j["decision_latency"]["mean_ms"].get<double>() << '\n';
        } else if (bench->parsed()) {
            std::vector<Checkpoint> cks;
            std::vector<std::string> labels;
            cks.reserve(bench_cks.size());
            for (const auto& spec : bench_cks) {
                const auto eq = spec.find('=');
                const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
                Checkpoint ck = load_checkpoint(path);
                ck.config = checkpoint_config(ck, bench_c);
                labels.push_back(eq == std::string::npos ? to_string(ck.config.mode) : spec.substr(0, eq));
                cks.push_back(std::move(ck));
            }
            std::vector<BenchInput> inputs;
            for (std::size_t i = 0; i < cks.size(); ++i) inputs.push_back({labels[i], &cks[i]});
            const std::uint64_t seed = bench_c.seed_given ? bench_c.seed : 0;
            const auto j = cmd_bench(inputs, bench_decisions, bench_warmup, seed, bench_c.out);
            for (const auto& row : j["rows"])
                std::cout << row["label"].get<std::string>() << ": tokens " << row["tokens_per_candidate"].get<std::size_t>()
                          << "  mean " << row["latency"]["mean_ms"].get<double>() << " ms  ("
                          << row["latency"]["hz"].get<double>() << " Hz)\n";
        } else if (reflow->parsed()) {
            Checkpoint ck = load_checkpoint(reflow_ck);
            ck.config = checkpoint_config(ck, reflow_c);
            const std::string data = reflow_data.empty() ? ck.config.dataset : reflow_data;
            const auto j = cmd_reflow(ck, data, reflow_c.out, reflow_c.quiet ? nullptr : &std::cerr);
            for (const auto& l : j["levels"])
                std::cout << "level " << l["level"].get<std::size_t>() << ": straightness "
                          << l["straightness_before"].get<double>() << " -> " << l["straightness_after"].get<double>()
                          << '\n';
        } else if (exp->parsed()) {
            Checkpoint ck = load_checkpoint(export_ck);
            ck.config = checkpoint_config(ck, export_c);
            const auto obs = parse_floats(export_obs);
            const auto j = cmd_export_plans(ck, obs, export_candidates, ck.config.seed, export_c.out);
            std::cout << "final key-point dispersion " << j["final_keypoint_dispersion"].get<double>() << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "prpl: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "prpl: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
