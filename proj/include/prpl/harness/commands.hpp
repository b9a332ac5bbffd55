#pragma once

// File-level entry points behind the command-line subcommands.

#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "prpl/harness/export.hpp"
#include "prpl/harness/reflow.hpp"

namespace prpl {

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    require(static_cast<bool>(os), ErrorKind::data, "cannot write '" + path + "'");
    os << text;
    require(static_cast<bool>(os), ErrorKind::data, "write failed for '" + path + "'");
}

}  // namespace detail

inline DatasetFile cmd_gen_data(const RunConfig& cfg, const std::string& out, std::ostream* log = nullptr) {
    cfg.validate();
    const auto env = make_env(cfg.env);
    DatasetFile ds = generate_dataset(*env, cfg.mix, cfg.episodes, cfg.seed);
    save_dataset(ds, out);
    if (log)
        *log << "wrote " << ds.episodes.size() << " episodes (" << ds.transition_count() << " transitions) to " << out
             << '\n';
    return ds;
}

/// Trains from `dataset` and writes the checkpoint plus `<out>.curve.csv`.
inline TrainSummary cmd_train(const RunConfig& cfg, const std::string& dataset, const std::string& out,
                              std::ostream* log = nullptr) {
    cfg.validate();
    require(!dataset.empty(), ErrorKind::data, "no dataset given (set data.dataset or pass --data)");
    require(std::filesystem::exists(dataset), ErrorKind::data, "dataset '" + dataset + "' does not exist");
    const DatasetFile ds = load_dataset(dataset);
    TrainSummary summary;
    const Checkpoint ck = train_planner(cfg, ds, &summary, log);
    save_checkpoint(ck, out);
    std::ofstream csv(out + ".curve.csv");
    require(static_cast<bool>(csv), ErrorKind::data, "cannot write training curve next to '" + out + "'");
    write_curve_csv(summary.curve, csv);
    if (log) *log << "wrote " << out << " (" << summary.seconds << " s)\n";
    return summary;
}

/// Fails with a versioning error when `requested` changes a key the trained model depends on.
inline void require_same_model(const RunConfig& trained, const RunConfig& requested) {
    const auto a = config_entries(trained), b = config_entries(requested);
    for (std::size_t i = 0; i < a.size(); ++i)
        if (is_model_key(a[i].first) && a[i].second != b[i].second)
            fail(ErrorKind::versioning, "checkpoint was trained with " + a[i].first + " = " + a[i].second +
                                            ", configuration asks for " + b[i].second);
}

/// Applies an INI document on top of a checkpoint's configuration. Only planning-time keys may change.
inline RunConfig runtime_config(const RunConfig& trained, const std::string& ini_text) {
    const RunConfig merged = parse_config_text(ini_text, trained);
    require_same_model(trained, merged);
    merged.validate();
    return merged;
}

inline nlohmann::json cmd_eval(const Checkpoint& ck, const RunConfig& cfg, std::size_t episodes, std::uint64_t seed,
                               const std::string& out, std::ostream* log = nullptr) {
    const EvalReport rep = evaluate(ck, cfg.planner_settings(), episodes, seed, log);
    nlohmann::json j = to_json(rep);
    j["seed"] = seed;
    if (!out.empty()) detail::write_text(out, j.dump(2) + "\n");
    return j;
}

struct BenchInput {
    std::string label;
    const Checkpoint* checkpoint = nullptr;
};

/// Times every checkpoint on the same observation stream; writes `<out>.json` and `<out>.csv`.
inline nlohmann::json cmd_bench(const std::vector<BenchInput>& inputs, std::size_t decisions, std::size_t warmup,
                                std::uint64_t seed, const std::string& out) {
    require(!inputs.empty(), ErrorKind::configuration, "bench needs at least one checkpoint");
    require(decisions >= 1, ErrorKind::configuration, "bench needs at least one timed decision");
    std::vector<BenchRow> rows;
    for (const auto& in : inputs)
        rows.push_back(
            bench_planner(*in.checkpoint, in.checkpoint->config.planner_settings(), decisions, warmup, seed, in.label));
    nlohmann::json j = bench_to_json(rows, warmup);
    if (!out.empty()) {
        detail::write_text(out + ".json", j.dump(2) + "\n");
        std::ofstream csv(out + ".csv");
        require(static_cast<bool>(csv), ErrorKind::data, "cannot write '" + out + ".csv'");
        bench_to_csv(rows, csv);
    }
    return j;
}

inline nlohmann::json cmd_reflow(const Checkpoint& ck, const std::string& dataset, const std::string& out,
                                 std::ostream* log = nullptr) {
    require(std::filesystem::exists(dataset), ErrorKind::data, "dataset '" + dataset + "' does not exist");
    const DatasetFile ds = load_dataset(dataset);
    ReflowReport rep;
    const Checkpoint next = reflow_checkpoint(ck, ds, &rep, log);
    save_checkpoint(next, out);
    nlohmann::json j = to_json(rep);
    detail::write_text(out + ".reflow.json", j.dump(2) + "\n");
    return j;
}

/// Writes `<out>.svg` and `<out>.json`.
inline nlohmann::json cmd_export_plans(const Checkpoint& ck, std::span<const float> observation,
                                       std::size_t candidates, std::uint64_t seed, const std::string& out) {
    const PlanExport ex = export_plans(ck, observation, candidates, seed);
    detail::write_text(out + ".svg", ex.svg);
    detail::write_text(out + ".json", ex.json.dump(2) + "\n");
    return ex.json;
}

}  // namespace prpl
