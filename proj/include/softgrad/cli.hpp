#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "softgrad/agent.hpp"
#include "softgrad/config.hpp"
#include "softgrad/metrics.hpp"
#include "softgrad/plot.hpp"
#include "softgrad/verify.hpp"

namespace softgrad::cli {

inline constexpr const char* kVersion = "softgrad 0.1.0";

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

inline std::string output_root() {
    if (const char* env = std::getenv("SOFTGRAD_OUT"); env && *env) return env;
    return "runs";
}

/// <root>/<env>-seed<seed>, suffixed -2, -3, ... if taken.
inline std::string pick_run_dir(const std::string& root, const AgentConfig& cfg) {
    namespace fs = std::filesystem;
    const std::string base = root + "/" + cfg.env + "-seed" + std::to_string(cfg.seed);
    if (!fs::exists(base)) return base;
    for (int i = 2;; ++i) {
        const std::string candidate = base + "-" + std::to_string(i);
        if (!fs::exists(candidate)) return candidate;
    }
}

}  // namespace detail

struct TrainOptions {
    std::string config_path;                  // optional
    std::vector<std::string> overrides;       // key=value
    bool has_seed = false;
    std::uint64_t seed = 0;
    std::string env_name;                     // optional
    std::string out_dir;                      // optional explicit run dir
};

/// Precedence: config file < key=value overrides < --seed/--env flags.
inline AgentConfig resolve_config(const TrainOptions& opt) {
    AgentConfig cfg;
    if (!opt.config_path.empty()) cfg = load_config_file(opt.config_path);
    std::vector<std::pair<std::string, std::string>> entries;
    for (const auto& kv : opt.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override '" + kv + "' is not of the form key=value");
        entries.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
    }
    apply_config_entries(cfg, entries);
    if (!opt.env_name.empty()) cfg.env = opt.env_name;
    if (opt.has_seed) cfg.seed = opt.seed;
    cfg.validate();
    return cfg;
}

/// Runs a full training job and returns the run directory. The directory
/// always ends up with manifest.json, metrics.jsonl and a final checkpoint.
inline std::string cmd_train(const TrainOptions& opt, std::ostream& log = std::cout) {
    const AgentConfig cfg = resolve_config(opt);
    namespace fs = std::filesystem;
    const std::string run_dir =
        opt.out_dir.empty() ? detail::pick_run_dir(detail::output_root(), cfg) : opt.out_dir;
    fs::create_directories(run_dir);

    Json manifest{{"version", kVersion},
                  {"seed", cfg.seed},
                  {"output_dir", run_dir},
                  {"config", config_to_map(cfg)},
                  {"started_at", detail::timestamp_utc()}};
    {
        std::ofstream mf(run_dir + "/manifest.json");
        mf << manifest.dump(2) << '\n';
    }

    auto env = make_env(cfg.env, split_seed(cfg.seed, 2));
    const RunSummary summary = run_training(*env, cfg, run_dir);

    manifest["finished_at"] = detail::timestamp_utc();
    manifest["wall_clock_seconds"] = summary.wall_clock_seconds;
    manifest["env_steps"] = summary.env_steps;
    manifest["train_steps"] = summary.train_steps;
    manifest["episodes"] = summary.episodes;
    {
        std::ofstream mf(run_dir + "/manifest.json");
        mf << manifest.dump(2) << '\n';
    }
    log << "run complete: " << run_dir << " (" << summary.env_steps << " env steps, "
        << summary.train_steps << " train steps)\n";
    return run_dir;
}

struct EvalOptions {
    std::string checkpoint_path;
    std::string env_name;
    std::size_t episodes = 0;
    std::uint64_t seed = 12345;
};

/// Deterministic mean-action evaluation; prints a summary line and a JSON
/// record to the given stream.
inline EvalResult cmd_eval(const EvalOptions& opt, std::ostream& out = std::cout) {
    if (opt.episodes == 0) throw ConfigError("eval: episodes must be >= 1");
    const AgentCheckpoint ckpt = load_agent_checkpoint(opt.checkpoint_path);
    const std::string env_name = opt.env_name.empty() ? ckpt.env_name : opt.env_name;
    const EvalResult res =
        evaluate_policy(ckpt.policy, env_name, split_seed(opt.seed, 7), opt.episodes);
    out << "eval " << env_name << ": mean return " << fmt17(res.mean_return) << ", std "
        << fmt17(res.std_return) << " over " << res.episodes << " episodes\n";
    out << Json{{"env", env_name},
                {"episodes", res.episodes},
                {"mean_return", res.mean_return},
                {"std_return", res.std_return}}
               .dump()
        << '\n';
    return res;
}

/// Runs a named invariant suite; returns the process exit code.
inline int cmd_verify(const std::string& suite_name, std::ostream& out = std::cout) {
    const verify::Suite suite = verify::run_suite(suite_name);
    bool all_pass = true;
    for (const auto& check : suite) {
        out << (check.pass ? "[PASS] " : "[FAIL] ") << check.name << ": " << check.detail << " ["
            << static_cast<int>(check.seconds * 1000) << " ms]\n";
        all_pass = all_pass && check.pass;
    }
    out << (all_pass ? "verify: all checks passed\n" : "verify: FAILURES present\n");
    return all_pass ? kExitOk : kExitVerifyFailure;
}

struct PlotOptions {
    std::vector<std::string> run_dirs;
    std::string out_prefix = "learning_curve";
};

/// Aggregates evaluation curves across runs into CSV and SVG files.
inline LearningCurve cmd_plot(const PlotOptions& opt, std::ostream& log = std::cout) {
    const LearningCurve curve = aggregate_runs(opt.run_dirs);
    {
        std::ofstream csv(opt.out_prefix + ".csv");
        if (!csv) throw ConfigError("plot: cannot write " + opt.out_prefix + ".csv");
        write_curve_csv(csv, curve);
    }
    {
        std::ofstream svg(opt.out_prefix + ".svg");
        if (!svg) throw ConfigError("plot: cannot write " + opt.out_prefix + ".svg");
        write_curve_svg(svg, curve);
    }
    log << "wrote " << opt.out_prefix << ".csv and " << opt.out_prefix << ".svg ("
        << curve.env_steps.size() << " points, " << curve.num_runs << " runs)\n";
    return curve;
}

}  // namespace softgrad::cli
