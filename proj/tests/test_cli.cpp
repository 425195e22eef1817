#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "softgrad/cli.hpp"

using namespace softgrad;

namespace {

std::string temp_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("softgrad_cli_" + tag);
    std::filesystem::remove_all(dir);
    return dir.string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> tiny_overrides() {
    return {"gamma=0",           "batch_size=8",     "action_samples=4", "hidden_sizes=8",
            "warmup=16",         "total_env_steps=60", "train_steps_per_env_step=1",
            "eval_interval=20",  "eval_episodes=2",  "checkpoint_interval=50",
            "buffer_capacity=4096"};
}

}  // namespace

TEST_CASE("config: file parsing, comments and precedence", "[cli]") {
    const std::string dir = temp_dir("config");
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/run.cfg";
    {
        std::ofstream out(path);
        out << "# experiment configuration\n";
        out << "env = pendulum-swingup\n";
        out << "gamma = 0.95   # overridden below\n";
        out << "hidden_sizes = 16,16\n";
        out << "seed = 4\n";
    }
    cli::TrainOptions opt;
    opt.config_path = path;
    opt.overrides = {"gamma=0.9"};
    opt.has_seed = true;
    opt.seed = 11;
    const AgentConfig cfg = cli::resolve_config(opt);
    REQUIRE(cfg.env == "pendulum-swingup");
    REQUIRE(cfg.gamma == 0.9);                       // override beats the file
    REQUIRE(cfg.seed == 11);                         // flag beats everything
    REQUIRE(cfg.hidden_sizes == std::vector<std::size_t>{16, 16});
}

TEST_CASE("config: unknown keys are all reported", "[cli]") {
    AgentConfig cfg;
    try {
        apply_config_entries(cfg, {{"foo", "1"}, {"gamma", "0.5"}, {"bar", "2"}});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("foo") != std::string::npos);
        REQUIRE(msg.find("bar") != std::string::npos);
    }
    REQUIRE(cfg.gamma == 0.5);  // valid keys were applied before the failure surfaced
}

TEST_CASE("config: value validation lists offenders", "[cli]") {
    AgentConfig cfg;
    cfg.gamma = 1.5;
    cfg.clip_norm = -1.0;
    try {
        cfg.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        REQUIRE(msg.find("gamma") != std::string::npos);
        REQUIRE(msg.find("clip_norm") != std::string::npos);
    }
}

TEST_CASE("config: serialize and reload round-trips", "[cli]") {
    AgentConfig cfg;
    cfg.env = "pendulum-swingup";
    cfg.gamma = 0.97;
    cfg.hidden_sizes = {8, 4};
    cfg.actor_lr = 3.5e-5;
    std::stringstream ss;
    write_config(ss, cfg);
    AgentConfig loaded;
    apply_config_entries(loaded, parse_config_text(ss));
    REQUIRE(config_to_map(loaded) == config_to_map(cfg));
}

TEST_CASE("checkpoint text format preserves doubles bit-exactly", "[cli]") {
    for (double x : {0.1, 1.0 / 3.0, 1e-308, 1.7976931348623157e308, -2.5e-17,
                     123456789.123456789}) {
        const std::string s = fmt17(x);
        const double back = std::strtod(s.c_str(), nullptr);
        REQUIRE(back == x);
    }
}

TEST_CASE("cmd_train: run directory carries manifest, metrics and checkpoint", "[cli]") {
    const std::string dir = temp_dir("train");
    cli::TrainOptions opt;
    opt.overrides = tiny_overrides();
    opt.env_name = "continuous-bandit";
    opt.has_seed = true;
    opt.seed = 5;
    opt.out_dir = dir;
    std::stringstream log;
    const std::string run_dir = cli::cmd_train(opt, log);
    REQUIRE(run_dir == dir);
    REQUIRE(std::filesystem::exists(dir + "/manifest.json"));
    REQUIRE(std::filesystem::exists(dir + "/metrics.jsonl"));
    REQUIRE(std::filesystem::exists(dir + "/checkpoint_final.txt"));
    const Json manifest = Json::parse(read_file(dir + "/manifest.json"));
    REQUIRE(manifest.at("config").at("env") == "continuous-bandit");
    REQUIRE(manifest.at("seed").get<std::uint64_t>() == 5);
    REQUIRE(manifest.contains("started_at"));
    REQUIRE(manifest.contains("finished_at"));
}

TEST_CASE("cmd_train: seed determinism end to end", "[cli]") {
    const std::string d1 = temp_dir("train_det1"), d2 = temp_dir("train_det2");
    for (const std::string& dir : {d1, d2}) {
        cli::TrainOptions opt;
        opt.overrides = tiny_overrides();
        opt.env_name = "continuous-bandit";
        opt.has_seed = true;
        opt.seed = 7;
        opt.out_dir = dir;
        std::stringstream log;
        cli::cmd_train(opt, log);
    }
    REQUIRE(read_file(d1 + "/metrics.jsonl") == read_file(d2 + "/metrics.jsonl"));
}

TEST_CASE("cmd_train: SOFTGRAD_OUT overrides the output root", "[cli]") {
    const std::string root = temp_dir("outroot");
    setenv("SOFTGRAD_OUT", root.c_str(), 1);
    cli::TrainOptions opt;
    opt.overrides = tiny_overrides();
    opt.env_name = "continuous-bandit";
    opt.has_seed = true;
    opt.seed = 2;
    std::stringstream log;
    const std::string run_dir = cli::cmd_train(opt, log);
    unsetenv("SOFTGRAD_OUT");
    REQUIRE(run_dir.rfind(root + "/", 0) == 0);
    REQUIRE(std::filesystem::exists(run_dir + "/checkpoint_final.txt"));
}

TEST_CASE("cmd_eval: deterministic output and dimension checks", "[cli]") {
    const std::string dir = temp_dir("eval");
    cli::TrainOptions topt;
    topt.overrides = tiny_overrides();
    topt.env_name = "continuous-bandit";
    topt.has_seed = true;
    topt.seed = 6;
    topt.out_dir = dir;
    std::stringstream tlog;
    cli::cmd_train(topt, tlog);

    cli::EvalOptions eopt;
    eopt.checkpoint_path = dir + "/checkpoint_final.txt";
    eopt.episodes = 3;
    std::stringstream out1, out2;
    const EvalResult r1 = cli::cmd_eval(eopt, out1);
    const EvalResult r2 = cli::cmd_eval(eopt, out2);
    REQUIRE(out1.str() == out2.str());
    REQUIRE(r1.mean_return == r2.mean_return);

    eopt.episodes = 0;
    REQUIRE_THROWS_AS(cli::cmd_eval(eopt), ConfigError);
    eopt.episodes = 1;
    eopt.env_name = "point-mass-2d";  // bandit checkpoint on a 4-d env
    REQUIRE_THROWS_AS(cli::cmd_eval(eopt, out1), StructuralError);
}

TEST_CASE("cmd_plot: single run reproduces its own metrics", "[cli]") {
    const std::string dir = temp_dir("plot1");
    cli::TrainOptions topt;
    topt.overrides = tiny_overrides();
    topt.env_name = "continuous-bandit";
    topt.has_seed = true;
    topt.seed = 8;
    topt.out_dir = dir;
    std::stringstream tlog;
    cli::cmd_train(topt, tlog);

    const LearningCurve curve = aggregate_runs({dir});
    std::size_t eval_count = 0;
    for (const auto& rec : read_jsonl(dir + "/metrics.jsonl"))
        if (rec.value("type", "") == "eval") {
            REQUIRE(curve.env_steps[eval_count] == rec.at("env_step").get<std::size_t>());
            REQUIRE(curve.mean_return[eval_count] == rec.at("eval_return_mean").get<double>());
            ++eval_count;
        }
    REQUIRE(curve.env_steps.size() == eval_count);

    // Two identical runs: the mean equals either run's curve.
    const std::string dir2 = temp_dir("plot2");
    topt.out_dir = dir2;
    std::stringstream tlog2;
    cli::cmd_train(topt, tlog2);
    const LearningCurve both = aggregate_runs({dir, dir2});
    REQUIRE(both.num_runs == 2);
    REQUIRE(both.mean_return == curve.mean_return);

    // CSV row count equals the evaluation count (plus header).
    cli::PlotOptions popt;
    popt.run_dirs = {dir, dir2};
    popt.out_prefix = dir + "/curve";
    std::stringstream plog;
    cli::cmd_plot(popt, plog);
    std::ifstream csv(dir + "/curve.csv");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(csv, line))
        if (!line.empty()) ++rows;
    REQUIRE(rows == eval_count + 1);
    REQUIRE(std::filesystem::exists(dir + "/curve.svg"));
    const std::string svg = read_file(dir + "/curve.svg");
    REQUIRE(svg.find("<svg") != std::string::npos);
    REQUIRE(svg.find("polyline") != std::string::npos);
}

TEST_CASE("cmd_plot: mismatched environments across runs are rejected", "[cli]") {
    const std::string d1 = temp_dir("plotmix1"), d2 = temp_dir("plotmix2");
    for (const auto& [dir, env] :
         std::vector<std::pair<std::string, std::string>>{{d1, "continuous-bandit"},
                                                          {d2, "pendulum-swingup"}}) {
        cli::TrainOptions topt;
        topt.overrides = tiny_overrides();
        topt.env_name = env;
        topt.has_seed = true;
        topt.seed = 4;
        topt.out_dir = dir;
        std::stringstream tlog;
        cli::cmd_train(topt, tlog);
    }
    REQUIRE_THROWS_AS(aggregate_runs({d1, d2}), ConfigError);
}

TEST_CASE("cmd_verify: unknown suite is a configuration error", "[cli]") {
    REQUIRE_THROWS_AS(verify::run_suite("nosuch"), ConfigError);
}

TEST_CASE("cmd_verify: reports one line per check and an exit code", "[cli]") {
    std::stringstream out;
    const int code = cli::cmd_verify("estimator", out);
    const std::string text = out.str();
    REQUIRE(code == cli::kExitOk);
    REQUIRE(text.find("estimator-consistency") != std::string::npos);
    REQUIRE(text.find("[PASS]") != std::string::npos);
}
