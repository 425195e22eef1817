#include <CLI11.hpp>
#include <iostream>
#include <string>
#include <vector>

#include "softgrad/cli.hpp"

int main(int argc, char** argv) {
    using namespace softgrad;

    CLI::App app{"softgrad: deep soft policy gradient training, evaluation and verification"};
    app.set_version_flag("--version", cli::kVersion);
    app.require_subcommand(1);

    cli::TrainOptions train_opt;
    auto* train = app.add_subcommand("train", "Train an agent");
    train->add_option("--config", train_opt.config_path, "Config file (key = value lines)");
    train->add_option("--seed", train_opt.seed, "Override the seed")
        ->each([&](const std::string&) { train_opt.has_seed = true; });
    train->add_option("--env", train_opt.env_name, "Override the environment");
    train->add_option("--out", train_opt.out_dir, "Explicit run directory");
    train->add_option("overrides", train_opt.overrides, "key=value config overrides");

    cli::EvalOptions eval_opt;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with mean actions");
    eval->add_option("--checkpoint", eval_opt.checkpoint_path, "Checkpoint file")->required();
    eval->add_option("--env", eval_opt.env_name, "Environment (defaults to the checkpoint's)");
    eval->add_option("--episodes", eval_opt.episodes, "Number of evaluation episodes")->required();
    eval->add_option("--seed", eval_opt.seed, "Evaluation seed");

    std::string suite_name;
    auto* verify_cmd = app.add_subcommand("verify", "Run an invariant suite");
    verify_cmd->add_option("suite", suite_name, "gradcheck | backup | estimator | all")->required();

    cli::PlotOptions plot_opt;
    auto* plot = app.add_subcommand("plot", "Aggregate runs into CSV + SVG learning curves");
    plot->add_option("dirs", plot_opt.run_dirs, "Run directories")->required();
    plot->add_option("--out-prefix", plot_opt.out_prefix, "Output file prefix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::kExitOk : cli::kExitUsage;
    }

    try {
        if (*train) {
            cli::cmd_train(train_opt);
            return cli::kExitOk;
        }
        if (*eval) {
            cli::cmd_eval(eval_opt);
            return cli::kExitOk;
        }
        if (*verify_cmd) return cli::cmd_verify(suite_name);
        if (*plot) {
            cli::cmd_plot(plot_opt);
            return cli::kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitVerifyFailure;
    }
    return cli::kExitUsage;
}
