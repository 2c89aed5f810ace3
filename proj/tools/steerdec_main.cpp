// steerdec: train two small tabular language models, calibrate a steering
// strength from their output distributions, and decode with the steering
// vector applied at every step.
//
// Exit codes: 0 success, 2 config error, 3 artifact error, 4 verification
// failure.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "steerdec/config.hpp"
#include "steerdec/pipeline.hpp"
#include "steerdec/verify.hpp"

namespace {

constexpr int k_exit_ok = 0;
constexpr int k_exit_config = 2;
constexpr int k_exit_artifact = 3;
constexpr int k_exit_verification = 4;

struct CliOptions {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::optional<double> mu;
    std::optional<double> alpha;
    std::optional<std::string> strategy;
    std::optional<std::string> trace_path;
    bool no_steering = false;
};

steerdec::StageOverrides to_overrides(const CliOptions& opt) {
    steerdec::StageOverrides ov;
    if (opt.seed) {
        ov.seed = static_cast<std::uint64_t>(*opt.seed);
    }
    ov.mu = opt.mu;
    ov.alpha = opt.alpha;
    if (opt.strategy) {
        ov.strategy = steerdec::parse_strategy(*opt.strategy);
    }
    ov.trace_path = opt.trace_path;
    ov.no_steering = opt.no_steering;
    return ov;
}

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--config", opt.config_path, "pipeline config file")->required();
    cmd->add_option("--seed", opt.seed, "override the run seed");
}

void add_decode_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--mu", opt.mu, "force the steering strength (ablations)");
    cmd->add_option("--alpha", opt.alpha, "override the confidence threshold");
}

void print_trace(const std::vector<double>& nll_trace) {
    std::printf("nll");
    for (double v : nll_trace) {
        std::printf(" %.6f", v);
    }
    std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"steering-vector decoding for tabular softmax language models"};
    app.require_subcommand(1);

    CliOptions opt;
    int verify_trials = 1000;

    CLI::App* gen = app.add_subcommand("gen", "generate the synthetic corpora and prompts");
    add_common_flags(gen, opt);

    CLI::App* train = app.add_subcommand("train", "train the pre-trained model theta");
    add_common_flags(train, opt);

    CLI::App* warmstart =
        app.add_subcommand("warmstart", "warm-start phi from theta on the task split");
    add_common_flags(warmstart, opt);

    CLI::App* calibrate =
        app.add_subcommand("calibrate", "compute per-token strengths and the global mu");
    add_common_flags(calibrate, opt);
    calibrate->add_option("--alpha", opt.alpha, "override the confidence threshold");

    CLI::App* decode = app.add_subcommand("decode", "decode the prompts with steering");
    add_common_flags(decode, opt);
    add_decode_flags(decode, opt);
    decode->add_option("--strategy", opt.strategy,
                       "greedy | beam:<w> | top_k:<k> | top_p:<p>");
    decode->add_option("--trace", opt.trace_path, "write per-step JSON trace records");
    decode->add_flag("--no-steering", opt.no_steering, "run the plain baseline decoder");

    CLI::App* eval = app.add_subcommand("eval", "score baseline and steered variants");
    add_common_flags(eval, opt);
    add_decode_flags(eval, opt);

    CLI::App* pipeline =
        app.add_subcommand("pipeline", "run gen, train, warmstart, calibrate, decode, eval");
    add_common_flags(pipeline, opt);
    add_decode_flags(pipeline, opt);

    CLI::App* verify = app.add_subcommand("verify", "numerical verification suites");
    verify->require_subcommand(1);
    CLI::App* verify_first =
        verify->add_subcommand("first-order", "KL first-order response checks");
    verify_first->add_option("--trials", verify_trials, "random trials");
    CLI::App* verify_mu = verify->add_subcommand("mu-oracle", "strength oracle checks");
    verify_mu->add_option("--trials", verify_trials, "random trials");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return k_exit_config;
    }

    try {
        if (verify_first->parsed()) {
            const auto report = steerdec::verify_first_order(verify_trials);
            std::cout << steerdec::format_report(report);
            return report.passed ? k_exit_ok : k_exit_verification;
        }
        if (verify_mu->parsed()) {
            const auto report = steerdec::verify_mu_oracle(verify_trials);
            std::cout << steerdec::format_report(report);
            return report.passed ? k_exit_ok : k_exit_verification;
        }

        const steerdec::PipelineConfig cfg = steerdec::load_pipeline_config(opt.config_path);
        const steerdec::StageOverrides ov = to_overrides(opt);

        if (gen->parsed()) {
            steerdec::run_gen_stage(cfg, ov);
            std::cout << "wrote corpora under " << cfg.paths.workdir << "\n";
        } else if (train->parsed()) {
            print_trace(steerdec::run_train_stage(cfg, ov));
        } else if (warmstart->parsed()) {
            print_trace(steerdec::run_warmstart_stage(cfg, ov));
        } else if (calibrate->parsed()) {
            const auto report = steerdec::run_calibrate_stage(cfg, ov);
            std::printf("mu_bar %.10g (%d records, %d degenerate)\n", report.mu_bar,
                        report.total_records, report.degenerate_records);
        } else if (decode->parsed()) {
            steerdec::run_decode_stage(cfg, ov);
            std::cout << "wrote " << steerdec::resolve_path(cfg, cfg.paths.generations) << "\n";
        } else if (eval->parsed()) {
            const auto summary = steerdec::run_eval_stage(cfg, ov);
            std::printf("baseline accuracy %.4f nll %.6f\n",
                        summary.baseline_warmstart.accuracy,
                        summary.baseline_warmstart.mean_nll);
            std::printf("svd      accuracy %.4f nll %.6f (mu_bar %.6g)\n", summary.svd.accuracy,
                        summary.svd.mean_nll, summary.mu_bar);
        } else if (pipeline->parsed()) {
            const auto summary = steerdec::run_full_pipeline(cfg, ov);
            std::printf("baseline accuracy %.4f nll %.6f\n",
                        summary.baseline_warmstart.accuracy,
                        summary.baseline_warmstart.mean_nll);
            std::printf("svd      accuracy %.4f nll %.6f (mu_bar %.6g)\n", summary.svd.accuracy,
                        summary.svd.mean_nll, summary.mu_bar);
        }
        return k_exit_ok;
    } catch (const steerdec::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return k_exit_config;
    } catch (const steerdec::artifact_error& e) {
        std::cerr << "artifact error: " << e.what() << "\n";
        return k_exit_artifact;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return k_exit_config;
    }
}
