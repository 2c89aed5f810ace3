#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "steerdec/config.hpp"
#include "testutil.hpp"

using namespace steerdec;

TEST_CASE("defaults parse from an empty config") {
    const PipelineConfig cfg = parse_pipeline_config("");
    CHECK(cfg.task.vocab_size == 10);
    CHECK(cfg.steering.alpha == 0.1);
    CHECK(cfg.steering.lambda_mode == LambdaMode::hard_neg_inf);
    CHECK(cfg.warmstart.epochs == 1);
    CHECK(cfg.decode.strategy.kind == StrategyKind::greedy);
    CHECK_FALSE(cfg.decode.stop_token.has_value());
}

TEST_CASE("parse, serialize, parse yields an equal config") {
    PipelineConfig cfg = parse_pipeline_config(R"(
# exercise every section
[task]
seed = 42
vocab_size = 12
order = 1
sharpen = 7.5
shift = 3
lead_tokens = 2
prompt_len = 3

[paths]
workdir = /tmp/somewhere
generations = out.txt

[pretrain]
learning_rate = 12.5
epochs = 17

[warmstart]
learning_rate = 3.25
epochs = 1

[steering]
alpha = 0.25
lambda = -0.5

[calibration]
aggregator = trimmed:0.75
threads = 3

[decode]
strategy = top_p:0.9
max_len = 11
seed = 9
stop_token = 4
)");
    CHECK(cfg.steering.lambda_mode == LambdaMode::constant);
    CHECK(cfg.steering.lambda_value == -0.5);
    CHECK(cfg.calibration.aggregator.kind == AggregatorKind::trimmed);
    CHECK(cfg.decode.stop_token == 4);

    const std::string text = serialize_pipeline_config(cfg);
    const PipelineConfig reparsed = parse_pipeline_config(text);
    CHECK(reparsed == cfg);
    CHECK(serialize_pipeline_config(reparsed) == text);

    // Round trip for the hard-mask default too.
    const PipelineConfig defaults = parse_pipeline_config("");
    CHECK(parse_pipeline_config(serialize_pipeline_config(defaults)) == defaults);
}

TEST_CASE("schema violations are rejected with diagnostics") {
    CHECK_THROWS_WITH_AS(parse_pipeline_config("[task]\nvocab = 10\n"),
                         doctest::Contains("unknown key"), config_error);
    CHECK_THROWS_WITH_AS(parse_pipeline_config("[nonsense]\nx = 1\n"),
                         doctest::Contains("unknown key"), config_error);
    CHECK_THROWS_WITH_AS(parse_pipeline_config("seed = 1\n"),
                         doctest::Contains("outside any [section]"), config_error);
    CHECK_THROWS_WITH_AS(parse_pipeline_config("[task]\nseed\n"),
                         doctest::Contains("expected key = value"), config_error);
    CHECK_THROWS_WITH_AS(parse_pipeline_config("[task]\nvocab_size = ten\n"),
                         doctest::Contains("expected an integer"), config_error);

    // Invariant violations caught by validation.
    CHECK_THROWS_AS(parse_pipeline_config("[task]\nvocab_size = 200\n"), config_error);
    CHECK_THROWS_AS(parse_pipeline_config("[steering]\nalpha = 1.5\n"), config_error);
    CHECK_THROWS_AS(parse_pipeline_config("[steering]\nprob_floor = 0.5\n"), config_error);
    CHECK_THROWS_AS(parse_pipeline_config("[warmstart]\nepochs = 0\n"), config_error);
    CHECK_THROWS_AS(parse_pipeline_config("[warmstart]\nlearning_rate = 0\n"), config_error);
    CHECK_THROWS_AS(parse_pipeline_config("[decode]\nstrategy = beam:0\n"), config_error);
    CHECK_THROWS_AS(parse_pipeline_config("[decode]\nstop_token = 99\n"), config_error);
    CHECK_THROWS_AS(parse_pipeline_config("[calibration]\nthreads = 0\n"), config_error);
    CHECK_THROWS_AS(parse_pipeline_config("[task]\nlead_tokens = 99\n"), config_error);
}

TEST_CASE("config file loading reports the path") {
    testutil::TempDir dir("config_io");
    CHECK_THROWS_AS(load_pipeline_config(dir.file("missing.cfg")), config_error);

    const std::string path = dir.file("bad.cfg");
    {
        std::ofstream out(path);
        out << "[task]\nvocab_size = broken\n";
    }
    CHECK_THROWS_WITH_AS(load_pipeline_config(path), doctest::Contains("bad.cfg"),
                         config_error);
}

TEST_CASE("path resolution joins onto the workdir") {
    PipelineConfig cfg;
    cfg.paths.workdir = "/tmp/run";
    CHECK(resolve_path(cfg, "a.txt") == "/tmp/run/a.txt");
    CHECK(resolve_path(cfg, "/abs/a.txt") == "/abs/a.txt");
    cfg.paths.workdir = ".";
    CHECK(resolve_path(cfg, "a.txt") == "a.txt");
}
