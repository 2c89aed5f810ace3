#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "steerdec/decode.hpp"
#include "steerdec/steering.hpp"
#include "steerdec/strength.hpp"
#include "steerdec/toymodel.hpp"

namespace steerdec {

// ============================================================================
// Pipeline configuration
// ============================================================================
//
// Plain-text key/value file with [section] headers, '#' comments, and one
// `key = value` pair per line. Every key has a default; unknown sections or
// keys are schema errors. The canonical serialization round-trips exactly.

struct PipelineConfig {
    struct Task {
        std::uint64_t seed = 7;
        int vocab_size = 10;
        int order = 2;
        SyntheticTaskOptions options;
        int prompt_len = 4;  // prompt prefix length cut from each test sequence

        bool operator==(const Task&) const = default;
    };

    struct Paths {
        std::string workdir = ".";
        std::string pretrain_corpus = "pretrain.txt";
        std::string task_train_corpus = "task_train.txt";
        std::string task_calib_corpus = "task_calib.txt";
        std::string task_test_corpus = "task_test.txt";
        std::string prompts = "prompts.txt";
        std::string model_theta = "theta.nglm";
        std::string model_phi = "phi.nglm";
        std::string calibration_report = "calibration.txt";
        std::string generations = "generations.txt";
        std::string eval_summary = "eval.txt";

        bool operator==(const Paths&) const = default;
    };

    struct Calibration {
        Aggregator aggregator;
        int threads = 1;

        bool operator==(const Calibration&) const = default;
    };

    struct Decode {
        Strategy strategy;
        int max_len = 16;
        std::uint64_t seed = 7;
        std::optional<int> stop_token;

        bool operator==(const Decode&) const = default;
    };

    Task task;
    Paths paths;
    TrainConfig pretrain{80.0, 150, 1, 0.01};
    TrainConfig warmstart{20.0, 1, 2, 0.0};
    SteeringConfig steering;
    Calibration calibration;
    Decode decode;

    bool operator==(const PipelineConfig&) const = default;
};

// Throws config_error on schema violations (unknown keys, bad values,
// invariant breaches). The returned config is fully validated.
PipelineConfig parse_pipeline_config(const std::string& text);
PipelineConfig load_pipeline_config(const std::string& path);

std::string serialize_pipeline_config(const PipelineConfig& cfg);

void validate_pipeline_config(const PipelineConfig& cfg);

// Artifact path resolution: names are joined onto workdir unless absolute.
std::string resolve_path(const PipelineConfig& cfg, const std::string& name);

}  // namespace steerdec
