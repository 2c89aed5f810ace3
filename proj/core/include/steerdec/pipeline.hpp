#pragma once

#include <optional>
#include <string>
#include <vector>

#include "steerdec/config.hpp"
#include "steerdec/decode.hpp"
#include "steerdec/strength.hpp"

namespace steerdec {

// ============================================================================
// Stage overrides (CLI flags)
// ============================================================================

struct StageOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> mu;
    std::optional<double> alpha;
    std::optional<Strategy> strategy;
    std::optional<std::string> trace_path;
    bool no_steering = false;
};

// ============================================================================
// Pipeline stages
// ============================================================================
// Each stage reads its prerequisites from the paths in the config, writes its
// artifact, and is byte-reproducible for identical inputs. Missing
// prerequisites surface as artifact_error naming the offending path.

// Writes the four synthetic corpora plus the prompts file (prompt_len-token
// prefixes of the test sequences).
void run_gen_stage(const PipelineConfig& cfg, const StageOverrides& ov = {});

// Trains the pre-trained model theta from a zero table on the pretrain
// corpus. Returns the NLL trace.
std::vector<double> run_train_stage(const PipelineConfig& cfg, const StageOverrides& ov = {});

// Warm-starts phi from theta on the task training split. Returns the trace.
std::vector<double> run_warmstart_stage(const PipelineConfig& cfg,
                                        const StageOverrides& ov = {});

CalibrationReport run_calibrate_stage(const PipelineConfig& cfg, const StageOverrides& ov = {});

// Decodes every prompt and writes one line of generated ids per prompt.
// With ov.no_steering the baseline decoder runs instead; otherwise mu_bar
// comes from the calibration report unless ov.mu overrides it.
void run_decode_stage(const PipelineConfig& cfg, const StageOverrides& ov = {});

// ============================================================================
// Evaluation
// ============================================================================

struct EvalVariant {
    double accuracy = 0.0;  // teacher-forced next-token accuracy on the test split
    double mean_nll = 0.0;  // mean one-hot KL to the (possibly steered) distribution

    bool operator==(const EvalVariant&) const = default;
};

struct EvalSummary {
    EvalVariant baseline_warmstart;
    EvalVariant svd;
    double mu_bar = 0.0;
    std::uint64_t task_seed = 0;
    std::uint64_t test_checksum = 0;  // FNV over the test token stream

    bool operator==(const EvalSummary&) const = default;
};

EvalSummary run_eval_stage(const PipelineConfig& cfg, const StageOverrides& ov = {});

// Teacher-forced scoring of one variant. With steered = false the
// distribution is softmax(z_phi); otherwise the full steering step runs at
// strength mu at every position.
EvalVariant evaluate_teacher_forced(const NGramSoftmaxLM& model_theta,
                                    const NGramSoftmaxLM& model_phi, const Corpus& test,
                                    const SteeringConfig& steering, double mu, bool steered);

std::uint64_t corpus_checksum(const Corpus& corpus);

void save_eval_summary(const EvalSummary& summary, const std::string& path);
EvalSummary load_eval_summary(const std::string& path);

// Convenience: run gen, train, warmstart, calibrate, decode and eval in
// order, returning the final summary.
EvalSummary run_full_pipeline(const PipelineConfig& cfg, const StageOverrides& ov = {});

}  // namespace steerdec
