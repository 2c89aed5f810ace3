#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "steerdec/steering.hpp"
#include "steerdec/toymodel.hpp"

namespace steerdec {

// ============================================================================
// Strategies
// ============================================================================

enum class StrategyKind { greedy, beam, top_k, top_p };

struct Strategy {
    StrategyKind kind = StrategyKind::greedy;
    int width = 1;   // beam
    int k = 1;       // top_k
    double p = 1.0;  // top_p

    bool operator==(const Strategy&) const = default;
};

// "greedy" | "beam:<width>" | "top_k:<k>" | "top_p:<p>".
Strategy parse_strategy(const std::string& text);
std::string format_strategy(const Strategy& strategy);

struct DecodeConfig {
    Strategy strategy;
    double mu_bar = 0.0;
    SteeringConfig steering;
    int max_len = 32;
    std::uint64_t seed = 0;
    std::optional<int> stop_token;
};

void validate_decode_config(const DecodeConfig& cfg, int vocab_size);

// ============================================================================
// Results
// ============================================================================

struct StepTrace {
    LogitVector z_phi;
    ConstrainedDelta delta_hat;    // empty for the no-steering baseline
    std::vector<double> applied;   // mu * delta_hat (sentinel where masked); empty for baseline
    ProbVector adjusted_probs;
    int chosen_token = -1;
    double chosen_prob = 0.0;
};

struct GenerationResult {
    std::vector<int> tokens;  // generated continuation, prompt excluded
    std::vector<StepTrace> per_step;
};

// ============================================================================
// Decoding
// ============================================================================

// One steered step: recomputes p_theta, p_phi, delta, mask and delta_hat for
// this exact context, then applies mu_bar. The trace entry has no chosen
// token yet.
std::pair<ProbVector, StepTrace> decode_step(const NGramSoftmaxLM& model_theta,
                                             const NGramSoftmaxLM& model_phi,
                                             std::span<const int> context,
                                             const DecodeConfig& cfg);

// Full steered generation. Greedy takes the argmax (ties to the lowest id);
// beam keeps width-best partials by summed adjusted log-prob with ties to the
// lexicographically smallest token sequence and recomputes steering per
// hypothesis; top_k / top_p sample from the renormalized truncation with a
// seeded generator. Stops at stop_token (appended) or max_len.
GenerationResult decode_sequence(const NGramSoftmaxLM& model_theta,
                                 const NGramSoftmaxLM& model_phi, std::span<const int> prompt,
                                 const DecodeConfig& cfg);

// Reference decoder with no steering code path: the selection strategies run
// directly on softmax(z_phi).
GenerationResult decode_sequence_baseline(const NGramSoftmaxLM& model_phi,
                                          std::span<const int> prompt, const DecodeConfig& cfg);

// Line-delimited JSON trace, one step per line.
void write_trace(const GenerationResult& result, std::ostream& out);

}  // namespace steerdec
