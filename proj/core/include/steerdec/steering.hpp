#pragma once

#include <cstdint>
#include <vector>

#include "steerdec/dist.hpp"

namespace steerdec {

// ============================================================================
// Types
// ============================================================================

// Zero-sum logit-space delta, before the confidence constraint.
struct SteeringVector {
    std::vector<double> delta;

    std::size_t size() const { return delta.size(); }
};

// Result of the confidence filter over a distribution.
// keep[argmax_token] is always true; raising alpha never adds kept tokens.
struct ConfidenceMask {
    std::vector<std::uint8_t> keep;
    double alpha = 0.0;
    int argmax_token = 0;
};

// What happens to steering components on dropped (low-confidence) tokens.
enum class LambdaMode {
    hard_neg_inf,  // dropped entries become the masked sentinel
    constant,      // dropped entries become lambda_value
};

struct SteeringConfig {
    double alpha = 0.1;
    LambdaMode lambda_mode = LambdaMode::hard_neg_inf;
    double lambda_value = 0.0;  // only read in constant mode
    Epsilons epsilons;

    bool operator==(const SteeringConfig&) const = default;
};

void validate_steering_config(const SteeringConfig& cfg);

// Constrained steering delta. Entries are finite except dropped tokens in
// hard_neg_inf mode, which hold k_masked_logit. Masked entries are excluded
// from every downstream inner product and norm.
struct ConstrainedDelta {
    std::vector<double> delta;

    std::size_t size() const { return delta.size(); }
};

// ============================================================================
// Operations
// ============================================================================

// delta = (diag(p_phi) - p_phi p_phi^T) * (-(ln(p_phi/p_theta) + 1)).
// Zero-sum; the +1 term is annihilated by the Jacobian.
SteeringVector raw_steering_vector(const ProbVector& p_phi, const ProbVector& p_theta,
                                   const Epsilons& eps = {});

// keep[y] = (p_phi[y] >= alpha * p_phi[y*]); argmax ties break to the lowest
// token index. alpha must be in (0, 1].
ConfidenceMask confidence_mask(const ProbVector& p_phi, double alpha);

// Kept entries pass through unchanged; dropped entries become the sentinel
// (hard_neg_inf) or lambda_value (constant).
ConstrainedDelta constrain(const SteeringVector& delta, const ConfidenceMask& mask,
                           const SteeringConfig& cfg);

struct SteeredLogits {
    LogitVector logits;
    ProbVector probs;
};

// Adjusted logits z + mu * delta_hat and their softmax. A sentinel in either
// input forces the output slot to the sentinel directly, outside the mu
// product, so the hard mask survives every sign of mu. Throws
// std::invalid_argument when every entry ends up masked.
SteeredLogits apply_steering(const LogitVector& z_phi, const ConstrainedDelta& delta_hat,
                             double mu);

}  // namespace steerdec
