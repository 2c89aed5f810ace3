#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "steerdec/steering.hpp"
#include "steerdec/toymodel.hpp"

namespace steerdec {

// Fallback strength when a token carries no usable steering signal.
inline constexpr double k_mu_min = 1e-4;

// ============================================================================
// Types
// ============================================================================

struct TokenMuRecord {
    int sample_index = 0;
    int position = 0;
    double mu_star = 0.0;
    double linear_term = 0.0;  // <e_target - p_phi, delta_hat> over kept coords
    double norm_sq = 0.0;      // ||delta_hat||^2 over kept coords
    bool degenerate = false;   // norm below newton_eps, or target token masked
};

enum class AggregatorKind { mean, median, trimmed };

struct Aggregator {
    AggregatorKind kind = AggregatorKind::mean;
    double tau = 0.0;  // trimmed mode: half-width of the window around the median

    bool operator==(const Aggregator&) const = default;
};

Aggregator parse_aggregator(const std::string& text);  // "mean" | "median" | "trimmed:<tau>"
std::string format_aggregator(const Aggregator& agg);

struct CalibrationReport {
    std::vector<TokenMuRecord> records;  // sorted by (sample_index, position)
    double mu_bar = 0.0;
    Aggregator aggregator;
    int total_records = 0;
    int degenerate_records = 0;
};

// ============================================================================
// Operations
// ============================================================================

// Gauss-Newton step for one token: mu* = linear_term / (norm_sq + newton_eps),
// both sums taken over unmasked coordinates of delta_hat. Falls back to
// k_mu_min (flagged degenerate) when the norm vanishes or the target token is
// masked out.
TokenMuRecord mu_token(int target, const ProbVector& p_phi, const ConstrainedDelta& delta_hat,
                       const Epsilons& eps = {});

// Sequence-level strength from per-position (linear_term, norm_sq) pairs:
// sum(L_t) / (sum(D_t) + T * newton_eps).
double mu_sequence(std::span<const std::pair<double, double>> terms, const Epsilons& eps = {});

// Mean / median / trimmed mean over the non-degenerate mu_star values.
// Trimmed keeps records with |mu* - median| < tau; an empty window falls back
// to the median. Throws std::invalid_argument("no calibration signal") when
// every record is degenerate.
double aggregate(std::span<const TokenMuRecord> records, const Aggregator& agg);

// Teacher-forced calibration pass over every (sample, position) of the gold
// sequences: recomputes p_theta, p_phi, delta, mask and delta_hat at each
// step and collects mu*. Samples may be evaluated on n_threads workers; the
// result is bit-identical for any worker count.
CalibrationReport calibrate(const NGramSoftmaxLM& model_theta, const NGramSoftmaxLM& model_phi,
                            const Corpus& calib_set, const SteeringConfig& cfg,
                            const Aggregator& agg, int n_threads = 1);

// ============================================================================
// Report file
// ============================================================================
//
// Text format, one record per line after the header:
//   steerdec-calibration v1
//   aggregator <mean|median|trimmed:TAU>
//   mu_bar <%.17g>
//   records <N>
//   degenerate <K>
//   columns sample position mu_star linear_term norm_sq degenerate
//   <sample> <position> <%.17g> <%.17g> <%.17g> <0|1>

void save_calibration_report(const CalibrationReport& report, const std::string& path);
CalibrationReport load_calibration_report(const std::string& path);

}  // namespace steerdec
