#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "steerdec/common.hpp"

namespace steerdec {

// ============================================================================
// Numerical guards
// ============================================================================

struct Epsilons {
    double prob_floor = 1e-9;   // clip floor for probabilities inside log ratios
    double newton_eps = 1e-12;  // regularizer in the Gauss-Newton denominator
    double fd_step    = 1e-5;   // central finite-difference step

    bool operator==(const Epsilons&) const = default;
};

// Throws config_error unless all guards are strictly positive and
// prob_floor < 1/vocab_size (pass vocab_size = 0 to skip the vocab check).
void validate_epsilons(const Epsilons& eps, int vocab_size);

// ============================================================================
// Simplex / logit vectors
// ============================================================================

// Point on the probability simplex over a vocabulary.
// Invariants: every entry >= 0, entries sum to 1 within 1e-12, non-empty.
struct ProbVector {
    std::vector<double> p;

    std::size_t size() const { return p.size(); }
};

// Pre-softmax scores. Entries are finite except for hard-masked slots,
// which hold k_masked_logit.
struct LogitVector {
    std::vector<double> z;

    std::size_t size() const { return z.size(); }
};

// Validating factories. Internal code that constructs values satisfying the
// invariants by construction (softmax output, one-hot) builds the structs
// directly.
ProbVector make_prob_vector(std::vector<double> p);
LogitVector make_logit_vector(std::vector<double> z);

ProbVector one_hot(std::size_t vocab_size, std::size_t index);

// ============================================================================
// Operations
// ============================================================================

// Max-subtracted softmax. Sentinel entries map to probability exactly 0.
// Throws std::invalid_argument("empty support") when every entry is masked.
ProbVector softmax(const LogitVector& z);

// KL(p || q) = sum_i p_i (ln p_i - ln max(q_i, prob_floor)), with 0 ln 0 := 0.
double kl_divergence(const ProbVector& p, const ProbVector& q,
                     const Epsilons& eps = {});

// Component i: ln(max(p_phi_i, floor) / max(p_theta_i, floor)) + 1.
std::vector<double> kl_gradient(const ProbVector& p_phi,
                                const ProbVector& p_theta,
                                const Epsilons& eps = {});

// (diag(p) - p p^T) v computed matrix-free as p_i (v_i - <p, v>).
// Output components sum to 0 (rows of the Jacobian sum to zero).
std::vector<double> jacobian_vec_product(const ProbVector& p,
                                         std::span<const double> v);

}  // namespace steerdec
