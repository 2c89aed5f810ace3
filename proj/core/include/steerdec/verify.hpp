#pragma once

#include <cstdint>
#include <string>

#include "steerdec/dist.hpp"

namespace steerdec {

// Numerical verification of the two analytic claims behind steering:
// the first-order response of the KL objective to a steering step, and the
// Gauss-Newton optimality of the calibrated strength.

// ============================================================================
// First-order response
// ============================================================================

struct FirstOrderReport {
    int trials = 0;
    int derivative_checks_passed = 0;
    double max_rel_err = 0.0;  // worst analytic-vs-FD relative error
    int stationary_cases = 0;
    int stationary_passed = 0;
    double max_stationary_derivative = 0.0;  // worst |FD derivative| at q = p_phi
    double min_slope = 0.0;                  // log-log quadratic-scaling slopes
    double max_slope = 0.0;
    bool passed = false;
};

// Per random (q, z_phi, p_theta): checks d/dmu KL(q || softmax(z_phi + mu
// delta_z)) at mu = 0 against <p_phi - q, delta_z> with central finite
// differences (1e-6 relative, both-small guard at 1e-8). At constructed
// stationary points q = p_phi it checks the FD derivative vanishes within
// 1e-8 and KL(mu) - KL(0) scales quadratically (log-log slope 2 +- 0.1 over
// mu in {1e-1, 1e-2, 1e-3, 1e-4}).
FirstOrderReport verify_first_order(int trials, const Epsilons& eps = {},
                                    std::uint64_t seed = 20240801);

std::string format_report(const FirstOrderReport& report);

// ============================================================================
// Optimal-strength oracle
// ============================================================================

struct MuOracleReport {
    int trials = 0;
    int grid_checks_passed = 0;
    double max_grid_gap = 0.0;  // worst |analytic - grid argmin|
    double worked_example_mu = 0.0;
    bool worked_example_passed = false;
    int descent_cases = 0;
    int descent_improved = 0;
    bool passed = false;
};

// Compares mu_token against a grid-search argmin of the quadratic surrogate
// f(mu) = -L mu + mu^2 D / 2 over mu in [-10, 10] at step 1e-4, reproduces
// the two-token worked example, and runs the descent experiment: with
// ||delta_hat|| <= 0.1, stepping by mu* lowers the one-hot KL in >= 95% of
// non-degenerate cases with |linear_term| > 1e-6.
MuOracleReport verify_mu_oracle(int trials, std::uint64_t seed = 20240802);

std::string format_report(const MuOracleReport& report);

}  // namespace steerdec
