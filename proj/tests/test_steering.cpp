#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "steerdec/steering.hpp"
#include "testutil.hpp"

using namespace steerdec;

TEST_CASE("raw_steering_vector worked examples") {
    const Epsilons eps;
    const ProbVector p_phi = make_prob_vector({0.8, 0.2});
    const ProbVector p_theta = make_prob_vector({0.5, 0.5});

    const SteeringVector zero = raw_steering_vector(p_phi, p_phi, eps);
    CHECK(std::abs(zero.delta[0]) < 1e-15);
    CHECK(std::abs(zero.delta[1]) < 1e-15);

    const SteeringVector delta = raw_steering_vector(p_phi, p_theta, eps);
    CHECK(delta.delta[0] == doctest::Approx(-0.22180709777918250).epsilon(1e-10));
    CHECK(delta.delta[1] == doctest::Approx(0.22180709777918250).epsilon(1e-10));

    CHECK_THROWS_AS(raw_steering_vector(p_phi, make_prob_vector({1.0, 0.0, 0.0}), eps),
                    std::invalid_argument);
}

TEST_CASE("constant shifts of the gradient do not change the delta") {
    Rng rng(201);
    const Epsilons eps;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + uniform_index(rng, 31);
        const ProbVector p_phi = testutil::random_simplex(rng, n);
        const ProbVector p_theta = testutil::random_simplex(rng, n);

        std::vector<double> g = kl_gradient(p_phi, p_theta, eps);
        for (double& v : g) {
            v = -v;
        }
        const std::vector<double> with_one = jacobian_vec_product(p_phi, g);
        for (double& v : g) {
            v += 7.0;  // any constant direction is annihilated
        }
        const std::vector<double> shifted = jacobian_vec_product(p_phi, g);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(with_one[i] - shifted[i]) < 1e-12);
        }
    }
}

TEST_CASE("steering vectors are zero-sum") {
    Rng rng(202);
    const Epsilons eps;
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t n = 2 + uniform_index(rng, 63);
        const SteeringVector delta = raw_steering_vector(testutil::random_simplex(rng, n),
                                                         testutil::random_simplex(rng, n), eps);
        double sum = 0.0;
        for (double v : delta.delta) {
            sum += v;
        }
        CHECK(std::abs(sum) < 1e-10);
    }
}

TEST_CASE("confidence_mask worked examples") {
    const ProbVector p = make_prob_vector({0.7, 0.2, 0.1});

    const ConfidenceMask loose = confidence_mask(p, 0.1);
    CHECK(loose.argmax_token == 0);
    CHECK(loose.keep == std::vector<std::uint8_t>{1, 1, 1});

    const ConfidenceMask tight = confidence_mask(p, 0.5);
    CHECK(tight.keep == std::vector<std::uint8_t>{1, 0, 0});

    const ConfidenceMask max_only = confidence_mask(p, 1.0);
    CHECK(max_only.keep == std::vector<std::uint8_t>{1, 0, 0});

    // Argmax ties break to the lowest index.
    const ConfidenceMask tie = confidence_mask(make_prob_vector({0.4, 0.4, 0.2}), 1.0);
    CHECK(tie.argmax_token == 0);
    CHECK(tie.keep[0] == 1);
    CHECK(tie.keep[1] == 1);  // equals the max, passes the >= threshold

    CHECK_THROWS_AS(confidence_mask(p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(confidence_mask(p, 1.5), std::invalid_argument);
}

TEST_CASE("mask is monotone in alpha and always keeps the argmax") {
    Rng rng(203);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + uniform_index(rng, 31);
        const ProbVector p = testutil::random_simplex(rng, n);
        const double a1 = 0.05 + 0.45 * uniform01(rng);
        const double a2 = a1 + (1.0 - a1) * uniform01(rng);
        const ConfidenceMask m1 = confidence_mask(p, a1);
        const ConfidenceMask m2 = confidence_mask(p, a2);
        CHECK(m1.keep[static_cast<std::size_t>(m1.argmax_token)] == 1);
        CHECK(m2.keep[static_cast<std::size_t>(m2.argmax_token)] == 1);
        for (std::size_t i = 0; i < n; ++i) {
            if (m2.keep[i]) {
                CHECK(m1.keep[i]);  // raising alpha never adds kept tokens
            }
        }
    }
}

TEST_CASE("constrain applies the penalty mode to dropped entries") {
    const SteeringVector delta{{-0.22, 0.22, 0.5}};
    ConfidenceMask mask;
    mask.keep = {1, 1, 0};
    mask.alpha = 0.5;
    mask.argmax_token = 0;

    SteeringConfig hard;
    hard.lambda_mode = LambdaMode::hard_neg_inf;
    const ConstrainedDelta masked = constrain(delta, mask, hard);
    CHECK(masked.delta[0] == -0.22);
    CHECK(masked.delta[1] == 0.22);
    CHECK(is_masked(masked.delta[2]));

    SteeringConfig constant;
    constant.lambda_mode = LambdaMode::constant;
    constant.lambda_value = -1.0;
    const ConstrainedDelta penalized = constrain(delta, mask, constant);
    CHECK(penalized.delta[2] == -1.0);

    ConfidenceMask all;
    all.keep = {1, 1, 1};
    const ConstrainedDelta untouched = constrain(delta, all, hard);
    CHECK(untouched.delta == delta.delta);
}

TEST_CASE("hard mask never amplifies the kept components") {
    Rng rng(204);
    const Epsilons eps;
    SteeringConfig cfg;
    cfg.lambda_mode = LambdaMode::hard_neg_inf;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 3 + uniform_index(rng, 30);
        const ProbVector p_phi = testutil::random_simplex(rng, n);
        const SteeringVector delta =
            raw_steering_vector(p_phi, testutil::random_simplex(rng, n), eps);
        const ConfidenceMask mask = confidence_mask(p_phi, 0.25);
        const ConstrainedDelta delta_hat = constrain(delta, mask, cfg);

        double max_finite = 0.0;
        double max_kept = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!is_masked(delta_hat.delta[i])) {
                max_finite = std::max(max_finite, std::abs(delta_hat.delta[i]));
            }
            if (mask.keep[i]) {
                max_kept = std::max(max_kept, std::abs(delta.delta[i]));
            }
        }
        CHECK(max_finite <= max_kept + 1e-15);
    }
}

TEST_CASE("apply_steering worked examples") {
    const LogitVector z{{1.386294, 0.0}};
    const ConstrainedDelta delta{{-0.221807, 0.221807}};

    const SteeredLogits identity = apply_steering(z, ConstrainedDelta{{0.0, 0.0}}, 0.0);
    CHECK(identity.logits.z == z.z);

    const SteeredLogits steered = apply_steering(z, delta, 1.0);
    CHECK(steered.logits.z[0] == doctest::Approx(1.164487).epsilon(1e-12));
    CHECK(steered.probs.p[0] == doctest::Approx(0.71964).epsilon(1e-5));
    CHECK(steered.probs.p[1] == doctest::Approx(0.28036).epsilon(1e-5));

    // Sentinel in the input logits survives and pins the probability to 0.
    const SteeredLogits gap =
        apply_steering(LogitVector{{1.0, k_masked_logit, 0.0}},
                       ConstrainedDelta{{0.1, 0.2, -0.1}}, 2.0);
    CHECK(is_masked(gap.logits.z[1]));
    CHECK(gap.probs.p[1] == 0.0);

    CHECK_THROWS_AS(
        apply_steering(LogitVector{{k_masked_logit}}, ConstrainedDelta{{k_masked_logit}}, 1.0),
        std::invalid_argument);
}

TEST_CASE("hard-masked deltas survive every sign of mu") {
    const LogitVector z{{1.0, 0.5, -0.5}};
    const ConstrainedDelta delta{{0.2, k_masked_logit, -0.2}};
    for (double mu : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
        const SteeredLogits out = apply_steering(z, delta, mu);
        CHECK(is_masked(out.logits.z[1]));
        CHECK(out.probs.p[1] == 0.0);
        CHECK(std::isfinite(out.probs.p[0]));
        double sum = 0.0;
        for (double p : out.probs.p) {
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("apply_steering always returns a valid distribution") {
    Rng rng(205);
    const Epsilons eps;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 2 + uniform_index(rng, 31);
        const LogitVector z = testutil::random_logits(rng, n);
        const ProbVector p_phi = softmax(z);
        SteeringConfig cfg;
        cfg.alpha = 0.05 + 0.9 * uniform01(rng);
        cfg.lambda_mode = trial % 2 == 0 ? LambdaMode::hard_neg_inf : LambdaMode::constant;
        cfg.lambda_value = -1.0;
        const ConstrainedDelta delta_hat =
            constrain(raw_steering_vector(p_phi, testutil::random_simplex(rng, n), eps),
                      confidence_mask(p_phi, cfg.alpha), cfg);
        const double mu = -5.0 + 10.0 * uniform01(rng);
        const ProbVector probs = apply_steering(z, delta_hat, mu).probs;
        double sum = 0.0;
        for (double p : probs.p) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
}
