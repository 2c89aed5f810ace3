#include "steerdec/steering.hpp"

#include <cmath>
#include <stdexcept>

namespace steerdec {

void validate_steering_config(const SteeringConfig& cfg) {
    if (!(cfg.alpha > 0.0) || !(cfg.alpha <= 1.0)) {
        throw config_error("alpha must be in (0, 1]");
    }
    if (cfg.lambda_mode == LambdaMode::constant && !std::isfinite(cfg.lambda_value)) {
        throw config_error("constant lambda must be finite");
    }
    validate_epsilons(cfg.epsilons, 0);
}

SteeringVector raw_steering_vector(const ProbVector& p_phi, const ProbVector& p_theta,
                                   const Epsilons& eps) {
    if (p_phi.size() != p_theta.size()) {
        throw std::invalid_argument("raw_steering_vector: length mismatch");
    }
    std::vector<double> g = kl_gradient(p_phi, p_theta, eps);
    for (double& v : g) {
        v = -v;
    }
    return SteeringVector{jacobian_vec_product(p_phi, g)};
}

ConfidenceMask confidence_mask(const ProbVector& p_phi, double alpha) {
    if (!(alpha > 0.0) || !(alpha <= 1.0)) {
        throw std::invalid_argument("alpha must be in (0, 1]");
    }
    std::size_t argmax = 0;
    for (std::size_t i = 1; i < p_phi.size(); ++i) {
        if (p_phi.p[i] > p_phi.p[argmax]) {  // strict: ties keep the lowest index
            argmax = i;
        }
    }
    const double threshold = alpha * p_phi.p[argmax];
    ConfidenceMask mask;
    mask.alpha = alpha;
    mask.argmax_token = static_cast<int>(argmax);
    mask.keep.resize(p_phi.size());
    for (std::size_t i = 0; i < p_phi.size(); ++i) {
        mask.keep[i] = p_phi.p[i] >= threshold ? 1 : 0;
    }
    return mask;
}

ConstrainedDelta constrain(const SteeringVector& delta, const ConfidenceMask& mask,
                           const SteeringConfig& cfg) {
    if (delta.size() != mask.keep.size()) {
        throw std::invalid_argument("constrain: length mismatch");
    }
    std::vector<double> out(delta.size());
    const double dropped =
        cfg.lambda_mode == LambdaMode::hard_neg_inf ? k_masked_logit : cfg.lambda_value;
    for (std::size_t i = 0; i < delta.size(); ++i) {
        out[i] = mask.keep[i] ? delta.delta[i] : dropped;
    }
    return ConstrainedDelta{std::move(out)};
}

SteeredLogits apply_steering(const LogitVector& z_phi, const ConstrainedDelta& delta_hat,
                             double mu) {
    if (z_phi.size() != delta_hat.size()) {
        throw std::invalid_argument("apply_steering: length mismatch");
    }
    if (!std::isfinite(mu)) {
        throw std::invalid_argument("apply_steering: mu must be finite");
    }
    std::vector<double> adjusted(z_phi.size());
    for (std::size_t i = 0; i < z_phi.size(); ++i) {
        if (is_masked(z_phi.z[i]) || is_masked(delta_hat.delta[i])) {
            adjusted[i] = k_masked_logit;
        } else {
            adjusted[i] = z_phi.z[i] + mu * delta_hat.delta[i];
        }
    }
    LogitVector logits{std::move(adjusted)};
    ProbVector probs = softmax(logits);  // throws on empty support
    return SteeredLogits{std::move(logits), std::move(probs)};
}

}  // namespace steerdec
