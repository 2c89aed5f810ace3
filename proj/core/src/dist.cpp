#include "steerdec/dist.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace steerdec {

void validate_epsilons(const Epsilons& eps, int vocab_size) {
    if (!(eps.prob_floor > 0.0) || !(eps.newton_eps > 0.0) || !(eps.fd_step > 0.0)) {
        throw config_error("epsilons must be strictly positive");
    }
    if (vocab_size > 0 && !(eps.prob_floor < 1.0 / static_cast<double>(vocab_size))) {
        throw config_error("prob_floor must be below 1/vocab_size (vocab_size=" +
                           std::to_string(vocab_size) + ")");
    }
}

ProbVector make_prob_vector(std::vector<double> p) {
    if (p.empty()) {
        throw std::invalid_argument("probability vector must be non-empty");
    }
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("probability entries must be finite and non-negative");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw std::invalid_argument("probability entries must sum to 1 within 1e-12, got " +
                                    std::to_string(sum));
    }
    return ProbVector{std::move(p)};
}

LogitVector make_logit_vector(std::vector<double> z) {
    if (z.empty()) {
        throw std::invalid_argument("logit vector must be non-empty");
    }
    for (double v : z) {
        if (!std::isfinite(v) && !is_masked(v)) {
            throw std::invalid_argument("logit entries must be finite or the masked sentinel");
        }
    }
    return LogitVector{std::move(z)};
}

ProbVector one_hot(std::size_t vocab_size, std::size_t index) {
    if (index >= vocab_size) {
        throw std::invalid_argument("one_hot index out of range");
    }
    std::vector<double> p(vocab_size, 0.0);
    p[index] = 1.0;
    return ProbVector{std::move(p)};
}

ProbVector softmax(const LogitVector& z) {
    const std::size_t n = z.size();
    double zmax = k_masked_logit;
    for (double v : z.z) {
        if (!is_masked(v)) {
            zmax = std::max(zmax, v);
        }
    }
    if (is_masked(zmax)) {
        throw std::invalid_argument("empty support");
    }

    std::vector<double> p(n, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_masked(z.z[i])) {
            p[i] = std::exp(z.z[i] - zmax);
            sum += p[i];
        }
    }
    for (double& v : p) {
        v /= sum;
    }
    return ProbVector{std::move(p)};
}

double kl_divergence(const ProbVector& p, const ProbVector& q, const Epsilons& eps) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("kl_divergence: length mismatch");
    }
    // Log-difference form so KL(one_hot(y) || q) is bit-identical to -ln q_y.
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = p.p[i];
        if (pi == 0.0) {
            continue;  // 0 ln 0 := 0
        }
        const double qi = std::max(q.p[i], eps.prob_floor);
        kl += pi * (std::log(pi) - std::log(qi));
    }
    return kl;
}

std::vector<double> kl_gradient(const ProbVector& p_phi, const ProbVector& p_theta,
                                const Epsilons& eps) {
    if (p_phi.size() != p_theta.size()) {
        throw std::invalid_argument("kl_gradient: length mismatch");
    }
    std::vector<double> g(p_phi.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double num = std::max(p_phi.p[i], eps.prob_floor);
        const double den = std::max(p_theta.p[i], eps.prob_floor);
        g[i] = std::log(num / den) + 1.0;
    }
    return g;
}

std::vector<double> jacobian_vec_product(const ProbVector& p, std::span<const double> v) {
    if (p.size() != v.size()) {
        throw std::invalid_argument("jacobian_vec_product: length mismatch");
    }
    double pv = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        pv += p.p[i] * v[i];
    }
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        out[i] = p.p[i] * (v[i] - pv);
    }
    return out;
}

}  // namespace steerdec
