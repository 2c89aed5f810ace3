#include "steerdec/decode.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace steerdec {

// ============================================================================
// Strategy parsing / validation
// ============================================================================

Strategy parse_strategy(const std::string& text) {
    const auto colon = text.find(':');
    const std::string name = text.substr(0, colon);
    const std::string param = colon == std::string::npos ? "" : text.substr(colon + 1);

    auto want_param = [&](const char* what) {
        if (param.empty()) {
            throw config_error(std::string("strategy ") + name + " requires a parameter (" +
                               what + "): " + text);
        }
    };
    try {
        if (name == "greedy") {
            if (!param.empty()) {
                throw config_error("greedy takes no parameter: " + text);
            }
            return {StrategyKind::greedy, 1, 1, 1.0};
        }
        if (name == "beam") {
            want_param("width");
            Strategy s{StrategyKind::beam, std::stoi(param), 1, 1.0};
            if (s.width < 1) {
                throw config_error("beam width must be >= 1: " + text);
            }
            return s;
        }
        if (name == "top_k") {
            want_param("k");
            Strategy s{StrategyKind::top_k, 1, std::stoi(param), 1.0};
            if (s.k < 1) {
                throw config_error("top_k k must be >= 1: " + text);
            }
            return s;
        }
        if (name == "top_p") {
            want_param("p");
            Strategy s{StrategyKind::top_p, 1, 1, std::stod(param)};
            if (!(s.p > 0.0) || !(s.p <= 1.0)) {
                throw config_error("top_p p must be in (0, 1]: " + text);
            }
            return s;
        }
    } catch (const config_error&) {
        throw;
    } catch (const std::exception&) {
        throw config_error("invalid strategy parameter: " + text);
    }
    throw config_error("unknown strategy (want greedy, beam:<w>, top_k:<k>, top_p:<p>): " +
                       text);
}

std::string format_strategy(const Strategy& strategy) {
    char buf[48];
    switch (strategy.kind) {
        case StrategyKind::greedy:
            return "greedy";
        case StrategyKind::beam:
            std::snprintf(buf, sizeof(buf), "beam:%d", strategy.width);
            return buf;
        case StrategyKind::top_k:
            std::snprintf(buf, sizeof(buf), "top_k:%d", strategy.k);
            return buf;
        case StrategyKind::top_p:
            std::snprintf(buf, sizeof(buf), "top_p:%.17g", strategy.p);
            return buf;
    }
    throw std::logic_error("unreachable strategy kind");
}

void validate_decode_config(const DecodeConfig& cfg, int vocab_size) {
    validate_steering_config(cfg.steering);
    if (!std::isfinite(cfg.mu_bar)) {
        throw config_error("mu_bar must be finite");
    }
    if (cfg.max_len < 1) {
        throw config_error("max_len must be >= 1");
    }
    switch (cfg.strategy.kind) {
        case StrategyKind::greedy:
            break;
        case StrategyKind::beam:
            if (cfg.strategy.width < 1) {
                throw config_error("beam width must be >= 1");
            }
            break;
        case StrategyKind::top_k:
            if (cfg.strategy.k < 1) {
                throw config_error("top_k k must be >= 1");
            }
            break;
        case StrategyKind::top_p:
            if (!(cfg.strategy.p > 0.0) || !(cfg.strategy.p <= 1.0)) {
                throw config_error("top_p p must be in (0, 1]");
            }
            break;
    }
    if (cfg.stop_token && (*cfg.stop_token < 0 || *cfg.stop_token >= vocab_size)) {
        throw config_error("stop_token outside vocabulary");
    }
}

// ============================================================================
// Selection machinery (shared by steered and baseline paths)
// ============================================================================

namespace {

struct StepOutcome {
    ProbVector probs;
    StepTrace trace;
};

using StepFn = std::function<StepOutcome(std::span<const int> context)>;

int select_greedy(const ProbVector& probs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
        if (probs.p[i] > probs.p[best]) {  // strict: ties keep the lowest id
            best = i;
        }
    }
    return static_cast<int>(best);
}

// Token ids ordered by (prob desc, id asc).
std::vector<int> sorted_by_prob(const ProbVector& probs) {
    std::vector<int> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return probs.p[static_cast<std::size_t>(a)] > probs.p[static_cast<std::size_t>(b)];
    });
    return order;
}

// Sample among `candidates` (prefix of a sorted_by_prob order) proportionally
// to their probabilities. One uniform draw per call.
int sample_candidates(const ProbVector& probs, std::span<const int> candidates, Rng& rng) {
    double total = 0.0;
    for (int id : candidates) {
        total += probs.p[static_cast<std::size_t>(id)];
    }
    const double u = uniform01(rng) * total;
    double cum = 0.0;
    for (int id : candidates) {
        cum += probs.p[static_cast<std::size_t>(id)];
        if (u < cum) {
            return id;
        }
    }
    // Round-off spill: fall back to the last positive-probability candidate.
    for (auto it = candidates.rbegin(); it != candidates.rend(); ++it) {
        if (probs.p[static_cast<std::size_t>(*it)] > 0.0) {
            return *it;
        }
    }
    return candidates.back();
}

int select_top_k(const ProbVector& probs, int k, Rng& rng) {
    std::vector<int> order = sorted_by_prob(probs);
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    return sample_candidates(probs, std::span<const int>(order.data(), keep), rng);
}

int select_top_p(const ProbVector& probs, double p, Rng& rng) {
    std::vector<int> order = sorted_by_prob(probs);
    std::size_t keep = 0;
    if (p >= 1.0) {
        // Exact-arithmetic reading of "smallest prefix with mass >= 1":
        // everything with positive probability.
        while (keep < order.size() && probs.p[static_cast<std::size_t>(order[keep])] > 0.0) {
            ++keep;
        }
    } else {
        double cum = 0.0;
        while (keep < order.size()) {
            cum += probs.p[static_cast<std::size_t>(order[keep])];
            ++keep;
            if (cum >= p) {
                break;
            }
        }
    }
    keep = std::max<std::size_t>(keep, 1);
    return sample_candidates(probs, std::span<const int>(order.data(), keep), rng);
}

std::vector<int> concat(std::span<const int> prompt, const std::vector<int>& tail) {
    std::vector<int> out(prompt.begin(), prompt.end());
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
}

GenerationResult run_flat_decode(const StepFn& step_fn, std::span<const int> prompt,
                                 const DecodeConfig& cfg) {
    GenerationResult result;
    Rng rng(cfg.seed);
    std::vector<int> context(prompt.begin(), prompt.end());
    for (int step = 0; step < cfg.max_len; ++step) {
        StepOutcome outcome = step_fn(context);
        int token = 0;
        switch (cfg.strategy.kind) {
            case StrategyKind::greedy:
                token = select_greedy(outcome.probs);
                break;
            case StrategyKind::top_k:
                token = select_top_k(outcome.probs, cfg.strategy.k, rng);
                break;
            case StrategyKind::top_p:
                token = select_top_p(outcome.probs, cfg.strategy.p, rng);
                break;
            case StrategyKind::beam:
                throw std::logic_error("beam handled separately");
        }
        outcome.trace.chosen_token = token;
        outcome.trace.chosen_prob = outcome.probs.p[static_cast<std::size_t>(token)];
        result.tokens.push_back(token);
        result.per_step.push_back(std::move(outcome.trace));
        context.push_back(token);
        if (cfg.stop_token && token == *cfg.stop_token) {
            break;
        }
    }
    return result;
}

struct BeamHyp {
    std::vector<int> tokens;
    double score = 0.0;  // summed adjusted log-prob
};

GenerationResult run_beam_decode(const StepFn& step_fn, std::span<const int> prompt,
                                 const DecodeConfig& cfg) {
    std::vector<BeamHyp> live{BeamHyp{}};
    std::vector<BeamHyp> finished;

    for (int step = 0; step < cfg.max_len && !live.empty(); ++step) {
        std::vector<BeamHyp> candidates;
        candidates.reserve(live.size() * 8);
        for (const BeamHyp& hyp : live) {
            const std::vector<int> context = concat(prompt, hyp.tokens);
            const StepOutcome outcome = step_fn(context);
            for (std::size_t i = 0; i < outcome.probs.size(); ++i) {
                const double p = outcome.probs.p[i];
                if (p <= 0.0) {
                    continue;  // hard-masked or unreachable token
                }
                BeamHyp next;
                next.tokens = hyp.tokens;
                next.tokens.push_back(static_cast<int>(i));
                next.score = hyp.score + std::log(p);
                candidates.push_back(std::move(next));
            }
        }
        std::sort(candidates.begin(), candidates.end(), [](const BeamHyp& a, const BeamHyp& b) {
            if (a.score != b.score) {
                return a.score > b.score;
            }
            return a.tokens < b.tokens;
        });
        const std::size_t keep =
            std::min<std::size_t>(static_cast<std::size_t>(cfg.strategy.width),
                                  candidates.size());
        live.clear();
        for (std::size_t i = 0; i < keep; ++i) {
            BeamHyp& hyp = candidates[i];
            if (cfg.stop_token && hyp.tokens.back() == *cfg.stop_token) {
                finished.push_back(std::move(hyp));
            } else {
                live.push_back(std::move(hyp));
            }
        }
    }

    std::vector<BeamHyp> pool = std::move(finished);
    pool.insert(pool.end(), live.begin(), live.end());
    const BeamHyp* best = nullptr;
    for (const BeamHyp& hyp : pool) {
        if (best == nullptr || hyp.score > best->score ||
            (hyp.score == best->score && hyp.tokens < best->tokens)) {
            best = &hyp;
        }
    }
    if (best == nullptr) {
        throw std::logic_error("beam search produced no hypotheses");
    }

    // Replay the winning sequence to record its per-step trace.
    GenerationResult result;
    result.tokens = best->tokens;
    std::vector<int> context(prompt.begin(), prompt.end());
    for (int token : result.tokens) {
        StepOutcome outcome = step_fn(context);
        outcome.trace.chosen_token = token;
        outcome.trace.chosen_prob = outcome.probs.p[static_cast<std::size_t>(token)];
        result.per_step.push_back(std::move(outcome.trace));
        context.push_back(token);
    }
    return result;
}

GenerationResult run_decode(const StepFn& step_fn, std::span<const int> prompt,
                            const DecodeConfig& cfg) {
    if (cfg.strategy.kind == StrategyKind::beam) {
        return run_beam_decode(step_fn, prompt, cfg);
    }
    return run_flat_decode(step_fn, prompt, cfg);
}

}  // namespace

// ============================================================================
// Steered and baseline decoding
// ============================================================================

std::pair<ProbVector, StepTrace> decode_step(const NGramSoftmaxLM& model_theta,
                                             const NGramSoftmaxLM& model_phi,
                                             std::span<const int> context,
                                             const DecodeConfig& cfg) {
    if (model_theta.vocab_size != model_phi.vocab_size) {
        throw std::invalid_argument("decode_step: vocabulary mismatch");
    }
    StepTrace trace;
    trace.z_phi = next_logits(model_phi, context);
    const ProbVector p_phi = softmax(trace.z_phi);
    const ProbVector p_theta = softmax(next_logits(model_theta, context));

    const SteeringVector delta = raw_steering_vector(p_phi, p_theta, cfg.steering.epsilons);
    const ConfidenceMask mask = confidence_mask(p_phi, cfg.steering.alpha);
    trace.delta_hat = constrain(delta, mask, cfg.steering);

    SteeredLogits steered = apply_steering(trace.z_phi, trace.delta_hat, cfg.mu_bar);
    trace.applied.resize(trace.delta_hat.size());
    for (std::size_t i = 0; i < trace.delta_hat.size(); ++i) {
        trace.applied[i] = is_masked(trace.delta_hat.delta[i])
                               ? k_masked_logit
                               : cfg.mu_bar * trace.delta_hat.delta[i];
    }
    trace.adjusted_probs = steered.probs;
    return {std::move(steered.probs), std::move(trace)};
}

GenerationResult decode_sequence(const NGramSoftmaxLM& model_theta,
                                 const NGramSoftmaxLM& model_phi, std::span<const int> prompt,
                                 const DecodeConfig& cfg) {
    validate_decode_config(cfg, model_phi.vocab_size);
    if (model_theta.vocab_size != model_phi.vocab_size) {
        throw std::invalid_argument("decode_sequence: vocabulary mismatch");
    }
    StepFn step_fn = [&](std::span<const int> context) {
        auto [probs, trace] = decode_step(model_theta, model_phi, context, cfg);
        StepOutcome outcome;
        outcome.probs = std::move(probs);
        outcome.trace = std::move(trace);
        return outcome;
    };
    return run_decode(step_fn, prompt, cfg);
}

GenerationResult decode_sequence_baseline(const NGramSoftmaxLM& model_phi,
                                          std::span<const int> prompt,
                                          const DecodeConfig& cfg) {
    validate_decode_config(cfg, model_phi.vocab_size);
    StepFn step_fn = [&](std::span<const int> context) {
        StepOutcome outcome;
        outcome.trace.z_phi = next_logits(model_phi, context);
        outcome.probs = softmax(outcome.trace.z_phi);
        outcome.trace.adjusted_probs = outcome.probs;
        return outcome;
    };
    return run_decode(step_fn, prompt, cfg);
}

// ============================================================================
// Trace output
// ============================================================================

namespace {

// Masked entries become JSON null (JSON has no -inf literal).
nlohmann::json dump_vector(std::span<const double> values) {
    nlohmann::json arr = nlohmann::json::array();
    for (double v : values) {
        if (is_masked(v)) {
            arr.push_back(nullptr);
        } else {
            arr.push_back(v);
        }
    }
    return arr;
}

}  // namespace

void write_trace(const GenerationResult& result, std::ostream& out) {
    for (std::size_t i = 0; i < result.per_step.size(); ++i) {
        const StepTrace& step = result.per_step[i];
        nlohmann::json line;
        line["step"] = i;
        line["z_phi"] = dump_vector(step.z_phi.z);
        line["delta_hat"] = dump_vector(step.delta_hat.delta);
        line["applied"] = dump_vector(step.applied);
        line["adjusted_probs"] = dump_vector(step.adjusted_probs.p);
        line["token"] = step.chosen_token;
        line["prob"] = step.chosen_prob;
        out << line.dump() << '\n';
    }
}

}  // namespace steerdec
