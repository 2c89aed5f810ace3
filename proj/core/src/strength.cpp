#include "steerdec/strength.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace steerdec {

// ============================================================================
// Per-token / per-sequence strength
// ============================================================================

TokenMuRecord mu_token(int target, const ProbVector& p_phi, const ConstrainedDelta& delta_hat,
                       const Epsilons& eps) {
    if (p_phi.size() != delta_hat.size()) {
        throw std::invalid_argument("mu_token: length mismatch");
    }
    if (target < 0 || static_cast<std::size_t>(target) >= p_phi.size()) {
        throw std::invalid_argument("mu_token: target token out of range");
    }

    TokenMuRecord rec;
    for (std::size_t i = 0; i < delta_hat.size(); ++i) {
        const double d = delta_hat.delta[i];
        if (is_masked(d)) {
            continue;
        }
        const double e_i = (static_cast<std::size_t>(target) == i) ? 1.0 : 0.0;
        rec.linear_term += (e_i - p_phi.p[i]) * d;
        rec.norm_sq += d * d;
    }

    const bool target_masked = is_masked(delta_hat.delta[static_cast<std::size_t>(target)]);
    if (rec.norm_sq < eps.newton_eps || target_masked) {
        rec.degenerate = true;
        rec.mu_star = k_mu_min;
    } else {
        rec.mu_star = rec.linear_term / (rec.norm_sq + eps.newton_eps);
    }
    return rec;
}

double mu_sequence(std::span<const std::pair<double, double>> terms, const Epsilons& eps) {
    if (terms.empty()) {
        throw std::invalid_argument("mu_sequence: empty list");
    }
    double linear = 0.0;
    double norm = 0.0;
    for (const auto& [l, d] : terms) {
        linear += l;
        norm += d;
    }
    return linear / (norm + static_cast<double>(terms.size()) * eps.newton_eps);
}

// ============================================================================
// Aggregation
// ============================================================================

namespace {

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) {
        return values[n / 2];
    }
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

double aggregate(std::span<const TokenMuRecord> records, const Aggregator& agg) {
    std::vector<double> values;
    values.reserve(records.size());
    for (const auto& rec : records) {
        if (!rec.degenerate) {
            values.push_back(rec.mu_star);
        }
    }
    if (values.empty()) {
        throw std::invalid_argument("no calibration signal");
    }

    switch (agg.kind) {
        case AggregatorKind::mean: {
            double sum = 0.0;
            for (double v : values) {
                sum += v;
            }
            return sum / static_cast<double>(values.size());
        }
        case AggregatorKind::median:
            return median_of(values);
        case AggregatorKind::trimmed: {
            if (!(agg.tau > 0.0)) {
                throw std::invalid_argument("trimmed aggregator requires tau > 0");
            }
            const double m = median_of(values);
            double sum = 0.0;
            std::size_t count = 0;
            for (double v : values) {
                if (std::abs(v - m) < agg.tau) {
                    sum += v;
                    ++count;
                }
            }
            // An empty window (tau below every gap) degrades to the median.
            return count > 0 ? sum / static_cast<double>(count) : m;
        }
    }
    throw std::logic_error("unreachable aggregator kind");
}

Aggregator parse_aggregator(const std::string& text) {
    if (text == "mean") {
        return {AggregatorKind::mean, 0.0};
    }
    if (text == "median") {
        return {AggregatorKind::median, 0.0};
    }
    const std::string prefix = "trimmed:";
    if (text.rfind(prefix, 0) == 0) {
        try {
            const double tau = std::stod(text.substr(prefix.size()));
            if (!(tau > 0.0)) {
                throw std::invalid_argument("tau");
            }
            return {AggregatorKind::trimmed, tau};
        } catch (const std::exception&) {
            throw config_error("invalid trimmed aggregator (want trimmed:<tau>, tau > 0): " +
                               text);
        }
    }
    throw config_error("unknown aggregator (want mean, median or trimmed:<tau>): " + text);
}

std::string format_aggregator(const Aggregator& agg) {
    switch (agg.kind) {
        case AggregatorKind::mean:
            return "mean";
        case AggregatorKind::median:
            return "median";
        case AggregatorKind::trimmed: {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "trimmed:%.17g", agg.tau);
            return buf;
        }
    }
    throw std::logic_error("unreachable aggregator kind");
}

// ============================================================================
// Calibration
// ============================================================================

namespace {

std::vector<TokenMuRecord> calibrate_sample(const NGramSoftmaxLM& model_theta,
                                            const NGramSoftmaxLM& model_phi,
                                            const std::vector<int>& gold, int sample_index,
                                            const SteeringConfig& cfg) {
    std::vector<TokenMuRecord> records;
    records.reserve(gold.size());
    for (std::size_t t = 0; t < gold.size(); ++t) {
        const std::span<const int> prefix(gold.data(), t);
        const LogitVector z_phi = next_logits(model_phi, prefix);
        const ProbVector p_phi = softmax(z_phi);
        const ProbVector p_theta = softmax(next_logits(model_theta, prefix));

        const SteeringVector delta = raw_steering_vector(p_phi, p_theta, cfg.epsilons);
        const ConfidenceMask mask = confidence_mask(p_phi, cfg.alpha);
        const ConstrainedDelta delta_hat = constrain(delta, mask, cfg);

        TokenMuRecord rec = mu_token(gold[t], p_phi, delta_hat, cfg.epsilons);
        rec.sample_index = sample_index;
        rec.position = static_cast<int>(t);
        records.push_back(rec);
    }
    return records;
}

}  // namespace

CalibrationReport calibrate(const NGramSoftmaxLM& model_theta, const NGramSoftmaxLM& model_phi,
                            const Corpus& calib_set, const SteeringConfig& cfg,
                            const Aggregator& agg, int n_threads) {
    validate_steering_config(cfg);
    validate_epsilons(cfg.epsilons, model_phi.vocab_size);
    if (calib_set.sequences.empty()) {
        throw std::invalid_argument("calibrate: empty calibration set");
    }
    if (model_theta.vocab_size != model_phi.vocab_size ||
        calib_set.vocab_size != model_phi.vocab_size) {
        throw std::invalid_argument("calibrate: vocabulary mismatch");
    }
    validate_corpus(calib_set);

    const std::size_t n_samples = calib_set.sequences.size();
    std::vector<std::vector<TokenMuRecord>> per_sample(n_samples);

    // Each worker owns a fixed stride of sample indices and writes into its
    // own slots, so the flattened result is independent of scheduling.
    const int workers = std::max(1, std::min<int>(n_threads, static_cast<int>(n_samples)));
    auto run_slice = [&](int worker) {
        for (std::size_t i = static_cast<std::size_t>(worker); i < n_samples;
             i += static_cast<std::size_t>(workers)) {
            per_sample[i] = calibrate_sample(model_theta, model_phi, calib_set.sequences[i],
                                             static_cast<int>(i), cfg);
        }
    };
    if (workers == 1) {
        run_slice(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back(run_slice, w);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    CalibrationReport report;
    report.aggregator = agg;
    for (auto& records : per_sample) {
        report.records.insert(report.records.end(), records.begin(), records.end());
    }
    report.total_records = static_cast<int>(report.records.size());
    for (const auto& rec : report.records) {
        if (rec.degenerate) {
            ++report.degenerate_records;
        }
    }
    report.mu_bar = aggregate(report.records, agg);
    return report;
}

// ============================================================================
// Report file
// ============================================================================

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void save_calibration_report(const CalibrationReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw artifact_error("cannot open calibration report for writing: " + path);
    }
    out << "steerdec-calibration v1\n";
    out << "aggregator " << format_aggregator(report.aggregator) << '\n';
    out << "mu_bar " << fmt_double(report.mu_bar) << '\n';
    out << "records " << report.total_records << '\n';
    out << "degenerate " << report.degenerate_records << '\n';
    out << "columns sample position mu_star linear_term norm_sq degenerate\n";
    for (const auto& rec : report.records) {
        out << rec.sample_index << ' ' << rec.position << ' ' << fmt_double(rec.mu_star) << ' '
            << fmt_double(rec.linear_term) << ' ' << fmt_double(rec.norm_sq) << ' '
            << (rec.degenerate ? 1 : 0) << '\n';
    }
    if (!out) {
        throw artifact_error("short write to calibration report: " + path);
    }
}

CalibrationReport load_calibration_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw artifact_error("cannot open calibration report: " + path);
    }
    std::string line;
    auto next_line = [&](const char* what) -> std::string {
        if (!std::getline(in, line)) {
            throw artifact_error(std::string("calibration report truncated (") + what +
                                 "): " + path);
        }
        return line;
    };

    if (next_line("magic") != "steerdec-calibration v1") {
        throw artifact_error("not a calibration report (bad header): " + path);
    }

    CalibrationReport report;
    {
        std::istringstream ss(next_line("aggregator"));
        std::string key, value;
        ss >> key >> value;
        if (key != "aggregator" || value.empty()) {
            throw artifact_error("calibration report missing aggregator: " + path);
        }
        report.aggregator = parse_aggregator(value);
    }
    auto read_scalar = [&](const char* key) -> std::string {
        std::istringstream ss(next_line(key));
        std::string k, v;
        ss >> k >> v;
        if (k != key || v.empty()) {
            throw artifact_error(std::string("calibration report missing ") + key + ": " + path);
        }
        return v;
    };
    try {
        report.mu_bar = std::stod(read_scalar("mu_bar"));
        report.total_records = std::stoi(read_scalar("records"));
        report.degenerate_records = std::stoi(read_scalar("degenerate"));
    } catch (const artifact_error&) {
        throw;
    } catch (const std::exception&) {
        throw artifact_error("calibration report has malformed header values: " + path);
    }
    if (next_line("columns").rfind("columns ", 0) != 0) {
        throw artifact_error("calibration report missing columns line: " + path);
    }

    report.records.reserve(static_cast<std::size_t>(report.total_records));
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        TokenMuRecord rec;
        int degenerate = 0;
        if (!(ss >> rec.sample_index >> rec.position >> rec.mu_star >> rec.linear_term >>
              rec.norm_sq >> degenerate)) {
            throw artifact_error("malformed calibration record in " + path + ": '" + line + "'");
        }
        rec.degenerate = degenerate != 0;
        report.records.push_back(rec);
    }
    if (static_cast<int>(report.records.size()) != report.total_records) {
        throw artifact_error("calibration report record count mismatch: " + path);
    }
    return report;
}

}  // namespace steerdec
