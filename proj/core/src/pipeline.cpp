#include "steerdec/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace steerdec {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void ensure_workdir(const PipelineConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.paths.workdir, ec);
    if (ec) {
        throw artifact_error("cannot create workdir " + cfg.paths.workdir + ": " + ec.message());
    }
}

SteeringConfig steering_with_overrides(const PipelineConfig& cfg, const StageOverrides& ov) {
    SteeringConfig steering = cfg.steering;
    if (ov.alpha) {
        steering.alpha = *ov.alpha;
        validate_steering_config(steering);
    }
    return steering;
}

DecodeConfig decode_config_with_overrides(const PipelineConfig& cfg, const StageOverrides& ov,
                                          double mu_bar) {
    DecodeConfig dc;
    dc.strategy = ov.strategy ? *ov.strategy : cfg.decode.strategy;
    dc.mu_bar = mu_bar;
    dc.steering = steering_with_overrides(cfg, ov);
    dc.max_len = cfg.decode.max_len;
    dc.seed = ov.seed ? *ov.seed : cfg.decode.seed;
    dc.stop_token = cfg.decode.stop_token;
    validate_decode_config(dc, cfg.task.vocab_size);
    return dc;
}

}  // namespace

// ============================================================================
// Stages
// ============================================================================

void run_gen_stage(const PipelineConfig& cfg, const StageOverrides& ov) {
    validate_pipeline_config(cfg);
    ensure_workdir(cfg);
    const std::uint64_t seed = ov.seed ? *ov.seed : cfg.task.seed;
    const SyntheticTask task =
        make_synthetic_task(seed, cfg.task.vocab_size, cfg.task.order, cfg.task.options);

    save_corpus(task.pretrain, resolve_path(cfg, cfg.paths.pretrain_corpus));
    save_corpus(task.task_train, resolve_path(cfg, cfg.paths.task_train_corpus));
    save_corpus(task.task_calib, resolve_path(cfg, cfg.paths.task_calib_corpus));
    save_corpus(task.task_test, resolve_path(cfg, cfg.paths.task_test_corpus));

    Corpus prompts;
    prompts.vocab_size = cfg.task.vocab_size;
    prompts.role = CorpusRole::task_test;
    for (const auto& seq : task.task_test.sequences) {
        prompts.sequences.emplace_back(seq.begin(),
                                       seq.begin() + std::min<std::size_t>(
                                                         seq.size(),
                                                         static_cast<std::size_t>(
                                                             cfg.task.prompt_len)));
    }
    save_corpus(prompts, resolve_path(cfg, cfg.paths.prompts));
}

std::vector<double> run_train_stage(const PipelineConfig& cfg, const StageOverrides& ov) {
    validate_pipeline_config(cfg);
    ensure_workdir(cfg);
    const Corpus pretrain = load_corpus(resolve_path(cfg, cfg.paths.pretrain_corpus),
                                        cfg.task.vocab_size, CorpusRole::pretrain);
    NGramSoftmaxLM theta = make_ngram_lm(cfg.task.vocab_size, cfg.task.order);
    TrainConfig tc = cfg.pretrain;
    if (ov.seed) {
        tc.seed = *ov.seed;
    }
    std::vector<double> trace = train(theta, pretrain, tc);
    save_model(theta, resolve_path(cfg, cfg.paths.model_theta));
    return trace;
}

std::vector<double> run_warmstart_stage(const PipelineConfig& cfg, const StageOverrides& ov) {
    validate_pipeline_config(cfg);
    ensure_workdir(cfg);
    NGramSoftmaxLM phi = load_model(resolve_path(cfg, cfg.paths.model_theta));
    const Corpus task_train = load_corpus(resolve_path(cfg, cfg.paths.task_train_corpus),
                                          cfg.task.vocab_size, CorpusRole::task_train);
    TrainConfig tc = cfg.warmstart;
    if (ov.seed) {
        tc.seed = *ov.seed;
    }
    std::vector<double> trace = train(phi, task_train, tc);
    save_model(phi, resolve_path(cfg, cfg.paths.model_phi));
    return trace;
}

CalibrationReport run_calibrate_stage(const PipelineConfig& cfg, const StageOverrides& ov) {
    validate_pipeline_config(cfg);
    ensure_workdir(cfg);
    const NGramSoftmaxLM theta = load_model(resolve_path(cfg, cfg.paths.model_theta));
    const NGramSoftmaxLM phi = load_model(resolve_path(cfg, cfg.paths.model_phi));
    const Corpus calib = load_corpus(resolve_path(cfg, cfg.paths.task_calib_corpus),
                                     cfg.task.vocab_size, CorpusRole::task_calib);
    const SteeringConfig steering = steering_with_overrides(cfg, ov);
    CalibrationReport report = calibrate(theta, phi, calib, steering,
                                         cfg.calibration.aggregator, cfg.calibration.threads);
    save_calibration_report(report, resolve_path(cfg, cfg.paths.calibration_report));
    return report;
}

void run_decode_stage(const PipelineConfig& cfg, const StageOverrides& ov) {
    validate_pipeline_config(cfg);
    ensure_workdir(cfg);
    const NGramSoftmaxLM phi = load_model(resolve_path(cfg, cfg.paths.model_phi));
    const Corpus prompts = load_corpus(resolve_path(cfg, cfg.paths.prompts),
                                       cfg.task.vocab_size, CorpusRole::task_test);

    double mu_bar = 0.0;
    if (!ov.no_steering) {
        if (ov.mu) {
            mu_bar = *ov.mu;
        } else {
            mu_bar = load_calibration_report(resolve_path(cfg, cfg.paths.calibration_report))
                         .mu_bar;
        }
    }

    std::optional<NGramSoftmaxLM> theta;
    if (!ov.no_steering) {
        theta = load_model(resolve_path(cfg, cfg.paths.model_theta));
    }
    const DecodeConfig dc = decode_config_with_overrides(cfg, ov, mu_bar);

    std::ofstream gen_out(resolve_path(cfg, cfg.paths.generations), std::ios::trunc);
    if (!gen_out) {
        throw artifact_error("cannot open generations file for writing: " +
                             resolve_path(cfg, cfg.paths.generations));
    }
    std::ofstream trace_out;
    if (ov.trace_path) {
        trace_out.open(*ov.trace_path, std::ios::trunc);
        if (!trace_out) {
            throw artifact_error("cannot open trace file for writing: " + *ov.trace_path);
        }
    }

    for (const auto& prompt : prompts.sequences) {
        const GenerationResult result =
            ov.no_steering ? decode_sequence_baseline(phi, prompt, dc)
                           : decode_sequence(*theta, phi, prompt, dc);
        for (std::size_t i = 0; i < result.tokens.size(); ++i) {
            if (i > 0) {
                gen_out << ' ';
            }
            gen_out << result.tokens[i];
        }
        gen_out << '\n';
        if (trace_out.is_open()) {
            write_trace(result, trace_out);
        }
    }
    if (!gen_out) {
        throw artifact_error("short write to generations file");
    }
}

// ============================================================================
// Evaluation
// ============================================================================

EvalVariant evaluate_teacher_forced(const NGramSoftmaxLM& model_theta,
                                    const NGramSoftmaxLM& model_phi, const Corpus& test,
                                    const SteeringConfig& steering, double mu, bool steered) {
    validate_corpus(test);
    DecodeConfig dc;
    dc.steering = steering;
    dc.mu_bar = mu;

    std::size_t correct = 0;
    std::size_t count = 0;
    double nll = 0.0;
    for (const auto& seq : test.sequences) {
        for (std::size_t t = 0; t < seq.size(); ++t) {
            const std::span<const int> prefix(seq.data(), t);
            ProbVector p;
            if (steered) {
                p = decode_step(model_theta, model_phi, prefix, dc).first;
            } else {
                p = softmax(next_logits(model_phi, prefix));
            }
            std::size_t best = 0;
            for (std::size_t i = 1; i < p.size(); ++i) {
                if (p.p[i] > p.p[best]) {
                    best = i;
                }
            }
            const auto gold = static_cast<std::size_t>(seq[t]);
            correct += best == gold ? 1 : 0;
            // One-hot KL with the standard floor keeps hard-masked gold
            // tokens finite.
            nll += kl_divergence(one_hot(p.size(), gold), p, steering.epsilons);
            ++count;
        }
    }
    EvalVariant variant;
    variant.accuracy = static_cast<double>(correct) / static_cast<double>(count);
    variant.mean_nll = nll / static_cast<double>(count);
    return variant;
}

std::uint64_t corpus_checksum(const Corpus& corpus) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& seq : corpus.sequences) {
        const std::uint32_t len = static_cast<std::uint32_t>(seq.size());
        h = fnv1a64(&len, sizeof(len), h);
        for (int id : seq) {
            const std::uint32_t v = static_cast<std::uint32_t>(id);
            h = fnv1a64(&v, sizeof(v), h);
        }
    }
    return h;
}

EvalSummary run_eval_stage(const PipelineConfig& cfg, const StageOverrides& ov) {
    validate_pipeline_config(cfg);
    ensure_workdir(cfg);
    const NGramSoftmaxLM theta = load_model(resolve_path(cfg, cfg.paths.model_theta));
    const NGramSoftmaxLM phi = load_model(resolve_path(cfg, cfg.paths.model_phi));
    const Corpus test = load_corpus(resolve_path(cfg, cfg.paths.task_test_corpus),
                                    cfg.task.vocab_size, CorpusRole::task_test);

    double mu_bar;
    if (ov.mu) {
        mu_bar = *ov.mu;
    } else {
        mu_bar =
            load_calibration_report(resolve_path(cfg, cfg.paths.calibration_report)).mu_bar;
    }
    const SteeringConfig steering = steering_with_overrides(cfg, ov);

    EvalSummary summary;
    summary.task_seed = ov.seed ? *ov.seed : cfg.task.seed;
    summary.mu_bar = mu_bar;
    summary.test_checksum = corpus_checksum(test);
    summary.baseline_warmstart =
        evaluate_teacher_forced(theta, phi, test, steering, 0.0, /*steered=*/false);
    summary.svd = evaluate_teacher_forced(theta, phi, test, steering, mu_bar, /*steered=*/true);

    save_eval_summary(summary, resolve_path(cfg, cfg.paths.eval_summary));
    return summary;
}

void save_eval_summary(const EvalSummary& summary, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw artifact_error("cannot open eval summary for writing: " + path);
    }
    char checksum[32];
    std::snprintf(checksum, sizeof(checksum), "%016llx",
                  static_cast<unsigned long long>(summary.test_checksum));
    out << "steerdec-eval v1\n";
    out << "task_seed " << summary.task_seed << '\n';
    out << "mu_bar " << fmt_double(summary.mu_bar) << '\n';
    out << "test_checksum " << checksum << '\n';
    out << "baseline_accuracy " << fmt_double(summary.baseline_warmstart.accuracy) << '\n';
    out << "baseline_mean_nll " << fmt_double(summary.baseline_warmstart.mean_nll) << '\n';
    out << "svd_accuracy " << fmt_double(summary.svd.accuracy) << '\n';
    out << "svd_mean_nll " << fmt_double(summary.svd.mean_nll) << '\n';
    out << "delta_accuracy " << fmt_double(summary.svd.accuracy - summary.baseline_warmstart.accuracy)
        << '\n';
    out << "delta_mean_nll " << fmt_double(summary.svd.mean_nll - summary.baseline_warmstart.mean_nll)
        << '\n';
    if (!out) {
        throw artifact_error("short write to eval summary: " + path);
    }
}

EvalSummary load_eval_summary(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw artifact_error("cannot open eval summary: " + path);
    }
    std::string line;
    if (!std::getline(in, line) || line != "steerdec-eval v1") {
        throw artifact_error("not an eval summary (bad header): " + path);
    }
    EvalSummary summary;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "task_seed") {
            ss >> summary.task_seed;
        } else if (key == "mu_bar") {
            ss >> summary.mu_bar;
        } else if (key == "test_checksum") {
            std::string hex;
            ss >> hex;
            try {
                summary.test_checksum = std::stoull(hex, nullptr, 16);
            } catch (const std::exception&) {
                throw artifact_error("malformed eval summary checksum in " + path);
            }
        } else if (key == "baseline_accuracy") {
            ss >> summary.baseline_warmstart.accuracy;
        } else if (key == "baseline_mean_nll") {
            ss >> summary.baseline_warmstart.mean_nll;
        } else if (key == "svd_accuracy") {
            ss >> summary.svd.accuracy;
        } else if (key == "svd_mean_nll") {
            ss >> summary.svd.mean_nll;
        } else if (key == "delta_accuracy" || key == "delta_mean_nll") {
            // derived fields, recomputed from the variants
        } else {
            throw artifact_error("unknown eval summary field '" + key + "': " + path);
        }
        if (ss.fail()) {
            throw artifact_error("malformed eval summary line in " + path + ": '" + line + "'");
        }
    }
    return summary;
}

EvalSummary run_full_pipeline(const PipelineConfig& cfg, const StageOverrides& ov) {
    run_gen_stage(cfg, ov);
    run_train_stage(cfg, ov);
    run_warmstart_stage(cfg, ov);
    run_calibrate_stage(cfg, ov);
    run_decode_stage(cfg, ov);
    return run_eval_stage(cfg, ov);
}

}  // namespace steerdec
