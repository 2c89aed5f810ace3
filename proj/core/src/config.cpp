#include "steerdec/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace steerdec {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return x;
    } catch (const std::exception&) {
        throw config_error("expected a real number for " + where + ", got '" + v + "'");
    }
}

long long parse_int(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return x;
    } catch (const std::exception&) {
        throw config_error("expected an integer for " + where + ", got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& v, const std::string& where) {
    try {
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument(v);
        }
        return x;
    } catch (const std::exception&) {
        throw config_error("expected a non-negative integer for " + where + ", got '" + v + "'");
    }
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& text) {
    PipelineConfig cfg;

    using Setter = std::function<void(PipelineConfig&, const std::string&, const std::string&)>;
    static const std::map<std::string, Setter> schema = {
        // [task]
        {"task.seed", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.seed = parse_u64(v, w);
         }},
        {"task.vocab_size", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.vocab_size = static_cast<int>(parse_int(v, w));
         }},
        {"task.order", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.order = static_cast<int>(parse_int(v, w));
         }},
        {"task.pretrain_sequences",
         [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.options.pretrain_sequences = static_cast<int>(parse_int(v, w));
         }},
        {"task.task_sequences", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.options.task_sequences = static_cast<int>(parse_int(v, w));
         }},
        {"task.test_sequences", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.options.test_sequences = static_cast<int>(parse_int(v, w));
         }},
        {"task.sequence_length", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.options.sequence_length = static_cast<int>(parse_int(v, w));
         }},
        {"task.base_scale", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.options.base_scale = parse_double(v, w);
         }},
        {"task.sharpen", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.options.sharpen = parse_double(v, w);
         }},
        {"task.shift", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.options.shift = static_cast<int>(parse_int(v, w));
         }},
        {"task.lead_tokens", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.options.lead_tokens = static_cast<int>(parse_int(v, w));
         }},
        {"task.prompt_len", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.task.prompt_len = static_cast<int>(parse_int(v, w));
         }},
        // [paths]
        {"paths.workdir", [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.workdir = v;
         }},
        {"paths.pretrain_corpus", [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.pretrain_corpus = v;
         }},
        {"paths.task_train_corpus",
         [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.task_train_corpus = v;
         }},
        {"paths.task_calib_corpus",
         [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.task_calib_corpus = v;
         }},
        {"paths.task_test_corpus", [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.task_test_corpus = v;
         }},
        {"paths.prompts", [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.prompts = v;
         }},
        {"paths.model_theta", [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.model_theta = v;
         }},
        {"paths.model_phi", [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.model_phi = v;
         }},
        {"paths.calibration_report",
         [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.calibration_report = v;
         }},
        {"paths.generations", [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.generations = v;
         }},
        {"paths.eval_summary", [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.paths.eval_summary = v;
         }},
        // [pretrain] / [warmstart]
        {"pretrain.learning_rate",
         [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.pretrain.learning_rate = parse_double(v, w);
         }},
        {"pretrain.epochs", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.pretrain.epochs = static_cast<int>(parse_int(v, w));
         }},
        {"pretrain.seed", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.pretrain.seed = parse_u64(v, w);
         }},
        {"pretrain.l2", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.pretrain.l2 = parse_double(v, w);
         }},
        {"warmstart.learning_rate",
         [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.warmstart.learning_rate = parse_double(v, w);
         }},
        {"warmstart.epochs", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.warmstart.epochs = static_cast<int>(parse_int(v, w));
         }},
        {"warmstart.seed", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.warmstart.seed = parse_u64(v, w);
         }},
        {"warmstart.l2", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.warmstart.l2 = parse_double(v, w);
         }},
        // [steering]
        {"steering.alpha", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.steering.alpha = parse_double(v, w);
         }},
        {"steering.lambda", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             if (v == "-inf") {
                 c.steering.lambda_mode = LambdaMode::hard_neg_inf;
                 c.steering.lambda_value = 0.0;
             } else {
                 c.steering.lambda_mode = LambdaMode::constant;
                 c.steering.lambda_value = parse_double(v, w);
             }
         }},
        {"steering.prob_floor", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.steering.epsilons.prob_floor = parse_double(v, w);
         }},
        {"steering.newton_eps", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.steering.epsilons.newton_eps = parse_double(v, w);
         }},
        {"steering.fd_step", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.steering.epsilons.fd_step = parse_double(v, w);
         }},
        // [calibration]
        {"calibration.aggregator",
         [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.calibration.aggregator = parse_aggregator(v);
         }},
        {"calibration.threads", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.calibration.threads = static_cast<int>(parse_int(v, w));
         }},
        // [decode]
        {"decode.strategy", [](PipelineConfig& c, const std::string& v, const std::string&) {
             c.decode.strategy = parse_strategy(v);
         }},
        {"decode.max_len", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.decode.max_len = static_cast<int>(parse_int(v, w));
         }},
        {"decode.seed", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             c.decode.seed = parse_u64(v, w);
         }},
        {"decode.stop_token", [](PipelineConfig& c, const std::string& v, const std::string& w) {
             if (v == "none") {
                 c.decode.stop_token.reset();
             } else {
                 c.decode.stop_token = static_cast<int>(parse_int(v, w));
             }
         }},
    };

    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = trim(line);
        if (s.empty() || s[0] == '#') {
            continue;
        }
        if (s.front() == '[') {
            if (s.back() != ']' || s.size() < 3) {
                throw config_error("line " + std::to_string(lineno) + ": malformed section '" +
                                   s + "'");
            }
            section = s.substr(1, s.size() - 2);
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw config_error("line " + std::to_string(lineno) + ": expected key = value, got '" +
                               s + "'");
        }
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (section.empty()) {
            throw config_error("line " + std::to_string(lineno) + ": key '" + key +
                               "' outside any [section]");
        }
        const std::string full = section + "." + key;
        const auto it = schema.find(full);
        if (it == schema.end()) {
            throw config_error("line " + std::to_string(lineno) + ": unknown key '" + full + "'");
        }
        it->second(cfg, value, full);
    }

    validate_pipeline_config(cfg);
    return cfg;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw config_error("cannot open config file: " + path);
    }
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_pipeline_config(text);
    } catch (const config_error& e) {
        throw config_error(path + ": " + e.what());
    }
}

std::string serialize_pipeline_config(const PipelineConfig& cfg) {
    std::ostringstream out;
    out << "[task]\n";
    out << "seed = " << cfg.task.seed << '\n';
    out << "vocab_size = " << cfg.task.vocab_size << '\n';
    out << "order = " << cfg.task.order << '\n';
    out << "pretrain_sequences = " << cfg.task.options.pretrain_sequences << '\n';
    out << "task_sequences = " << cfg.task.options.task_sequences << '\n';
    out << "test_sequences = " << cfg.task.options.test_sequences << '\n';
    out << "sequence_length = " << cfg.task.options.sequence_length << '\n';
    out << "base_scale = " << fmt_double(cfg.task.options.base_scale) << '\n';
    out << "sharpen = " << fmt_double(cfg.task.options.sharpen) << '\n';
    out << "shift = " << cfg.task.options.shift << '\n';
    out << "lead_tokens = " << cfg.task.options.lead_tokens << '\n';
    out << "prompt_len = " << cfg.task.prompt_len << '\n';
    out << '\n';
    out << "[paths]\n";
    out << "workdir = " << cfg.paths.workdir << '\n';
    out << "pretrain_corpus = " << cfg.paths.pretrain_corpus << '\n';
    out << "task_train_corpus = " << cfg.paths.task_train_corpus << '\n';
    out << "task_calib_corpus = " << cfg.paths.task_calib_corpus << '\n';
    out << "task_test_corpus = " << cfg.paths.task_test_corpus << '\n';
    out << "prompts = " << cfg.paths.prompts << '\n';
    out << "model_theta = " << cfg.paths.model_theta << '\n';
    out << "model_phi = " << cfg.paths.model_phi << '\n';
    out << "calibration_report = " << cfg.paths.calibration_report << '\n';
    out << "generations = " << cfg.paths.generations << '\n';
    out << "eval_summary = " << cfg.paths.eval_summary << '\n';
    out << '\n';
    out << "[pretrain]\n";
    out << "learning_rate = " << fmt_double(cfg.pretrain.learning_rate) << '\n';
    out << "epochs = " << cfg.pretrain.epochs << '\n';
    out << "seed = " << cfg.pretrain.seed << '\n';
    out << "l2 = " << fmt_double(cfg.pretrain.l2) << '\n';
    out << '\n';
    out << "[warmstart]\n";
    out << "learning_rate = " << fmt_double(cfg.warmstart.learning_rate) << '\n';
    out << "epochs = " << cfg.warmstart.epochs << '\n';
    out << "seed = " << cfg.warmstart.seed << '\n';
    out << "l2 = " << fmt_double(cfg.warmstart.l2) << '\n';
    out << '\n';
    out << "[steering]\n";
    out << "alpha = " << fmt_double(cfg.steering.alpha) << '\n';
    out << "lambda = "
        << (cfg.steering.lambda_mode == LambdaMode::hard_neg_inf
                ? std::string("-inf")
                : fmt_double(cfg.steering.lambda_value))
        << '\n';
    out << "prob_floor = " << fmt_double(cfg.steering.epsilons.prob_floor) << '\n';
    out << "newton_eps = " << fmt_double(cfg.steering.epsilons.newton_eps) << '\n';
    out << "fd_step = " << fmt_double(cfg.steering.epsilons.fd_step) << '\n';
    out << '\n';
    out << "[calibration]\n";
    out << "aggregator = " << format_aggregator(cfg.calibration.aggregator) << '\n';
    out << "threads = " << cfg.calibration.threads << '\n';
    out << '\n';
    out << "[decode]\n";
    out << "strategy = " << format_strategy(cfg.decode.strategy) << '\n';
    out << "max_len = " << cfg.decode.max_len << '\n';
    out << "seed = " << cfg.decode.seed << '\n';
    out << "stop_token = "
        << (cfg.decode.stop_token ? std::to_string(*cfg.decode.stop_token) : std::string("none"))
        << '\n';
    return out.str();
}

void validate_pipeline_config(const PipelineConfig& cfg) {
    if (cfg.task.vocab_size < 2 || cfg.task.vocab_size > k_max_vocab_size) {
        throw config_error("task.vocab_size must be in [2, " + std::to_string(k_max_vocab_size) +
                           "]");
    }
    if (cfg.task.order < 1 || cfg.task.order > k_max_order) {
        throw config_error("task.order must be in [1, " + std::to_string(k_max_order) + "]");
    }
    const auto& opts = cfg.task.options;
    if (opts.pretrain_sequences < 1 || opts.task_sequences < 2 || opts.test_sequences < 1 ||
        opts.sequence_length < 1) {
        throw config_error("task corpus sizes must be positive (task_sequences >= 2)");
    }
    if (opts.lead_tokens < 0 || opts.lead_tokens > opts.sequence_length) {
        throw config_error("task.lead_tokens must be in [0, sequence_length]");
    }
    if (!(opts.base_scale > 0.0) || !(opts.sharpen > 0.0)) {
        throw config_error("task.base_scale and task.sharpen must be > 0");
    }
    if (cfg.task.prompt_len < 1 || cfg.task.prompt_len > opts.sequence_length) {
        throw config_error("task.prompt_len must be in [1, sequence_length]");
    }
    if (cfg.paths.workdir.empty()) {
        throw config_error("paths.workdir must not be empty");
    }
    validate_train_config(cfg.pretrain);
    validate_train_config(cfg.warmstart);
    validate_steering_config(cfg.steering);
    validate_epsilons(cfg.steering.epsilons, cfg.task.vocab_size);
    if (cfg.calibration.threads < 1) {
        throw config_error("calibration.threads must be >= 1");
    }
    if (cfg.calibration.aggregator.kind == AggregatorKind::trimmed &&
        !(cfg.calibration.aggregator.tau > 0.0)) {
        throw config_error("trimmed aggregator requires tau > 0");
    }
    DecodeConfig dc;
    dc.strategy = cfg.decode.strategy;
    dc.steering = cfg.steering;
    dc.max_len = cfg.decode.max_len;
    dc.seed = cfg.decode.seed;
    dc.stop_token = cfg.decode.stop_token;
    validate_decode_config(dc, cfg.task.vocab_size);
}

std::string resolve_path(const PipelineConfig& cfg, const std::string& name) {
    if (!name.empty() && name.front() == '/') {
        return name;
    }
    if (cfg.paths.workdir.empty() || cfg.paths.workdir == ".") {
        return name;
    }
    if (cfg.paths.workdir.back() == '/') {
        return cfg.paths.workdir + name;
    }
    return cfg.paths.workdir + "/" + name;
}

}  // namespace steerdec
