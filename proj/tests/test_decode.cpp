#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "steerdec/decode.hpp"
#include "steerdec/strength.hpp"
#include "testutil.hpp"

using namespace steerdec;

namespace {

NGramSoftmaxLM random_model(Rng& rng, int vocab, int order, double scale = 1.0) {
    NGramSoftmaxLM model = make_ngram_lm(vocab, order);
    for (double& v : model.logit_table) {
        v = scale * gaussian(rng);
    }
    return model;
}

DecodeConfig base_config() {
    DecodeConfig cfg;
    cfg.steering.lambda_mode = LambdaMode::constant;
    cfg.steering.lambda_value = 0.0;
    cfg.max_len = 12;
    cfg.seed = 99;
    return cfg;
}

}  // namespace

TEST_CASE("strategy parsing") {
    CHECK(parse_strategy("greedy").kind == StrategyKind::greedy);
    CHECK(parse_strategy("beam:4").width == 4);
    CHECK(parse_strategy("top_k:5").k == 5);
    CHECK(parse_strategy("top_p:0.9").p == doctest::Approx(0.9));
    CHECK(format_strategy(parse_strategy("beam:4")) == "beam:4");
    CHECK(format_strategy(parse_strategy("top_k:5")) == "top_k:5");

    CHECK_THROWS_AS(parse_strategy("beam"), config_error);
    CHECK_THROWS_AS(parse_strategy("beam:0"), config_error);
    CHECK_THROWS_AS(parse_strategy("top_p:1.5"), config_error);
    CHECK_THROWS_AS(parse_strategy("top_p:abc"), config_error);
    CHECK_THROWS_AS(parse_strategy("nucleus:0.9"), config_error);
    CHECK_THROWS_AS(parse_strategy("greedy:2"), config_error);
}

TEST_CASE("decode_step identities") {
    Rng rng(501);
    const NGramSoftmaxLM theta = random_model(rng, 8, 2);
    const NGramSoftmaxLM phi = random_model(rng, 8, 2);
    const std::vector<int> context{1, 2, 3};

    // mu = 0 with an all-true mask reproduces softmax(z_phi) exactly.
    DecodeConfig cfg = base_config();
    cfg.mu_bar = 0.0;
    cfg.steering.alpha = 1e-9;  // alpha small enough to keep every token
    auto [probs, trace] = decode_step(theta, phi, context, cfg);
    const ProbVector plain = softmax(next_logits(phi, context));
    CHECK(probs.p == plain.p);

    // Identical models give zero steering for any mu in constant mode.
    cfg = base_config();
    cfg.mu_bar = 3.5;
    auto [probs_same, trace_same] = decode_step(theta, theta, context, cfg);
    const ProbVector base = softmax(next_logits(theta, context));
    for (std::size_t i = 0; i < probs_same.size(); ++i) {
        CHECK(probs_same.p[i] == doctest::Approx(base.p[i]).epsilon(1e-12));
    }

    CHECK_THROWS_AS(decode_step(random_model(rng, 6, 2), phi, context, cfg),
                    std::invalid_argument);
}

TEST_CASE("decode_step matches the worked two-token example") {
    // Model tables realizing p_phi = [0.8, 0.2], p_theta = [0.5, 0.5] at the
    // begin context.
    NGramSoftmaxLM phi = make_ngram_lm(2, 1);
    NGramSoftmaxLM theta = make_ngram_lm(2, 1);
    const std::size_t begin_row =
        static_cast<std::size_t>(phi.begin_token()) * static_cast<std::size_t>(phi.vocab_size);
    phi.logit_table[begin_row] = std::log(4.0);
    phi.logit_table[begin_row + 1] = 0.0;

    DecodeConfig cfg = base_config();
    cfg.mu_bar = 1.0;
    cfg.steering.alpha = 0.1;
    auto [probs, trace] = decode_step(theta, phi, std::vector<int>{}, cfg);
    CHECK(probs.p[0] == doctest::Approx(0.71964).epsilon(1e-5));
    CHECK(probs.p[1] == doctest::Approx(0.28036).epsilon(1e-5));
}

TEST_CASE("mu = 0 generations are identical to the baseline for all strategies") {
    Rng rng(502);
    const NGramSoftmaxLM theta = random_model(rng, 10, 2);
    const NGramSoftmaxLM phi = random_model(rng, 10, 2);
    const std::vector<int> prompt{4, 7};

    for (const std::string name : {"greedy", "beam:3", "top_k:4", "top_p:0.9"}) {
        DecodeConfig cfg = base_config();
        cfg.strategy = parse_strategy(name);
        cfg.mu_bar = 0.0;
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            cfg.seed = seed;
            const GenerationResult steered = decode_sequence(theta, phi, prompt, cfg);
            const GenerationResult baseline = decode_sequence_baseline(phi, prompt, cfg);
            CAPTURE(name);
            CHECK(steered.tokens == baseline.tokens);
        }
    }
}

TEST_CASE("degenerate strategies collapse to greedy") {
    Rng rng(503);
    const NGramSoftmaxLM theta = random_model(rng, 9, 2);
    const NGramSoftmaxLM phi = random_model(rng, 9, 2);
    const std::vector<int> prompt{0};

    DecodeConfig greedy = base_config();
    greedy.mu_bar = -2.0;
    greedy.strategy = parse_strategy("greedy");
    const GenerationResult g = decode_sequence(theta, phi, prompt, greedy);

    DecodeConfig beam1 = greedy;
    beam1.strategy = Strategy{StrategyKind::beam, 1, 1, 1.0};
    CHECK(decode_sequence(theta, phi, prompt, beam1).tokens == g.tokens);

    DecodeConfig topk1 = greedy;
    topk1.strategy = parse_strategy("top_k:1");
    CHECK(decode_sequence(theta, phi, prompt, topk1).tokens == g.tokens);
}

TEST_CASE("top_p with p = 1 matches full-distribution sampling") {
    Rng rng(504);
    const NGramSoftmaxLM theta = random_model(rng, 8, 1);
    const NGramSoftmaxLM phi = random_model(rng, 8, 1);
    const std::vector<int> prompt{2};

    DecodeConfig full = base_config();
    full.mu_bar = 1.0;
    full.strategy = parse_strategy("top_p:1.0");

    DecodeConfig all_k = full;
    all_k.strategy = parse_strategy("top_k:8");  // k = |V| keeps everything too

    for (std::uint64_t seed : {5ull, 6ull, 7ull}) {
        full.seed = all_k.seed = seed;
        CHECK(decode_sequence(theta, phi, prompt, full).tokens ==
              decode_sequence(theta, phi, prompt, all_k).tokens);
    }
}

TEST_CASE("generation is deterministic and honors max_len and stop_token") {
    Rng rng(505);
    const NGramSoftmaxLM theta = random_model(rng, 6, 2);
    const NGramSoftmaxLM phi = random_model(rng, 6, 2);

    DecodeConfig cfg = base_config();
    cfg.strategy = parse_strategy("top_p:0.8");
    cfg.mu_bar = -1.0;
    cfg.max_len = 20;
    const std::vector<int> prompt{1, 2};

    const GenerationResult a = decode_sequence(theta, phi, prompt, cfg);
    const GenerationResult b = decode_sequence(theta, phi, prompt, cfg);
    CHECK(a.tokens == b.tokens);
    CHECK(a.tokens.size() <= static_cast<std::size_t>(cfg.max_len));
    CHECK(a.per_step.size() == a.tokens.size());

    cfg.stop_token = a.tokens[3];
    const GenerationResult stopped = decode_sequence(theta, phi, prompt, cfg);
    CHECK(stopped.tokens.size() <= 4);
    if (!stopped.tokens.empty() &&
        stopped.tokens.size() < static_cast<std::size_t>(cfg.max_len)) {
        CHECK(stopped.tokens.back() == *cfg.stop_token);
    }

    // Empty prompts are legal: the model pads with the begin symbol.
    CHECK_NOTHROW(decode_sequence(theta, phi, std::vector<int>{}, cfg));
}

TEST_CASE("hard masking keeps generated tokens inside the confident set") {
    Rng rng(506);
    const NGramSoftmaxLM theta = random_model(rng, 8, 1, 2.0);
    const NGramSoftmaxLM phi = random_model(rng, 8, 1, 2.0);

    DecodeConfig cfg;
    cfg.steering.lambda_mode = LambdaMode::hard_neg_inf;
    cfg.steering.alpha = 0.3;
    cfg.mu_bar = -6.0;  // strong steering tries hard to promote tail tokens
    cfg.max_len = 16;
    for (const std::string name : {"greedy", "beam:3", "top_k:6", "top_p:0.95"}) {
        cfg.strategy = parse_strategy(name);
        const GenerationResult result = decode_sequence(theta, phi, std::vector<int>{0}, cfg);
        std::vector<int> context{0};
        for (std::size_t t = 0; t < result.tokens.size(); ++t) {
            const ProbVector p_phi = softmax(next_logits(phi, context));
            const ConfidenceMask mask = confidence_mask(p_phi, cfg.steering.alpha);
            CAPTURE(name);
            CHECK(mask.keep[static_cast<std::size_t>(result.tokens[t])] == 1);
            context.push_back(result.tokens[t]);
        }
    }
}

TEST_CASE("concurrent decoding against shared models matches a serial run") {
    Rng rng(508);
    const NGramSoftmaxLM theta = random_model(rng, 8, 2);
    const NGramSoftmaxLM phi = random_model(rng, 8, 2);
    DecodeConfig cfg = base_config();
    cfg.strategy = parse_strategy("top_p:0.85");
    cfg.mu_bar = -2.0;

    std::vector<std::vector<int>> prompts;
    for (int i = 0; i < 8; ++i) {
        prompts.push_back({i % 8, (i * 3) % 8});
    }
    std::vector<GenerationResult> serial(prompts.size());
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        serial[i] = decode_sequence(theta, phi, prompts[i], cfg);
    }

    std::vector<GenerationResult> parallel(prompts.size());
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        pool.emplace_back([&, i] { parallel[i] = decode_sequence(theta, phi, prompts[i], cfg); });
    }
    for (auto& t : pool) {
        t.join();
    }
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        CHECK(serial[i].tokens == parallel[i].tokens);
    }
}

TEST_CASE("beam search prefers the higher-scoring sequence") {
    // Two-step setup where greedy's first choice leads to a poor continuation
    // while the beam finds the globally better pair.
    NGramSoftmaxLM phi = make_ngram_lm(3, 1);
    const std::size_t v = 3;
    auto row = [&phi, v](int ctx) {
        return static_cast<std::size_t>(ctx) * v;
    };
    const std::size_t begin = row(phi.begin_token());
    // Begin: token 0 slightly preferred over token 1.
    phi.logit_table[begin + 0] = 1.0;
    phi.logit_table[begin + 1] = 0.9;
    phi.logit_table[begin + 2] = -5.0;
    // After 0: near-uniform (weak continuation).
    phi.logit_table[row(0) + 0] = 0.0;
    phi.logit_table[row(0) + 1] = 0.0;
    phi.logit_table[row(0) + 2] = 0.0;
    // After 1: very confident continuation to 2.
    phi.logit_table[row(1) + 2] = 6.0;

    DecodeConfig cfg = base_config();
    cfg.mu_bar = 0.0;
    cfg.max_len = 2;

    cfg.strategy = parse_strategy("greedy");
    const GenerationResult greedy = decode_sequence_baseline(phi, std::vector<int>{}, cfg);
    CHECK(greedy.tokens == std::vector<int>{0, 0});

    cfg.strategy = parse_strategy("beam:3");
    const GenerationResult beam = decode_sequence_baseline(phi, std::vector<int>{}, cfg);
    CHECK(beam.tokens == std::vector<int>{1, 2});
}

TEST_CASE("trace records are valid JSON lines with distributions intact") {
    Rng rng(507);
    const NGramSoftmaxLM theta = random_model(rng, 5, 1);
    const NGramSoftmaxLM phi = random_model(rng, 5, 1);
    DecodeConfig cfg;
    cfg.steering.lambda_mode = LambdaMode::hard_neg_inf;
    cfg.mu_bar = -1.5;
    cfg.max_len = 4;
    const GenerationResult result = decode_sequence(theta, phi, std::vector<int>{1}, cfg);

    for (const StepTrace& step : result.per_step) {
        double sum = 0.0;
        for (double p : step.adjusted_probs.p) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(step.chosen_prob ==
              step.adjusted_probs.p[static_cast<std::size_t>(step.chosen_token)]);
    }

    std::ostringstream out;
    write_trace(result, out);
    std::istringstream lines(out.str());
    std::string line;
    std::size_t n_lines = 0;
    while (std::getline(lines, line)) {
        const auto obj = nlohmann::json::parse(line);
        CHECK(obj.contains("z_phi"));
        CHECK(obj.contains("delta_hat"));
        CHECK(obj.contains("token"));
        ++n_lines;
    }
    CHECK(n_lines == result.tokens.size());
}

TEST_CASE("decode config validation") {
    DecodeConfig cfg = base_config();
    cfg.stop_token = 12;
    CHECK_THROWS_AS(validate_decode_config(cfg, 8), config_error);
    cfg = base_config();
    cfg.max_len = 0;
    CHECK_THROWS_AS(validate_decode_config(cfg, 8), config_error);
    cfg = base_config();
    cfg.mu_bar = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(validate_decode_config(cfg, 8), config_error);
}
