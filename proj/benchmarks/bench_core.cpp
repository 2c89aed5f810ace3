#include <benchmark/benchmark.h>

#include "steerdec/decode.hpp"
#include "steerdec/steering.hpp"
#include "steerdec/strength.hpp"
#include "steerdec/toymodel.hpp"

using namespace steerdec;

namespace {

ProbVector simplex(Rng& rng, std::size_t n) {
    std::vector<double> z(n);
    for (double& v : z) {
        v = -4.0 + 8.0 * uniform01(rng);
    }
    return softmax(LogitVector{std::move(z)});
}

NGramSoftmaxLM model(Rng& rng, int vocab, int order) {
    NGramSoftmaxLM m = make_ngram_lm(vocab, order);
    for (double& v : m.logit_table) {
        v = gaussian(rng);
    }
    return m;
}

}  // namespace

static void BM_softmax(benchmark::State& state) {
    Rng rng(1);
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<double> z(n);
    for (double& v : z) {
        v = -4.0 + 8.0 * uniform01(rng);
    }
    const LogitVector logits{z};
    for (auto _ : state) {
        benchmark::DoNotOptimize(softmax(logits));
    }
}
BENCHMARK(BM_softmax)->Arg(16)->Arg(64);

static void BM_raw_steering_vector(benchmark::State& state) {
    Rng rng(2);
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const ProbVector p_phi = simplex(rng, n);
    const ProbVector p_theta = simplex(rng, n);
    const Epsilons eps;
    for (auto _ : state) {
        benchmark::DoNotOptimize(raw_steering_vector(p_phi, p_theta, eps));
    }
}
BENCHMARK(BM_raw_steering_vector)->Arg(16)->Arg(64);

static void BM_steered_decode_step(benchmark::State& state) {
    Rng rng(3);
    const NGramSoftmaxLM theta = model(rng, 16, 2);
    const NGramSoftmaxLM phi = model(rng, 16, 2);
    DecodeConfig cfg;
    cfg.mu_bar = -2.0;
    const std::vector<int> context{3, 7, 1};
    for (auto _ : state) {
        benchmark::DoNotOptimize(decode_step(theta, phi, context, cfg));
    }
}
BENCHMARK(BM_steered_decode_step);

static void BM_calibrate(benchmark::State& state) {
    const SyntheticTask task = make_synthetic_task(4, 10, 2, {});
    Rng rng(4);
    NGramSoftmaxLM theta = make_ngram_lm(10, 2);
    train(theta, task.pretrain, TrainConfig{80.0, 30, 1, 0.01});
    NGramSoftmaxLM phi = theta;
    train(phi, task.task_train, TrainConfig{20.0, 1, 2, 0.0});
    const SteeringConfig cfg;
    const Aggregator mean{AggregatorKind::mean, 0.0};
    const int threads = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(calibrate(theta, phi, task.task_calib, cfg, mean, threads));
    }
}
BENCHMARK(BM_calibrate)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

static void BM_greedy_decode_sequence(benchmark::State& state) {
    Rng rng(5);
    const NGramSoftmaxLM theta = model(rng, 16, 2);
    const NGramSoftmaxLM phi = model(rng, 16, 2);
    DecodeConfig cfg;
    cfg.mu_bar = -2.0;
    cfg.max_len = 32;
    const std::vector<int> prompt{1, 2};
    for (auto _ : state) {
        benchmark::DoNotOptimize(decode_sequence(theta, phi, prompt, cfg));
    }
}
BENCHMARK(BM_greedy_decode_sequence)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
