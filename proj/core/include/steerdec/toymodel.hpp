#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "steerdec/dist.hpp"

namespace steerdec {

// ============================================================================
// Tabular autoregressive softmax model
// ============================================================================

inline constexpr std::uint32_t k_model_format_version = 1;
inline constexpr int k_max_vocab_size = 64;
inline constexpr int k_max_order = 3;

// Dense table of next-token logits, one row per context of `order` ids.
// Contexts shorter than `order` are left-padded with the begin symbol, so the
// context alphabet is the vocabulary plus one: ids 0..vocab_size-1 are real
// tokens, id vocab_size is the begin symbol. The table covers every context
// over that alphabet.
struct NGramSoftmaxLM {
    int order = 1;
    int vocab_size = 0;
    std::uint32_t version = k_model_format_version;
    std::vector<double> logit_table;  // n_contexts() * vocab_size, row-major

    int begin_token() const { return vocab_size; }
    std::size_t n_contexts() const;
    // Row index for an already-padded context of exactly `order` ids.
    std::size_t context_row(std::span<const int> padded_context) const;
};

// Zero-initialized table (uniform next-token distribution everywhere).
NGramSoftmaxLM make_ngram_lm(int vocab_size, int order);

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 1;
    std::uint64_t seed = 0;  // recorded for provenance; full-batch training is order-free
    double l2 = 0.0;

    bool operator==(const TrainConfig&) const = default;
};

void validate_train_config(const TrainConfig& cfg);

enum class CorpusRole { pretrain, task_train, task_calib, task_test };

struct Corpus {
    std::vector<std::vector<int>> sequences;
    int vocab_size = 0;
    CorpusRole role = CorpusRole::pretrain;

    std::size_t token_positions() const;
};

void validate_corpus(const Corpus& corpus);

// ============================================================================
// Model operations
// ============================================================================

// Next-token logits for the last `order` ids of `context` (begin-padded).
// Throws std::out_of_range on ids outside [0, vocab_size).
LogitVector next_logits(const NGramSoftmaxLM& model, std::span<const int> context);

// Full-batch gradient descent on the mean NLL. The row gradient is
// (softmax(row) - one_hot(target)) accumulated per context occurrence,
// divided by the total position count, plus l2 * row.
// Returns the NLL trace: entry 0 before any update, entry e after epoch e.
std::vector<double> train(NGramSoftmaxLM& model, const Corpus& corpus,
                          const TrainConfig& cfg);

// Mean over all corpus positions of -ln P(y_t | context).
double sequence_nll(const NGramSoftmaxLM& model, const Corpus& corpus);

// ============================================================================
// Synthetic tasks
// ============================================================================

struct SyntheticTaskOptions {
    int pretrain_sequences = 200;
    int task_sequences = 120;  // split 80/20 into task_train / task_calib
    int test_sequences = 40;
    int sequence_length = 16;
    double base_scale = 0.5;  // stddev of the pretrain chain logits
    double sharpen = 25.0;    // task chain logit temperature multiplier
    int shift = 1;            // task chain rotates target ids by this amount
    int lead_tokens = 4;      // task sequences open with this many pretrain-chain tokens

    bool operator==(const SyntheticTaskOptions&) const = default;
};

struct SyntheticTask {
    Corpus pretrain;
    Corpus task_train;
    Corpus task_calib;
    Corpus task_test;
};

// Ground-truth generator chains. The pretrain chain has broad random rows;
// the task chain shares the vocabulary with targets sharpened and rotated.
// With sharpen = 1 and shift = 0 the two chains are identical.
std::pair<NGramSoftmaxLM, NGramSoftmaxLM> make_task_chains(std::uint64_t seed,
                                                           int vocab_size, int order,
                                                           const SyntheticTaskOptions& opts = {});

// Ancestral sampling from a generator chain.
std::vector<std::vector<int>> sample_sequences(const NGramSoftmaxLM& chain, int n_sequences,
                                               int sequence_length, Rng& rng);

// Pretrain corpus from the broad chain. Task sequences open with
// lead_tokens drawn from the broad chain (distinct stochastic prefixes) and
// continue from the sharpened task chain; they are sampled as one
// duplicate-free pool, shuffled, and split 80/20 into train/calib with a
// disjoint test set. Fully determined by the seed.
SyntheticTask make_synthetic_task(std::uint64_t seed, int vocab_size, int order,
                                  const SyntheticTaskOptions& opts = {});

// ============================================================================
// Artifact I/O
// ============================================================================
//
// Model file (binary, little-endian):
//   offset 0   magic "NGLM" (4 bytes)
//   offset 4   u32 format version (currently 1)
//   offset 8   u32 vocab_size
//   offset 12  u32 order
//   offset 16  u64 FNV-1a checksum of the payload bytes
//   offset 24  payload: (vocab_size+1)^order * vocab_size IEEE-754 doubles
//
// Corpus file: text, one sequence of space-separated token ids per line.

void save_model(const NGramSoftmaxLM& model, const std::string& path);
NGramSoftmaxLM load_model(const std::string& path);

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path, int vocab_size, CorpusRole role);

}  // namespace steerdec
