#include "steerdec/toymodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace steerdec {

namespace {

// ---- little-endian primitives --------------------------------------------

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_u64(out, bits);
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | p[i];
    }
    return v;
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) {
        v = (v << 8) | p[i];
    }
    return v;
}

double get_f64(const unsigned char* p) {
    const std::uint64_t bits = get_u64(p);
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

constexpr char k_model_magic[4] = {'N', 'G', 'L', 'M'};
constexpr std::size_t k_model_header_bytes = 24;

void check_supported_size(int vocab_size, int order) {
    if (vocab_size < 2 || vocab_size > k_max_vocab_size) {
        throw std::invalid_argument("vocab_size must be in [2, " +
                                    std::to_string(k_max_vocab_size) + "]");
    }
    if (order < 1 || order > k_max_order) {
        throw std::invalid_argument("order must be in [1, " + std::to_string(k_max_order) + "]");
    }
}

}  // namespace

// ============================================================================
// Model basics
// ============================================================================

std::size_t NGramSoftmaxLM::n_contexts() const {
    std::size_t n = 1;
    for (int i = 0; i < order; ++i) {
        n *= static_cast<std::size_t>(vocab_size + 1);
    }
    return n;
}

std::size_t NGramSoftmaxLM::context_row(std::span<const int> padded_context) const {
    std::size_t idx = 0;
    for (int id : padded_context) {
        idx = idx * static_cast<std::size_t>(vocab_size + 1) + static_cast<std::size_t>(id);
    }
    return idx;
}

NGramSoftmaxLM make_ngram_lm(int vocab_size, int order) {
    check_supported_size(vocab_size, order);
    NGramSoftmaxLM model;
    model.order = order;
    model.vocab_size = vocab_size;
    model.logit_table.assign(model.n_contexts() * static_cast<std::size_t>(vocab_size), 0.0);
    return model;
}

void validate_train_config(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
        throw config_error("learning_rate must be finite and > 0");
    }
    if (cfg.epochs < 1) {
        throw config_error("epochs must be >= 1");
    }
    if (!(cfg.l2 >= 0.0)) {
        throw config_error("l2 must be >= 0");
    }
}

std::size_t Corpus::token_positions() const {
    std::size_t n = 0;
    for (const auto& seq : sequences) {
        n += seq.size();
    }
    return n;
}

void validate_corpus(const Corpus& corpus) {
    if (corpus.sequences.empty() || corpus.token_positions() == 0) {
        throw std::invalid_argument("corpus must contain at least one token");
    }
    for (const auto& seq : corpus.sequences) {
        for (int id : seq) {
            if (id < 0 || id >= corpus.vocab_size) {
                throw std::out_of_range("corpus token id " + std::to_string(id) +
                                        " outside vocabulary of size " +
                                        std::to_string(corpus.vocab_size));
            }
        }
    }
}

// ============================================================================
// Queries and training
// ============================================================================

namespace {

// Padded context (exactly model.order ids) for position t of a sequence.
void fill_padded_context(const NGramSoftmaxLM& model, std::span<const int> tokens,
                         std::size_t position, std::vector<int>& ctx) {
    ctx.assign(static_cast<std::size_t>(model.order), model.begin_token());
    const std::size_t take = std::min(position, static_cast<std::size_t>(model.order));
    for (std::size_t j = 0; j < take; ++j) {
        ctx[ctx.size() - take + j] = tokens[position - take + j];
    }
}

ProbVector row_softmax(const NGramSoftmaxLM& model, std::size_t row) {
    const std::size_t base = row * static_cast<std::size_t>(model.vocab_size);
    LogitVector z;
    z.z.assign(model.logit_table.begin() + static_cast<std::ptrdiff_t>(base),
               model.logit_table.begin() +
                   static_cast<std::ptrdiff_t>(base + static_cast<std::size_t>(model.vocab_size)));
    return softmax(z);
}

}  // namespace

LogitVector next_logits(const NGramSoftmaxLM& model, std::span<const int> context) {
    for (int id : context) {
        if (id < 0 || id >= model.vocab_size) {
            throw std::out_of_range("context token id " + std::to_string(id) +
                                    " outside vocabulary of size " +
                                    std::to_string(model.vocab_size));
        }
    }
    std::vector<int> ctx(static_cast<std::size_t>(model.order), model.begin_token());
    const std::size_t take =
        std::min(context.size(), static_cast<std::size_t>(model.order));
    for (std::size_t j = 0; j < take; ++j) {
        ctx[ctx.size() - take + j] = context[context.size() - take + j];
    }
    const std::size_t base =
        model.context_row(ctx) * static_cast<std::size_t>(model.vocab_size);
    LogitVector z;
    z.z.assign(model.logit_table.begin() + static_cast<std::ptrdiff_t>(base),
               model.logit_table.begin() +
                   static_cast<std::ptrdiff_t>(base + static_cast<std::size_t>(model.vocab_size)));
    return z;
}

std::vector<double> train(NGramSoftmaxLM& model, const Corpus& corpus, const TrainConfig& cfg) {
    // Looser than validate_train_config: a zero learning rate is a legal
    // zero-step run here, the config schema is where > 0 is enforced.
    if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate) || cfg.epochs < 1 ||
        !(cfg.l2 >= 0.0)) {
        throw std::invalid_argument("train: invalid training parameters");
    }
    validate_corpus(corpus);
    if (corpus.vocab_size != model.vocab_size) {
        throw std::invalid_argument("train: corpus/model vocabulary mismatch");
    }

    const std::size_t v = static_cast<std::size_t>(model.vocab_size);
    const double n_positions = static_cast<double>(corpus.token_positions());

    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.epochs) + 1);
    trace.push_back(sequence_nll(model, corpus));

    std::vector<double> grad(model.logit_table.size());
    std::vector<int> ctx;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& seq : corpus.sequences) {
            for (std::size_t t = 0; t < seq.size(); ++t) {
                fill_padded_context(model, seq, t, ctx);
                const std::size_t row = model.context_row(ctx);
                const std::size_t base = row * v;
                const ProbVector p = row_softmax(model, row);
                for (std::size_t i = 0; i < v; ++i) {
                    grad[base + i] += p.p[i] / n_positions;
                }
                grad[base + static_cast<std::size_t>(seq[t])] -= 1.0 / n_positions;
            }
        }
        if (cfg.l2 > 0.0) {
            for (std::size_t i = 0; i < grad.size(); ++i) {
                grad[i] += cfg.l2 * model.logit_table[i];
            }
        }
        for (std::size_t i = 0; i < grad.size(); ++i) {
            model.logit_table[i] -= cfg.learning_rate * grad[i];
        }
        trace.push_back(sequence_nll(model, corpus));
    }
    return trace;
}

double sequence_nll(const NGramSoftmaxLM& model, const Corpus& corpus) {
    validate_corpus(corpus);
    if (corpus.vocab_size != model.vocab_size) {
        throw std::invalid_argument("sequence_nll: corpus/model vocabulary mismatch");
    }
    double total = 0.0;
    std::size_t count = 0;
    std::vector<int> ctx;
    for (const auto& seq : corpus.sequences) {
        for (std::size_t t = 0; t < seq.size(); ++t) {
            fill_padded_context(model, seq, t, ctx);
            const ProbVector p = row_softmax(model, model.context_row(ctx));
            total += -std::log(p.p[static_cast<std::size_t>(seq[t])]);
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

// ============================================================================
// Synthetic tasks
// ============================================================================

std::pair<NGramSoftmaxLM, NGramSoftmaxLM> make_task_chains(std::uint64_t seed, int vocab_size,
                                                           int order,
                                                           const SyntheticTaskOptions& opts) {
    NGramSoftmaxLM pretrain = make_ngram_lm(vocab_size, order);
    Rng rng(seed);
    for (double& v : pretrain.logit_table) {
        v = opts.base_scale * gaussian(rng);
    }

    // Task rows: rotate target ids by `shift` and sharpen by `sharpen`.
    NGramSoftmaxLM task = make_ngram_lm(vocab_size, order);
    const std::size_t vs = static_cast<std::size_t>(vocab_size);
    const std::size_t shift =
        static_cast<std::size_t>(((opts.shift % vocab_size) + vocab_size) % vocab_size);
    for (std::size_t row = 0; row < pretrain.n_contexts(); ++row) {
        const std::size_t base = row * vs;
        for (std::size_t i = 0; i < vs; ++i) {
            const std::size_t src = (i + vs - shift) % vs;
            task.logit_table[base + i] = opts.sharpen * pretrain.logit_table[base + src];
        }
    }
    return {std::move(pretrain), std::move(task)};
}

namespace {

int sample_next(const NGramSoftmaxLM& chain, std::span<const int> context, Rng& rng) {
    const ProbVector p = softmax(next_logits(chain, context));
    const double u = uniform01(rng);
    double cum = 0.0;
    for (int i = 0; i < chain.vocab_size; ++i) {
        cum += p.p[static_cast<std::size_t>(i)];
        if (u < cum) {
            return i;
        }
    }
    return chain.vocab_size - 1;
}

}  // namespace

std::vector<std::vector<int>> sample_sequences(const NGramSoftmaxLM& chain, int n_sequences,
                                               int sequence_length, Rng& rng) {
    std::vector<std::vector<int>> out;
    out.reserve(static_cast<std::size_t>(n_sequences));
    for (int s = 0; s < n_sequences; ++s) {
        std::vector<int> seq;
        seq.reserve(static_cast<std::size_t>(sequence_length));
        for (int t = 0; t < sequence_length; ++t) {
            seq.push_back(sample_next(chain, seq, rng));
        }
        out.push_back(std::move(seq));
    }
    return out;
}

SyntheticTask make_synthetic_task(std::uint64_t seed, int vocab_size, int order,
                                  const SyntheticTaskOptions& opts) {
    if (opts.pretrain_sequences < 1 || opts.task_sequences < 2 || opts.test_sequences < 1 ||
        opts.sequence_length < 1 || opts.lead_tokens < 0) {
        throw config_error("synthetic task sizes must be positive (task_sequences >= 2)");
    }
    auto [pretrain_chain, task_chain] = make_task_chains(seed, vocab_size, order, opts);

    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    SyntheticTask task;
    task.pretrain.vocab_size = vocab_size;
    task.pretrain.role = CorpusRole::pretrain;
    task.pretrain.sequences =
        sample_sequences(pretrain_chain, opts.pretrain_sequences, opts.sequence_length, rng);

    // Duplicate-free task pool so the train/calib/test splits stay disjoint.
    // Task sequences open with a stochastic lead from the broad chain and
    // continue from the sharpened chain.
    const int lead = std::min(opts.lead_tokens, opts.sequence_length);
    const int n_pool = opts.task_sequences + opts.test_sequences;
    std::set<std::vector<int>> seen;
    std::vector<std::vector<int>> pool;
    int attempts = 0;
    const int max_attempts = 200 * n_pool + 1000;
    while (static_cast<int>(pool.size()) < n_pool && attempts < max_attempts) {
        ++attempts;
        std::vector<int> seq;
        seq.reserve(static_cast<std::size_t>(opts.sequence_length));
        for (int t = 0; t < opts.sequence_length; ++t) {
            seq.push_back(sample_next(t < lead ? pretrain_chain : task_chain, seq, rng));
        }
        if (seen.insert(seq).second) {
            pool.push_back(std::move(seq));
        }
    }
    if (static_cast<int>(pool.size()) < n_pool) {
        throw config_error("synthetic task space too small for duplicate-free splits; "
                           "increase vocab_size or sequence_length");
    }

    // Seeded shuffle (Fisher-Yates), then 80/20 train/calib and held-out test.
    for (std::size_t i = pool.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(pool[i - 1], pool[j]);
    }
    const int n_train = std::max(1, (opts.task_sequences * 8) / 10);
    const int n_calib = opts.task_sequences - n_train;
    if (n_calib < 1) {
        throw config_error("task_sequences too small for an 80/20 calibration split");
    }

    auto take = [&pool](int from, int count) {
        return std::vector<std::vector<int>>(pool.begin() + from, pool.begin() + from + count);
    };
    task.task_train = Corpus{take(0, n_train), vocab_size, CorpusRole::task_train};
    task.task_calib = Corpus{take(n_train, n_calib), vocab_size, CorpusRole::task_calib};
    task.task_test =
        Corpus{take(opts.task_sequences, opts.test_sequences), vocab_size, CorpusRole::task_test};
    return task;
}

// ============================================================================
// Artifact I/O
// ============================================================================

void save_model(const NGramSoftmaxLM& model, const std::string& path) {
    std::string payload;
    payload.reserve(model.logit_table.size() * 8);
    for (double v : model.logit_table) {
        put_f64(payload, v);
    }
    const std::uint64_t checksum = fnv1a64(payload.data(), payload.size());

    std::string header;
    header.append(k_model_magic, 4);
    put_u32(header, model.version);
    put_u32(header, static_cast<std::uint32_t>(model.vocab_size));
    put_u32(header, static_cast<std::uint32_t>(model.order));
    put_u64(header, checksum);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw artifact_error("cannot open model file for writing: " + path);
    }
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) {
        throw artifact_error("short write to model file: " + path);
    }
}

NGramSoftmaxLM load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw artifact_error("cannot open model file: " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < k_model_header_bytes) {
        throw artifact_error("model file truncated (header): " + path);
    }
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
    if (std::memcmp(data, k_model_magic, 4) != 0) {
        throw artifact_error("not a model file (bad magic): " + path);
    }
    const std::uint32_t version = get_u32(data + 4);
    if (version != k_model_format_version) {
        throw artifact_error("unsupported model format version " + std::to_string(version) +
                             " (expected " + std::to_string(k_model_format_version) +
                             "): " + path);
    }
    const int vocab_size = static_cast<int>(get_u32(data + 8));
    const int order = static_cast<int>(get_u32(data + 12));
    const std::uint64_t checksum = get_u64(data + 16);

    check_supported_size(vocab_size, order);
    NGramSoftmaxLM model = make_ngram_lm(vocab_size, order);
    const std::size_t expected_payload = model.logit_table.size() * 8;
    if (bytes.size() != k_model_header_bytes + expected_payload) {
        throw artifact_error("model file corrupt (checksum/length mismatch): " + path);
    }
    const unsigned char* payload = data + k_model_header_bytes;
    if (fnv1a64(payload, expected_payload) != checksum) {
        throw artifact_error("model file corrupt (checksum mismatch): " + path);
    }
    for (std::size_t i = 0; i < model.logit_table.size(); ++i) {
        model.logit_table[i] = get_f64(payload + i * 8);
    }
    model.version = version;
    return model;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw artifact_error("cannot open corpus file for writing: " + path);
    }
    for (const auto& seq : corpus.sequences) {
        for (std::size_t i = 0; i < seq.size(); ++i) {
            if (i > 0) {
                out << ' ';
            }
            out << seq[i];
        }
        out << '\n';
    }
    if (!out) {
        throw artifact_error("short write to corpus file: " + path);
    }
}

Corpus load_corpus(const std::string& path, int vocab_size, CorpusRole role) {
    std::ifstream in(path);
    if (!in) {
        throw artifact_error("cannot open corpus file: " + path);
    }
    Corpus corpus;
    corpus.vocab_size = vocab_size;
    corpus.role = role;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::vector<int> seq;
        long long id;
        while (ss >> id) {
            if (id < 0 || id >= vocab_size) {
                throw artifact_error("corpus token id " + std::to_string(id) +
                                     " outside vocabulary of size " + std::to_string(vocab_size) +
                                     ": " + path);
            }
            seq.push_back(static_cast<int>(id));
        }
        if (!ss.eof()) {
            throw artifact_error("malformed corpus line in " + path + ": '" + line + "'");
        }
        if (!seq.empty()) {
            corpus.sequences.push_back(std::move(seq));
        }
    }
    try {
        validate_corpus(corpus);
    } catch (const std::exception& e) {
        throw artifact_error(std::string("invalid corpus ") + path + ": " + e.what());
    }
    return corpus;
}

}  // namespace steerdec
