#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace steerdec {

// ============================================================================
// Masked-logit sentinel
// ============================================================================

// Hard-masked logit entries carry this sentinel instead of a finite value.
// It is the only non-finite value a LogitVector or constrained delta may
// hold; softmax maps it to probability exactly 0. Code must branch on
// is_masked() before doing arithmetic with an entry (0 * -inf is NaN).
constexpr double k_masked_logit = -std::numeric_limits<double>::infinity();

inline bool is_masked(double v) {
    return std::isinf(v) && v < 0.0;
}

// ============================================================================
// Error taxonomy (maps onto CLI exit codes)
// ============================================================================

// Bad or inconsistent configuration / schema violations. CLI exit code 2.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing, malformed or corrupt on-disk artifacts. CLI exit code 3.
struct artifact_error : std::runtime_error {
    explicit artifact_error(const std::string& msg) : std::runtime_error(msg) {}
};

// ============================================================================
// Deterministic random helpers
// ============================================================================
// std::uniform_real_distribution and friends are implementation-defined, so
// frozen test values and cross-platform reproducibility require explicit
// constructions on top of the mt19937_64 bit stream.

using Rng = std::mt19937_64;

// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Modulo bias is irrelevant at desk scale.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    return rng() % n;
}

// Standard normal via Box-Muller (no cached spare, fixed draw count).
inline double gaussian(Rng& rng) {
    const double u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// ============================================================================
// FNV-1a 64-bit checksum (model files, split fingerprints)
// ============================================================================

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace steerdec
