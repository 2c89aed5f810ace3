#pragma once

// Shared helpers for the steerdec test suites: deterministic random
// distributions, scratch directories and file fingerprints.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "steerdec/dist.hpp"

namespace testutil {

// Random point on the simplex via softmax of bounded logits. The bound keeps
// every entry well above the 1e-9 clip floor (|V| <= 64, range 12 => min
// entry >= e^-12/64 ~ 9.6e-8).
inline steerdec::ProbVector random_simplex(steerdec::Rng& rng, std::size_t n,
                                           double logit_range = 6.0) {
    std::vector<double> z(n);
    for (double& v : z) {
        v = -logit_range + 2.0 * logit_range * steerdec::uniform01(rng);
    }
    return steerdec::softmax(steerdec::LogitVector{std::move(z)});
}

inline steerdec::LogitVector random_logits(steerdec::Rng& rng, std::size_t n,
                                           double range = 4.0) {
    std::vector<double> z(n);
    for (double& v : z) {
        v = -range + 2.0 * range * steerdec::uniform01(rng);
    }
    return steerdec::LogitVector{std::move(z)};
}

// Scratch directory, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("steerdec_test_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path_.string(); }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

  private:
    std::filesystem::path path_;
};

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace testutil
