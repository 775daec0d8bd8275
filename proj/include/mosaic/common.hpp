#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mosaic {

/// Invalid configuration or usage; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (missing columns, shape mismatch, empty class).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A computation failed at runtime (non-finite loss, solver breakdown); exit code 3.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; decorrelates (seed, stream) pairs into independent RNG seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(mix_seed(seed, stream));
}

/// Uniform double in [0, 1) with 53 random bits; independent of the standard
/// library's distribution implementation.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  return static_cast<std::uint64_t>(uniform01(rng) * static_cast<double>(n));
}

/// In-place Fisher-Yates shuffle driven by uniform_index.
template <typename T>
void shuffle(std::vector<T>& values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(values[i - 1], values[j]);
  }
}

/// Standard normal via Box-Muller on uniform01.
double standard_normal(Rng& rng);

/// Logging that does not expose the formatting library, so translation units
/// that include LibTorch (which bundles its own fmt) can still log.
void log_info(const std::string& message);
void log_warn(const std::string& message);

/// Hex-encoded content hash (FNV-1a 64) of a byte string; used for provenance.
std::string content_hash(const std::string& bytes);

}  // namespace mosaic
