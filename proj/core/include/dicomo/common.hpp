#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace dicomo {

/// Bad input: out-of-range indices, shape mismatches, malformed config.
/// The CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure while doing otherwise valid work (I/O, numerical blow-up).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

/// Deterministic 64-bit stream split: mixes (seed, stream) with splitmix64 so
/// per-clip and per-module generators never share a sequence.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the raw engine output, so results do not
/// depend on the standard library's distribution implementations.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on uniform01.
double standard_normal(Rng& rng);

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

/// FNV-1a over bytes; used for config hashes and hashed bag-of-words tokens.
std::uint64_t fnv1a64(const std::string& bytes);

std::string hex64(std::uint64_t v);

/// Gradient gate: identity on the forward pass, scales the incoming gradient by
/// `scale` on the backward pass.
torch::Tensor scale_gradient(const torch::Tensor& x, double scale);

}  // namespace dicomo
