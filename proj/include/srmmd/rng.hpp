#pragma once

#include "srmmd/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace srmmd {

/// splitmix64 step; used to derive independent sub-stream seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives the seed of a labeled sub-stream (particles, probes, noise, ...) so that
/// each component of an experiment is reproducible on its own.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the label
  for (char c : label) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  std::uint64_t state = master ^ h;
  return splitmix64(state);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view label, std::uint64_t index) {
  std::uint64_t state = derive_seed(master, label) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return splitmix64(state);
}

/// Deterministic random stream. Gaussian draws go through an explicit Box-Muller
/// transform instead of std::normal_distribution, whose output is
/// implementation-defined; this keeps artifacts byte-identical across toolchains.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1]; safe as a log argument.
  double uniform_open() { return 1.0 - uniform(); }

  double normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Unbiased integer in [0, n) by rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = gen_();
    while (v >= limit) v = gen_();
    return v % n;
  }

  Vector normal_vector(Index d) {
    Vector v(d);
    for (Index i = 0; i < d; ++i) v[i] = normal();
    return v;
  }

  /// Row-major fill so that the draw order matches "one particle at a time".
  Matrix normal_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  /// Sampling without replacement: the first k entries of a partial Fisher-Yates shuffle.
  std::vector<Index> sample_without_replacement(Index population, Index k) {
    std::vector<Index> idx(population);
    for (Index i = 0; i < population; ++i) idx[i] = i;
    for (Index i = 0; i < k; ++i) {
      const Index j = i + static_cast<Index>(uniform_below(static_cast<std::uint64_t>(population - i)));
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace srmmd
