// Seeded random streams. Every stochastic operation in the library draws from
// a named substream of one global seed so runs are reproducible end to end.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace btgan {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent seed for a named component of a run.
inline std::uint64_t substream_seed(std::uint64_t global_seed, std::string_view name) {
  return splitmix64(global_seed ^ fnv1a64(name));
}

// Stateless uniform in [0,1) from a (seed, ordinal) pair. Used where decisions
// must be indexed by item ordinal instead of consumed from a shared stream.
inline double indexed_uniform(std::uint64_t seed, std::uint64_t ordinal) {
  const std::uint64_t bits = splitmix64(splitmix64(seed) ^ (ordinal + 1));
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return gen_(); }

  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without cached spare so stream position does not depend on
  // call parity.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  double gumbel() {
    double u = uniform();
    while (u <= 0.0) u = uniform();
    return -std::log(-std::log(u));
  }

  // Index in [0, n).
  std::size_t uniform_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  int bernoulli(double p) { return uniform() < p ? 1 : 0; }

  // Draws an index with the given (not necessarily normalized) weights.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      u -= weights[i];
      if (u < 0.0) return i;
    }
    return weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_index(i)]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    shuffle(idx);
    return idx;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace btgan
