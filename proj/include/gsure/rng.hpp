#pragma once

#include <cstdint>
#include <random>

namespace gsure {

// Seeded generator. There is no entropy fallback: every stream is derived
// from an explicit 64-bit seed so that all results are reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [lo, hi].
  long uniform_int(long lo, long hi) {
    return std::uniform_int_distribution<long>(lo, hi)(engine_);
  }
  double rademacher() { return bernoulli(0.5) ? 1.0 : -1.0; }

  std::mt19937_64& engine() { return engine_; }

  // splitmix64 mix of (seed, stream); used to give every batch item, chunk
  // and trajectory its own independent generator.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace gsure
