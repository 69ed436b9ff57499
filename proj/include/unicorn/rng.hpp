#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace unicorn {

// Seeded pseudo-random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; every distribution below is written
// out by hand so draws are identical across standard library implementations.
class Rng {
 public:
  static constexpr std::string_view kAlgorithmId = "mt19937_64/splitmix64-split/v1";

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // Independent child stream. The child seed is splitmix64(seed ^ splitmix64(stream)),
  // so streams for shuffling, dropout and initialization never share state.
  Rng split(std::uint64_t stream) const;
  Rng split(std::string_view stream_name) const;

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }
  // Standard normal via Box-Muller.
  double normal();
  // Normal(0, stddev) resampled until |z| <= 2 stddev.
  double truncated_normal(double stddev);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace unicorn
