#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace drew {

/// Seed of a named sub-stream: splitmix64(master ^ fnv1a64(label)).
std::uint64_t stream_seed(std::uint64_t master, std::string_view label);

/// Seeded generator used everywhere randomness is needed. The engine is
/// std::mt19937_64, whose output sequence is fixed by the standard; the
/// distributions layered on top come from the standard library, so exact
/// streams are reproducible per toolchain, not across toolchains.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  static Rng derive(std::uint64_t master, std::string_view label) {
    return Rng(stream_seed(master, label));
  }

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  bool bernoulli(double p) { return std::bernoulli_distribution(p)(engine_); }
  double normal() { return normal_(engine_); }
  std::uint64_t below(std::uint64_t bound) {
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(engine_);
  }
  std::uint32_t bits32() { return static_cast<std::uint32_t>(engine_() >> 32); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace drew
