#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace fairpg {

// Mixes a 64-bit value (SplitMix64 finalizer). Used to derive substream seeds.
std::uint64_t mix64(std::uint64_t x);

// Derives a child seed from a parent seed and a key; order of keys matters.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

// Single-owner explicit-state generator. The engine is std::mt19937_64, whose
// output sequence is fixed by the C++ standard; every transform on top of it is
// implemented here (never std::*_distribution) so draws match across platforms.
class SeededRng {
 public:
  static constexpr std::string_view kAlgorithmId = "mt19937_64/u53/boxmuller-v1";

  explicit SeededRng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  // Uniform integer in [0, n). Requires n > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  // Standard normal via Box-Muller (one draw consumes two uniforms).
  double normal();

  // Exponential(1), i.e. Gamma(1).
  double exponential();

  // Index drawn with probability proportional to `weights` (non-negative, not all 0).
  std::size_t categorical(std::span<const double> weights);

  // Fresh generator seeded from (seed, key); independent of this one's state.
  SeededRng substream(std::uint64_t key) const { return SeededRng(derive_seed(seed_, key)); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace fairpg
