#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace dcf {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream purposes. Seeds for different purposes never collide
// even when the user-facing seed is the same small integer.
enum class RngStream : std::uint64_t {
  kModelInit = 1,
  kSplit = 2,
  kNoiseInject = 3,
  kBatch = 4,
  kControlDraw = 5,
  kPlanted = 6,
};

inline std::uint64_t derive_seed(std::uint64_t seed, RngStream stream,
                                 std::uint64_t salt = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ salt);
}

// mt19937_64 with hand-rolled draws. The engine's output sequence is fixed
// by the standard; std::uniform_* distributions are not, so all sampling
// below is implemented directly to keep results reproducible across
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      const std::uint64_t x = engine_();
      if (x >= threshold) return x % n;
    }
  }

  // Uniform in [0, 1).
  double real01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1].
  double real01_open_low() {
    return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
  }

  // Box-Muller, no spare caching: two draws per variate.
  double normal(double mean = 0.0, double stddev = 1.0) {
    const double u1 = real01_open_low();
    const double u2 = real01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dcf
