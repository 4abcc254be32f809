#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sonovote {

// All randomness in the library flows through DetRng so that every stream is
// a documented, platform-independent function of explicit seeds. std::mt19937_64
// output is fully specified by the standard; the distribution helpers below are
// hand-rolled because the std distributions are implementation-defined.

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += kGolden);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Folds any number of 64-bit values into one seed. Order-sensitive.
template <class... Args>
std::uint64_t mix_seed(std::uint64_t seed, Args... streams) {
  std::uint64_t s = seed;
  std::uint64_t out = splitmix64(s);
  ((s += kGolden * static_cast<std::uint64_t>(streams), out ^= splitmix64(s)),
   ...);
  return out;
}

inline std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [lo, hi); returns lo when lo == hi.
  double uniform(double lo, double hi) {
    const double u = (next_u64() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

  double unit() { return uniform(0.0, 1.0); }

  // Unbiased integer in [0, n) via Lemire's method.
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * n;
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller, one draw per call, deterministic.
    if (have_spare_) {
      have_spare_ = false;
      return mean + stddev * spare_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = unit();
    const double u2 = unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double two_pi = 6.283185307179586476925286766559;
    spare_ = r * std::sin(two_pi * u2);
    have_spare_ = true;
    return mean + stddev * r * std::cos(two_pi * u2);
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sonovote
