#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace shapeup {

// Deterministic, platform-independent RNG (xoshiro256** seeded via splitmix64).
// std::mt19937 + distributions are implementation-defined across stdlibs, so we
// roll the few draws we need by hand.
class Rng {
public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& si : s_) si = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform in [0,1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  int range(int lo, int hi_inclusive) {
    return lo + int(below(std::uint64_t(hi_inclusive - lo + 1)));
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0, u2 = 0.0;
    do { u1 = uniform(); } while (u1 <= 1e-300);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stable FNV-1a sub-seed so components draw from independent streams.
inline std::uint64_t sub_seed(std::uint64_t seed, std::string_view component) {
  std::uint64_t h = 14695981039346656037ULL;
  auto mix = [&h](unsigned char b) { h ^= b; h *= 1099511628211ULL; };
  for (int i = 0; i < 8; ++i) mix((unsigned char)(seed >> (8 * i)));
  for (char c : component) mix((unsigned char)c);
  return h;
}

// Halton low-discrepancy point in [0,1)^3; used for fixed token anchors.
inline double halton(int index, int base) {
  double f = 1.0, r = 0.0;
  int i = index + 1;
  while (i > 0) {
    f /= base;
    r += f * (i % base);
    i /= base;
  }
  return r;
}

}  // namespace shapeup
