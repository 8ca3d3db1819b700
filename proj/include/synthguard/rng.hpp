#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace synthguard {

// splitmix64 finalizer; used to derive independent stream keys from a base
// seed plus structural labels (stage name, row index, chunk index, ...).
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t label_key(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_key(std::uint64_t seed) { return mix64(seed); }

template <typename... Rest>
constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t label,
                                   Rest... rest);
template <typename... Rest>
constexpr std::uint64_t derive_key(std::uint64_t seed, std::string_view label,
                                   Rest... rest);

template <typename... Rest>
constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t label,
                                   Rest... rest) {
  return derive_key(mix64(seed ^ mix64(label)), rest...);
}

template <typename... Rest>
constexpr std::uint64_t derive_key(std::uint64_t seed, std::string_view label,
                                   Rest... rest) {
  return derive_key(seed, label_key(label), rest...);
}

// Deterministic random stream. mt19937_64 output is fully specified by the
// standard; the uniform/normal transforms below avoid std::*_distribution,
// whose algorithms are implementation-defined, so a given key yields the
// same draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : eng_(key) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer on [0, bound).
  std::uint64_t uniform_int(std::uint64_t bound) {
    const std::uint64_t threshold = (-bound) % bound;  // 2^64 mod bound
    for (;;) {
      const std::uint64_t r = eng_();
      if (r >= threshold) return r % bound;
    }
  }

  // Standard normal via the polar method.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace synthguard
