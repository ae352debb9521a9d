#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

namespace charphish {

// Deterministic RNG. std::mt19937_64 has a fully specified output sequence;
// the distribution mappings below are explicit so streams never depend on
// the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next() { return gen_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t below(uint64_t n) { return next() % n; }

  // Fisher-Yates with explicit draws.
  template <typename V>
  void shuffle(V& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Derives an independent stream seed from a base seed and a tag (FNV-1a mix).
inline uint64_t derive_seed(uint64_t base, std::string_view tag) {
  uint64_t h = 14695981039346656037ull ^ base;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  h ^= base >> 32;
  h *= 1099511628211ull;
  return h;
}

}  // namespace charphish
