#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace zsmt {

constexpr uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

constexpr uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Counter-based generator: draw i is a pure function of (key, i), so streams
// are seekable and independent streams never share state. Every stochastic
// component takes an explicit Rng keyed by (seed, stream label).
class Rng {
 public:
  Rng(uint64_t seed, std::string_view stream)
      : key_(mix64(mix64(seed ^ 0x9e3779b97f4a7c15ull) ^ fnv1a64(stream))) {}
  explicit Rng(uint64_t key) : key_(key) {}

  uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  // [0,1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

  float next_gaussian() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                              std::cos(6.283185307179586 * u2));
  }

  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  // Derived stream with an independent key; does not advance this stream.
  Rng fork(std::string_view label) const { return Rng(mix64(key_ ^ fnv1a64(label))); }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<size_t>(rng.next_below(i))]);
  }
}

}  // namespace zsmt
