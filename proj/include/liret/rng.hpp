// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace liret {

// FNV-1a over a name, used to derive independent substreams from one seed.
constexpr uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

constexpr uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seeded generator with named substreams. All distributions are hand-rolled
// on top of mt19937_64 so that streams are reproducible across standard
// library implementations (std::uniform_int_distribution and
// std::normal_distribution are not pinned by the standard).
class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  // Derive an independent stream. Streams do not advance the parent.
  Rng stream(std::string_view name) const { return Rng(splitmix64(seed_ ^ fnv1a(name))); }
  Rng stream(std::string_view name, uint64_t index) const {
    return Rng(splitmix64(splitmix64(seed_ ^ fnv1a(name)) + 0x9e3779b97f4a7c15ull * (index + 1)));
  }

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi], inclusive. Rejection sampling, no modulo bias.
  int uniform_int(int lo, int hi) {
    const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    const uint64_t reject_above = UINT64_MAX - UINT64_MAX % range;
    uint64_t x = next_u64();
    while (x >= reject_above) x = next_u64();
    return lo + static_cast<int>(x % range);
  }

  // Standard normal via Box-Muller. The spare of each generated pair is
  // cached, so a single stream yields a fixed sequence regardless of caller.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace liret
