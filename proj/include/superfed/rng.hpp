#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <utility>

namespace superfed {

// SplitMix64 finalizer. Used to hash (root seed, key...) tuples into
// independent sub-stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root,
                                    std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = splitmix64(root);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k));
  return h;
}

// Stream tags keep sub-streams of one root seed apart.
namespace stream {
inline constexpr std::uint64_t kPopulation = 0x706f70;   // per-device data
inline constexpr std::uint64_t kSplit = 0x73706c;        // train/test split
inline constexpr std::uint64_t kSampling = 0x736d70;     // S_t draws
inline constexpr std::uint64_t kLocal = 0x6c6f63;        // LocalUpdate
inline constexpr std::uint64_t kMasks = 0x6d736b;        // pairwise masks
inline constexpr std::uint64_t kInit = 0x696e69;         // model init
}  // namespace stream

// MT19937-64 engine with portable transforms. std::*_distribution output is
// implementation-defined, so uniform/normal/integer draws are done here to
// keep generated data bitwise stable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer on [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  // Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace superfed
