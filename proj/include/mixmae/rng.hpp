#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace mixmae {

// Derives an independent stream seed from a root seed and a path of
// coordinates such as (purpose, epoch, sample index). Pure function, so any
// worker can reproduce the stream for a sample without shared state.
inline std::uint64_t derive_seed(std::uint64_t root,
                                 std::initializer_list<std::uint64_t> path) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  };
  std::uint64_t h = splitmix(root);
  for (std::uint64_t p : path) h = splitmix(h ^ splitmix(p + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream tags for derive_seed, kept in one place so streams never collide.
enum class Stream : std::uint64_t {
  kInit = 1,
  kEpochOrder = 2,
  kAugment = 3,
  kMask = 4,
  kCorrupt = 5,
  kDropPath = 6,
  kSynthetic = 7,
  kProbe = 8,
};

inline std::uint64_t derive_seed(std::uint64_t root, Stream stream,
                                 std::uint64_t a = 0, std::uint64_t b = 0) {
  return derive_seed(root, {static_cast<std::uint64_t>(stream), a, b});
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  // Uniform integer in [0, n).
  std::int64_t below(std::int64_t n) {
    return std::uniform_int_distribution<std::int64_t>(0, n - 1)(engine_);
  }
  bool coin() { return below(2) == 1; }

  template <class T>
  void shuffle(std::span<T> values) {
    std::shuffle(values.begin(), values.end(), engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mixmae
