#pragma once

// Counter-seeded random streams.
//
// Every stream is a std::mt19937_64 (whose output sequence is fixed by the C++
// standard) seeded with splitmix64 applied over a key such as (seed, epoch, batch).
// Conversions to doubles, shuffles and Gaussian draws are implemented here rather
// than through <random> distributions, whose algorithms vary between standard
// libraries, so a key produces the same stream on every platform.

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace ultrasnn {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Folds the key words into one 64-bit seed.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> key) noexcept;

// Stream tags used as the first key word so unrelated consumers never share a stream.
enum class Stream : std::uint64_t {
  Init = 1,
  Shuffle = 2,
  TrainEncoding = 3,
  TestEncoding = 4,
  Blobs = 5,
  Analysis = 6,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> key) : engine_(derive_seed(seed, key)) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased. n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one draw per call, the pair partner is cached).
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ultrasnn
