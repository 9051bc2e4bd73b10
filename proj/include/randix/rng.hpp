#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace randix {

/// Counter-based substreams: the generator for draw `index` of stream `stream`
/// depends only on (seed, stream, index), so a Monte Carlo draw yields the same
/// numbers no matter which thread evaluates it.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform integer on [0, n); n > 0. Portable (no std distribution objects).
  std::size_t below(std::size_t n);

  /// Standard normal via Box-Muller (one value per call).
  double normal();

 private:
  std::mt19937_64 engine_;
};

std::uint64_t mix64(std::uint64_t x);

// Stream identifiers keep independent consumers of one seed apart.
namespace streams {
inline constexpr std::uint64_t assignment = 1;
inline constexpr std::uint64_t bootstrap = 2;
inline constexpr std::uint64_t focal = 3;
inline constexpr std::uint64_t split = 4;
inline constexpr std::uint64_t simulation = 5;
}  // namespace streams

}  // namespace randix
