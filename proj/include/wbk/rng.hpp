#pragma once

#include <cstdint>

namespace wbk {

// Counter-based generator: output k of a stream is a pure function of
// (key, k), so streams can be split by (seed, index, stream id) and resumed
// from a saved counter.
class CounterRng {
 public:
  CounterRng() = default;
  CounterRng(std::uint64_t key, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  // Key for the (seed, index, stream) triple.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index, std::uint64_t stream);
  static CounterRng split(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
    return CounterRng(derive(seed, index, stream));
  }

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 24 bits of precision.
  float uniform();
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint32_t below(std::uint32_t n);
  double uniform_double();
  float normal();

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

// Stream ids used across the project.
namespace stream {
inline constexpr std::uint64_t kMask = 1;
inline constexpr std::uint64_t kImage = 2;
inline constexpr std::uint64_t kObjects = 3;
inline constexpr std::uint64_t kInit = 10;
inline constexpr std::uint64_t kShuffle = 11;
inline constexpr std::uint64_t kAugment = 12;
inline constexpr std::uint64_t kDegrade = 13;
inline constexpr std::uint64_t kLabelSubset = 14;
inline constexpr std::uint64_t kGradcheck = 20;
}  // namespace stream

}  // namespace wbk
