#include "wbk/rng.hpp"

#include <cmath>

namespace wbk {

std::uint64_t mix64(std::uint64_t x) {
  // SplitMix64 finalizer.
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t CounterRng::derive(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  return mix64(mix64(mix64(seed) ^ index) ^ (stream * 0xD6E8FEB86659FD93ull));
}

std::uint64_t CounterRng::next_u64() {
  const std::uint64_t v = mix64(key_ ^ mix64(counter_));
  ++counter_;
  return v;
}

float CounterRng::uniform() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

double CounterRng::uniform_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint32_t CounterRng::below(std::uint32_t n) {
  return static_cast<std::uint32_t>((next_u64() >> 32) * n >> 32);
}

float CounterRng::normal() {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform_double();
  const double u2 = uniform_double();
  return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2));
}

}  // namespace wbk
