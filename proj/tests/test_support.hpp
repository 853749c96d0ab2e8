#pragma once

#include <cstdint>

#include "wbk/grid.hpp"
#include "wbk/rng.hpp"

namespace wbk::testing {

// Binary mask with each pixel set with probability `density`.
inline Grid random_binary(CounterRng& rng, int h, int w, float density) {
  Grid g(h, w);
  for (float& v : g.data) v = rng.uniform() < density ? 1.0f : 0.0f;
  return g;
}

// Soft mask with values in [0, 1].
inline Grid random_soft(CounterRng& rng, int h, int w) {
  Grid g(h, w);
  for (float& v : g.data) v = rng.uniform();
  return g;
}

inline int random_dim(CounterRng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint32_t>(hi - lo + 1)));
}

}  // namespace wbk::testing
