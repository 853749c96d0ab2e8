#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace wbk {

// Dense row-major 2-D float array. Carries masks, probability maps and
// single feature channels.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<float> data;

  Grid() = default;
  Grid(int h, int w, float fill = 0.0f);
  Grid(int h, int w, std::initializer_list<float> values);
  Grid(int h, int w, std::vector<float> values);

  std::size_t size() const noexcept { return data.size(); }
  bool empty() const noexcept { return data.empty(); }

  float& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  float at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }

  bool same_shape(const Grid& other) const noexcept {
    return height == other.height && width == other.width;
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

// 1[g >= threshold] elementwise.
Grid threshold_grid(const Grid& g, float threshold);

}  // namespace wbk
