#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wbk/grid.hpp"
#include "wbk/weakbox.hpp"

namespace wbk {

enum class ShapeFamily { Ellipse, FusedEllipses, Annulus };

const char* to_string(ShapeFamily f);
ShapeFamily parse_shape_family(const std::string& s);

struct DatasetSpec {
  int count = 200;
  int first = 0;  // index of the first sample; held-out sets continue the stream
  int size = 64;
  int min_objects = 1;
  int max_objects = 1;
  ShapeFamily family = ShapeFamily::Ellipse;
  float noise = 0.3f;
  std::uint64_t seed = 42;

  void validate() const;
  friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct Sample {
  Grid image;     // intensities in [0, 1]
  Grid gt_mask;   // binary
  BoxMask weak_box;
  std::uint64_t seed = 0;
  int n_objects = 1;
};

inline constexpr float kMinForeground = 0.02f;
inline constexpr float kMaxForeground = 0.6f;

// Union of randomized soft shapes thresholded to {0,1}. With several objects
// they are kept at least 2 px apart (Chebyshev); two objects are placed in
// opposite half-planes. Throws Error(Data) when placement keeps failing.
Grid gen_blob_mask(std::uint64_t seed, int size, int n_objects,
                   ShapeFamily family = ShapeFamily::Ellipse);

// 0.7 foreground / 0.3 background plus smoothed uniform noise in
// [-noise, noise], clamped to [0, 1].
Grid render_image(const Grid& mask, std::uint64_t seed, float noise);

// Sample `index` (absolute, ignoring spec.first) of the stream described by
// `spec`.
Sample make_sample(const DatasetSpec& spec, int index);
// Samples spec.first .. spec.first + spec.count - 1.
std::vector<Sample> generate_dataset(const DatasetSpec& spec);

// images/NNNN.pgm, masks/NNNN.pgm and spec.cfg under `dir`.
void write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec,
                   const std::vector<Sample>& samples);
struct LoadedDataset {
  DatasetSpec spec;
  std::vector<Sample> samples;
};
LoadedDataset read_dataset(const std::filesystem::path& dir);

std::string format_spec(const DatasetSpec& spec);
DatasetSpec parse_spec(const std::string& text);

}  // namespace wbk
