#include "wbk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wbk/config.hpp"
#include "wbk/error.hpp"
#include "wbk/pgm.hpp"
#include "wbk/rng.hpp"

namespace wbk {

const char* to_string(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::Ellipse: return "ellipse";
    case ShapeFamily::FusedEllipses: return "fused-ellipses";
    case ShapeFamily::Annulus: return "annulus";
  }
  return "ellipse";
}

ShapeFamily parse_shape_family(const std::string& s) {
  if (s == "ellipse") return ShapeFamily::Ellipse;
  if (s == "fused-ellipses") return ShapeFamily::FusedEllipses;
  if (s == "annulus") return ShapeFamily::Annulus;
  throw Error(ErrorKind::Usage, "unknown shape family '" + s + "'");
}

void DatasetSpec::validate() const {
  if (count < 0) throw Error(ErrorKind::Usage, "dataset count must be >= 0");
  if (first < 0) throw Error(ErrorKind::Usage, "dataset first index must be >= 0");
  if (size < 16) throw Error(ErrorKind::Usage, "dataset size must be >= 16");
  if (min_objects < 1 || max_objects < min_objects || max_objects > 4) {
    throw Error(ErrorKind::Usage, "object count range must satisfy 1 <= min <= max <= 4");
  }
  if (noise < 0.0f || noise > 0.5f) throw Error(ErrorKind::Usage, "noise must be in [0, 0.5]");
}

namespace {

struct Ellipse {
  double cy, cx, a, b, theta;
  double wobble_amp, wobble_freq, wobble_phase;

  // Negative inside, 0 on the boundary.
  double level(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double u = ct * dx + st * dy;
    const double v = -st * dx + ct * dy;
    const double ang = std::atan2(v / b, u / a);
    const double r = std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
    return r - (1.0 + wobble_amp * std::sin(wobble_freq * ang + wobble_phase));
  }
};

Ellipse random_ellipse(CounterRng& rng, double cy, double cx, double rmin, double rmax) {
  Ellipse e;
  e.cy = cy;
  e.cx = cx;
  e.a = rng.uniform(static_cast<float>(rmin), static_cast<float>(rmax));
  e.b = e.a * rng.uniform(0.6f, 1.0f);
  e.theta = rng.uniform(0.0f, 3.14159265f);
  e.wobble_amp = rng.uniform(0.0f, 0.12f);
  e.wobble_freq = 2.0 + rng.below(3);
  e.wobble_phase = rng.uniform(0.0f, 6.2831853f);
  return e;
}

// One object rasterized as a binary grid.
Grid render_object(CounterRng& rng, int size, ShapeFamily family, double cy, double cx, double rmin,
                   double rmax) {
  std::vector<Ellipse> parts;
  Ellipse hole{};
  bool has_hole = false;
  parts.push_back(random_ellipse(rng, cy, cx, rmin, rmax));
  if (family == ShapeFamily::FusedEllipses) {
    const int extra = 1 + static_cast<int>(rng.below(2));
    for (int k = 0; k < extra; ++k) {
      const double ang = rng.uniform(0.0f, 6.2831853f);
      const double off = parts[0].a * rng.uniform(0.4f, 0.8f);
      parts.push_back(random_ellipse(rng, cy + off * std::sin(ang), cx + off * std::cos(ang), rmin * 0.6, rmax * 0.7));
    }
  } else if (family == ShapeFamily::Annulus) {
    parts[0].wobble_amp *= 0.3;
    hole = parts[0];
    hole.wobble_amp = 0.0;
    const double f = rng.uniform(0.45f, 0.6f);
    hole.a *= f;
    hole.b *= f;
    has_hole = true;
  }
  Grid g(size, size);
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      bool in = false;
      for (const Ellipse& e : parts) in = in || e.level(i, j) <= 0.0;
      if (in && has_hole && hole.level(i, j) <= 0.0) in = false;
      g.at(i, j) = in ? 1.0f : 0.0f;
    }
  }
  return g;
}

// Chebyshev dilation by `r` pixels.
Grid dilate(const Grid& g, int r) {
  Grid out(g.height, g.width);
  for (int i = 0; i < g.height; ++i) {
    for (int j = 0; j < g.width; ++j) {
      if (g.at(i, j) < 0.5f) continue;
      for (int di = -r; di <= r; ++di) {
        for (int dj = -r; dj <= r; ++dj) {
          const int y = i + di, x = j + dj;
          if (y >= 0 && y < g.height && x >= 0 && x < g.width) out.at(y, x) = 1.0f;
        }
      }
    }
  }
  return out;
}

double fraction(const Grid& g) {
  double s = 0.0;
  for (float v : g.data) s += v;
  return s / static_cast<double>(g.size());
}

bool touches_border(const Grid& g) {
  const int n = g.height;
  for (int k = 0; k < n; ++k) {
    if (g.at(0, k) > 0.5f || g.at(n - 1, k) > 0.5f || g.at(k, 0) > 0.5f || g.at(k, n - 1) > 0.5f) return true;
  }
  return false;
}

}  // namespace

Grid gen_blob_mask(std::uint64_t seed, int size, int n_objects, ShapeFamily family) {
  if (n_objects < 1) throw Error(ErrorKind::Usage, "gen_blob_mask: n_objects must be >= 1");
  if (size < 16) throw Error(ErrorKind::Usage, "gen_blob_mask: size must be >= 16");
  constexpr int kMaxAttempts = 200;
  const double s = size;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    CounterRng rng = CounterRng::split(seed, static_cast<std::uint64_t>(attempt), stream::kMask);
    const double shrink = 1.0 / std::sqrt(static_cast<double>(n_objects));
    const double rmin = 0.13 * s * shrink;
    const double rmax = (n_objects == 1 ? 0.3 : 0.2) * s * shrink;
    std::vector<std::pair<double, double>> centers;
    if (n_objects == 1) {
      centers.emplace_back(rng.uniform(0.35f, 0.65f) * s, rng.uniform(0.35f, 0.65f) * s);
    } else if (n_objects == 2) {
      // Opposite half-planes along a random direction.
      const double ang = rng.uniform(0.0f, 6.2831853f);
      const double dist = rng.uniform(0.22f, 0.3f) * s;
      const double my = s / 2 + rng.uniform(-0.05f, 0.05f) * s;
      const double mx = s / 2 + rng.uniform(-0.05f, 0.05f) * s;
      centers.emplace_back(my + dist * std::sin(ang), mx + dist * std::cos(ang));
      centers.emplace_back(my - dist * std::sin(ang), mx - dist * std::cos(ang));
    } else {
      for (int k = 0; k < n_objects; ++k) {
        centers.emplace_back(rng.uniform(0.2f, 0.8f) * s, rng.uniform(0.2f, 0.8f) * s);
      }
    }
    Grid mask(size, size);
    Grid halo(size, size);
    bool ok = true;
    for (const auto& [cy, cx] : centers) {
      const Grid obj = render_object(rng, size, family, cy, cx, rmin, rmax);
      if (fraction(obj) == 0.0 || touches_border(obj)) {
        ok = false;
        break;
      }
      for (std::size_t k = 0; k < obj.size(); ++k) {
        if (obj.data[k] > 0.5f && halo.data[k] > 0.5f) ok = false;
      }
      if (!ok) break;
      const Grid grown = dilate(obj, 2);
      for (std::size_t k = 0; k < obj.size(); ++k) {
        mask.data[k] = std::max(mask.data[k], obj.data[k]);
        halo.data[k] = std::max(halo.data[k], grown.data[k]);
      }
    }
    if (!ok) continue;
    const double fg = fraction(mask);
    if (fg < kMinForeground || fg > kMaxForeground) continue;
    return mask;
  }
  throw Error(ErrorKind::Data, "gen_blob_mask: could not place objects within constraints");
}

Grid render_image(const Grid& mask, std::uint64_t seed, float noise) {
  if (noise < 0.0f || noise > 0.5f) throw Error(ErrorKind::Usage, "render_image: noise must be in [0, 0.5]");
  CounterRng rng = CounterRng::split(seed, 0, stream::kImage);
  const int h = mask.height, w = mask.width;
  Grid raw(h, w);
  for (float& v : raw.data) v = rng.uniform(-noise, noise);
  // Separable [1 2 1] / 4 smoothing of the noise field, edges replicated.
  auto tap = [](const Grid& g, int i, int j) {
    return g.at(std::clamp(i, 0, g.height - 1), std::clamp(j, 0, g.width - 1));
  };
  Grid tmp(h, w), smooth(h, w);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) tmp.at(i, j) = 0.25f * tap(raw, i, j - 1) + 0.5f * tap(raw, i, j) + 0.25f * tap(raw, i, j + 1);
  }
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) smooth.at(i, j) = 0.25f * tap(tmp, i - 1, j) + 0.5f * tap(tmp, i, j) + 0.25f * tap(tmp, i + 1, j);
  }
  Grid img(h, w);
  for (std::size_t k = 0; k < img.size(); ++k) {
    const float base = mask.data[k] >= 0.5f ? 0.7f : 0.3f;
    img.data[k] = std::clamp(base + smooth.data[k], 0.0f, 1.0f);
  }
  return img;
}

Sample make_sample(const DatasetSpec& spec, int index) {
  CounterRng rng = CounterRng::split(spec.seed, static_cast<std::uint64_t>(index), stream::kObjects);
  const int span = spec.max_objects - spec.min_objects + 1;
  const int n = spec.min_objects + static_cast<int>(rng.below(static_cast<std::uint32_t>(span)));
  const std::uint64_t sample_seed = rng.next_u64();
  Sample s;
  s.seed = sample_seed;
  s.n_objects = n;
  s.gt_mask = gen_blob_mask(sample_seed, spec.size, n, spec.family);
  s.image = render_image(s.gt_mask, sample_seed, spec.noise);
  s.weak_box = gt_mask_to_boxmask(s.gt_mask);
  const double fg = fraction(s.gt_mask);
  if (fg < kMinForeground || fg > kMaxForeground) {
    throw Error(ErrorKind::Data, "generated sample violates the foreground-fraction bounds");
  }
  return s;
}

std::vector<Sample> generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) out.push_back(make_sample(spec, spec.first + i));
  return out;
}

std::string format_spec(const DatasetSpec& spec) {
  std::ostringstream os;
  os << "count = " << spec.count << "\n"
     << "first = " << spec.first << "\n"
     << "size = " << spec.size << "\n"
     << "min_objects = " << spec.min_objects << "\n"
     << "max_objects = " << spec.max_objects << "\n"
     << "family = " << to_string(spec.family) << "\n";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(spec.noise));
  os << "noise = " << buf << "\n"
     << "seed = " << spec.seed << "\n";
  return os.str();
}

DatasetSpec parse_spec(const std::string& text) {
  const KeyValues kv = parse_key_values(text);
  DatasetSpec spec;
  for (const auto& [key, value] : kv) {
    if (key == "count") spec.count = parse_int(key, value);
    else if (key == "first") spec.first = parse_int(key, value);
    else if (key == "size") spec.size = parse_int(key, value);
    else if (key == "min_objects") spec.min_objects = parse_int(key, value);
    else if (key == "max_objects") spec.max_objects = parse_int(key, value);
    else if (key == "family") spec.family = parse_shape_family(value);
    else if (key == "noise") spec.noise = parse_float(key, value);
    else if (key == "seed") spec.seed = parse_u64(key, value);
    else throw Error(ErrorKind::Usage, "unknown dataset spec key '" + key + "'");
  }
  spec.validate();
  return spec;
}

namespace {

std::string sample_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d.pgm", i);
  return buf;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const DatasetSpec& spec, const std::vector<Sample>& samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "images", ec);
  std::filesystem::create_directories(dir / "masks", ec);
  if (ec) throw Error(ErrorKind::Data, "cannot create dataset directory " + dir.string());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    write_pgm(dir / "images" / sample_name(static_cast<int>(i)), samples[i].image);
    write_pgm(dir / "masks" / sample_name(static_cast<int>(i)), samples[i].gt_mask);
  }
  std::ofstream f(dir / "spec.cfg", std::ios::binary);
  if (!f) throw Error(ErrorKind::Data, "cannot write " + (dir / "spec.cfg").string());
  DatasetSpec written = spec;
  written.count = static_cast<int>(samples.size());
  f << format_spec(written);
}

LoadedDataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream f(dir / "spec.cfg", std::ios::binary);
  if (!f) throw Error(ErrorKind::Data, "missing dataset spec " + (dir / "spec.cfg").string());
  std::stringstream ss;
  ss << f.rdbuf();
  LoadedDataset ds;
  ds.spec = parse_spec(ss.str());
  for (int i = 0; i < ds.spec.count; ++i) {
    Sample s;
    s.image = read_pgm(dir / "images" / sample_name(i));
    s.gt_mask = threshold_grid(read_pgm(dir / "masks" / sample_name(i)), 0.5f);
    s.weak_box = gt_mask_to_boxmask(s.gt_mask);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace wbk
