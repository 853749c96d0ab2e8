#include "wbk/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>

#include "wbk/error.hpp"
#include "wbk/losses.hpp"
#include "wbk/nets.hpp"
#include "wbk/rng.hpp"
#include "wbk/tensor.hpp"
#include "wbk/weakbox.hpp"

namespace wbk {

namespace {

// Inputs are kept at least this far from kinks, ties and thresholds, well
// beyond the finite-difference half width.
constexpr float kMargin = 0.03f;

struct Instance {
  std::vector<Tensor> leaves;
  std::function<Tensor(const std::vector<Tensor>&)> fn;
};

using Maker = std::function<Instance(CounterRng&)>;

struct Case {
  std::string name;
  Maker make;
  double step = 0.0;  // 0: the configured step
};

std::vector<float> uniform_values(CounterRng& rng, std::size_t n, float lo, float hi) {
  std::vector<float> v(n);
  for (float& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Uniform in [-2, 2] with |x| >= kMargin.
std::vector<float> away_from_zero(CounterRng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (float& x : v) {
    const float mag = rng.uniform(kMargin, 2.0f);
    x = rng.below(2) ? mag : -mag;
  }
  return v;
}

// Pairwise separated values spread over [lo, hi], shuffled.
std::vector<float> distinct_values(CounterRng& rng, std::size_t n, float lo, float hi) {
  std::vector<float> v(n);
  const float spacing = (hi - lo) / static_cast<float>(n);
  for (std::size_t k = 0; k < n; ++k) {
    v[k] = lo + spacing * (static_cast<float>(k) + 0.5f + rng.uniform(-0.2f, 0.2f));
  }
  for (std::size_t i = n - 1; i > 0; --i) std::swap(v[i], v[rng.below(static_cast<std::uint32_t>(i + 1))]);
  return v;
}

Tensor leaf(Shape s, std::vector<float> values) { return Tensor(s, std::move(values)); }

Tensor random_leaf(CounterRng& rng, Shape s, float lo = -2.0f, float hi = 2.0f) {
  return leaf(s, uniform_values(rng, s.numel(), lo, hi));
}

// Probability map of `h` x `w` whose pixels are >= 0.5 exactly where `fg`
// is set. Values are pairwise separated and away from 0.5.
Tensor prob_map(CounterRng& rng, const Grid& fg) {
  const std::size_t n = fg.size();
  std::size_t n_fg = 0;
  for (float v : fg.data) n_fg += v >= 0.5f ? 1 : 0;
  std::vector<float> hi = distinct_values(rng, std::max<std::size_t>(n_fg, 1), 0.5f + kMargin, 0.97f);
  std::vector<float> lo = distinct_values(rng, std::max<std::size_t>(n - n_fg, 1), 0.03f, 0.5f - kMargin);
  std::vector<float> out(n);
  std::size_t a = 0, b = 0;
  for (std::size_t k = 0; k < n; ++k) out[k] = fg.data[k] >= 0.5f ? hi[a++] : lo[b++];
  return leaf(Shape{1, 1, fg.height, fg.width}, std::move(out));
}

Grid rect_mask(int h, int w, int r0, int c0, int r1, int c1) {
  return rasterize(BoxCoords{r0, c0, r1, c1}, h, w);
}

// Two separated blobs on the diagonal: the centroid falls on background.
Grid diagonal_pair(int h, int w) {
  Grid g = rect_mask(h, w, 1, 1, 3, 3);
  const Grid other = rect_mask(h, w, h - 4, w - 4, h - 2, w - 2);
  for (std::size_t k = 0; k < g.size(); ++k) g.data[k] = std::max(g.data[k], other.data[k]);
  return g;
}

Grid random_binary(CounterRng& rng, int h, int w, float p) {
  Grid g(h, w);
  for (float& v : g.data) v = rng.uniform() < p ? 1.0f : 0.0f;
  return g;
}

Instance unary(Shape s, std::vector<float> values, Tensor (*op)(const Tensor&)) {
  return Instance{{leaf(s, std::move(values))}, [op](const std::vector<Tensor>& x) { return op(x[0]); }};
}

std::vector<Case> build_cases() {
  std::vector<Case> cases;
  const Shape small{2, 2, 3, 4};
  auto add_case = [&](std::string name, Maker m, double step = 0.0) {
    cases.push_back(Case{std::move(name), std::move(m), step});
  };
  // Smooth scalar losses have small per-element gradients; a wider step keeps
  // float rounding of the loss value out of the difference quotient.
  constexpr double kSmoothStep = 1e-2;

  add_case("add", [=](CounterRng& r) {
    return Instance{{random_leaf(r, small), random_leaf(r, small)},
                    [](const std::vector<Tensor>& x) { return add(x[0], x[1]); }};
  });
  add_case("sub", [=](CounterRng& r) {
    return Instance{{random_leaf(r, small), random_leaf(r, small)},
                    [](const std::vector<Tensor>& x) { return sub(x[0], x[1]); }};
  });
  add_case("mul", [=](CounterRng& r) {
    return Instance{{random_leaf(r, small), random_leaf(r, small)},
                    [](const std::vector<Tensor>& x) { return mul(x[0], x[1]); }};
  });
  add_case("div", [=](CounterRng& r) {
    std::vector<float> den = uniform_values(r, small.numel(), 0.5f, 2.0f);
    for (float& d : den) d = r.below(2) ? d : -d;
    return Instance{{random_leaf(r, small), leaf(small, den)},
                    [](const std::vector<Tensor>& x) { return div(x[0], x[1]); }};
  });
  add_case("affine", [=](CounterRng& r) {
    const float a = r.uniform(-2.0f, 2.0f), b = r.uniform(-1.0f, 1.0f);
    return Instance{{random_leaf(r, small)}, [a, b](const std::vector<Tensor>& x) { return affine(x[0], a, b); }};
  });
  add_case("scale", [=](CounterRng& r) {
    return Instance{{random_leaf(r, small), random_leaf(r, Shape{})},
                    [](const std::vector<Tensor>& x) { return scale(x[0], x[1]); }};
  });
  auto pair_apart = [=](CounterRng& r) {
    std::vector<float> a = uniform_values(r, small.numel(), -2.0f, 2.0f);
    std::vector<float> b(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      const float gap = r.uniform(kMargin, 1.0f);
      b[k] = a[k] + (r.below(2) ? gap : -gap);
    }
    return std::vector<Tensor>{leaf(small, a), leaf(small, b)};
  };
  add_case("minimum", [=](CounterRng& r) {
    return Instance{pair_apart(r), [](const std::vector<Tensor>& x) { return minimum(x[0], x[1]); }};
  });
  add_case("maximum", [=](CounterRng& r) {
    return Instance{pair_apart(r), [](const std::vector<Tensor>& x) { return maximum(x[0], x[1]); }};
  });
  add_case("repeat_rows", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{2, 2, 1, 5})},
                    [](const std::vector<Tensor>& x) { return repeat(x[0], Axis::Rows, 4); }};
  });
  add_case("repeat_cols", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{2, 2, 4, 1})},
                    [](const std::vector<Tensor>& x) { return repeat(x[0], Axis::Cols, 3); }};
  });
  add_case("reduce_max_rows", [=](CounterRng& r) {
    const Shape s{2, 2, 4, 5};
    return Instance{{leaf(s, distinct_values(r, s.numel(), -2.0f, 2.0f))},
                    [](const std::vector<Tensor>& x) { return reduce_max(x[0], Axis::Rows); }};
  });
  add_case("reduce_max_cols", [=](CounterRng& r) {
    const Shape s{2, 2, 4, 5};
    return Instance{{leaf(s, distinct_values(r, s.numel(), -2.0f, 2.0f))},
                    [](const std::vector<Tensor>& x) { return reduce_max(x[0], Axis::Cols); }};
  });
  add_case("sigmoid", [=](CounterRng& r) { return unary(small, uniform_values(r, small.numel(), -3.0f, 3.0f), sigmoid); });
  add_case("relu", [=](CounterRng& r) { return unary(small, away_from_zero(r, small.numel()), relu); });
  add_case("abs", [=](CounterRng& r) { return unary(small, away_from_zero(r, small.numel()), abs); });
  add_case("log", [=](CounterRng& r) { return unary(small, uniform_values(r, small.numel(), 0.5f, 2.0f), log); });
  add_case("clamp", [=](CounterRng& r) {
    std::vector<float> v(small.numel());
    for (float& x : v) {
      do x = r.uniform(-2.0f, 2.0f);
      while (std::abs(x + 1.0f) < kMargin || std::abs(x - 0.5f) < kMargin);
    }
    return Instance{{leaf(small, v)}, [](const std::vector<Tensor>& x) { return clamp(x[0], -1.0f, 0.5f); }};
  });
  add_case("sum", [=](CounterRng& r) { return unary(small, uniform_values(r, small.numel(), -2.0f, 2.0f), sum); },
           kSmoothStep);
  add_case("mean", [=](CounterRng& r) { return unary(small, uniform_values(r, small.numel(), -2.0f, 2.0f), mean); },
           kSmoothStep);
  add_case("conv2d", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{2, 2, 5, 5}), random_leaf(r, Shape{3, 2, 3, 3}), random_leaf(r, Shape{1, 3, 1, 1})},
                    [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], x[2], {1, 1, 1}); }};
  });
  add_case("conv2d_strided", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{2, 2, 6, 5}), random_leaf(r, Shape{2, 2, 3, 3})},
                    [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], Tensor(), {2, 1, 1}); }};
  });
  add_case("conv2d_dilated", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{1, 2, 6, 6}), random_leaf(r, Shape{2, 2, 3, 3}), random_leaf(r, Shape{1, 2, 1, 1})},
                    [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], x[2], {1, 2, 2}); }};
  });
  add_case("conv2d_replicate", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{2, 2, 5, 4}), random_leaf(r, Shape{2, 2, 3, 3}), random_leaf(r, Shape{1, 2, 1, 1})},
                    [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], x[2], {2, 2, 2, true}); }};
  });
  add_case("conv2d_pointwise", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{2, 3, 4, 4}), random_leaf(r, Shape{2, 3, 1, 1}), random_leaf(r, Shape{1, 2, 1, 1})},
                    [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], x[2], {1, 0, 1}); }};
  });
  add_case("maxpool2d", [=](CounterRng& r) {
    const Shape s{2, 2, 5, 6};
    return Instance{{leaf(s, distinct_values(r, s.numel(), -2.0f, 2.0f))},
                    [](const std::vector<Tensor>& x) { return maxpool2d(x[0]); }};
  });
  add_case("bilinear_resize_up", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{2, 2, 3, 4})},
                    [](const std::vector<Tensor>& x) { return bilinear_resize(x[0], 7, 6); }};
  });
  add_case("bilinear_resize_down", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{1, 2, 8, 8})},
                    [](const std::vector<Tensor>& x) { return bilinear_resize(x[0], 6, 5); }};
  });
  add_case("batch_norm_train", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{3, 2, 3, 3}), random_leaf(r, Shape{1, 2, 1, 1}, 0.5f, 2.0f),
                     random_leaf(r, Shape{1, 2, 1, 1})},
                    [](const std::vector<Tensor>& x) { return batch_norm(x[0], x[1], x[2], nullptr, true); }};
  });
  add_case("batch_norm_eval", [=](CounterRng& r) {
    auto stats = std::make_shared<BatchNormStats>();
    stats->running_mean = uniform_values(r, 2, -1.0f, 1.0f);
    stats->running_var = uniform_values(r, 2, 0.5f, 2.0f);
    return Instance{{random_leaf(r, Shape{2, 2, 3, 3}), random_leaf(r, Shape{1, 2, 1, 1}, 0.5f, 2.0f),
                     random_leaf(r, Shape{1, 2, 1, 1})},
                    [stats](const std::vector<Tensor>& x) { return batch_norm(x[0], x[1], x[2], stats.get(), false); }};
  });
  add_case("concat_channels", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{2, 1, 3, 3}), random_leaf(r, Shape{2, 3, 3, 3})},
                    [](const std::vector<Tensor>& x) {
                      const Tensor parts[] = {x[0], x[1]};
                      return concat_channels(parts);
                    }};
  });
  add_case("slice_batch", [=](CounterRng& r) {
    return Instance{{random_leaf(r, Shape{3, 2, 3, 3})}, [](const std::vector<Tensor>& x) { return slice_batch(x[0], 1); }};
  });
  add_case("fusion_gate", [=](CounterRng& r) {
    return Instance{{random_leaf(r, small), random_leaf(r, small), random_leaf(r, Shape{})},
                    [](const std::vector<Tensor>& x) { return fusion_gate(x[0], x[1], x[2]); }};
  });

  // Box transforms.
  add_case("mm2b_foreground", [=](CounterRng& r) {
    const int r0 = static_cast<int>(r.below(3)), c0 = static_cast<int>(r.below(3));
    const Grid fg = rect_mask(7, 8, r0 + 1, c0 + 1, r0 + 3, c0 + 4);
    return Instance{{prob_map(r, fg)}, [](const std::vector<Tensor>& x) {
                      const BranchOutput out = mm2b(x[0]);
                      if (out.branch != CenterKind::Foreground) throw Error(ErrorKind::Numeric, "expected foreground centre");
                      return out.mask;
                    }};
  });
  add_case("mm2b_background", [=](CounterRng& r) {
    return Instance{{prob_map(r, diagonal_pair(9, 10))}, [](const std::vector<Tensor>& x) {
                      const BranchOutput out = mm2b(x[0]);
                      if (out.branch != CenterKind::Background) throw Error(ErrorKind::Numeric, "expected background centre");
                      return out.mask;
                    }};
  });

  // Losses.
  add_case("bce_loss", [=](CounterRng& r) {
    const Grid target = random_binary(r, 5, 6, 0.4f);
    return Instance{{random_leaf(r, Shape{1, 1, 5, 6}, 0.05f, 0.95f)},
                    [target](const std::vector<Tensor>& x) { return bce_loss(x[0], target); }};
  });
  add_case("dice_loss", [=](CounterRng& r) {
    const Grid target = random_binary(r, 5, 6, 0.4f);
    return Instance{{random_leaf(r, Shape{1, 1, 5, 6}, 0.05f, 0.95f)},
                    [target](const std::vector<Tensor>& x) { return dice_loss(x[0], target); }};
  }, kSmoothStep);
  add_case("branch_loss", [=](CounterRng& r) {
    const BoxMask b{rect_mask(6, 6, 1, 1, 4, 3)};
    return Instance{{random_leaf(r, Shape{1, 1, 6, 6}, 0.05f, 0.95f)},
                    [b](const std::vector<Tensor>& x) { return branch_loss(x[0], b); }};
  });
  LossConfig weighted;
  weighted.beta = 0.7f;
  weighted.gamma = 1.3f;
  add_case("mm2b_loss_foreground", [=](CounterRng& r) {
    const Grid fg = rect_mask(7, 7, 2, 1, 4, 4);
    const BoxMask b{rect_mask(7, 7, 1, 1, 5, 5)};
    return Instance{{prob_map(r, fg)}, [b, weighted](const std::vector<Tensor>& x) {
                      const BranchOutput t = mm2b(x[0]);
                      return mm2b_loss(t, b, t.status, weighted);
                    }};
  });
  add_case("mm2b_loss_background", [=](CounterRng& r) {
    const BoxMask b{rect_mask(9, 10, 1, 1, 7, 8)};
    return Instance{{prob_map(r, diagonal_pair(9, 10))}, [b, weighted](const std::vector<Tensor>& x) {
                      const BranchOutput t = mm2b(x[0]);
                      return mm2b_loss(t, b, t.status, weighted);
                    }};
  });
  add_case("sc_loss", [=](CounterRng& r) {
    const Shape s{1, 1, 6, 6};
    std::vector<float> a = uniform_values(r, s.numel(), 0.05f, 0.95f);
    std::vector<float> b(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      const float gap = r.uniform(kMargin, 0.3f);
      b[k] = a[k] + (r.below(2) ? gap : -gap);
    }
    const BoxMask box{rect_mask(6, 6, 1, 0, 4, 3)};
    return Instance{{leaf(s, a), leaf(s, b)}, [box](const std::vector<Tensor>& x) { return sc_loss(x[0], x[1], box); }};
  });
  add_case("detail_refine_loss", [=](CounterRng& r) {
    const Grid gt = random_binary(r, 6, 5, 0.5f);
    return Instance{{random_leaf(r, Shape{1, 1, 6, 5}, -3.0f, 3.0f)},
                    [gt](const std::vector<Tensor>& x) { return detail_refine_loss(sigmoid(x[0]), gt); }};
  }, kSmoothStep);
  add_case("total_loss_weak", [=](CounterRng& r) {
    const Grid fg = rect_mask(7, 7, 2, 2, 4, 5);
    const BoxMask b{rect_mask(7, 7, 1, 1, 5, 5)};
    std::vector<float> other(49);
    Tensor base = prob_map(r, fg);
    for (std::size_t k = 0; k < other.size(); ++k) {
      const float gap = r.uniform(kMargin, 0.2f);
      other[k] = std::clamp(base.values()[k] + (r.below(2) ? gap : -gap), 0.01f, 0.99f);
    }
    return Instance{{base, leaf(Shape{1, 1, 7, 7}, other)}, [b](const std::vector<Tensor>& x) {
                      const BranchOutput t = mm2b(x[0]);
                      LossComponents parts;
                      parts.mm2b = mm2b_loss(t, b, t.status);
                      parts.sc = sc_loss(x[0], x[1], b);
                      return total_loss(parts, Phase::WeakTraining);
                    }};
  });
  add_case("total_loss_refine", [=](CounterRng& r) {
    const Grid gt = random_binary(r, 5, 5, 0.5f);
    return Instance{{random_leaf(r, Shape{1, 1, 5, 5}, -3.0f, 3.0f)}, [gt](const std::vector<Tensor>& x) {
                      LossComponents parts;
                      parts.refine = detail_refine_loss(sigmoid(x[0]), gt);
                      return total_loss(parts, Phase::RefineTraining);
                    }};
  }, kSmoothStep);
  return cases;
}

// sum(w * f(x)) accumulated in double.
double weighted_value(const Tensor& out, const std::vector<float>& w) {
  double s = 0.0;
  const auto v = out.values();
  for (std::size_t k = 0; k < v.size(); ++k) s += static_cast<double>(w[k]) * v[k];
  return s;
}

double check_instance(Instance inst, CounterRng& rng, double step, bool corrupt) {
  // Random output weights turn any output into a scalar objective.
  const Tensor probe = inst.fn(inst.leaves);
  const Shape out_shape = probe.shape();
  const std::vector<float> w = uniform_values(rng, out_shape.numel(), -1.0f, 1.0f);

  std::vector<std::vector<float>> analytic;
  {
    Tape tape;
    for (const Tensor& l : inst.leaves) tape.watch(l);
    const Tensor out = inst.fn(inst.leaves);
    const Tensor objective = sum(mul(out, Tensor(out_shape, w)));
    tape.backward(objective);
    for (Tensor& l : inst.leaves) {
      const auto g = l.grad();
      analytic.emplace_back(g.begin(), g.end());
      if (analytic.back().empty()) analytic.back().assign(l.shape().numel(), 0.0f);
      l.zero_grad();
    }
  }
  if (corrupt && !analytic.empty() && !analytic[0].empty()) analytic[0][0] += 0.5f + std::abs(analytic[0][0]);

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  for (std::size_t li = 0; li < inst.leaves.size(); ++li) {
    Tensor& l = inst.leaves[li];
    auto values = l.mutable_values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const float saved = values[k];
      values[k] = saved + static_cast<float>(step);
      const double up = weighted_value(inst.fn(inst.leaves), w);
      values[k] = saved - static_cast<float>(step);
      const double down = weighted_value(inst.fn(inst.leaves), w);
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[li][k];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
  }
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  return std::sqrt(diff2) / denom;
}

}  // namespace

std::vector<std::string> gradcheck_case_names() {
  std::vector<std::string> names;
  for (const Case& c : build_cases()) names.push_back(c.name);
  return names;
}

bool GradcheckReport::all_passed() const {
  return std::all_of(cases.begin(), cases.end(), [](const GradcheckCase& c) { return c.passed; });
}

std::string GradcheckReport::format() const {
  std::string out;
  char buf[160];
  for (const GradcheckCase& c : cases) {
    std::snprintf(buf, sizeof buf, "%s %-22s instances=%d max_rel_error=%.3e\n", c.passed ? "PASS" : "FAIL",
                  c.name.c_str(), c.instances, c.max_error);
    out += buf;
  }
  int failed = 0;
  for (const GradcheckCase& c : cases) failed += c.passed ? 0 : 1;
  std::snprintf(buf, sizeof buf, "%zu cases, %d failed, %.2f s\n", cases.size(), failed, seconds);
  out += buf;
  return out;
}

GradcheckReport run_gradcheck(const GradcheckOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport report;
  const std::vector<Case> cases = build_cases();
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const Case& c = cases[ci];
    GradcheckCase result;
    result.name = c.name;
    for (int i = 0; i < opt.instances; ++i) {
      CounterRng rng = CounterRng::split(opt.seed, ci * 1000 + static_cast<std::uint64_t>(i), stream::kGradcheck);
      double err = 0.0;
      try {
        err = check_instance(c.make(rng), rng, c.step > 0.0 ? c.step : opt.step, c.name == opt.corrupt);
      } catch (const Error&) {
        err = std::numeric_limits<double>::infinity();
      }
      result.max_error = std::max(result.max_error, err);
      ++result.instances;
    }
    result.passed = result.max_error <= opt.tolerance;
    report.cases.push_back(result);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace wbk
