#include <algorithm>
#include <cmath>
#include <limits>

#include "ops_common.hpp"
#include "wbk/error.hpp"

namespace wbk {

namespace detail {

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = nullptr;
  for (const Tensor* t : inputs) {
    if (t == nullptr || !t->defined()) continue;
    Tape* other = t->tape();
    if (other == nullptr) continue;
    if (tape != nullptr && tape != other) {
      throw Error(ErrorKind::Usage, "op inputs recorded on different tapes");
    }
    tape = other;
  }
  return tape;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

}  // namespace detail

using detail::emit;
using detail::ImplPtr;
using detail::require_same_shape;

namespace {

template <class Fwd, class Bwd>
Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  require_same_shape(op, a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return emit(op, a.shape(), std::move(out), {&a, &b}, [&](Tape* tape) -> BackwardFn {
    ImplPtr A = a.impl();
    ImplPtr B = b.impl();
    return [A, B, tape, bwd](const detail::TensorImpl& o) {
      const std::size_t n = o.values.size();
      float* ga = grad_target(A, tape);
      float* gb = grad_target(B, tape);
      for (std::size_t i = 0; i < n; ++i) {
        float da = 0.0f, db = 0.0f;
        bwd(A->values[i], B->values[i], o.values[i], da, db);
        if (ga) ga[i] += o.grad[i] * da;
        if (gb) gb[i] += o.grad[i] * db;
      }
    };
  });
}

template <class Fwd, class Deriv>
Tensor unary_elementwise(const char* op, const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto& xv = x.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return emit(op, x.shape(), std::move(out), {&x}, [&](Tape* tape) -> BackwardFn {
    ImplPtr X = x.impl();
    return [X, tape, deriv](const detail::TensorImpl& o) {
      float* gx = grad_target(X, tape);
      if (!gx) return;
      for (std::size_t i = 0; i < o.values.size(); ++i) {
        gx[i] += o.grad[i] * deriv(X->values[i], o.values[i]);
      }
    };
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](float x, float y) { return x + y; },
      [](float, float, float, float& da, float& db) { da = 1.0f; db = 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](float x, float y) { return x - y; },
      [](float, float, float, float& da, float& db) { da = 1.0f; db = -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "mul", a, b, [](float x, float y) { return x * y; },
      [](float x, float y, float, float& da, float& db) { da = y; db = x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "div", a, b, [](float x, float y) { return x / y; },
      [](float x, float y, float, float& da, float& db) {
        da = 1.0f / y;
        db = -x / (y * y);
      });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "minimum", a, b, [](float x, float y) { return x <= y ? x : y; },
      [](float x, float y, float, float& da, float& db) {
        const bool first = x <= y;
        da = first ? 1.0f : 0.0f;
        db = first ? 0.0f : 1.0f;
      });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "maximum", a, b, [](float x, float y) { return x >= y ? x : y; },
      [](float x, float y, float, float& da, float& db) {
        const bool first = x >= y;
        da = first ? 1.0f : 0.0f;
        db = first ? 0.0f : 1.0f;
      });
}

Tensor affine(const Tensor& x, float a, float b) {
  return unary_elementwise(
      "affine", x, [a, b](float v) { return a * v + b; }, [a](float, float) { return a; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      "sigmoid", x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      "relu", x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor abs(const Tensor& x) {
  return unary_elementwise(
      "abs", x, [](float v) { return std::fabs(v); },
      [](float v, float) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
}

Tensor log(const Tensor& x) {
  return unary_elementwise(
      "log", x, [](float v) { return std::log(v); }, [](float v, float) { return 1.0f / v; });
}

Tensor clamp(const Tensor& x, float lo, float hi) {
  return unary_elementwise(
      "clamp", x, [lo, hi](float v) { return std::clamp(v, lo, hi); },
      [lo, hi](float v, float) { return (v >= lo && v <= hi) ? 1.0f : 0.0f; });
}

Tensor scale(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("scale: factor must be scalar, got " + s.shape().str());
  const float f = s[0];
  std::vector<float> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * f;
  return emit("scale", x.shape(), std::move(out), {&x, &s}, [&](Tape* tape) -> BackwardFn {
    ImplPtr X = x.impl();
    ImplPtr S = s.impl();
    return [X, S, tape](const detail::TensorImpl& o) {
      const float f = S->values[0];
      if (float* gx = grad_target(X, tape)) {
        for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i] * f;
      }
      if (float* gs = grad_target(S, tape)) {
        double acc = 0.0;
        for (std::size_t i = 0; i < o.grad.size(); ++i) acc += double(o.grad[i]) * X->values[i];
        gs[0] += static_cast<float>(acc);
      }
    };
  });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  return emit("sum", Shape{}, {static_cast<float>(acc)}, {&x}, [&](Tape* tape) -> BackwardFn {
    ImplPtr X = x.impl();
    return [X, tape](const detail::TensorImpl& o) {
      float* gx = grad_target(X, tape);
      if (!gx) return;
      for (std::size_t i = 0; i < X->values.size(); ++i) gx[i] += o.grad[0];
    };
  });
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  const double n = static_cast<double>(x.numel());
  return emit("mean", Shape{}, {static_cast<float>(acc / n)}, {&x}, [&](Tape* tape) -> BackwardFn {
    ImplPtr X = x.impl();
    return [X, tape, n](const detail::TensorImpl& o) {
      float* gx = grad_target(X, tape);
      if (!gx) return;
      const float g = static_cast<float>(o.grad[0] / n);
      for (std::size_t i = 0; i < X->values.size(); ++i) gx[i] += g;
    };
  });
}

Tensor repeat(const Tensor& x, Axis axis, int count) {
  const Shape& s = x.shape();
  if (count < 1) throw ShapeError("repeat: count must be positive");
  if (axis == Axis::Rows && s.h != 1) throw ShapeError("repeat over rows needs height 1, got " + s.str());
  if (axis == Axis::Cols && s.w != 1) throw ShapeError("repeat over cols needs width 1, got " + s.str());
  Shape os = s;
  (axis == Axis::Rows ? os.h : os.w) = count;
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  std::vector<float> out(os.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    for (int i = 0; i < os.h; ++i) {
      for (int j = 0; j < os.w; ++j) {
        const std::size_t src = axis == Axis::Rows ? p * s.w + j : p * s.h + i;
        out[(p * os.h + i) * os.w + j] = x[src];
      }
    }
  }
  return emit("repeat", os, std::move(out), {&x}, [&](Tape* tape) -> BackwardFn {
    ImplPtr X = x.impl();
    return [X, tape, axis, s, os, planes](const detail::TensorImpl& o) {
      float* gx = grad_target(X, tape);
      if (!gx) return;
      for (std::size_t p = 0; p < planes; ++p) {
        for (int i = 0; i < os.h; ++i) {
          for (int j = 0; j < os.w; ++j) {
            const std::size_t src = axis == Axis::Rows ? p * s.w + j : p * s.h + i;
            gx[src] += o.grad[(p * os.h + i) * os.w + j];
          }
        }
      }
    };
  });
}

Tensor reduce_max(const Tensor& x, Axis axis) {
  const Shape& s = x.shape();
  Shape os = s;
  (axis == Axis::Rows ? os.h : os.w) = 1;
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  std::vector<float> out(os.numel());
  std::vector<std::size_t> arg(os.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * s.plane();
    if (axis == Axis::Rows) {
      for (int j = 0; j < s.w; ++j) {
        std::size_t best = base + j;
        for (int i = 1; i < s.h; ++i) {
          const std::size_t k = base + static_cast<std::size_t>(i) * s.w + j;
          if (x[k] > x[best]) best = k;
        }
        out[p * s.w + j] = x[best];
        arg[p * s.w + j] = best;
      }
    } else {
      for (int i = 0; i < s.h; ++i) {
        std::size_t best = base + static_cast<std::size_t>(i) * s.w;
        for (int j = 1; j < s.w; ++j) {
          const std::size_t k = base + static_cast<std::size_t>(i) * s.w + j;
          if (x[k] > x[best]) best = k;
        }
        out[p * s.h + i] = x[best];
        arg[p * s.h + i] = best;
      }
    }
  }
  return emit("reduce_max", os, std::move(out), {&x}, [&](Tape* tape) -> BackwardFn {
    ImplPtr X = x.impl();
    return [X, tape, arg = std::move(arg)](const detail::TensorImpl& o) {
      float* gx = grad_target(X, tape);
      if (!gx) return;
      for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k]] += o.grad[k];
    };
  });
}

Tensor maxpool2d(const Tensor& input) {
  const Shape& s = input.shape();
  const int oh = (s.h + 1) / 2;
  const int ow = (s.w + 1) / 2;
  const Shape os{s.n, s.c, oh, ow};
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  std::vector<float> out(os.numel());
  std::vector<std::size_t> arg(os.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    const std::size_t base = p * s.plane();
    for (int oi = 0; oi < oh; ++oi) {
      for (int oj = 0; oj < ow; ++oj) {
        float best = -std::numeric_limits<float>::infinity();
        std::size_t best_k = base + static_cast<std::size_t>(2 * oi) * s.w + 2 * oj;
        for (int di = 0; di < 2; ++di) {
          const int i = 2 * oi + di;
          if (i >= s.h) continue;  // -inf padding
          for (int dj = 0; dj < 2; ++dj) {
            const int j = 2 * oj + dj;
            if (j >= s.w) continue;
            const std::size_t k = base + static_cast<std::size_t>(i) * s.w + j;
            if (input[k] > best) {
              best = input[k];
              best_k = k;
            }
          }
        }
        const std::size_t o = (p * oh + oi) * ow + oj;
        out[o] = best;
        arg[o] = best_k;
      }
    }
  }
  Tensor result = emit("maxpool2d", os, std::move(out), {&input}, [&](Tape* tape) -> BackwardFn {
    ImplPtr X = input.impl();
    return [X, tape, arg = arg](const detail::TensorImpl& o) {
      float* gx = grad_target(X, tape);
      if (!gx) return;
      for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k]] += o.grad[k];
    };
  });
  std::uint32_t flags = 0;
  if (s.h % 2 != 0) flags |= kPaddedRows;
  if (s.w % 2 != 0) flags |= kPaddedCols;
  result.impl()->flags = flags;
  return result;
}

namespace {

struct Tap {
  int lo, hi;
  float wlo, whi;
};

std::vector<Tap> resize_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    const double src = out > 1 ? static_cast<double>(o) * (in - 1) / (out - 1) : 0.0;
    int lo = static_cast<int>(std::floor(src));
    lo = std::clamp(lo, 0, in - 1);
    const int hi = std::min(lo + 1, in - 1);
    const float frac = static_cast<float>(src - lo);
    taps[static_cast<std::size_t>(o)] = Tap{lo, hi, 1.0f - frac, frac};
  }
  return taps;
}

}  // namespace

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw ShapeError("bilinear_resize: output size must be >= 1");
  const Shape& s = input.shape();
  const Shape os{s.n, s.c, out_h, out_w};
  const auto rt = resize_taps(s.h, out_h);
  const auto ct = resize_taps(s.w, out_w);
  const std::size_t planes = static_cast<std::size_t>(s.n) * s.c;
  std::vector<float> out(os.numel());
  for (std::size_t p = 0; p < planes; ++p) {
    const float* src = input.values().data() + p * s.plane();
    float* dst = out.data() + p * os.plane();
    for (int i = 0; i < out_h; ++i) {
      const Tap& r = rt[static_cast<std::size_t>(i)];
      for (int j = 0; j < out_w; ++j) {
        const Tap& c = ct[static_cast<std::size_t>(j)];
        const float top = r.wlo * src[r.lo * s.w + c.lo] * c.wlo + r.wlo * src[r.lo * s.w + c.hi] * c.whi;
        const float bot = r.whi * src[r.hi * s.w + c.lo] * c.wlo + r.whi * src[r.hi * s.w + c.hi] * c.whi;
        dst[i * out_w + j] = top + bot;
      }
    }
  }
  return emit("bilinear_resize", os, std::move(out), {&input}, [&](Tape* tape) -> BackwardFn {
    ImplPtr X = input.impl();
    return [X, tape, rt, ct, s, os, planes](const detail::TensorImpl& o) {
      float* gx = grad_target(X, tape);
      if (!gx) return;
      for (std::size_t p = 0; p < planes; ++p) {
        float* gsrc = gx + p * s.plane();
        const float* gdst = o.grad.data() + p * os.plane();
        for (int i = 0; i < os.h; ++i) {
          const Tap& r = rt[static_cast<std::size_t>(i)];
          for (int j = 0; j < os.w; ++j) {
            const Tap& c = ct[static_cast<std::size_t>(j)];
            const float g = gdst[i * os.w + j];
            gsrc[r.lo * s.w + c.lo] += g * r.wlo * c.wlo;
            gsrc[r.lo * s.w + c.hi] += g * r.wlo * c.whi;
            gsrc[r.hi * s.w + c.lo] += g * r.whi * c.wlo;
            gsrc[r.hi * s.w + c.hi] += g * r.whi * c.whi;
          }
        }
      }
    };
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats* stats,
                  bool training) {
  const Shape& s = x.shape();
  const Shape ps{1, s.c, 1, 1};
  if (!(gamma.shape() == ps) || !(beta.shape() == ps)) {
    throw ShapeError("batch_norm: affine parameters " + gamma.shape().str() + " / " +
                     beta.shape().str() + " do not match input " + s.str());
  }
  if (!training && stats == nullptr) throw Error(ErrorKind::Usage, "batch_norm eval mode needs running statistics");
  if (stats != nullptr && stats->running_mean.empty()) {
    stats->running_mean.assign(static_cast<std::size_t>(s.c), 0.0f);
    stats->running_var.assign(static_cast<std::size_t>(s.c), 1.0f);
  }
  if (stats != nullptr && stats->running_mean.size() != static_cast<std::size_t>(s.c)) {
    throw ShapeError("batch_norm: running statistics sized for another channel count");
  }
  const std::size_t plane = s.plane();
  const std::size_t count = static_cast<std::size_t>(s.n) * plane;
  std::vector<float> mu(static_cast<std::size_t>(s.c));
  std::vector<float> inv_std(static_cast<std::size_t>(s.c));
  for (int c = 0; c < s.c; ++c) {
    if (training) {
      double acc = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* p = x.values().data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t k = 0; k < plane; ++k) acc += p[k];
      }
      const double m = acc / static_cast<double>(count);
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const float* p = x.values().data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
        for (std::size_t k = 0; k < plane; ++k) {
          const double d = p[k] - m;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      mu[c] = static_cast<float>(m);
      inv_std[c] = static_cast<float>(1.0 / std::sqrt(var + kBnEpsilon));
      if (stats != nullptr) {
        const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
        auto& rm = stats->running_mean[static_cast<std::size_t>(c)];
        auto& rv = stats->running_var[static_cast<std::size_t>(c)];
        rm = static_cast<float>(kBnMomentum * rm + (1.0 - kBnMomentum) * m);
        rv = static_cast<float>(kBnMomentum * rv + (1.0 - kBnMomentum) * unbiased);
      }
    } else {
      mu[c] = stats->running_mean[static_cast<std::size_t>(c)];
      inv_std[c] = 1.0f / std::sqrt(stats->running_var[static_cast<std::size_t>(c)] + kBnEpsilon);
    }
  }
  std::vector<float> xhat(s.numel());
  std::vector<float> out(s.numel());
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const float h = (x[off + k] - mu[c]) * inv_std[c];
        xhat[off + k] = h;
        out[off + k] = gamma[c] * h + beta[c];
      }
    }
  }
  return emit("batch_norm", s, std::move(out), {&x, &gamma, &beta}, [&](Tape* tape) -> BackwardFn {
    ImplPtr X = x.impl();
    ImplPtr G = gamma.impl();
    ImplPtr B = beta.impl();
    return [X, G, B, tape, s, plane, count, training, inv_std, xhat = std::move(xhat)](
               const detail::TensorImpl& o) {
      float* gx = grad_target(X, tape);
      float* gg = grad_target(G, tape);
      float* gb = grad_target(B, tape);
      for (int c = 0; c < s.c; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int n = 0; n < s.n; ++n) {
          const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
          for (std::size_t k = 0; k < plane; ++k) {
            sum_dy += o.grad[off + k];
            sum_dy_xhat += double(o.grad[off + k]) * xhat[off + k];
          }
        }
        if (gg) gg[c] += static_cast<float>(sum_dy_xhat);
        if (gb) gb[c] += static_cast<float>(sum_dy);
        if (!gx) continue;
        const float g = G->values[static_cast<std::size_t>(c)];
        const float is = inv_std[static_cast<std::size_t>(c)];
        const double m = static_cast<double>(count);
        for (int n = 0; n < s.n; ++n) {
          const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
          for (std::size_t k = 0; k < plane; ++k) {
            const double dy = o.grad[off + k];
            if (training) {
              gx[off + k] += static_cast<float>(g * is * (dy - sum_dy / m - xhat[off + k] * sum_dy_xhat / m));
            } else {
              gx[off + k] += static_cast<float>(g * is * dy);
            }
          }
        }
      }
    };
  });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  Shape os = s0;
  os.c = 0;
  for (const Tensor& t : parts) {
    const Shape& s = t.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw ShapeError("concat_channels: shape mismatch " + s0.str() + " vs " + s.str());
    }
    os.c += s.c;
  }
  const std::size_t plane = os.plane();
  std::vector<float> out(os.numel());
  for (int n = 0; n < os.n; ++n) {
    std::size_t dst = static_cast<std::size_t>(n) * os.c * plane;
    for (const Tensor& t : parts) {
      const std::size_t len = static_cast<std::size_t>(t.shape().c) * plane;
      const float* src = t.values().data() + static_cast<std::size_t>(n) * len;
      std::copy(src, src + len, out.begin() + static_cast<std::ptrdiff_t>(dst));
      dst += len;
    }
  }
  Tape* tape = nullptr;
  for (const Tensor& t : parts) {
    if (t.tape() == nullptr) continue;
    if (tape != nullptr && tape != t.tape()) throw Error(ErrorKind::Usage, "op inputs recorded on different tapes");
    tape = t.tape();
  }
  if (tape == nullptr) return Tensor(os, std::move(out));
  std::vector<ImplPtr> ins;
  for (const Tensor& t : parts) ins.push_back(t.impl());
  return tape->record("concat_channels", os, std::move(out), ins,
                      [ins, tape, os, plane](const detail::TensorImpl& o) {
                        for (int n = 0; n < os.n; ++n) {
                          std::size_t src = static_cast<std::size_t>(n) * os.c * plane;
                          for (const ImplPtr& in : ins) {
                            const std::size_t len = static_cast<std::size_t>(in->shape.c) * plane;
                            if (float* g = grad_target(in, tape)) {
                              float* dst = g + static_cast<std::size_t>(n) * len;
                              for (std::size_t k = 0; k < len; ++k) dst[k] += o.grad[src + k];
                            }
                            src += len;
                          }
                        }
                      });
}

Tensor slice_batch(const Tensor& x, int index) {
  const Shape& s = x.shape();
  if (index < 0 || index >= s.n) throw ShapeError("slice_batch: index out of range for " + s.str());
  const Shape os{1, s.c, s.h, s.w};
  const std::size_t len = os.numel();
  const std::size_t off = static_cast<std::size_t>(index) * len;
  std::vector<float> out(x.values().begin() + static_cast<std::ptrdiff_t>(off),
                         x.values().begin() + static_cast<std::ptrdiff_t>(off + len));
  return emit("slice_batch", os, std::move(out), {&x}, [&](Tape* tape) -> BackwardFn {
    ImplPtr X = x.impl();
    return [X, tape, off, len](const detail::TensorImpl& o) {
      float* gx = grad_target(X, tape);
      if (!gx) return;
      for (std::size_t k = 0; k < len; ++k) gx[off + k] += o.grad[k];
    };
  });
}

}  // namespace wbk
