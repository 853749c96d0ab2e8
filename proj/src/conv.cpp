#include <cblas.h>

#include <algorithm>

#include "ops_common.hpp"
#include "wbk/error.hpp"

namespace wbk {

namespace {

struct ConvGeom {
  int cin, h, w, k, stride, pad, dilation, oh, ow;
  bool replicate;
  std::size_t col_rows() const { return static_cast<std::size_t>(cin) * k * k; }
  std::size_t col_cols() const { return static_cast<std::size_t>(oh) * ow; }
};

void im2col(const float* x, const ConvGeom& g, float* cols) {
  std::size_t row = 0;
  for (int c = 0; c < g.cin; ++c) {
    const float* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj, ++row) {
        float* dst = cols + row * g.col_cols();
        for (int oi = 0; oi < g.oh; ++oi) {
          int i = oi * g.stride - g.pad + ki * g.dilation;
          if (g.replicate) i = std::clamp(i, 0, g.h - 1);
          if (i < 0 || i >= g.h) {
            std::fill(dst + oi * g.ow, dst + (oi + 1) * g.ow, 0.0f);
            continue;
          }
          for (int oj = 0; oj < g.ow; ++oj) {
            int j = oj * g.stride - g.pad + kj * g.dilation;
            if (g.replicate) j = std::clamp(j, 0, g.w - 1);
            dst[oi * g.ow + oj] = (j >= 0 && j < g.w) ? plane[i * g.w + j] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* cols, const ConvGeom& g, float* dx) {
  std::size_t row = 0;
  for (int c = 0; c < g.cin; ++c) {
    float* plane = dx + static_cast<std::size_t>(c) * g.h * g.w;
    for (int ki = 0; ki < g.k; ++ki) {
      for (int kj = 0; kj < g.k; ++kj, ++row) {
        const float* src = cols + row * g.col_cols();
        for (int oi = 0; oi < g.oh; ++oi) {
          int i = oi * g.stride - g.pad + ki * g.dilation;
          if (g.replicate) i = std::clamp(i, 0, g.h - 1);
          if (i < 0 || i >= g.h) continue;
          for (int oj = 0; oj < g.ow; ++oj) {
            int j = oj * g.stride - g.pad + kj * g.dilation;
            if (g.replicate) j = std::clamp(j, 0, g.w - 1);
            if (j >= 0 && j < g.w) plane[i * g.w + j] += src[oi * g.ow + oj];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int pad) {
  return conv2d(input, kernel, Tensor(), Conv2dOptions{stride, pad, 1});
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Conv2dOptions opt) {
  // A fixed single-threaded BLAS keeps gemm accumulation order, and so whole
  // training runs, reproducible.
  static const bool single_thread = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)single_thread;
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (ks.h != ks.w || ks.h % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + ks.str());
  }
  if (ks.c != is.c) {
    throw ShapeError("conv2d: input " + is.str() + " incompatible with kernel " + ks.str());
  }
  if (opt.stride < 1 || opt.pad < 0 || opt.dilation < 1) {
    throw ShapeError("conv2d: invalid stride/pad/dilation");
  }
  if (bias.defined() && !(bias.shape() == Shape{1, ks.n, 1, 1})) {
    throw ShapeError("conv2d: bias " + bias.shape().str() + " does not match kernel " + ks.str());
  }
  const int span = (ks.h - 1) * opt.dilation + 1;
  const int oh = (is.h + 2 * opt.pad - span) / opt.stride + 1;
  const int ow = (is.w + 2 * opt.pad - span) / opt.stride + 1;
  if (oh < 1 || ow < 1) {
    throw ShapeError("conv2d: input " + is.str() + " too small for kernel " + ks.str());
  }
  const ConvGeom g{is.c, is.h, is.w, ks.h, opt.stride, opt.pad, opt.dilation, oh, ow, opt.replicate};
  const int cout = ks.n;
  const Shape os{is.n, cout, oh, ow};
  const std::size_t in_len = static_cast<std::size_t>(is.c) * is.h * is.w;
  const std::size_t out_len = static_cast<std::size_t>(cout) * oh * ow;
  const int kdim = static_cast<int>(g.col_rows());
  const int ncols = static_cast<int>(g.col_cols());

  std::vector<float> out(os.numel());
  std::vector<float> cols(g.col_rows() * g.col_cols());
  for (int n = 0; n < is.n; ++n) {
    im2col(input.values().data() + n * in_len, g, cols.data());
    float* dst = out.data() + n * out_len;
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, cout, ncols, kdim, 1.0f,
                kernel.values().data(), kdim, cols.data(), ncols, 0.0f, dst, ncols);
    if (bias.defined()) {
      for (int co = 0; co < cout; ++co) {
        const float b = bias[static_cast<std::size_t>(co)];
        float* p = dst + static_cast<std::size_t>(co) * ncols;
        for (int k = 0; k < ncols; ++k) p[k] += b;
      }
    }
  }

  return detail::emit("conv2d", os, std::move(out), {&input, &kernel, &bias}, [&](Tape* tape) -> BackwardFn {
    detail::ImplPtr X = input.impl();
    detail::ImplPtr K = kernel.impl();
    detail::ImplPtr B = bias.defined() ? bias.impl() : nullptr;
    return [X, K, B, tape, g, is, cout, in_len, out_len, kdim, ncols](const detail::TensorImpl& o) {
      float* gx = grad_target(X, tape);
      float* gk = grad_target(K, tape);
      float* gb = B ? grad_target(B, tape) : nullptr;
      std::vector<float> cols(g.col_rows() * g.col_cols());
      for (int n = 0; n < is.n; ++n) {
        const float* gout = o.grad.data() + n * out_len;
        if (gk) {
          im2col(X->values.data() + n * in_len, g, cols.data());
          cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, cout, kdim, ncols, 1.0f, gout, ncols,
                      cols.data(), ncols, 1.0f, gk, kdim);
        }
        if (gb) {
          for (int co = 0; co < cout; ++co) {
            double acc = 0.0;
            const float* p = gout + static_cast<std::size_t>(co) * ncols;
            for (int k = 0; k < ncols; ++k) acc += p[k];
            gb[co] += static_cast<float>(acc);
          }
        }
        if (gx) {
          cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, ncols, cout, 1.0f,
                      K->values.data(), kdim, gout, ncols, 0.0f, cols.data(), ncols);
          col2im_add(cols.data(), g, gx + n * in_len);
        }
      }
    };
  });
}

}  // namespace wbk
