#pragma once

#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cis/tensor.hpp"

namespace cis {

namespace detail {

// GEMM kernels with source-pinned accumulation order: every C element is
// produced by the same fixed sequence of adds regardless of thread count, so
// results are bit-identical across runs and OMP settings (threads only split
// disjoint output rows).

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int mm, int nn, int kk, const T* a, const T* b, T* c) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(mm) * nn * kk > 65536)
#endif
  for (int m = 0; m < mm; ++m) {
    T* crow = c + static_cast<std::int64_t>(m) * nn;
    for (int k = 0; k < kk; ++k) {
      const T av = a[static_cast<std::int64_t>(m) * kk + k];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<std::int64_t>(k) * nn;
      for (int n = 0; n < nn; ++n) crow[n] += av * brow[n];
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(int mm, int nn, int kk, const T* a, const T* b, T* c) {
  for (int k = 0; k < kk; ++k) {
    const T* arow = a + static_cast<std::int64_t>(k) * mm;
    const T* brow = b + static_cast<std::int64_t>(k) * nn;
    for (int m = 0; m < mm; ++m) {
      const T av = arow[m];
      if (av == T(0)) continue;
      T* crow = c + static_cast<std::int64_t>(m) * nn;
      for (int n = 0; n < nn; ++n) crow[n] += av * brow[n];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T, four-lane dot products in a fixed order
template <typename T>
void gemm_nt(int mm, int nn, int kk, const T* a, const T* b, T* c) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(mm) * nn * kk > 65536)
#endif
  for (int m = 0; m < mm; ++m) {
    const T* arow = a + static_cast<std::int64_t>(m) * kk;
    for (int n = 0; n < nn; ++n) {
      const T* brow = b + static_cast<std::int64_t>(n) * kk;
      T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
      int k = 0;
      for (; k + 4 <= kk; k += 4) {
        s0 += arow[k] * brow[k];
        s1 += arow[k + 1] * brow[k + 1];
        s2 += arow[k + 2] * brow[k + 2];
        s3 += arow[k + 3] * brow[k + 3];
      }
      T s = (s0 + s1) + (s2 + s3);
      for (; k < kk; ++k) s += arow[k] * brow[k];
      c[static_cast<std::int64_t>(m) * nn + n] += s;
    }
  }
}

struct ConvGeom {
  int n, cin, h, w;
  int cout, kh, kw;
  int stride, pad, dilation;
  int oh, ow;
};

inline int conv_out_extent(int in, int pad, int dilation, int k, int stride) {
  return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

// gather input patches: col[(cin*kh*kw) x (oh*ow)] for one sample
template <typename T>
void im2col(const ConvGeom& g, const T* x, T* col) {
  const std::int64_t ohw = static_cast<std::int64_t>(g.oh) * g.ow;
  for (int ci = 0; ci < g.cin; ++ci) {
    const T* xc = x + static_cast<std::int64_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        T* crow = col + ((static_cast<std::int64_t>(ci) * g.kh + ky) * g.kw + kx) * ohw;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          T* cout_row = crow + static_cast<std::int64_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            for (int ox = 0; ox < g.ow; ++ox) cout_row[ox] = T(0);
            continue;
          }
          const T* xrow = xc + static_cast<std::int64_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx * g.dilation;
            cout_row[ox] = (ix >= 0 && ix < g.w) ? xrow[ix] : T(0);
          }
        }
      }
    }
  }
}

// scatter the col-gradient back onto the input gradient (serial per sample)
template <typename T>
void col2im_accumulate(const ConvGeom& g, const T* col, T* gx) {
  const std::int64_t ohw = static_cast<std::int64_t>(g.oh) * g.ow;
  for (int ci = 0; ci < g.cin; ++ci) {
    T* xc = gx + static_cast<std::int64_t>(ci) * g.h * g.w;
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* crow = col + ((static_cast<std::int64_t>(ci) * g.kh + ky) * g.kw + kx) * ohw;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky * g.dilation;
          if (iy < 0 || iy >= g.h) continue;
          const T* crow2 = crow + static_cast<std::int64_t>(oy) * g.ow;
          T* xrow = xc + static_cast<std::int64_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx * g.dilation;
            if (ix >= 0 && ix < g.w) xrow[ix] += crow2[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// 2-D cross-correlation, NCHW input, [cout, cin, kh, kw] weights, zero
// padding. Output extent: (H + 2p - dilation*(k-1) - 1)/stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 int stride = 1, int padding = 0, int dilation = 1) {
  if (input.rank() != 4) fail("conv2d: input must be NCHW, got " + shape_str(input.shape()));
  if (weights.rank() != 4) fail("conv2d: weights must be [cout,cin,kh,kw], got " + shape_str(weights.shape()));
  if (stride < 1 || dilation < 1 || padding < 0) fail("conv2d: bad stride/padding/dilation");
  detail::ConvGeom g;
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = weights.dim(0);
  g.kh = weights.dim(2);
  g.kw = weights.dim(3);
  g.stride = stride;
  g.pad = padding;
  g.dilation = dilation;
  if (weights.dim(1) != g.cin) {
    fail("conv2d: input channels " + std::to_string(g.cin) + " != weight channels " +
         std::to_string(weights.dim(1)) + " [dim 1]");
  }
  if (bias.size() != g.cout) {
    fail("conv2d: bias extent " + std::to_string(bias.size()) + " != output channels " +
         std::to_string(g.cout) + " [dim 0]");
  }
  g.oh = detail::conv_out_extent(g.h, g.pad, g.dilation, g.kh, g.stride);
  g.ow = detail::conv_out_extent(g.w, g.pad, g.dilation, g.kw, g.stride);
  if (g.oh <= 0 || g.ow <= 0) {
    fail("conv2d: empty output for input " + shape_str(input.shape()) + " with kernel " +
         shape_str(weights.shape()));
  }

  const std::int64_t kdim = static_cast<std::int64_t>(g.cin) * g.kh * g.kw;
  const std::int64_t ohw = static_cast<std::int64_t>(g.oh) * g.ow;
  const std::int64_t in_per = static_cast<std::int64_t>(g.cin) * g.h * g.w;
  const std::int64_t out_per = static_cast<std::int64_t>(g.cout) * ohw;

  const auto xv = input.values();
  const auto wv = weights.values();
  const auto bv = bias.values();
  std::vector<T> out(static_cast<std::size_t>(g.n * out_per));
  {
    std::vector<T> col(static_cast<std::size_t>(kdim * ohw));
    for (int b = 0; b < g.n; ++b) {
      detail::im2col(g, xv.data() + b * in_per, col.data());
      T* ob = out.data() + b * out_per;
      detail::gemm_nn(g.cout, static_cast<int>(ohw), static_cast<int>(kdim), wv.data(),
                      col.data(), ob);
      for (int co = 0; co < g.cout; ++co) {
        const T bz = bv[static_cast<std::size_t>(co)];
        T* row = ob + static_cast<std::int64_t>(co) * ohw;
        for (std::int64_t i = 0; i < ohw; ++i) row[i] += bz;
      }
    }
  }
  check_finite<T>(out, "conv2d");

  return Tensor<T>::result(
      {g.n, g.cout, g.oh, g.ow}, std::move(out), {input, weights, bias},
      [g, kdim, ohw, in_per, out_per](typename Tensor<T>::Node& nd) {
        auto& px = nd.parents[0];
        auto& pw = nd.parents[1];
        auto& pb = nd.parents[2];
        const auto& gy = nd.grad;
        const auto xv2 = px.values();
        const auto wv2 = pw.values();

        if (pb.requires_grad()) {
          auto& gb = pb.node()->ensure_grad();
          for (int b = 0; b < g.n; ++b) {
            for (int co = 0; co < g.cout; ++co) {
              double acc = 0.0;
              const T* row = gy.data() + b * out_per + static_cast<std::int64_t>(co) * ohw;
              for (std::int64_t i = 0; i < ohw; ++i) acc += static_cast<double>(row[i]);
              gb[static_cast<std::size_t>(co)] += static_cast<T>(acc);
            }
          }
        }

        const bool need_w = pw.requires_grad();
        const bool need_x = px.requires_grad();
        if (!need_w && !need_x) return;

        std::vector<T> col(static_cast<std::size_t>(kdim * ohw));
        std::vector<T> gcol;
        if (need_x) gcol.resize(static_cast<std::size_t>(kdim * ohw));
        for (int b = 0; b < g.n; ++b) {
          if (need_w) {
            detail::im2col(g, xv2.data() + b * in_per, col.data());
            auto& gw = pw.node()->ensure_grad();
            detail::gemm_nt(g.cout, static_cast<int>(kdim), static_cast<int>(ohw),
                            gy.data() + b * out_per, col.data(), gw.data());
          }
          if (need_x) {
            std::fill(gcol.begin(), gcol.end(), T(0));
            detail::gemm_tn(static_cast<int>(kdim), static_cast<int>(ohw), g.cout, wv2.data(),
                            gy.data() + b * out_per, gcol.data());
            auto& gx = px.node()->ensure_grad();
            detail::col2im_accumulate(g, gcol.data(), gx.data() + b * in_per);
          }
        }
      });
}

}  // namespace cis
