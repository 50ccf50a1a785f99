#pragma once

#include <vector>

#include "cis/tensor.hpp"

// Nested-loop cross-correlation, written independently of the im2col/GEMM
// path it is used to check.
namespace testsupport {

template <typename T>
cis::Tensor<T> conv2d_reference(const cis::Tensor<T>& x, const cis::Tensor<T>& w,
                                const cis::Tensor<T>& b, int stride, int pad, int dilation) {
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), wid = x.dim(3);
  const int cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (h + 2 * pad - dilation * (kh - 1) - 1) / stride + 1;
  const int ow = (wid + 2 * pad - dilation * (kw - 1) - 1) / stride + 1;
  const auto xv = x.values();
  const auto wv = w.values();
  const auto bv = b.values();
  std::vector<T> out(static_cast<std::size_t>(n) * cout * oh * ow, T(0));
  for (int bn = 0; bn < n; ++bn) {
    for (int co = 0; co < cout; ++co) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bv[co];
          for (int ci = 0; ci < cin; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * stride - pad + ky * dilation;
                const int ix = ox * stride - pad + kx * dilation;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wid) continue;
                acc += static_cast<double>(xv[((static_cast<std::size_t>(bn) * cin + ci) * h + iy) * wid + ix]) *
                       static_cast<double>(wv[((static_cast<std::size_t>(co) * cin + ci) * kh + ky) * kw + kx]);
              }
            }
          }
          out[((static_cast<std::size_t>(bn) * cout + co) * oh + oy) * ow + ox] = static_cast<T>(acc);
        }
      }
    }
  }
  return cis::Tensor<T>::from_data({n, cout, oh, ow}, std::move(out));
}

}  // namespace testsupport
