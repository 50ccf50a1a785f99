#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "cis/tensor.hpp"

namespace cis {

namespace detail {

// Broadcasting: ranks must match and each extent must be equal or 1, or one
// operand is a scalar ({1}). Covers the NCHW uses in this codebase (per-pixel
// masks against 2-channel flows, per-sample vectors, scalars).
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (numel(a) == 1) return b;
  if (numel(b) == 1) return a;
  if (a.size() != b.size()) {
    fail(std::string(op) + ": rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || a[i] == 1 || b[i] == 1) {
      out[i] = std::max(a[i], b[i]);
    } else {
      fail(std::string(op) + ": incompatible extent at dim " + std::to_string(i) + ": " +
           shape_str(a) + " vs " + shape_str(b));
    }
  }
  return out;
}

// flat strides with 0 on broadcast dims, padded to the output rank
inline std::array<std::int64_t, 8> broadcast_strides(const Shape& in, const Shape& out) {
  std::array<std::int64_t, 8> st{};
  if (numel(in) == 1) return st;  // all zero: scalar
  std::int64_t stride = 1;
  for (int i = static_cast<int>(in.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = (in[static_cast<std::size_t>(i)] == 1 &&
                                       out[static_cast<std::size_t>(i)] != 1)
                                          ? 0
                                          : stride;
    stride *= in[static_cast<std::size_t>(i)];
  }
  return st;
}

// iterate the output index space, yielding flat offsets into both operands
template <typename Fn>
inline void broadcast_iterate(const Shape& out, const std::array<std::int64_t, 8>& sa,
                              const std::array<std::int64_t, 8>& sb, Fn&& fn) {
  const int rank = static_cast<int>(out.size());
  std::array<int, 8> idx{};
  const std::int64_t n = numel(out);
  std::int64_t oa = 0, ob = 0;
  for (std::int64_t flat = 0; flat < n; ++flat) {
    fn(flat, oa, ob);
    for (int d = rank - 1; d >= 0; --d) {
      idx[static_cast<std::size_t>(d)]++;
      oa += sa[static_cast<std::size_t>(d)];
      ob += sb[static_cast<std::size_t>(d)];
      if (idx[static_cast<std::size_t>(d)] < out[static_cast<std::size_t>(d)]) break;
      oa -= sa[static_cast<std::size_t>(d)] * out[static_cast<std::size_t>(d)];
      ob -= sb[static_cast<std::size_t>(d)] * out[static_cast<std::size_t>(d)];
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
}

template <typename T, typename FwdFn, typename BwdA, typename BwdB>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, FwdFn fwd,
                    BwdA dfda, BwdB dfdb) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  const auto sa = broadcast_strides(a.shape(), out_shape);
  const auto sb = broadcast_strides(b.shape(), out_shape);
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  const auto av = a.values();
  const auto bv = b.values();
  broadcast_iterate(out_shape, sa, sb, [&](std::int64_t flat, std::int64_t oa, std::int64_t ob) {
    out[static_cast<std::size_t>(flat)] = fwd(av[static_cast<std::size_t>(oa)],
                                              bv[static_cast<std::size_t>(ob)]);
  });
  check_finite<T>(out, name);

  Shape osh = out_shape;
  return Tensor<T>::result(
      out_shape, std::move(out), {a, b},
      [osh, sa, sb, dfda, dfdb](typename Tensor<T>::Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        const auto av2 = pa.values();
        const auto bv2 = pb.values();
        const auto g = n.grad;
        if (pa.requires_grad()) {
          auto& ga = pa.node()->ensure_grad();
          broadcast_iterate(osh, sa, sb,
                            [&](std::int64_t flat, std::int64_t oa, std::int64_t ob) {
                              ga[static_cast<std::size_t>(oa)] +=
                                  g[static_cast<std::size_t>(flat)] *
                                  dfda(av2[static_cast<std::size_t>(oa)],
                                       bv2[static_cast<std::size_t>(ob)]);
                            });
        }
        if (pb.requires_grad()) {
          auto& gb = pb.node()->ensure_grad();
          broadcast_iterate(osh, sa, sb,
                            [&](std::int64_t flat, std::int64_t oa, std::int64_t ob) {
                              gb[static_cast<std::size_t>(ob)] +=
                                  g[static_cast<std::size_t>(flat)] *
                                  dfdb(av2[static_cast<std::size_t>(oa)],
                                       bv2[static_cast<std::size_t>(ob)]);
                            });
        }
      });
}

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_op(const char* name, const Tensor<T>& a, FwdFn fwd, BwdFn dfdx) {
  std::vector<T> out(a.values().begin(), a.values().end());
  for (auto& v : out) v = fwd(v);
  check_finite<T>(out, name);
  return Tensor<T>::result(a.shape(), std::move(out), {a},
                           [dfdx](typename Tensor<T>::Node& n) {
                             auto& p = n.parents[0];
                             if (!p.requires_grad()) return;
                             auto& gp = p.node()->ensure_grad();
                             const auto x = p.values();
                             const auto g = n.grad;
                             for (std::size_t i = 0; i < gp.size(); ++i) {
                               gp[i] += g[i] * dfdx(x[i]);
                             }
                           });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_op<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  return detail::unary_op<T>(
      "scale", a, [c](T x) { return c * x; }, [c](T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  return detail::unary_op<T>(
      "add_scalar", a, [c](T x) { return x + c; }, [](T) { return T(1); });
}

// 1 - x, the mask complement
template <typename T>
Tensor<T> one_minus(const Tensor<T>& a) {
  return detail::unary_op<T>(
      "one_minus", a, [](T x) { return T(1) - x; }, [](T) { return T(-1); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary_op<T>(
      "relu", a, [](T x) { return x > T(0) ? x : T(0); },
      [](T x) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope) {
  return detail::unary_op<T>(
      "leaky_relu", a, [slope](T x) { return x > T(0) ? x : slope * x; },
      [slope](T x) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary_op<T>(
      "sigmoid", a,
      [](T x) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T x) {
        const T s = x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                              : std::exp(x) / (T(1) + std::exp(x));
        return s * (T(1) - s);
      });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::unary_op<T>(
      "square", a, [](T x) { return x * x; }, [](T x) { return T(2) * x; });
}

// Full reduction to {1}. Row-major accumulation in double keeps the order
// fixed and the result reproducible.
template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  double acc = 0.0;
  for (T v : a.values()) acc += static_cast<double>(v);
  std::vector<T> out{static_cast<T>(acc)};
  check_finite<T>(out, "sum");
  return Tensor<T>::result({1}, std::move(out), {a}, [](typename Tensor<T>::Node& n) {
    auto& p = n.parents[0];
    if (!p.requires_grad()) return;
    auto& gp = p.node()->ensure_grad();
    const T g = n.grad[0];
    for (auto& v : gp) v += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  const std::int64_t count = a.size();
  double acc = 0.0;
  for (T v : a.values()) acc += static_cast<double>(v);
  std::vector<T> out{static_cast<T>(acc / static_cast<double>(count))};
  check_finite<T>(out, "mean");
  return Tensor<T>::result({1}, std::move(out), {a}, [count](typename Tensor<T>::Node& n) {
    auto& p = n.parents[0];
    if (!p.requires_grad()) return;
    auto& gp = p.node()->ensure_grad();
    const T g = n.grad[0] / static_cast<T>(count);
    for (auto& v : gp) v += g;
  });
}

// NCHW -> {N}: reduce everything but the batch dimension
template <typename T>
Tensor<T> sum_per_sample(const Tensor<T>& a) {
  if (a.rank() != 4) fail("sum_per_sample: expected NCHW, got " + shape_str(a.shape()));
  const int n = a.dim(0);
  const std::int64_t per = a.size() / n;
  std::vector<T> out(static_cast<std::size_t>(n));
  const auto v = a.values();
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < per; ++j) {
      acc += static_cast<double>(v[static_cast<std::size_t>(i * per + j)]);
    }
    out[static_cast<std::size_t>(i)] = static_cast<T>(acc);
  }
  check_finite<T>(out, "sum_per_sample");
  return Tensor<T>::result({n}, std::move(out), {a}, [per](typename Tensor<T>::Node& n_) {
    auto& p = n_.parents[0];
    if (!p.requires_grad()) return;
    auto& gp = p.node()->ensure_grad();
    for (std::size_t i = 0; i < n_.grad.size(); ++i) {
      const T g = n_.grad[i];
      for (std::int64_t j = 0; j < per; ++j) {
        gp[i * static_cast<std::size_t>(per) + static_cast<std::size_t>(j)] += g;
      }
    }
  });
}

// softmax over the channel dimension of an NCHW tensor; per-pixel outputs sum
// to 1 (max-shifted for stability)
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& a) {
  if (a.rank() != 4) fail("softmax_channels: expected NCHW, got " + shape_str(a.shape()));
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const auto x = a.values();
  std::vector<T> out(x.size());
  for (int b = 0; b < n; ++b) {
    const std::int64_t base = static_cast<std::int64_t>(b) * c * hw;
    for (std::int64_t p = 0; p < hw; ++p) {
      T mx = x[static_cast<std::size_t>(base + p)];
      for (int k = 1; k < c; ++k) {
        mx = std::max(mx, x[static_cast<std::size_t>(base + k * hw + p)]);
      }
      double denom = 0.0;
      for (int k = 0; k < c; ++k) {
        denom += std::exp(static_cast<double>(x[static_cast<std::size_t>(base + k * hw + p)] - mx));
      }
      for (int k = 0; k < c; ++k) {
        out[static_cast<std::size_t>(base + k * hw + p)] = static_cast<T>(
            std::exp(static_cast<double>(x[static_cast<std::size_t>(base + k * hw + p)] - mx)) /
            denom);
      }
    }
  }
  check_finite<T>(out, "softmax_channels");
  return Tensor<T>::result(
      a.shape(), std::move(out), {a}, [n, c, hw](typename Tensor<T>::Node& nd) {
        auto& p = nd.parents[0];
        if (!p.requires_grad()) return;
        auto& gp = p.node()->ensure_grad();
        const auto y = nd.values;  // softmax outputs
        const auto& g = nd.grad;
        for (int b = 0; b < n; ++b) {
          const std::int64_t base = static_cast<std::int64_t>(b) * c * hw;
          for (std::int64_t px = 0; px < hw; ++px) {
            double dot = 0.0;
            for (int k = 0; k < c; ++k) {
              const auto i = static_cast<std::size_t>(base + k * hw + px);
              dot += static_cast<double>(g[i]) * static_cast<double>(y[i]);
            }
            for (int k = 0; k < c; ++k) {
              const auto i = static_cast<std::size_t>(base + k * hw + px);
              gp[i] += y[i] * (g[i] - static_cast<T>(dot));
            }
          }
        }
      });
}

// contiguous channel slice of an NCHW tensor
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& a, int first, int count) {
  if (a.rank() != 4) fail("slice_channels: expected NCHW, got " + shape_str(a.shape()));
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (first < 0 || count <= 0 || first + count > c) {
    fail("slice_channels: range [" + std::to_string(first) + ", " +
         std::to_string(first + count) + ") out of " + std::to_string(c) + " channels");
  }
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::vector<T> out(static_cast<std::size_t>(static_cast<std::int64_t>(n) * count * hw));
  const auto x = a.values();
  for (int b = 0; b < n; ++b) {
    for (int k = 0; k < count; ++k) {
      const auto src = static_cast<std::size_t>((static_cast<std::int64_t>(b) * c + first + k) * hw);
      const auto dst = static_cast<std::size_t>((static_cast<std::int64_t>(b) * count + k) * hw);
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(src), hw,
                  out.begin() + static_cast<std::ptrdiff_t>(dst));
    }
  }
  return Tensor<T>::result(
      {n, count, h, w}, std::move(out), {a},
      [n, c, first, count, hw](typename Tensor<T>::Node& nd) {
        auto& p = nd.parents[0];
        if (!p.requires_grad()) return;
        auto& gp = p.node()->ensure_grad();
        const auto& g = nd.grad;
        for (int b = 0; b < n; ++b) {
          for (int k = 0; k < count; ++k) {
            const auto dst = static_cast<std::size_t>((static_cast<std::int64_t>(b) * c + first + k) * hw);
            const auto src = static_cast<std::size_t>((static_cast<std::int64_t>(b) * count + k) * hw);
            for (std::int64_t i = 0; i < hw; ++i) {
              gp[dst + static_cast<std::size_t>(i)] += g[src + static_cast<std::size_t>(i)];
            }
          }
        }
      });
}

// concatenate NCHW tensors along the channel dimension
template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) fail("concat_channels: no inputs");
  const int n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
  int c_total = 0;
  for (const auto& t : parts) {
    if (t.rank() != 4 || t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
      fail("concat_channels: mismatched shape " + shape_str(t.shape()) + " vs " +
           shape_str(parts[0].shape()));
    }
    c_total += t.dim(1);
  }
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::vector<T> out(static_cast<std::size_t>(static_cast<std::int64_t>(n) * c_total * hw));
  std::vector<int> channels;
  for (const auto& t : parts) channels.push_back(t.dim(1));
  int c_off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto x = parts[pi].values();
    const int pc = channels[pi];
    for (int b = 0; b < n; ++b) {
      const auto src = static_cast<std::size_t>(static_cast<std::int64_t>(b) * pc * hw);
      const auto dst = static_cast<std::size_t>((static_cast<std::int64_t>(b) * c_total + c_off) * hw);
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(src), static_cast<std::int64_t>(pc) * hw,
                  out.begin() + static_cast<std::ptrdiff_t>(dst));
    }
    c_off += pc;
  }
  return Tensor<T>::result(
      {n, c_total, h, w}, std::move(out), parts,
      [n, c_total, channels, hw](typename Tensor<T>::Node& nd) {
        const auto& g = nd.grad;
        int c_off2 = 0;
        for (std::size_t pi = 0; pi < nd.parents.size(); ++pi) {
          auto& p = nd.parents[pi];
          const int pc = channels[pi];
          if (p.requires_grad()) {
            auto& gp = p.node()->ensure_grad();
            for (int b = 0; b < n; ++b) {
              const auto dst = static_cast<std::size_t>(static_cast<std::int64_t>(b) * pc * hw);
              const auto src = static_cast<std::size_t>((static_cast<std::int64_t>(b) * c_total + c_off2) * hw);
              for (std::int64_t i = 0; i < static_cast<std::int64_t>(pc) * hw; ++i) {
                gp[dst + static_cast<std::size_t>(i)] += g[src + static_cast<std::size_t>(i)];
              }
            }
          }
          c_off2 += pc;
        }
      });
}

// Bilinear upsampling by an integer factor, half-pixel sampling with edge
// clamping (preserves constant fields).
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& a, int factor) {
  if (a.rank() != 4) fail("upsample_bilinear: expected NCHW, got " + shape_str(a.shape()));
  if (factor < 1) fail("upsample_bilinear: factor must be >= 1");
  const int n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  const int oh = h * factor, ow = w * factor;

  // sampling geometry is shared by forward and backward
  struct Tap {
    int i0, i1;
    T w0, w1;
  };
  std::vector<Tap> ty(static_cast<std::size_t>(oh)), tx(static_cast<std::size_t>(ow));
  auto make_taps = [factor](std::vector<Tap>& taps, int in_size) {
    for (std::size_t o = 0; o < taps.size(); ++o) {
      const double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
      const double fl = std::floor(src);
      int i0 = static_cast<int>(fl);
      T frac = static_cast<T>(src - fl);
      int i1 = i0 + 1;
      if (i0 < 0) { i0 = 0; i1 = 0; frac = T(0); }
      if (i1 >= in_size) { i1 = in_size - 1; if (i0 > i1) i0 = i1; }
      taps[o] = Tap{i0, i1, T(1) - frac, frac};
    }
  };
  make_taps(ty, h);
  make_taps(tx, w);

  const auto x = a.values();
  std::vector<T> out(static_cast<std::size_t>(static_cast<std::int64_t>(n) * c * oh * ow));
  for (int b = 0; b < n; ++b) {
    for (int k = 0; k < c; ++k) {
      const std::int64_t ib = (static_cast<std::int64_t>(b) * c + k) * h * w;
      const std::int64_t ob = (static_cast<std::int64_t>(b) * c + k) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const Tap& y = ty[static_cast<std::size_t>(oy)];
        for (int ox = 0; ox < ow; ++ox) {
          const Tap& t = tx[static_cast<std::size_t>(ox)];
          const T v00 = x[static_cast<std::size_t>(ib + y.i0 * w + t.i0)];
          const T v01 = x[static_cast<std::size_t>(ib + y.i0 * w + t.i1)];
          const T v10 = x[static_cast<std::size_t>(ib + y.i1 * w + t.i0)];
          const T v11 = x[static_cast<std::size_t>(ib + y.i1 * w + t.i1)];
          out[static_cast<std::size_t>(ob + static_cast<std::int64_t>(oy) * ow + ox)] =
              y.w0 * (t.w0 * v00 + t.w1 * v01) + y.w1 * (t.w0 * v10 + t.w1 * v11);
        }
      }
    }
  }
  check_finite<T>(out, "upsample_bilinear");
  return Tensor<T>::result(
      {n, c, oh, ow}, std::move(out), {a},
      [n, c, h, w, oh, ow, ty, tx](typename Tensor<T>::Node& nd) {
        auto& p = nd.parents[0];
        if (!p.requires_grad()) return;
        auto& gp = p.node()->ensure_grad();
        const auto& g = nd.grad;
        for (int b = 0; b < n; ++b) {
          for (int k = 0; k < c; ++k) {
            const std::int64_t ib = (static_cast<std::int64_t>(b) * c + k) * h * w;
            const std::int64_t ob = (static_cast<std::int64_t>(b) * c + k) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
              const Tap& y = ty[static_cast<std::size_t>(oy)];
              for (int ox = 0; ox < ow; ++ox) {
                const Tap& t = tx[static_cast<std::size_t>(ox)];
                const T gv = g[static_cast<std::size_t>(ob + static_cast<std::int64_t>(oy) * ow + ox)];
                gp[static_cast<std::size_t>(ib + y.i0 * w + t.i0)] += y.w0 * t.w0 * gv;
                gp[static_cast<std::size_t>(ib + y.i0 * w + t.i1)] += y.w0 * t.w1 * gv;
                gp[static_cast<std::size_t>(ib + y.i1 * w + t.i0)] += y.w1 * t.w0 * gv;
                gp[static_cast<std::size_t>(ib + y.i1 * w + t.i1)] += y.w1 * t.w1 * gv;
              }
            }
          }
        }
      });
}

// Batch normalization over (N, H, W) per channel. Train mode normalizes with
// batch statistics and, when update_stats is set, folds them into the running
// buffers (running = momentum * running + (1 - momentum) * batch, biased
// variance). Eval mode uses the running buffers and errors if none were ever
// accumulated. gamma/beta are trainable; the buffers are plain state tensors
// that never enter the graph.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    Tensor<T> running_mean, Tensor<T> running_var, Tensor<T> stat_count,
                    bool train, bool update_stats, double momentum, double eps) {
  if (x.rank() != 4) fail("batchnorm: expected NCHW, got " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.size() != c || beta.size() != c) {
    fail("batchnorm: gamma/beta extent " + std::to_string(gamma.size()) +
         " does not match channels " + std::to_string(c) + " [dim 1]");
  }
  if (eps <= 0.0) fail("batchnorm: eps must be > 0");
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const std::int64_t m = static_cast<std::int64_t>(n) * hw;

  std::vector<T> mean_c(static_cast<std::size_t>(c)), var_c(static_cast<std::size_t>(c));
  const auto xv = x.values();
  if (train) {
    for (int k = 0; k < c; ++k) {
      double acc = 0.0;
      for (int b = 0; b < n; ++b) {
        const std::int64_t base = (static_cast<std::int64_t>(b) * c + k) * hw;
        for (std::int64_t i = 0; i < hw; ++i) acc += static_cast<double>(xv[static_cast<std::size_t>(base + i)]);
      }
      const double mu = acc / static_cast<double>(m);
      double vacc = 0.0;
      for (int b = 0; b < n; ++b) {
        const std::int64_t base = (static_cast<std::int64_t>(b) * c + k) * hw;
        for (std::int64_t i = 0; i < hw; ++i) {
          const double d = static_cast<double>(xv[static_cast<std::size_t>(base + i)]) - mu;
          vacc += d * d;
        }
      }
      mean_c[static_cast<std::size_t>(k)] = static_cast<T>(mu);
      var_c[static_cast<std::size_t>(k)] = static_cast<T>(vacc / static_cast<double>(m));
    }
    if (update_stats) {
      auto rm = running_mean.mutable_values();
      auto rv = running_var.mutable_values();
      auto cnt = stat_count.mutable_values();
      for (int k = 0; k < c; ++k) {
        rm[static_cast<std::size_t>(k)] = static_cast<T>(momentum) * rm[static_cast<std::size_t>(k)] +
                                          static_cast<T>(1.0 - momentum) * mean_c[static_cast<std::size_t>(k)];
        rv[static_cast<std::size_t>(k)] = static_cast<T>(momentum) * rv[static_cast<std::size_t>(k)] +
                                          static_cast<T>(1.0 - momentum) * var_c[static_cast<std::size_t>(k)];
      }
      cnt[0] += T(1);
    }
  } else {
    if (stat_count.values()[0] <= T(0)) {
      fail("batchnorm: eval mode with no accumulated statistics");
    }
    std::copy(running_mean.values().begin(), running_mean.values().end(), mean_c.begin());
    std::copy(running_var.values().begin(), running_var.values().end(), var_c.begin());
  }

  std::vector<T> inv_std(static_cast<std::size_t>(c));
  for (int k = 0; k < c; ++k) {
    inv_std[static_cast<std::size_t>(k)] =
        static_cast<T>(1.0 / std::sqrt(static_cast<double>(var_c[static_cast<std::size_t>(k)]) + eps));
  }

  std::vector<T> xhat(xv.size());
  std::vector<T> out(xv.size());
  const auto gv = gamma.values();
  const auto bv = beta.values();
  for (int b = 0; b < n; ++b) {
    for (int k = 0; k < c; ++k) {
      const std::int64_t base = (static_cast<std::int64_t>(b) * c + k) * hw;
      const T mu = mean_c[static_cast<std::size_t>(k)];
      const T is = inv_std[static_cast<std::size_t>(k)];
      const T ga = gv[static_cast<std::size_t>(k)];
      const T be = bv[static_cast<std::size_t>(k)];
      for (std::int64_t i = 0; i < hw; ++i) {
        const T xh = (xv[static_cast<std::size_t>(base + i)] - mu) * is;
        xhat[static_cast<std::size_t>(base + i)] = xh;
        out[static_cast<std::size_t>(base + i)] = ga * xh + be;
      }
    }
  }
  check_finite<T>(out, "batchnorm");

  return Tensor<T>::result(
      x.shape(), std::move(out), {x, gamma, beta},
      [n, c, hw, m, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          typename Tensor<T>::Node& nd) {
        auto& px = nd.parents[0];
        auto& pg = nd.parents[1];
        auto& pb = nd.parents[2];
        const auto& g = nd.grad;
        const auto gamma_v = pg.values();

        // per-channel reductions shared by all three gradients
        std::vector<double> sum_g(static_cast<std::size_t>(c), 0.0);
        std::vector<double> sum_gx(static_cast<std::size_t>(c), 0.0);
        for (int b = 0; b < n; ++b) {
          for (int k = 0; k < c; ++k) {
            const std::int64_t base = (static_cast<std::int64_t>(b) * c + k) * hw;
            double sg = 0.0, sgx = 0.0;
            for (std::int64_t i = 0; i < hw; ++i) {
              const auto idx = static_cast<std::size_t>(base + i);
              sg += static_cast<double>(g[idx]);
              sgx += static_cast<double>(g[idx]) * static_cast<double>(xhat[idx]);
            }
            sum_g[static_cast<std::size_t>(k)] += sg;
            sum_gx[static_cast<std::size_t>(k)] += sgx;
          }
        }
        if (pg.requires_grad()) {
          auto& gg = pg.node()->ensure_grad();
          for (int k = 0; k < c; ++k) gg[static_cast<std::size_t>(k)] += static_cast<T>(sum_gx[static_cast<std::size_t>(k)]);
        }
        if (pb.requires_grad()) {
          auto& gb = pb.node()->ensure_grad();
          for (int k = 0; k < c; ++k) gb[static_cast<std::size_t>(k)] += static_cast<T>(sum_g[static_cast<std::size_t>(k)]);
        }
        if (px.requires_grad()) {
          auto& gx = px.node()->ensure_grad();
          for (int b = 0; b < n; ++b) {
            for (int k = 0; k < c; ++k) {
              const std::int64_t base = (static_cast<std::int64_t>(b) * c + k) * hw;
              const T ga_is = gamma_v[static_cast<std::size_t>(k)] * inv_std[static_cast<std::size_t>(k)];
              if (train) {
                const T mg = static_cast<T>(sum_g[static_cast<std::size_t>(k)] / static_cast<double>(m));
                const T mgx = static_cast<T>(sum_gx[static_cast<std::size_t>(k)] / static_cast<double>(m));
                for (std::int64_t i = 0; i < hw; ++i) {
                  const auto idx = static_cast<std::size_t>(base + i);
                  gx[idx] += ga_is * (g[idx] - mg - xhat[idx] * mgx);
                }
              } else {
                for (std::int64_t i = 0; i < hw; ++i) {
                  const auto idx = static_cast<std::size_t>(base + i);
                  gx[idx] += ga_is * g[idx];
                }
              }
            }
          }
        }
      });
}

}  // namespace cis
