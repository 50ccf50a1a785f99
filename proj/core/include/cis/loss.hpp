#pragma once

#include <vector>

#include "cis/ops.hpp"

namespace cis {

// Scalar record of one loss evaluation. term_in is the foreground
// reconstruction ratio (hidden inside, predicted from context), term_out the
// complementary one; denominators are kept for diagnostics.
struct LossBreakdown {
  double term_in = 0.0;
  double term_out = 0.0;
  double total = 0.0;
  std::vector<double> denom_in;   // per sample
  std::vector<double> denom_out;  // per sample
};

// Differentiable handles on the same quantities.
template <typename T>
struct RatioLoss {
  Tensor<T> term_in;
  Tensor<T> term_out;
  Tensor<T> total;
  LossBreakdown breakdown;
};

namespace detail {

// one ratio term: mean over samples of
//   sum ||m * (u - recon)||^2 / (sum ||m * u||^2 + eps)
// with per-sample denominators. Implemented once so the complement term is
// the bit-identical computation with swapped arguments.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> ratio_term(const Tensor<T>& weight, const Tensor<T>& flow,
                                           const Tensor<T>& recon, double eps) {
  auto numer = sum_per_sample(square(mul(weight, sub(flow, recon))));
  auto denom = sum_per_sample(square(mul(weight, flow)));
  auto term = mean(div(numer, add_scalar(denom, static_cast<T>(eps))));
  return {term, denom};
}

}  // namespace detail

// Empirical contextual-reconstruction objective over one batch. mask is the
// soft foreground probability [N,1,H,W]; flow, recon_in and recon_out are
// [N,2,H,W]. recon_in must be the inpainter output with the inside hidden,
// recon_out with the outside hidden. Differentiable w.r.t. every input
// including the mask. The inpainter descends on total; the generator ascends.
template <typename T>
RatioLoss<T> masked_ratio_loss(const Tensor<T>& flow, const Tensor<T>& mask,
                               const Tensor<T>& recon_in, const Tensor<T>& recon_out,
                               double eps) {
  if (flow.rank() != 4 || mask.rank() != 4) {
    fail("masked_ratio_loss: expected NCHW inputs");
  }
  if (mask.dim(1) != 1) fail("masked_ratio_loss: mask must have one channel");
  if (flow.dim(2) != mask.dim(2) || flow.dim(3) != mask.dim(3)) {
    fail("masked_ratio_loss: flow " + shape_str(flow.shape()) + " and mask " +
         shape_str(mask.shape()) + " sizes differ");
  }

  RatioLoss<T> out;
  auto [tin, din] = detail::ratio_term(mask, flow, recon_in, eps);
  auto [tout, dout] = detail::ratio_term(one_minus(mask), flow, recon_out, eps);
  out.term_in = tin;
  out.term_out = tout;
  out.total = add(tin, tout);

  out.breakdown.term_in = static_cast<double>(tin.item());
  out.breakdown.term_out = static_cast<double>(tout.item());
  out.breakdown.total = static_cast<double>(out.total.item());
  out.breakdown.denom_in.assign(din.values().begin(), din.values().end());
  out.breakdown.denom_out.assign(dout.values().begin(), dout.values().end());
  return out;
}

}  // namespace cis
