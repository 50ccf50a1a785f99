#include "cis/infomeasure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "cis/error.hpp"
#include "cis/rng.hpp"

namespace cis {

namespace {

constexpr double kLog2PiE = 2.837877066409345;  // ln(2*pi*e)

std::vector<int> expand_dims(const std::vector<int>& pixels, int comps) {
  std::vector<int> dims;
  dims.reserve(pixels.size() * static_cast<std::size_t>(comps));
  for (int p : pixels) {
    for (int c = 0; c < comps; ++c) dims.push_back(p * comps + c);
  }
  return dims;
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& m, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          m(rows[i], cols[j]);
    }
  }
  return out;
}

double logdet_spd(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    fail(std::string("infomeasure: ") + what + " is not positive definite");
  }
  double ld = 0.0;
  const auto& L = llt.matrixL();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double d = L(i, i);
    if (d < 1e-154) {
      fail(std::string("infomeasure: ") + what +
           " is numerically singular (perfectly informative conditioning)");
    }
    ld += 2.0 * std::log(d);
  }
  return ld;
}

double entropy_from_cov(const Eigen::MatrixXd& cov, const char* what) {
  return 0.5 * (static_cast<double>(cov.rows()) * kLog2PiE + logdet_spd(cov, what));
}

Eigen::MatrixXd schur_conditional(const Eigen::MatrixXd& cov, const std::vector<int>& x_dims,
                                  const std::vector<int>& y_dims) {
  const Eigen::MatrixXd sxx = submatrix(cov, x_dims, x_dims);
  if (y_dims.empty()) return sxx;
  const Eigen::MatrixXd syy = submatrix(cov, y_dims, y_dims);
  const Eigen::MatrixXd sxy = submatrix(cov, x_dims, y_dims);
  Eigen::LLT<Eigen::MatrixXd> llt(syy);
  if (llt.info() != Eigen::Success) {
    fail("infomeasure: conditioning covariance is not positive definite");
  }
  return sxx - sxy * llt.solve(sxy.transpose());
}

void check_subsets(const GaussianBlockModel& model, const std::vector<int>& x,
                   const std::vector<int>& y) {
  if (x.empty() || y.empty()) fail("infomeasure: subsets must be nonempty");
  std::set<int> seen(x.begin(), x.end());
  for (int p : y) {
    if (seen.count(p)) fail("infomeasure: subsets must be disjoint (pixel " + std::to_string(p) + ")");
  }
  for (int p : x) {
    if (p < 0 || p >= model.n_pixels) fail("infomeasure: pixel id out of range");
  }
  for (int p : y) {
    if (p < 0 || p >= model.n_pixels) fail("infomeasure: pixel id out of range");
  }
}

// epsilon-guarded loss term used by the brute-force enumeration; empty-set
// entropies are zero by convention, which makes gamma(empty | rest) = 1 and
// gamma(rest | empty) ~ 0, so L(empty) = L(full) = 1
double gamma_eps(const Eigen::MatrixXd& cov, int comps, const std::vector<int>& x_pixels,
                 const std::vector<int>& y_pixels, double eps) {
  const auto x_dims = expand_dims(x_pixels, comps);
  const auto y_dims = expand_dims(y_pixels, comps);
  const double hx = x_dims.empty() ? 0.0 : entropy_from_cov(submatrix(cov, x_dims, x_dims), "marginal block");
  const double hxy = x_dims.empty() ? 0.0 : entropy_from_cov(schur_conditional(cov, x_dims, y_dims), "conditional block");
  return 1.0 - hxy / (hx + eps);
}

}  // namespace

void GaussianBlockModel::validate() const {
  const int d = n_pixels * components_per_pixel;
  if (cov.rows() != d || cov.cols() != d) {
    fail("infomeasure: covariance is " + std::to_string(cov.rows()) + "x" +
         std::to_string(cov.cols()) + ", expected " + std::to_string(d));
  }
  for (Eigen::Index i = 0; i < cov.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < cov.cols(); ++j) {
      if (std::abs(cov(i, j) - cov(j, i)) > 1e-9) {
        fail("infomeasure: covariance not symmetric at (" + std::to_string(i) + "," +
             std::to_string(j) + ")");
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() <= 0.0) {
    fail("infomeasure: covariance has a non-positive eigenvalue");
  }
}

double gaussian_entropy(const Eigen::MatrixXd& cov) {
  if (cov.rows() != cov.cols() || cov.rows() == 0) {
    fail("infomeasure: entropy needs a square covariance");
  }
  return entropy_from_cov(cov, "covariance");
}

double gaussian_conditional_entropy(const GaussianBlockModel& model,
                                    const std::vector<int>& x_pixels,
                                    const std::vector<int>& y_pixels) {
  check_subsets(model, x_pixels, y_pixels);
  const auto x_dims = expand_dims(x_pixels, model.components_per_pixel);
  const auto y_dims = expand_dims(y_pixels, model.components_per_pixel);
  return entropy_from_cov(schur_conditional(model.cov, x_dims, y_dims), "conditional block");
}

double gaussian_irr(const GaussianBlockModel& model, const std::vector<int>& x_pixels,
                    const std::vector<int>& y_pixels) {
  check_subsets(model, x_pixels, y_pixels);
  const auto x_dims = expand_dims(x_pixels, model.components_per_pixel);
  const double hx = entropy_from_cov(submatrix(model.cov, x_dims, x_dims), "marginal block");
  if (hx <= 0.0) {
    fail("infomeasure: gamma undefined, marginal entropy " + std::to_string(hx) +
         " is not positive (rescale the model)");
  }
  const double hxy = gaussian_conditional_entropy(model, x_pixels, y_pixels);
  return 1.0 - hxy / hx;
}

double gaussian_mi(const GaussianBlockModel& model, const std::vector<int>& x_pixels,
                   const std::vector<int>& y_pixels) {
  check_subsets(model, x_pixels, y_pixels);
  const auto x_dims = expand_dims(x_pixels, model.components_per_pixel);
  const double hx = entropy_from_cov(submatrix(model.cov, x_dims, x_dims), "marginal block");
  return hx - gaussian_conditional_entropy(model, x_pixels, y_pixels);
}

StatementReport verify_statements(const GaussianBlockModel& model, std::uint64_t seed,
                                  int subset_draws, double tolerance) {
  model.validate();
  StatementReport report;
  report.min_within_mi = std::numeric_limits<double>::infinity();
  Rng rng(seed);

  auto draw_subset = [&rng](const std::vector<int>& pool, bool proper) {
    // nonempty subset; proper means also not the full pool
    const int max_size = proper ? static_cast<int>(pool.size()) - 1 : static_cast<int>(pool.size());
    const int size = rng.uniform_int(1, std::max(1, max_size));
    std::vector<int> shuffled = pool;
    for (std::size_t j = shuffled.size(); j > 1; --j) {
      std::swap(shuffled[j - 1], shuffled[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(j) - 1))]);
    }
    shuffled.resize(static_cast<std::size_t>(size));
    std::sort(shuffled.begin(), shuffled.end());
    return shuffled;
  };

  // statement 1: a subset of the object informs its remainder
  if (model.fg.size() < 2) {
    report.checks.push_back({"statement1: object too small, vacuous", 0.0, true, true});
    report.min_within_mi = 0.0;
  } else {
    for (int d = 0; d < subset_draws; ++d) {
      const auto sub = draw_subset(model.fg, /*proper=*/true);
      std::vector<int> rest;
      for (int p : model.fg) {
        if (!std::count(sub.begin(), sub.end(), p)) rest.push_back(p);
      }
      const double mi = gaussian_mi(model, sub, rest);
      const bool ok = mi > 0.0;
      report.statement1_ok = report.statement1_ok && ok;
      report.min_within_mi = std::min(report.min_within_mi, mi);
      report.checks.push_back({"statement1: I(sub-object; remainder) subset size " +
                                   std::to_string(sub.size()),
                               mi, ok, false});
    }
  }

  // statement 2: no subset of the object informs any subset of the context
  for (int d = 0; d < subset_draws; ++d) {
    const auto sub_fg = draw_subset(model.fg, /*proper=*/false);
    const auto sub_bg = draw_subset(model.bg, /*proper=*/false);
    const double mi = gaussian_mi(model, sub_fg, sub_bg);
    const bool ok = std::abs(mi) <= tolerance;
    report.statement2_ok = report.statement2_ok && ok;
    report.max_cross_mi = std::max(report.max_cross_mi, std::abs(mi));
    report.checks.push_back({"statement2: I(sub-object; sub-context) sizes " +
                                 std::to_string(sub_fg.size()) + "/" + std::to_string(sub_bg.size()),
                             mi, ok, false});
  }
  return report;
}

void LatticeFlowSamples::validate() const {
  if (n_pixels <= 0) fail("infomeasure: lattice needs pixels");
  if (samples.cols() != 2 * n_pixels) {
    fail("infomeasure: samples have " + std::to_string(samples.cols()) + " columns, expected " +
         std::to_string(2 * n_pixels));
  }
  if (samples.rows() < 10 * n_pixels) {
    fail("infomeasure: need at least " + std::to_string(10 * n_pixels) + " samples, got " +
         std::to_string(samples.rows()));
  }
  if (!samples.allFinite()) fail("infomeasure: samples contain non-finite values");
}

LatticeFlowSamples sample_lattice_instance(int n_pixels, int fg_size, int m, double noise_sigma,
                                           std::uint64_t seed) {
  if (fg_size <= 0 || fg_size >= n_pixels) fail("infomeasure: foreground size out of range");
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_pixels))));
  const bool grid = side * side == n_pixels;

  // connected foreground region grown from a random start (random subset when
  // the pixel count is not a square grid)
  Rng rng(mix_seed(seed, 0x1A77u));
  std::vector<int> object;
  if (grid) {
    std::set<int> chosen{rng.uniform_int(0, n_pixels - 1)};
    while (static_cast<int>(chosen.size()) < fg_size) {
      std::vector<int> frontier;
      for (int p : chosen) {
        const int y = p / side, x = p % side;
        const int nbors[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
        for (const auto& nb : nbors) {
          if (nb[0] >= 0 && nb[0] < side && nb[1] >= 0 && nb[1] < side) {
            const int q = nb[0] * side + nb[1];
            if (!chosen.count(q)) frontier.push_back(q);
          }
        }
      }
      std::sort(frontier.begin(), frontier.end());
      frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
      chosen.insert(frontier[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<int>(frontier.size()) - 1))]);
    }
    object.assign(chosen.begin(), chosen.end());
  } else {
    std::vector<int> ids(static_cast<std::size_t>(n_pixels));
    for (int i = 0; i < n_pixels; ++i) ids[static_cast<std::size_t>(i)] = i;
    for (std::size_t j = ids.size(); j > 1; --j) {
      std::swap(ids[j - 1], ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(j) - 1))]);
    }
    ids.resize(static_cast<std::size_t>(fg_size));
    std::sort(ids.begin(), ids.end());
    object = ids;
  }

  std::vector<char> is_fg(static_cast<std::size_t>(n_pixels), 0);
  for (int p : object) is_fg[static_cast<std::size_t>(p)] = 1;

  Rng fg_rng(mix_seed(seed, 0xF00Du));
  Rng bg_rng(mix_seed(seed, 0xBA5Eu));
  Rng noise_rng(mix_seed(seed, 0x015Eu));

  LatticeFlowSamples out;
  out.n_pixels = n_pixels;
  out.true_object = object;
  out.samples.resize(m, 2 * n_pixels);
  for (int s = 0; s < m; ++s) {
    const double fgu = fg_rng.normal(), fgv = fg_rng.normal();
    const double bgu = bg_rng.normal(), bgv = bg_rng.normal();
    for (int p = 0; p < n_pixels; ++p) {
      const bool in = is_fg[static_cast<std::size_t>(p)] != 0;
      out.samples(s, 2 * p) = (in ? fgu : bgu) + noise_rng.normal(0.0, noise_sigma);
      out.samples(s, 2 * p + 1) = (in ? fgv : bgv) + noise_rng.normal(0.0, noise_sigma);
    }
  }
  return out;
}

BruteForceResult brute_force_object(const LatticeFlowSamples& samples, double eps,
                                    double shrinkage) {
  samples.validate();
  if (eps <= 0.0) fail("infomeasure: eps must be positive");
  const int n = samples.n_pixels;
  if (n > 16) fail("infomeasure: enumeration limited to 16 pixels, got " + std::to_string(n));

  // empirical covariance, shrunk toward its diagonal
  const Eigen::Index m = samples.samples.rows();
  const Eigen::RowVectorXd mean = samples.samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.samples.rowwise() - mean;
  Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(m - 1);
  const Eigen::MatrixXd diag = cov.diagonal().asDiagonal();
  cov = (1.0 - shrinkage) * cov + shrinkage * diag;
  {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      fail("infomeasure: sample covariance not positive definite after shrinkage; draw more samples");
    }
  }

  const std::uint32_t n_masks = 1u << n;
  BruteForceResult result;
  result.table.resize(n_masks);

  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 0;
  for (std::uint32_t bits = 0; bits < n_masks; ++bits) {
    std::vector<int> inside, outside;
    for (int p = 0; p < n; ++p) {
      if (bits & (1u << p)) inside.push_back(p);
      else outside.push_back(p);
    }
    const double t1 = gamma_eps(cov, 2, inside, outside, eps);
    const double t2 = gamma_eps(cov, 2, outside, inside, eps);
    result.table[bits] = MaskLoss{bits, t1, t2, t1 + t2};
    const bool proper = bits != 0 && bits != n_masks - 1;
    if (proper && t1 + t2 < best) {
      best = t1 + t2;
      best_mask = bits;
    }
  }
  result.loss_empty = result.table[0].total;
  result.loss_full = result.table[n_masks - 1].total;
  result.argmin_mask = best_mask;
  result.argmin_complement = (n_masks - 1) & ~best_mask;
  return result;
}

}  // namespace cis
