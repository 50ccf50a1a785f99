#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace cis {

// Gaussian flow model over a small pixel lattice: each pixel contributes
// `components_per_pixel` dimensions (2 for flow vectors, 1 for scalar toy
// models). Subsets are given as pixel ids and expand to dimension blocks.
struct GaussianBlockModel {
  int components_per_pixel = 1;
  int n_pixels = 0;
  std::vector<int> fg;  // pixel ids of the object
  std::vector<int> bg;  // pixel ids of the context
  Eigen::MatrixXd cov;
  Eigen::VectorXd mean;

  void validate() const;  // symmetry within 1e-9, SPD, label sanity
};

// differential entropy of N(mean, cov): 0.5 * ln((2*pi*e)^d * det cov), nats
double gaussian_entropy(const Eigen::MatrixXd& cov);

// entropy of x given y under the joint Gaussian: Schur complement block
double gaussian_conditional_entropy(const GaussianBlockModel& model,
                                    const std::vector<int>& x_pixels,
                                    const std::vector<int>& y_pixels);

// information reduction rate gamma(x|y) = I(x;y)/H(x) = 1 - H(x|y)/H(x).
// Requires disjoint nonempty subsets and H(x) > 0.
double gaussian_irr(const GaussianBlockModel& model, const std::vector<int>& x_pixels,
                    const std::vector<int>& y_pixels);

// mutual information I(x;y) = H(x) - H(x|y), nats
double gaussian_mi(const GaussianBlockModel& model, const std::vector<int>& x_pixels,
                   const std::vector<int>& y_pixels);

// Closed-form checks of the two defining properties of an object: a subset of
// the object informs its remainder (MI > 0), and no subset of the object
// informs any subset of the context (MI == 0 up to tolerance). Sub-subsets
// are sampled with the given seed; degenerate cases are reported as skipped.
struct StatementCheck {
  std::string description;
  double value = 0.0;
  bool passed = false;
  bool skipped = false;
};

struct StatementReport {
  std::vector<StatementCheck> checks;
  bool statement1_ok = true;
  bool statement2_ok = true;
  double min_within_mi = 0.0;  // smallest within-object MI seen
  double max_cross_mi = 0.0;   // largest fg<->bg MI seen
};

StatementReport verify_statements(const GaussianBlockModel& model, std::uint64_t seed,
                                  int subset_draws = 8, double tolerance = 1e-9);

// m independent flow samples over an n-pixel lattice, 2 components per pixel;
// rows are samples, columns are (pixel, component) dimensions.
struct LatticeFlowSamples {
  int n_pixels = 0;
  Eigen::MatrixXd samples;       // m x (2 * n_pixels)
  std::vector<int> true_object;  // pixel ids, may be empty when unknown

  void validate() const;  // m >= 10 * n, finite
};

// shared foreground motion + shared background motion + per-pixel noise;
// the generative model used by the enumeration trials
LatticeFlowSamples sample_lattice_instance(int n_pixels, int fg_size, int m, double noise_sigma,
                                           std::uint64_t seed);

struct MaskLoss {
  std::uint32_t mask_bits = 0;
  double term1 = 0.0;  // gamma(mask | complement)
  double term2 = 0.0;  // gamma(complement | mask)
  double total = 0.0;
};

struct BruteForceResult {
  std::vector<MaskLoss> table;  // one row per mask index 0..2^n-1
  double loss_empty = 0.0;      // epsilon-convention values for the degenerate sets
  double loss_full = 0.0;
  std::uint32_t argmin_mask = 0;        // lowest-index minimizer over nonempty proper subsets
  std::uint32_t argmin_complement = 0;  // its exact-tie complement
};

// Exhaustive minimization of L(mask) = gamma(mask|rest) + gamma(rest|mask)
// over all masks of an n <= 16 pixel lattice, entropies estimated from the
// samples (covariance shrunk toward its diagonal for SPD robustness).
BruteForceResult brute_force_object(const LatticeFlowSamples& samples, double eps,
                                    double shrinkage = 1e-3);

}  // namespace cis
