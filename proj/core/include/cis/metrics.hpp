#pragma once

#include <string>
#include <vector>

#include "cis/image.hpp"

namespace cis {

// intersection-over-union; 1 when both masks are empty
double jaccard(const Mask& pred, const Mask& gt);

// benchmark default tolerance: 0.8% of the image diagonal, rounded up
int default_boundary_tolerance(int width, int height);

// Boundary F-measure: boundary pixels are foreground pixels 4-adjacent to
// background (pixels outside the domain count as background); precision and
// recall use an exact Euclidean distance transform against the other mask's
// boundary within tolerance_px.
double boundary_f(const Mask& pred, const Mask& gt, double tolerance_px);

struct MetricsReport {
  std::string sequence_id;
  std::vector<double> j_frames;
  std::vector<double> f_frames;
  double j_mean = 0.0, j_recall = 0.0, j_decay = 0.0;
  double f_mean = 0.0, f_recall = 0.0, f_decay = 0.0;
};

// Per-frame J and F plus the table conventions: mean over frames, recall =
// fraction of frames scoring > 0.5, decay = mean of the first floor(n/4)
// frames minus mean of the last floor(n/4). Needs >= 4 frames.
MetricsReport sequence_metrics(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                               const std::string& sequence_id = "all");

}  // namespace cis
