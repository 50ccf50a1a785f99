#include "cis/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cis/error.hpp"

namespace cis {

namespace {

void check_sizes(const Mask& a, const Mask& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    fail(std::string(what) + ": mask sizes differ (" + std::to_string(a.width) + "x" +
         std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
         std::to_string(b.height) + ")");
  }
}

std::vector<std::uint8_t> boundary_pixels(const Mask& m) {
  std::vector<std::uint8_t> b(m.fg.size(), 0);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const bool edge = y == 0 || y == m.height - 1 || x == 0 || x == m.width - 1;
      if (edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1)) {
        b[static_cast<std::size_t>(y) * m.width + x] = 1;
      }
    }
  }
  return b;
}

// Felzenszwalb-Huttenlocher 1-D squared distance transform
void dt_1d(std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
           std::vector<double>& z, int n) {
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = ((f[static_cast<std::size_t>(q)] + q * q) -
                (f[static_cast<std::size_t>(v[static_cast<std::size_t>(k)])] +
                 v[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)])) /
               (2.0 * q - 2.0 * v[static_cast<std::size_t>(k)]);
    while (s <= z[static_cast<std::size_t>(k)]) {
      --k;
      s = ((f[static_cast<std::size_t>(q)] + q * q) -
           (f[static_cast<std::size_t>(v[static_cast<std::size_t>(k)])] +
            v[static_cast<std::size_t>(k)] * v[static_cast<std::size_t>(k)])) /
          (2.0 * q - 2.0 * v[static_cast<std::size_t>(k)]);
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(k) + 1] < q) ++k;
    const int vq = v[static_cast<std::size_t>(k)];
    d[static_cast<std::size_t>(q)] = (q - vq) * (q - vq) + f[static_cast<std::size_t>(vq)];
  }
}

// exact squared Euclidean distance to the nearest set pixel
std::vector<double> squared_edt(const std::vector<std::uint8_t>& set, int w, int h) {
  constexpr double kInf = 1e18;
  std::vector<double> dist(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) dist[i] = set[i] ? 0.0 : kInf;

  const int n_max = std::max(w, h);
  std::vector<double> f(static_cast<std::size_t>(n_max)), d(static_cast<std::size_t>(n_max));
  std::vector<int> v(static_cast<std::size_t>(n_max));
  std::vector<double> z(static_cast<std::size_t>(n_max) + 1);

  for (int x = 0; x < w; ++x) {  // columns
    for (int y = 0; y < h; ++y) f[static_cast<std::size_t>(y)] = dist[static_cast<std::size_t>(y) * w + x];
    dt_1d(f, d, v, z, h);
    for (int y = 0; y < h; ++y) dist[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(y)];
  }
  for (int y = 0; y < h; ++y) {  // rows
    for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(x)] = dist[static_cast<std::size_t>(y) * w + x];
    dt_1d(f, d, v, z, w);
    for (int x = 0; x < w; ++x) dist[static_cast<std::size_t>(y) * w + x] = d[static_cast<std::size_t>(x)];
  }
  return dist;
}

double within_fraction(const std::vector<std::uint8_t>& from_boundary,
                       const std::vector<double>& sq_dist_to_other, double tol) {
  std::int64_t total = 0, hit = 0;
  const double tol_sq = tol * tol + 1e-9;
  for (std::size_t i = 0; i < from_boundary.size(); ++i) {
    if (!from_boundary[i]) continue;
    ++total;
    if (sq_dist_to_other[i] <= tol_sq) ++hit;
  }
  return total == 0 ? -1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

double jaccard(const Mask& pred, const Mask& gt) {
  check_sizes(pred, gt, "jaccard");
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.fg.size(); ++i) {
    const bool p = pred.fg[i] != 0, g = gt.fg[i] != 0;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;  // both empty
  return static_cast<double>(inter) / static_cast<double>(uni);
}

int default_boundary_tolerance(int width, int height) {
  const double diag = std::sqrt(static_cast<double>(width) * width +
                                static_cast<double>(height) * height);
  return static_cast<int>(std::ceil(0.008 * diag));
}

double boundary_f(const Mask& pred, const Mask& gt, double tolerance_px) {
  check_sizes(pred, gt, "boundary_f");
  if (tolerance_px < 0.0) fail("boundary_f: tolerance must be >= 0");
  const auto bp = boundary_pixels(pred);
  const auto bg = boundary_pixels(gt);
  const bool p_empty = std::none_of(bp.begin(), bp.end(), [](std::uint8_t v) { return v != 0; });
  const bool g_empty = std::none_of(bg.begin(), bg.end(), [](std::uint8_t v) { return v != 0; });
  if (p_empty && g_empty) return 1.0;
  if (p_empty || g_empty) return 0.0;

  const auto dist_to_gt = squared_edt(bg, pred.width, pred.height);
  const auto dist_to_pred = squared_edt(bp, pred.width, pred.height);
  const double precision = within_fraction(bp, dist_to_gt, tolerance_px);
  const double recall = within_fraction(bg, dist_to_pred, tolerance_px);
  if (precision + recall <= 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

MetricsReport sequence_metrics(const std::vector<Mask>& preds, const std::vector<Mask>& gts,
                               const std::string& sequence_id) {
  if (preds.size() != gts.size()) {
    fail("sequence_metrics: " + std::to_string(preds.size()) + " predictions vs " +
         std::to_string(gts.size()) + " ground-truth masks");
  }
  if (preds.size() < 4) {
    fail("sequence_metrics: need at least 4 frames for decay, got " +
         std::to_string(preds.size()));
  }
  MetricsReport r;
  r.sequence_id = sequence_id;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double tol = default_boundary_tolerance(preds[i].width, preds[i].height);
    r.j_frames.push_back(jaccard(preds[i], gts[i]));
    r.f_frames.push_back(boundary_f(preds[i], gts[i], tol));
  }

  auto aggregate = [](const std::vector<double>& s, double* mean_out, double* recall_out,
                      double* decay_out) {
    const std::size_t n = s.size();
    double acc = 0.0;
    std::size_t over = 0;
    for (double v : s) {
      acc += v;
      if (v > 0.5) ++over;
    }
    *mean_out = acc / static_cast<double>(n);
    *recall_out = static_cast<double>(over) / static_cast<double>(n);
    const std::size_t q = n / 4;
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < q; ++i) first += s[i];
    for (std::size_t i = n - q; i < n; ++i) last += s[i];
    *decay_out = (first - last) / static_cast<double>(q);
  };
  aggregate(r.j_frames, &r.j_mean, &r.j_recall, &r.j_decay);
  aggregate(r.f_frames, &r.f_mean, &r.f_recall, &r.f_decay);
  return r;
}

}  // namespace cis
