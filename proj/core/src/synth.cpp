#include "cis/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <vector>

#include "cis/error.hpp"
#include "cis/flo_io.hpp"
#include "cis/pnm_io.hpp"
#include "cis/rng.hpp"

namespace cis {

namespace fs = std::filesystem;

namespace {

// fixed stream tags for the documented seed-splitting scheme
constexpr std::uint64_t kShapeStream = 0x5348u;  // shape geometry
constexpr std::uint64_t kFgStream = 0xF00Du;     // foreground motion
constexpr std::uint64_t kBgStream = 0xBA5Eu;     // background motion
constexpr std::uint64_t kTexStream = 0x7E57u;    // frame texture
constexpr std::uint64_t kDtStream = 0xD7u;       // temporal offset tags
constexpr std::uint64_t kNoiseStream = 0x0153u;  // per-window flow noise

RigidMotion sample_motion(Rng& rng, const SynthConfig& cfg) {
  RigidMotion m;
  const double t_range = cfg.translation_range * cfg.width / cfg.reference_width;
  m.rotation = rng.uniform(-cfg.rotation_range, cfg.rotation_range);
  m.tx = rng.uniform(-t_range, t_range);
  m.ty = rng.uniform(-t_range, t_range);
  m.cx = (cfg.width - 1) / 2.0;
  m.cy = (cfg.height - 1) / 2.0;
  return m;
}

// bilinear interpolation of a coarse grid onto the full image, used for
// low-frequency noise and color fields
std::vector<float> upsample_grid(const std::vector<float>& grid, int gw, int gh, int w, int h) {
  std::vector<float> out(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    const double gy = (y + 0.5) / h * gh - 0.5;
    const int y0 = std::clamp(static_cast<int>(std::floor(gy)), 0, gh - 1);
    const int y1 = std::min(y0 + 1, gh - 1);
    const double fy = std::clamp(gy - y0, 0.0, 1.0);
    for (int x = 0; x < w; ++x) {
      const double gx = (x + 0.5) / w * gw - 0.5;
      const int x0 = std::clamp(static_cast<int>(std::floor(gx)), 0, gw - 1);
      const int x1 = std::min(x0 + 1, gw - 1);
      const double fx = std::clamp(gx - x0, 0.0, 1.0);
      const double v00 = grid[static_cast<std::size_t>(y0) * gw + x0];
      const double v01 = grid[static_cast<std::size_t>(y0) * gw + x1];
      const double v10 = grid[static_cast<std::size_t>(y1) * gw + x0];
      const double v11 = grid[static_cast<std::size_t>(y1) * gw + x1];
      out[static_cast<std::size_t>(y) * w + x] = static_cast<float>(
          (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11));
    }
  }
  return out;
}

Mask rasterize_ellipse(Rng& rng, int w, int h) {
  const double cx = rng.uniform(0.25, 0.75) * w;
  const double cy = rng.uniform(0.25, 0.75) * h;
  const double a = rng.uniform(0.10, 0.45) * w;
  const double b = rng.uniform(0.10, 0.45) * h;
  const double ang = rng.uniform(0.0, M_PI);
  const double ca = std::cos(ang), sa = std::sin(ang);
  Mask m = Mask::zeros(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double xr = ca * dx + sa * dy;
      const double yr = -sa * dx + ca * dy;
      m.at(y, x) = (xr * xr / (a * a) + yr * yr / (b * b) <= 1.0) ? 1 : 0;
    }
  }
  return m;
}

Mask rasterize_polygon(Rng& rng, int w, int h) {
  const int k = rng.uniform_int(3, 8);
  const double cx = rng.uniform(0.30, 0.70) * w;
  const double cy = rng.uniform(0.30, 0.70) * h;
  const double rmax = 0.45 * std::min(w, h);
  std::vector<double> angles(static_cast<std::size_t>(k));
  for (auto& a : angles) a = rng.uniform(0.0, 2.0 * M_PI);
  std::sort(angles.begin(), angles.end());
  std::vector<double> px(static_cast<std::size_t>(k)), py(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double r = rng.uniform(0.35, 1.0) * rmax;
    px[static_cast<std::size_t>(i)] = cx + r * std::cos(angles[static_cast<std::size_t>(i)]);
    py[static_cast<std::size_t>(i)] = cy + r * std::sin(angles[static_cast<std::size_t>(i)]);
  }
  Mask m = Mask::zeros(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // crossing-number point-in-polygon test
      bool inside = false;
      for (int i = 0, j = k - 1; i < k; j = i++) {
        const double xi = px[static_cast<std::size_t>(i)], yi = py[static_cast<std::size_t>(i)];
        const double xj = px[static_cast<std::size_t>(j)], yj = py[static_cast<std::size_t>(j)];
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
      }
      m.at(y, x) = inside ? 1 : 0;
    }
  }
  return m;
}

Mask rasterize_blobs(Rng& rng, int w, int h, double target_area) {
  // union of 1-3 thresholded smoothed-noise blobs
  const int nblobs = rng.uniform_int(1, 3);
  std::vector<float> field(static_cast<std::size_t>(w) * h, 0.0f);
  for (int bi = 0; bi < nblobs; ++bi) {
    const int gw = 6, gh = 6;
    std::vector<float> grid(static_cast<std::size_t>(gw) * gh);
    for (auto& v : grid) v = static_cast<float>(rng.uniform());
    auto up = upsample_grid(grid, gw, gh, w, h);
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = std::max(field[i], up[i]);
  }
  // threshold at the quantile that hits the target area
  std::vector<float> sorted = field;
  const auto cut = static_cast<std::size_t>((1.0 - target_area) * (sorted.size() - 1));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(cut), sorted.end());
  const float thr = sorted[cut];
  Mask m = Mask::zeros(w, h);
  for (std::size_t i = 0; i < field.size(); ++i) m.fg[i] = field[i] > thr ? 1 : 0;
  return m;
}

Mask sample_shape(Rng& rng, const SynthConfig& cfg) {
  const std::int64_t total = static_cast<std::int64_t>(cfg.width) * cfg.height;
  for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
    const int kind = rng.uniform_int(0, 2);
    Mask m;
    switch (kind) {
      case 0: m = rasterize_ellipse(rng, cfg.width, cfg.height); break;
      case 1: m = rasterize_polygon(rng, cfg.width, cfg.height); break;
      default:
        m = rasterize_blobs(rng, cfg.width, cfg.height,
                            rng.uniform(cfg.mask_area_min, cfg.mask_area_max));
        break;
    }
    const double frac = static_cast<double>(m.area()) / static_cast<double>(total);
    if (frac >= cfg.mask_area_min && frac <= cfg.mask_area_max) return m;
  }
  fail("synth: no admissible shape after " + std::to_string(cfg.max_retries) + " retries");
}

Frame synth_frame(Rng& rng, const Mask& mask) {
  const int w = mask.width, h = mask.height;
  Frame f = Frame::zeros(w, h);
  // smooth background color field with a contrasting textured shape
  float bg_base[3], fg_base[3];
  for (int c = 0; c < 3; ++c) {
    bg_base[c] = static_cast<float>(rng.uniform(0.15, 0.85));
    const double off = rng.uniform(0.30, 0.60) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    fg_base[c] = static_cast<float>(std::fmod(bg_base[c] + off + 1.0, 1.0));
  }
  for (int c = 0; c < 3; ++c) {
    const int gw = 5, gh = 5;
    std::vector<float> grid_bg(gw * gh), grid_fg(gw * gh);
    for (auto& v : grid_bg) v = static_cast<float>(rng.uniform(-0.15, 0.15));
    for (auto& v : grid_fg) v = static_cast<float>(rng.uniform(-0.15, 0.15));
    auto low_bg = upsample_grid(grid_bg, gw, gh, w, h);
    auto low_fg = upsample_grid(grid_fg, gw, gh, w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        const float speckle = static_cast<float>(rng.uniform(-0.03, 0.03));
        const float v = mask.fg[i] ? fg_base[c] + low_fg[i] + speckle
                                   : bg_base[c] + low_bg[i] + speckle;
        f.at(c, y, x) = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return f;
}

void centroid_of(const Mask& m, double* cx, double* cy) {
  double sx = 0.0, sy = 0.0;
  std::int64_t n = 0;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.at(y, x)) {
        sx += x;
        sy += y;
        ++n;
      }
    }
  }
  if (n > 0) {
    *cx = sx / static_cast<double>(n);
    *cy = sy / static_cast<double>(n);
  }
}

}  // namespace

FlowField rigid_flow(const RigidMotion& motion, int width, int height) {
  if (width <= 0 || height <= 0) fail("rigid_flow: bad extents");
  if (std::abs(motion.rotation) > M_PI) fail("rigid_flow: |rotation| must be <= pi");
  FlowField f = FlowField::zeros(width, height);
  const double c = std::cos(motion.rotation), s = std::sin(motion.rotation);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = x - motion.cx, dy = y - motion.cy;
      f.u(y, x) = static_cast<float>(c * dx - s * dy + motion.cx + motion.tx - x);
      f.v(y, x) = static_cast<float>(s * dx + c * dy + motion.cy + motion.ty - y);
    }
  }
  return f;
}

IdealSample gen_ideal_sample(std::uint64_t seed, const SynthConfig& cfg) {
  Rng shape_rng(mix_seed(seed, kShapeStream));
  Rng fg_rng(mix_seed(seed, kFgStream));
  Rng bg_rng(mix_seed(seed, kBgStream));
  Rng tex_rng(mix_seed(seed, kTexStream));
  Rng dt_rng(mix_seed(seed, kDtStream));

  IdealSample s;
  s.seed = seed;
  s.gt_mask = sample_shape(shape_rng, cfg);
  s.fg_motion = sample_motion(fg_rng, cfg);
  s.bg_motion = sample_motion(bg_rng, cfg);
  if (cfg.rotate_about_centroid) {
    centroid_of(s.gt_mask, &s.fg_motion.cx, &s.fg_motion.cy);
  }

  const FlowField fg = rigid_flow(s.fg_motion, cfg.width, cfg.height);
  const FlowField bg = rigid_flow(s.bg_motion, cfg.width, cfg.height);
  s.flow = FlowField::zeros(cfg.width, cfg.height);
  for (int y = 0; y < cfg.height; ++y) {
    for (int x = 0; x < cfg.width; ++x) {
      const bool in = s.gt_mask.at(y, x) != 0;
      s.flow.u(y, x) = in ? fg.u(y, x) : bg.u(y, x);
      s.flow.v(y, x) = in ? fg.v(y, x) : bg.v(y, x);
    }
  }
  s.frame = synth_frame(tex_rng, s.gt_mask);
  do {
    s.dt = dt_rng.uniform_int(-5, 5);
  } while (s.dt == 0);
  return s;
}

FlowField perturb_with_gt(const FlowField& flow, const Mask& gt_mask, std::uint64_t seed,
                          const SynthConfig& cfg) {
  if (flow.width != gt_mask.width || flow.height != gt_mask.height) {
    fail("perturb_with_gt: flow and mask sizes differ");
  }
  SynthConfig local = cfg;
  local.width = flow.width;
  local.height = flow.height;
  Rng fg_rng(mix_seed(seed, kFgStream));
  Rng bg_rng(mix_seed(seed, kBgStream));
  const FlowField fg = rigid_flow(sample_motion(fg_rng, local), flow.width, flow.height);
  const FlowField bg = rigid_flow(sample_motion(bg_rng, local), flow.width, flow.height);
  FlowField out = flow;
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      const bool in = gt_mask.at(y, x) != 0;
      out.u(y, x) += in ? fg.u(y, x) : bg.u(y, x);
      out.v(y, x) += in ? fg.v(y, x) : bg.v(y, x);
    }
  }
  return out;
}

std::string gen_dataset(int n, std::uint64_t seed, const std::string& out_dir,
                        const SynthConfig& cfg) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail("synth: cannot create output dir '" + out_dir + "': " + ec.message());

  Manifest manifest;
  manifest.dir = out_dir;
  char name[64];

  for (int i = 0; i < n; ++i) {
    const std::uint64_t sample_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    IdealSample s = gen_ideal_sample(sample_seed, cfg);

    std::snprintf(name, sizeof(name), "sample_%05d_frame.ppm", i);
    const std::string frame_rel = name;
    std::snprintf(name, sizeof(name), "sample_%05d_mask.pgm", i);
    const std::string mask_rel = name;
    ppm_write((fs::path(out_dir) / frame_rel).string(), s.frame);
    pgm_write_mask((fs::path(out_dir) / mask_rel).string(), s.gt_mask);

    const int window = std::max(1, cfg.window);
    // distinct temporal offsets for the window, drawn without replacement
    std::vector<int> dts{-5, -4, -3, -2, -1, 1, 2, 3, 4, 5};
    Rng dt_rng(mix_seed(sample_seed, kDtStream ^ 0xFFu));
    for (std::size_t j = dts.size(); j > 1; --j) {
      std::swap(dts[j - 1], dts[static_cast<std::size_t>(dt_rng.uniform_int(0, static_cast<int>(j) - 1))]);
    }

    double rms = 0.0;
    for (float v : s.flow.uv) rms += static_cast<double>(v) * v;
    rms = std::sqrt(rms / static_cast<double>(s.flow.uv.size()));

    for (int k = 0; k < window; ++k) {
      FlowField flow_k = s.flow;
      int dt = window == 1 ? s.dt : dts[static_cast<std::size_t>(k) % dts.size()];
      if (window > 1 && cfg.window_noise > 0.0) {
        Rng noise_rng(mix_seed(sample_seed, kNoiseStream + static_cast<std::uint64_t>(k)));
        const double sigma = cfg.window_noise * rms;
        for (auto& v : flow_k.uv) v += static_cast<float>(noise_rng.normal(0.0, sigma));
      }
      if (window == 1) {
        std::snprintf(name, sizeof(name), "sample_%05d_flow.flo", i);
      } else {
        std::snprintf(name, sizeof(name), "sample_%05d_f%02d_flow.flo", i, k);
      }
      const std::string flow_rel = name;
      flo_write((fs::path(out_dir) / flow_rel).string(), flow_k);

      ManifestEntry e;
      e.frame = frame_rel;
      e.flow = flow_rel;
      e.mask = mask_rel;
      e.seed = sample_seed;
      e.dt = dt;
      manifest.entries.push_back(std::move(e));
    }
  }

  const std::string manifest_path = (fs::path(out_dir) / "manifest.jsonl").string();
  manifest_write(manifest_path, manifest);
  return manifest_path;
}

}  // namespace cis
