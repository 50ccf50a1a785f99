#pragma once

#include <cstdint>
#include <string>

#include "cis/image.hpp"
#include "cis/manifest.hpp"

namespace cis {

// In-plane rigid motion: u(x) = R(r)(x - c) + c + t - x
struct RigidMotion {
  double rotation = 0.0;  // radians, |r| <= pi
  double tx = 0.0, ty = 0.0;
  double cx = 0.0, cy = 0.0;
};

FlowField rigid_flow(const RigidMotion& motion, int width, int height);

// Ideal-conditions protocol: foreground and background motions are sampled
// from disjoint rng streams, so their flows are independent by construction.
// Translation ranges are specified at a reference width and scaled to the
// actual image width; rotations are scale-free.
struct SynthConfig {
  int width = 64;
  int height = 64;
  double mask_area_min = 0.05;
  double mask_area_max = 0.60;
  double translation_range = 30.0;  // pixels at reference_width
  double reference_width = 854.0;
  double rotation_range = 1.0;  // radians
  bool rotate_about_centroid = false;
  int window = 1;            // flow variants per scene
  double window_noise = 0.2;  // sigma as a fraction of rms flow magnitude
  int max_retries = 100;
};

struct IdealSample {
  Frame frame;
  FlowField flow;
  Mask gt_mask;
  RigidMotion fg_motion, bg_motion;
  std::uint64_t seed = 0;
  int dt = 0;
};

IdealSample gen_ideal_sample(std::uint64_t seed, const SynthConfig& cfg);

// Appendix idealization applied to an existing (possibly real) flow: adds one
// independently sampled rigid flow to the foreground and another to the
// background.
FlowField perturb_with_gt(const FlowField& flow, const Mask& gt_mask, std::uint64_t seed,
                          const SynthConfig& cfg);

// Writes n scenes (PPM frame, .flo flow(s), PGM mask) plus a JSON-lines
// manifest into out_dir; returns the manifest path. Deterministic in seed:
// sample i derives its own seed as mix_seed(seed, i), so parallel and serial
// generation agree.
std::string gen_dataset(int n, std::uint64_t seed, const std::string& out_dir,
                        const SynthConfig& cfg);

}  // namespace cis
