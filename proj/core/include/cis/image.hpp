#pragma once

#include <cstdint>
#include <vector>

#include "cis/error.hpp"
#include "cis/tensor.hpp"

namespace cis {

// Plain data carriers shared by synthesis, io, metrics and the trainer.
// Conversions to NCHW tensors happen at the network boundary.

// RGB image, values in [0,1], channel-major (r plane, g plane, b plane)
struct Frame {
  int width = 0, height = 0;
  std::vector<float> rgb;  // 3*height*width

  static Frame zeros(int w, int h) { return Frame{w, h, std::vector<float>(3u * w * h, 0.0f)}; }
  float& at(int c, int y, int x) { return rgb[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return rgb[(static_cast<std::size_t>(c) * height + y) * width + x]; }
};

// dense displacement field, channel-major (u plane, v plane)
struct FlowField {
  int width = 0, height = 0;
  std::vector<float> uv;  // 2*height*width

  static FlowField zeros(int w, int h) {
    return FlowField{w, h, std::vector<float>(2u * w * h, 0.0f)};
  }
  float& u(int y, int x) { return uv[static_cast<std::size_t>(y) * width + x]; }
  float& v(int y, int x) { return uv[(static_cast<std::size_t>(height) + y) * width + x]; }
  float u(int y, int x) const { return uv[static_cast<std::size_t>(y) * width + x]; }
  float v(int y, int x) const { return uv[(static_cast<std::size_t>(height) + y) * width + x]; }
};

// binary mask, 1 = foreground
struct Mask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> fg;

  static Mask zeros(int w, int h) { return Mask{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)}; }
  std::uint8_t& at(int y, int x) { return fg[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return fg[static_cast<std::size_t>(y) * width + x]; }
  std::int64_t area() const {
    std::int64_t n = 0;
    for (auto v : fg) n += v ? 1 : 0;
    return n;
  }
};

// per-pixel foreground probability
struct SoftMask {
  int width = 0, height = 0;
  std::vector<float> p;

  Mask binarize(float threshold) const {
    Mask m = Mask::zeros(width, height);
    for (std::size_t i = 0; i < p.size(); ++i) m.fg[i] = p[i] >= threshold ? 1 : 0;
    return m;
  }
};

template <typename T>
Tensor<T> frame_to_tensor(const Frame& f) {
  std::vector<T> v(f.rgb.begin(), f.rgb.end());
  return Tensor<T>::from_data({1, 3, f.height, f.width}, std::move(v));
}

template <typename T>
Tensor<T> flow_to_tensor(const FlowField& f) {
  std::vector<T> v(f.uv.begin(), f.uv.end());
  return Tensor<T>::from_data({1, 2, f.height, f.width}, std::move(v));
}

template <typename T>
SoftMask tensor_to_softmask(const Tensor<T>& t) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 1) {
    fail("softmask: expected 1x1xHxW tensor, got " + shape_str(t.shape()));
  }
  SoftMask sm;
  sm.height = t.dim(2);
  sm.width = t.dim(3);
  sm.p.assign(t.values().begin(), t.values().end());
  return sm;
}

}  // namespace cis
