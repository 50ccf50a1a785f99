#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cis/conv.hpp"
#include "cis/ops.hpp"
#include "cis/param_store.hpp"

namespace cis {

// Mask generator: encoder (stride-2 conv stages) -> dilated bottleneck ->
// decoder (bilinear upsampling + conv) with additive skips, 2-channel softmax
// head. Channel 0 of the softmax is the foreground probability.
struct GeneratorConfig {
  int height = 64;
  int width = 64;
  int base_channels = 16;
  int encoder_depth = 3;
  int decoder_depth = 3;
  std::vector<int> atrous_rates{2, 4, 8, 16};
  bool use_batchnorm = true;
  bool concat_skips = false;

  void validate() const {
    if (encoder_depth < 1) fail("generator config: encoder_depth must be >= 1");
    if (decoder_depth != encoder_depth) {
      fail("generator config: decoder_depth " + std::to_string(decoder_depth) +
           " must match encoder_depth " + std::to_string(encoder_depth));
    }
    const int div = 1 << encoder_depth;
    if (height % div != 0 || width % div != 0) {
      fail("generator config: input " + std::to_string(width) + "x" + std::to_string(height) +
           " not divisible by 2^" + std::to_string(encoder_depth));
    }
    for (std::size_t i = 1; i < atrous_rates.size(); ++i) {
      if (atrous_rates[i] <= atrous_rates[i - 1]) {
        fail("generator config: atrous_rates must be strictly increasing");
      }
    }
  }
};

// Flow inpainter: two balanced encoder branches (image; visible flow plus
// mask indicator), concatenated features, dilated bottleneck, decoder with
// additive skips from the summed branch features, linear 2-channel flow head.
struct InpainterConfig {
  int height = 64;
  int width = 64;
  int base_channels = 16;
  int encoder_depth = 3;
  std::vector<int> bottleneck_dilations{2, 4};
  bool use_batchnorm = true;

  void validate() const {
    if (encoder_depth < 1) fail("inpainter config: encoder_depth must be >= 1");
    const int div = 1 << encoder_depth;
    if (height % div != 0 || width % div != 0) {
      fail("inpainter config: input " + std::to_string(width) + "x" + std::to_string(height) +
           " not divisible by 2^" + std::to_string(encoder_depth));
    }
  }
};

namespace detail {

constexpr double kLeakySlope = 0.1;
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;

template <typename T>
struct ModelCtx {
  ParamStoreT<T>& store;
  bool train;
  bool update_stats;
  bool use_batchnorm;
};

template <typename T>
Tensor<T> norm_layer(ModelCtx<T>& ctx, const Tensor<T>& x, const std::string& name, int ch) {
  auto& gamma = ctx.store.get_or_create(name + ".gamma", {1, ch, 1, 1}, [](Rng&) { return 1.0; });
  auto& beta = ctx.store.get_or_create(name + ".beta", {1, ch, 1, 1}, [](Rng&) { return 0.0; });
  if (!ctx.use_batchnorm) {
    // per-channel affine identity, the tiny-batch debugging switch
    return add(mul(x, gamma), beta);
  }
  auto& rm = ctx.store.buffer(name + ".running_mean", {1, ch, 1, 1}, T(0));
  auto& rv = ctx.store.buffer(name + ".running_var", {1, ch, 1, 1}, T(1));
  auto& cnt = ctx.store.buffer(name + ".count", {1}, T(0));
  return batchnorm(x, gamma, beta, rm, rv, cnt, ctx.train, ctx.train && ctx.update_stats,
                   kBnMomentum, kBnEps);
}

template <typename T>
Tensor<T> conv_layer(ModelCtx<T>& ctx, const Tensor<T>& x, const std::string& name, int out_ch,
                     int stride, int dilation, bool norm, bool act) {
  const int in_ch = x.dim(1);
  const int fan_in = in_ch * 9;
  auto& w = ctx.store.get_or_create(name + ".w", {out_ch, in_ch, 3, 3}, [fan_in](Rng& r) {
    return r.normal(0.0, std::sqrt(2.0 / fan_in));
  });
  auto& b = ctx.store.get_or_create(name + ".b", {out_ch}, [](Rng&) { return 0.0; });
  auto y = conv2d(x, w, b, stride, dilation, dilation);  // pad = dilation keeps 3x3 size
  if (norm) y = norm_layer(ctx, y, name + ".bn", out_ch);
  if (act) y = leaky_relu(y, static_cast<T>(kLeakySlope));
  return y;
}

template <typename T>
Tensor<T> encoder_branch(ModelCtx<T>& ctx, Tensor<T> x, const std::string& prefix,
                         int base_channels, int depth, std::vector<Tensor<T>>* features) {
  for (int i = 0; i < depth; ++i) {
    const int out_ch = base_channels << i;
    x = conv_layer(ctx, x, prefix + std::to_string(i), out_ch, /*stride=*/2, /*dilation=*/1,
                   /*norm=*/true, /*act=*/true);
    if (features) features->push_back(x);
  }
  return x;
}

template <typename T>
Tensor<T> decoder_stack(ModelCtx<T>& ctx, Tensor<T> x, const std::string& prefix, int depth,
                        int base_channels, const std::vector<Tensor<T>>& skips,
                        bool concat_skips) {
  for (int i = depth - 1; i >= 0; --i) {
    x = upsample_bilinear(x, 2);
    // after upsampling to encoder level i, the skip is the level-(i-1) feature
    const int skip_idx = i - 1;
    const int out_ch = skip_idx >= 0 ? base_channels << skip_idx : base_channels;
    if (skip_idx >= 0 && concat_skips) {
      x = concat_channels<T>({x, skips[static_cast<std::size_t>(skip_idx)]});
    }
    x = conv_layer(ctx, x, prefix + std::to_string(i), out_ch, /*stride=*/1, /*dilation=*/1,
                   /*norm=*/true, /*act=*/true);
    if (skip_idx >= 0 && !concat_skips) {
      x = add(x, skips[static_cast<std::size_t>(skip_idx)]);
    }
  }
  return x;
}

}  // namespace detail

// (image, flow) -> per-pixel foreground probability, differentiable
template <typename T>
Tensor<T> generator_forward(const Tensor<T>& frame, const Tensor<T>& flow,
                            ParamStoreT<T>& params, const GeneratorConfig& cfg, bool train_mode,
                            bool update_stats = true) {
  cfg.validate();
  if (frame.dim(2) != flow.dim(2) || frame.dim(3) != flow.dim(3)) {
    fail("generator: frame " + shape_str(frame.shape()) + " and flow " +
         shape_str(flow.shape()) + " sizes differ");
  }
  if (frame.dim(2) != cfg.height || frame.dim(3) != cfg.width) {
    fail("generator: input " + shape_str(frame.shape()) + " does not match configured " +
         std::to_string(cfg.width) + "x" + std::to_string(cfg.height));
  }
  detail::ModelCtx<T> ctx{params, train_mode, update_stats, cfg.use_batchnorm};

  auto x = concat_channels<T>({frame, flow});
  std::vector<Tensor<T>> skips;
  x = detail::encoder_branch(ctx, x, "enc", cfg.base_channels, cfg.encoder_depth, &skips);

  for (std::size_t i = 0; i < cfg.atrous_rates.size(); ++i) {
    x = detail::conv_layer(ctx, x, "atrous" + std::to_string(i), x.dim(1), /*stride=*/1,
                           cfg.atrous_rates[i], /*norm=*/true, /*act=*/true);
  }

  x = detail::decoder_stack(ctx, x, "dec", cfg.decoder_depth, cfg.base_channels, skips,
                            cfg.concat_skips);
  auto logits = detail::conv_layer(ctx, x, "head", 2, 1, 1, /*norm=*/false, /*act=*/false);
  return softmax_channels(logits);
}

// foreground-probability channel of the generator output
template <typename T>
Tensor<T> foreground_channel(const Tensor<T>& softmax_out) {
  return slice_channels(softmax_out, 0, 1);
}

// (image, flow, mask) -> reconstructed flow. The flow branch sees the visible
// complement (1-mask)*flow next to the mask itself; the network predicts a
// full field and the loss reads only the hidden region. Passing (1-mask)
// serves the complementary direction.
template <typename T>
Tensor<T> inpainter_forward(const Tensor<T>& frame, const Tensor<T>& flow,
                            const Tensor<T>& mask, ParamStoreT<T>& params,
                            const InpainterConfig& cfg, bool train_mode,
                            bool update_stats = true) {
  cfg.validate();
  if (frame.dim(2) != flow.dim(2) || frame.dim(3) != flow.dim(3) ||
      mask.dim(2) != flow.dim(2) || mask.dim(3) != flow.dim(3)) {
    fail("inpainter: frame " + shape_str(frame.shape()) + ", flow " + shape_str(flow.shape()) +
         ", mask " + shape_str(mask.shape()) + " sizes differ");
  }
  detail::ModelCtx<T> ctx{params, train_mode, update_stats, cfg.use_batchnorm};

  auto visible = mul(one_minus(mask), flow);
  auto flow_in = concat_channels<T>({visible, mask});

  std::vector<Tensor<T>> img_feats, flw_feats;
  auto img = detail::encoder_branch(ctx, frame, "img", cfg.base_channels, cfg.encoder_depth,
                                    &img_feats);
  auto flw = detail::encoder_branch(ctx, flow_in, "flw", cfg.base_channels, cfg.encoder_depth,
                                    &flw_feats);

  auto x = concat_channels<T>({img, flw});
  x = detail::conv_layer(ctx, x, "merge", cfg.base_channels << (cfg.encoder_depth - 1), 1, 1,
                         /*norm=*/true, /*act=*/true);
  for (std::size_t i = 0; i < cfg.bottleneck_dilations.size(); ++i) {
    x = detail::conv_layer(ctx, x, "btl" + std::to_string(i), x.dim(1), 1,
                           cfg.bottleneck_dilations[i], /*norm=*/true, /*act=*/true);
  }

  // additive skips from the summed branch features
  std::vector<Tensor<T>> skips;
  for (std::size_t i = 0; i < img_feats.size(); ++i) {
    skips.push_back(add(img_feats[i], flw_feats[i]));
  }
  x = detail::decoder_stack(ctx, x, "dec", cfg.encoder_depth, cfg.base_channels, skips,
                            /*concat_skips=*/false);
  return detail::conv_layer(ctx, x, "head", 2, 1, 1, /*norm=*/false, /*act=*/false);
}

// Kaiming-style fan-in init, zero biases, deterministic in the seed: runs one
// forward pass on a zero batch so that creation order (and thus the rng
// consumption order) is exactly the forward wiring.
template <typename T>
ParamStoreT<T> init_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStoreT<T> store(seed);
  auto frame = Tensor<T>::zeros({1, 3, cfg.height, cfg.width});
  auto flow = Tensor<T>::zeros({1, 2, cfg.height, cfg.width});
  generator_forward(frame, flow, store, cfg, /*train_mode=*/true, /*update_stats=*/false);
  store.zero_grad();
  return store;
}

template <typename T>
ParamStoreT<T> init_inpainter(const InpainterConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStoreT<T> store(seed);
  auto frame = Tensor<T>::zeros({1, 3, cfg.height, cfg.width});
  auto flow = Tensor<T>::zeros({1, 2, cfg.height, cfg.width});
  auto mask = Tensor<T>::filled({1, 1, cfg.height, cfg.width}, T(0.5));
  inpainter_forward(frame, flow, mask, store, cfg, /*train_mode=*/true, /*update_stats=*/false);
  store.zero_grad();
  return store;
}

}  // namespace cis
