#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cis/loss.hpp"
#include "cis/manifest.hpp"
#include "cis/models.hpp"
#include "cis/param_store.hpp"

namespace cis {

struct TrainConfig {
  double eps = 1e-6;  // ratio-denominator guard
  double lr_inpainter = 1e-4;
  double lr_generator = 1e-4;
  int steps_inpainter_per_generator = 1;
  int batch_size = 4;
  int total_steps = 1200;   // generator steps; one history row each
  int warmup_steps = 200;   // inpainter-only steps before the minimax begins
  std::uint64_t seed = 1;
  int delta_t_min = -5;
  int delta_t_max = 5;
  float binarize_threshold = 0.5f;
  int checkpoint_every = 1000;

  void validate() const {
    if (eps <= 0.0) fail("train config: eps must be > 0");
    if (delta_t_min > delta_t_max || (delta_t_min == 0 && delta_t_max == 0)) {
      fail("train config: delta_t range must be nonempty and exclude 0");
    }
    if (binarize_threshold <= 0.0f || binarize_threshold >= 1.0f) {
      fail("train config: binarize_threshold must be inside (0, 1)");
    }
    if (batch_size < 1) fail("train config: batch_size must be >= 1");
    if (steps_inpainter_per_generator < 0) {
      fail("train config: steps_inpainter_per_generator must be >= 0");
    }
  }
};

// One alternation: steps_inpainter_per_generator inpainter updates (generator
// frozen, descending on the loss), then one generator update (inpainter
// frozen, ascending). With zero configured steps nothing is updated and the
// loss is only evaluated. masks_out, when given, receives the binarized
// generator masks of the last forward (training diagnostics).
LossBreakdown adversarial_step(std::span<const SceneSample> batch, ParamStore& gen_params,
                               ParamStore& inp_params, const TrainConfig& cfg,
                               const GeneratorConfig& gen_cfg, const InpainterConfig& inp_cfg,
                               bool update_generator = true,
                               std::vector<Mask>* masks_out = nullptr);

struct TrainResult {
  ParamStore gen_params;
  ParamStore inp_params;
  std::string history_path;
  std::string gen_checkpoint;
  std::string inp_checkpoint;
  LossBreakdown final_loss;
};

// Full run: seeded shuffled mini-batches, warm-up, alternation, periodic
// checkpoints, CSV history (step,term_in,term_out,total,train_j) with one row
// per generator step.
TrainResult train(const Manifest& manifest, const TrainConfig& cfg,
                  const GeneratorConfig& gen_cfg, const InpainterConfig& inp_cfg,
                  const std::string& out_dir);

// Temporal-average inference: mean of the per-flow probability maps, then
// threshold (foreground when probability >= threshold).
std::pair<SoftMask, Mask> infer(const Frame& frame, const std::vector<FlowField>& flows,
                                ParamStore& gen_params, const GeneratorConfig& gen_cfg,
                                float binarize_threshold);

}  // namespace cis
