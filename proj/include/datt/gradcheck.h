// Finite-difference verification of every layer type, in 64-bit.

#ifndef DATT_GRADCHECK_H_
#define DATT_GRADCHECK_H_

#include <cstdint>
#include <string>
#include <vector>

#include "datt/model.h"

namespace datt {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  // Elements sampled from each trainable tensor of the full model.
  std::size_t probes_per_tensor = 4;
  // Central-difference step for whole-model probes. The deep loss carries
  // rounding noise near 1e-14, so smaller steps trade truncation error for
  // noise on the smallest gradients.
  double model_step = 3e-5;
  // Gradients below this are compared absolutely. Parameters the loss is
  // nearly scale-invariant to (e.g. the input BN gain ahead of further BN
  // layers) have true gradients near 1e-6, inside that noise.
  double model_floor = 1e-4;
};

struct LayerCheck {
  std::string layer;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes straddling a ReLU / max-pool kink
  bool passed = false;
};

struct GradcheckReport {
  std::vector<LayerCheck> layers;
  bool passed() const;
  std::string Format() const;
};

// The model configuration gradcheck differentiates end to end.
ModelConfig GradcheckModelConfig();

// Isolated checks of each op family on random inputs, then a stratified
// sample of every trainable tensor of the full model under the combined
// loss, with results grouped by layer type.
GradcheckReport RunGradcheck(const GradcheckOptions& options = {});

}  // namespace datt

#endif  // DATT_GRADCHECK_H_
