// Modified ResNet front end: two-stream pre-processing block, residual trunk,
// and the post-processing block that produces frame- and utterance-level
// features.
//
// Shapes (batched, channels last):
//   input        N x T x F
//   preprocess   N x T x F x channels[0]
//   trunk        N x T' x F/16 x channels[3]
//   f_raw        N x T' x channels[3]
//   f_id         N x T' x num_f
//   embedding    N x num_f
//   logits       N x num_speakers

#ifndef DATT_BACKBONE_H_
#define DATT_BACKBONE_H_

#include <array>
#include <cstddef>
#include <vector>

#include "datt/layers.h"

namespace datt {

struct BackboneConfig {
  std::size_t mel_bins = 64;
  std::array<std::size_t, 4> channels{64, 128, 256, 512};
  std::array<std::size_t, 4> blocks_per_stage{2, 2, 2, 2};
  std::size_t num_f = 256;
  std::size_t num_speakers = 7205;
  std::size_t stream1_filters = 16;
  // Dropped under AM-Softmax, where the class scores are pure cosines.
  bool fc2_bias = true;

  // ConfigError on F not divisible by 16, empty widths, num_speakers < 2.
  void Validate() const;
};

// Two 3x3 convs with BN, identity or strided 1x1-conv + BN shortcut, ReLU.
template <typename Real>
struct BasicBlock {
  Conv<Real> conv1, conv2;
  BatchNormLayer<Real> bn1, bn2;
  bool projection = false;
  Conv<Real> shortcut_conv;
  BatchNormLayer<Real> shortcut_bn;

  Tensor<Real> Shortcut(const Context<Real>& ctx, const Tensor<Real>& x) const;
  Tensor<Real> Forward(const Context<Real>& ctx, const Tensor<Real>& x) const;
};

template <typename Real>
struct UtteranceFeatures {
  Tensor<Real> f_raw, f_id, embedding, logits;
};

template <typename Real>
class Backbone {
 public:
  Backbone(const BackboneConfig& config, ParameterStore<Real>& store);

  const BackboneConfig& config() const { return config_; }

  // Stream 2 before its BN: each frame's F bins pass through one F x F map.
  Tensor<Real> FrequencyMap(const Context<Real>& ctx, const Tensor<Real>& normalized) const;
  Tensor<Real> Preprocess(const Context<Real>& ctx, const Tensor<Real>& x) const;
  Tensor<Real> Trunk(const Context<Real>& ctx, const Tensor<Real>& x) const;
  UtteranceFeatures<Real> Postprocess(const Context<Real>& ctx, const Tensor<Real>& trunk) const;
  UtteranceFeatures<Real> Forward(const Context<Real>& ctx, const Tensor<Real>& x) const;

  const std::vector<std::vector<BasicBlock<Real>>>& stages() const { return stages_; }
  const Dense<Real>& fc2() const { return fc2_; }
  const BatchNormLayer<Real>& input_bn() const { return input_bn_; }
  const Conv<Real>& stream2_conv() const { return stream2_conv_; }

 private:
  BackboneConfig config_;
  BatchNormLayer<Real> input_bn_;
  Conv<Real> stream1_conv_;
  BatchNormLayer<Real> stream1_bn_;
  Conv<Real> stream2_conv_;
  BatchNormLayer<Real> stream2_bn_;
  Conv<Real> merge_conv_;
  BatchNormLayer<Real> merge_bn_;
  std::vector<std::vector<BasicBlock<Real>>> stages_;
  Dense<Real> fc1_;
  BatchNormLayer<Real> fc1_bn_;
  Dense<Real> fc2_;
};

}  // namespace datt

#endif  // DATT_BACKBONE_H_
