#include "datt/backbone.h"

#include <string>

#include "datt/error.h"

namespace datt {

void BackboneConfig::Validate() const {
  if (mel_bins == 0 || mel_bins % 16 != 0) {
    throw ConfigError("mel_bins must be a positive multiple of 16, got " +
                      std::to_string(mel_bins));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (channels[i] == 0) throw ConfigError("channels must be positive");
    if (blocks_per_stage[i] == 0) throw ConfigError("blocks_per_stage must be positive");
  }
  if (num_f == 0) throw ConfigError("num_f must be positive");
  if (num_speakers < 2) throw ConfigError("num_speakers must be at least 2");
  if (stream1_filters == 0) throw ConfigError("stream1_filters must be positive");
}

template <typename Real>
Tensor<Real> BasicBlock<Real>::Shortcut(const Context<Real>& ctx, const Tensor<Real>& x) const {
  if (!projection) return x;
  return shortcut_bn.Forward(ctx, shortcut_conv.Forward(ctx, x));
}

template <typename Real>
Tensor<Real> BasicBlock<Real>::Forward(const Context<Real>& ctx, const Tensor<Real>& x) const {
  Tensor<Real> h = Relu(bn1.Forward(ctx, conv1.Forward(ctx, x)));
  h = bn2.Forward(ctx, conv2.Forward(ctx, h));
  return Relu(Add(h, Shortcut(ctx, x)));
}

namespace {

constexpr ParamGroup kGroup = ParamGroup::kBackbone;

template <typename Real>
BasicBlock<Real> MakeBlock(ParameterStore<Real>& store, const std::string& name,
                           std::size_t cin, std::size_t cout, std::size_t stride) {
  BasicBlock<Real> b;
  b.conv1 = Conv<Real>::Create(store, name + ".conv1", 3, 3, cin, cout, stride, stride, false,
                               kGroup);
  b.bn1 = BatchNormLayer<Real>::Create(store, name + ".bn1", cout, kGroup);
  b.conv2 = Conv<Real>::Create(store, name + ".conv2", 3, 3, cout, cout, 1, 1, false, kGroup);
  b.bn2 = BatchNormLayer<Real>::Create(store, name + ".bn2", cout, kGroup);
  b.projection = stride != 1 || cin != cout;
  if (b.projection) {
    b.shortcut_conv = Conv<Real>::Create(store, name + ".shortcut.conv", 1, 1, cin, cout, stride,
                                         stride, false, kGroup);
    b.shortcut_bn = BatchNormLayer<Real>::Create(store, name + ".shortcut.bn", cout, kGroup);
  }
  return b;
}

}  // namespace

template <typename Real>
Backbone<Real>::Backbone(const BackboneConfig& config, ParameterStore<Real>& store)
    : config_(config) {
  config_.Validate();
  const std::size_t f = config_.mel_bins;
  const auto& ch = config_.channels;
  input_bn_ = BatchNormLayer<Real>::Create(store, "backbone.input_bn", 1, kGroup);
  stream1_conv_ = Conv<Real>::Create(store, "backbone.stream1.conv", 7, 7, 1,
                                     config_.stream1_filters, 1, 1, false, kGroup);
  stream1_bn_ =
      BatchNormLayer<Real>::Create(store, "backbone.stream1.bn", config_.stream1_filters, kGroup);
  stream2_conv_ =
      Conv<Real>::Create(store, "backbone.stream2.conv", 1, 1, f, f, 1, 1, true, kGroup);
  stream2_bn_ = BatchNormLayer<Real>::Create(store, "backbone.stream2.bn", 1, kGroup);
  merge_conv_ = Conv<Real>::Create(store, "backbone.merge.conv", 1, 1,
                                   config_.stream1_filters + 1, ch[0], 1, 1, false, kGroup);
  merge_bn_ = BatchNormLayer<Real>::Create(store, "backbone.merge.bn", ch[0], kGroup);

  std::size_t cin = ch[0];
  for (std::size_t s = 0; s < 4; ++s) {
    std::vector<BasicBlock<Real>> blocks;
    for (std::size_t b = 0; b < config_.blocks_per_stage[s]; ++b) {
      const std::size_t stride = (s > 0 && b == 0) ? 2 : 1;
      blocks.push_back(MakeBlock(store,
                                 "backbone.stage" + std::to_string(s + 1) + ".block" +
                                     std::to_string(b),
                                 cin, ch[s], stride));
      cin = ch[s];
    }
    stages_.push_back(std::move(blocks));
  }

  fc1_ = Dense<Real>::Create(store, "backbone.fc1", ch[3], config_.num_f, false, kGroup);
  fc1_bn_ = BatchNormLayer<Real>::Create(store, "backbone.fc1_bn", config_.num_f, kGroup);
  fc2_ = Dense<Real>::Create(store, "backbone.fc2", config_.num_f, config_.num_speakers,
                             config_.fc2_bias, kGroup);
}

template <typename Real>
Tensor<Real> Backbone<Real>::FrequencyMap(const Context<Real>& ctx,
                                          const Tensor<Real>& normalized) const {
  const Shape& s = normalized.shape();
  if (s.size() != 4 || s[2] != config_.mel_bins || s[3] != 1) {
    throw ShapeError("stream 2: expected N x T x " + std::to_string(config_.mel_bins) +
                     " x 1, got " + ShapeToString(s));
  }
  // Frequency bins become channels of a 1-wide map, so a 1x1 conv with F
  // filters mixes all bins of a frame.
  Tensor<Real> as_channels = Reshape(normalized, {s[0], s[1], 1, s[2]});
  return Reshape(stream2_conv_.Forward(ctx, as_channels), s);
}

template <typename Real>
Tensor<Real> Backbone<Real>::Preprocess(const Context<Real>& ctx, const Tensor<Real>& x) const {
  if (x.rank() != 3 || x.shape()[2] != config_.mel_bins) {
    throw ShapeError("backbone: expected N x T x " + std::to_string(config_.mel_bins) +
                     " input, got " + ShapeToString(x.shape()));
  }
  const Shape& s = x.shape();
  Tensor<Real> normalized = input_bn_.Forward(ctx, Reshape(x, {s[0], s[1], s[2], 1}));
  Tensor<Real> stream1 = Relu(stream1_bn_.Forward(ctx, stream1_conv_.Forward(ctx, normalized)));
  Tensor<Real> stream2 = Relu(stream2_bn_.Forward(ctx, FrequencyMap(ctx, normalized)));
  Tensor<Real> merged = Concat<Real>({stream1, stream2}, 3);
  return Relu(merge_bn_.Forward(ctx, merge_conv_.Forward(ctx, merged)));
}

template <typename Real>
Tensor<Real> Backbone<Real>::Trunk(const Context<Real>& ctx, const Tensor<Real>& x) const {
  Tensor<Real> h = Pool2d(x, PoolKind::kMax, {3, 3, 2, 2, 1, 1});
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    if (s == 2) h = Pool2d(h, PoolKind::kMax, {3, 1, 2, 1, 1, 0});
    for (const auto& block : stages_[s]) h = block.Forward(ctx, h);
  }
  return h;
}

template <typename Real>
UtteranceFeatures<Real> Backbone<Real>::Postprocess(const Context<Real>& ctx,
                                                    const Tensor<Real>& trunk) const {
  const Shape& s = trunk.shape();
  if (s.size() != 4 || s[2] * 16 != config_.mel_bins || s[3] != config_.channels[3]) {
    throw ShapeError("post-processing: unexpected trunk output " + ShapeToString(s));
  }
  UtteranceFeatures<Real> out;
  // AvgPool1: 1 x F/16 window over the remaining frequency axis.
  Tensor<Real> pooled = Pool2d(trunk, PoolKind::kAvg, {1, s[2], 1, 1, 0, 0});
  out.f_raw = Reshape(pooled, {s[0], s[1], s[3]});
  out.f_id = Relu(fc1_bn_.Forward(ctx, fc1_.Forward(ctx, out.f_raw)));
  out.embedding = Mean(out.f_id, 1, false);
  out.logits = fc2_.Forward(ctx, out.embedding);
  return out;
}

template <typename Real>
UtteranceFeatures<Real> Backbone<Real>::Forward(const Context<Real>& ctx,
                                                const Tensor<Real>& x) const {
  return Postprocess(ctx, Trunk(ctx, Preprocess(ctx, x)));
}

template struct BasicBlock<float>;
template struct BasicBlock<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace datt
