// The complete dual attention network: backbone, self/mutual attention stacks
// and the binary classifier, sharing one parameter store.

#ifndef DATT_MODEL_H_
#define DATT_MODEL_H_

#include <cstdint>

#include "datt/attention.h"
#include "datt/backbone.h"
#include "datt/scoring.h"

namespace datt {

struct ModelConfig {
  BackboneConfig backbone;
  // One f_att stack for both attention kinds instead of two.
  bool shared_attention_stacks = false;
  double dropout_rate = 0.5;
};

// Everything computed per utterance, independent of its partner.
template <typename Real>
struct EncodedBatch {
  UtteranceFeatures<Real> features;
  Tensor<Real> att_self;    // N x T' x num_f
  Tensor<Real> att_mutual;  // N x T' x num_f
  AttentionResult<Real> self;  // W_self (N x T' x F), f_self (N x F)

  // Rows [begin, end) of every field.
  EncodedBatch Rows(std::size_t begin, std::size_t end) const;
  std::size_t size() const { return features.embedding.shape()[0]; }
};

// Dual-attention features and binary scores for every (a, b) combination of
// two encoded batches; all tensors are indexed [a][b].
template <typename Real>
struct PairGrid {
  AttentionResult<Real> mutual_a;  // W: A x B x T'a x F, f: A x B x F
  AttentionResult<Real> mutual_b;  // W: A x B x T'b x F, f: A x B x F
  Tensor<Real> head_input;         // A x B x F
  Tensor<Real> score;              // A x B
};

template <typename Real>
class DualAttentionNet {
 public:
  DualAttentionNet(const ModelConfig& config, std::uint64_t seed);
  DualAttentionNet(const DualAttentionNet&) = delete;
  DualAttentionNet& operator=(const DualAttentionNet&) = delete;

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  ParameterStore<Real>& params() { return store_; }
  const ParameterStore<Real>& params() const { return store_; }

  const Backbone<Real>& backbone() const { return backbone_; }
  const AttentionStack<Real>& self_stack() const { return self_stack_; }
  const AttentionStack<Real>& mutual_stack() const;
  const BinaryHead<Real>& head() const { return head_; }

  // x: N x T x F.
  EncodedBatch<Real> Encode(const Context<Real>& ctx, const Tensor<Real>& x) const;
  PairGrid<Real> Pair(const Context<Real>& ctx, const EncodedBatch<Real>& a,
                      const EncodedBatch<Real>& b) const;

  // Copies every parameter and buffer value by name from another model with
  // the same layout (e.g. float -> double for gradient checks).
  template <typename Other>
  void CopyFrom(const ParameterStore<Other>& other);

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  ParameterStore<Real> store_;
  Backbone<Real> backbone_;
  AttentionStack<Real> self_stack_;
  AttentionStack<Real> mutual_stack_;  // unused when stacks are shared
  BinaryHead<Real> head_;
};

}  // namespace datt

#endif  // DATT_MODEL_H_
