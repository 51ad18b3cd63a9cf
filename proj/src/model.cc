#include "datt/model.h"

#include "datt/error.h"

namespace datt {

template <typename Real>
EncodedBatch<Real> EncodedBatch<Real>::Rows(std::size_t begin, std::size_t end) const {
  EncodedBatch out;
  out.features.f_raw = Slice(features.f_raw, 0, begin, end);
  out.features.f_id = Slice(features.f_id, 0, begin, end);
  out.features.embedding = Slice(features.embedding, 0, begin, end);
  out.features.logits = Slice(features.logits, 0, begin, end);
  out.att_self = Slice(att_self, 0, begin, end);
  out.att_mutual = Slice(att_mutual, 0, begin, end);
  out.self.weights = Slice(self.weights, 0, begin, end);
  out.self.pooled = Slice(self.pooled, 0, begin, end);
  return out;
}

// Members are initialized in declaration order, which fixes the parameter
// order in the store (and therefore in checkpoints).
template <typename Real>
DualAttentionNet<Real>::DualAttentionNet(const ModelConfig& config, std::uint64_t seed)
    : config_(config),
      seed_(seed),
      store_(seed),
      backbone_(config.backbone, store_),
      self_stack_(AttentionStack<Real>::Create(store_, "attention.self",
                                               config.backbone.channels[3],
                                               config.backbone.num_f)),
      mutual_stack_(config.shared_attention_stacks
                        ? AttentionStack<Real>{}
                        : AttentionStack<Real>::Create(store_, "attention.mutual",
                                                       config.backbone.channels[3],
                                                       config.backbone.num_f)),
      head_(BinaryHead<Real>::Create(store_, "head", config.backbone.num_f,
                                     config.dropout_rate)) {}

template <typename Real>
const AttentionStack<Real>& DualAttentionNet<Real>::mutual_stack() const {
  return config_.shared_attention_stacks ? self_stack_ : mutual_stack_;
}

template <typename Real>
EncodedBatch<Real> DualAttentionNet<Real>::Encode(const Context<Real>& ctx,
                                                  const Tensor<Real>& x) const {
  EncodedBatch<Real> e;
  e.features = backbone_.Forward(ctx, x);
  e.att_self = self_stack_.Forward(ctx, e.features.f_raw);
  e.att_mutual = config_.shared_attention_stacks ? e.att_self
                                                 : mutual_stack_.Forward(ctx, e.features.f_raw);
  e.self = SelfAttention(e.att_self, e.features.f_id);
  return e;
}

template <typename Real>
PairGrid<Real> DualAttentionNet<Real>::Pair(const Context<Real>& ctx, const EncodedBatch<Real>& a,
                                            const EncodedBatch<Real>& b) const {
  PairGrid<Real> g;
  g.mutual_a = MutualAttention(a.att_mutual, a.features.f_id, b.self.pooled, GridAxis::kRows);
  g.mutual_b = MutualAttention(b.att_mutual, b.features.f_id, a.self.pooled, GridAxis::kColumns);
  g.head_input = HeadInput(a.self.pooled, b.self.pooled, g.mutual_a.pooled, g.mutual_b.pooled);
  g.score = head_.Forward(ctx, g.head_input);
  return g;
}

template <typename Real>
template <typename Other>
void DualAttentionNet<Real>::CopyFrom(const ParameterStore<Other>& other) {
  if (other.entries().size() != store_.entries().size()) {
    throw ShapeError("model copy: parameter counts differ");
  }
  for (const auto& e : store_.entries()) {
    const auto& src = other.Get(e.name);
    if (src.value.shape() != e.value.shape()) {
      throw ShapeError("model copy: " + e.name + " has shape " +
                       ShapeToString(src.value.shape()) + ", expected " +
                       ShapeToString(e.value.shape()));
    }
    Tensor<Real> dst = e.value;
    auto out = dst.mutable_data();
    auto in = src.value.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<Real>(in[i]);
  }
}

template struct EncodedBatch<float>;
template struct EncodedBatch<double>;
template class DualAttentionNet<float>;
template class DualAttentionNet<double>;
template void DualAttentionNet<float>::CopyFrom(const ParameterStore<float>&);
template void DualAttentionNet<float>::CopyFrom(const ParameterStore<double>&);
template void DualAttentionNet<double>::CopyFrom(const ParameterStore<float>&);
template void DualAttentionNet<double>::CopyFrom(const ParameterStore<double>&);

}  // namespace datt
