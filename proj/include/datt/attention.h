// Self and mutual attention over frame-level features.
//
// Every function is batched: a leading utterance axis N (or a grid A x B for
// mutual attention) is carried through, and softmax always runs over the time
// axis independently per channel.

#ifndef DATT_ATTENTION_H_
#define DATT_ATTENTION_H_

#include "datt/layers.h"

namespace datt {

// Per-frame Dense(in -> num_f) -> BN -> ReLU -> Dense(num_f -> num_f).
template <typename Real>
struct AttentionStack {
  Dense<Real> fc1;
  BatchNormLayer<Real> bn;
  Dense<Real> fc2;

  static AttentionStack Create(ParameterStore<Real>& store, const std::string& name,
                               std::size_t in, std::size_t num_f);
  // f_raw: N x T x in -> f_att: N x T x num_f.
  Tensor<Real> Forward(const Context<Real>& ctx, const Tensor<Real>& f_raw) const;
};

template <typename Real>
struct AttentionResult {
  Tensor<Real> weights;  // ... x T x F, columns sum to 1 over T
  Tensor<Real> pooled;   // ... x F
};

// W = softmax_t(f_att * mean_t(f_att)); f_self[c] = sum_t W[t, c] f_id[t, c].
// f_att, f_id: N x T x F.
template <typename Real>
AttentionResult<Real> SelfAttention(const Tensor<Real>& f_att, const Tensor<Real>& f_id);

// Which side of the grid the attending utterances occupy.
enum class GridAxis { kRows, kColumns };

// W = softmax_t(f_att * f_self_other); f_mutual[c] = sum_t W[t, c] f_id[t, c],
// for every (attending utterance, other utterance) combination.
// f_att, f_id: A x T x F; f_self_other: B x F. With kRows the results are
// A x B x T x F and A x B x F; with kColumns they are B x A x T x F and
// B x A x F.
template <typename Real>
AttentionResult<Real> MutualAttention(const Tensor<Real>& f_att, const Tensor<Real>& f_id,
                                      const Tensor<Real>& f_self_other, GridAxis axis);

}  // namespace datt

#endif  // DATT_ATTENTION_H_
