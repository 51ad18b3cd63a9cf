#include "datt/attention.h"

#include "datt/error.h"

namespace datt {

template <typename Real>
AttentionStack<Real> AttentionStack<Real>::Create(ParameterStore<Real>& store,
                                                  const std::string& name, std::size_t in,
                                                  std::size_t num_f) {
  constexpr ParamGroup kGroup = ParamGroup::kAttention;
  AttentionStack s;
  s.fc1 = Dense<Real>::Create(store, name + ".fc1", in, num_f, false, kGroup);
  s.bn = BatchNormLayer<Real>::Create(store, name + ".bn", num_f, kGroup);
  s.fc2 = Dense<Real>::Create(store, name + ".fc2", num_f, num_f, true, kGroup);
  return s;
}

template <typename Real>
Tensor<Real> AttentionStack<Real>::Forward(const Context<Real>& ctx,
                                           const Tensor<Real>& f_raw) const {
  return fc2.Forward(ctx, Relu(bn.Forward(ctx, fc1.Forward(ctx, f_raw))));
}

namespace {

void CheckFrames(const Shape& att, const Shape& id, const char* what) {
  if (att.size() != 3 || att != id) {
    throw ShapeError(std::string(what) + ": f_att " + ShapeToString(att) + " and f_id " +
                     ShapeToString(id) + " must be matching N x T x F");
  }
}

}  // namespace

template <typename Real>
AttentionResult<Real> SelfAttention(const Tensor<Real>& f_att, const Tensor<Real>& f_id) {
  CheckFrames(f_att.shape(), f_id.shape(), "self attention");
  AttentionResult<Real> r;
  r.weights = Softmax(Mul(f_att, Mean(f_att, 1, true)), 1);
  r.pooled = Sum(Mul(r.weights, f_id), 1, false);
  return r;
}

template <typename Real>
AttentionResult<Real> MutualAttention(const Tensor<Real>& f_att, const Tensor<Real>& f_id,
                                      const Tensor<Real>& f_self_other, GridAxis axis) {
  CheckFrames(f_att.shape(), f_id.shape(), "mutual attention");
  const std::size_t a = f_att.shape()[0], t = f_att.shape()[1], f = f_att.shape()[2];
  if (f_self_other.rank() != 2 || f_self_other.shape()[1] != f) {
    throw ShapeError("mutual attention: f_self of the other utterance " +
                     ShapeToString(f_self_other.shape()) + " does not match F = " +
                     std::to_string(f));
  }
  const std::size_t b = f_self_other.shape()[0];
  const bool rows = axis == GridAxis::kRows;
  const Shape own = rows ? Shape{a, 1, t, f} : Shape{1, a, t, f};
  const Shape other = rows ? Shape{1, b, 1, f} : Shape{b, 1, 1, f};
  AttentionResult<Real> r;
  r.weights = Softmax(Mul(Reshape(f_att, own), Reshape(f_self_other, other)), 2);
  r.pooled = Sum(Mul(r.weights, Reshape(f_id, own)), 2, false);
  return r;
}

template struct AttentionStack<float>;
template struct AttentionStack<double>;
template AttentionResult<float> SelfAttention(const Tensor<float>&, const Tensor<float>&);
template AttentionResult<double> SelfAttention(const Tensor<double>&, const Tensor<double>&);
template AttentionResult<float> MutualAttention(const Tensor<float>&, const Tensor<float>&,
                                                const Tensor<float>&, GridAxis);
template AttentionResult<double> MutualAttention(const Tensor<double>&, const Tensor<double>&,
                                                 const Tensor<double>&, GridAxis);

}  // namespace datt
