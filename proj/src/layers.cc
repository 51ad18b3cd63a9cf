#include "datt/layers.h"

#include <cmath>

#include "datt/error.h"
#include "datt/features.h"

namespace datt {

std::uint64_t HashName(const std::string& name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename Real>
Tensor<Real> ParameterStore<Real>::Add(const std::string& name, Tensor<Real> value,
                                       ParamGroup group, bool trainable) {
  if (Find(name) != nullptr) throw ConfigError("duplicate parameter name " + name);
  entries_.push_back({name, value, group, trainable});
  return value;
}

template <typename Real>
Tensor<Real> ParameterStore<Real>::AddHeNormal(const std::string& name, Shape shape,
                                               std::size_t fan_in, ParamGroup group) {
  Rng rng(DeriveSeed(seed_, HashName(name)));
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<Real> t(std::move(shape));
  for (Real& v : t.mutable_data()) v = static_cast<Real>(normal(rng));
  return Add(name, t, group);
}

template <typename Real>
const NamedTensor<Real>* ParameterStore<Real>::Find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename Real>
const NamedTensor<Real>& ParameterStore<Real>::Get(const std::string& name) const {
  const auto* e = Find(name);
  if (e == nullptr) throw InputError("no parameter named " + name);
  return *e;
}

template <typename Real>
std::size_t ParameterStore<Real>::NumTrainableValues() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.trainable ? e.value.size() : 0;
  return n;
}

template <typename Real>
Dense<Real> Dense<Real>::Create(ParameterStore<Real>& store, const std::string& name,
                                std::size_t in, std::size_t out, bool with_bias,
                                ParamGroup group) {
  Dense d;
  d.weight = store.AddHeNormal(name + ".weight", {in, out}, in, group);
  if (with_bias) d.bias = store.Add(name + ".bias", Tensor<Real>({out}), group);
  return d;
}

template <typename Real>
Tensor<Real> Dense<Real>::Forward(const Context<Real>& ctx, const Tensor<Real>& x) const {
  const std::size_t in = weight.shape()[0], out = weight.shape()[1];
  if (x.rank() == 0 || x.shape().back() != in) {
    throw ShapeError("dense: input " + ShapeToString(x.shape()) + " for weight " +
                     ShapeToString(weight.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = out;
  Tensor<Real> y = MatMul(Reshape(x, {x.size() / in, in}), ctx.Use(weight));
  if (!bias.empty()) y = Add(y, ctx.Use(bias));
  return Reshape(y, out_shape);
}

template <typename Real>
Conv<Real> Conv<Real>::Create(ParameterStore<Real>& store, const std::string& name,
                              std::size_t kh, std::size_t kw, std::size_t cin, std::size_t cout,
                              std::size_t stride_h, std::size_t stride_w, bool with_bias,
                              ParamGroup group) {
  Conv c;
  c.weight = store.AddHeNormal(name + ".weight", {kh, kw, cin, cout}, kh * kw * cin, group);
  if (with_bias) c.bias = store.Add(name + ".bias", Tensor<Real>({cout}), group);
  c.spec = {stride_h, stride_w, kh / 2, kw / 2};
  return c;
}

template <typename Real>
Tensor<Real> Conv<Real>::Forward(const Context<Real>& ctx, const Tensor<Real>& x) const {
  return Conv2d(x, ctx.Use(weight), bias.empty() ? bias : ctx.Use(bias), spec);
}

template <typename Real>
BatchNormLayer<Real> BatchNormLayer<Real>::Create(ParameterStore<Real>& store,
                                                  const std::string& name, std::size_t channels,
                                                  ParamGroup group) {
  BatchNormLayer bn;
  bn.gamma = store.Add(name + ".gamma", Tensor<Real>::Full({channels}, Real(1)), group);
  bn.beta = store.Add(name + ".beta", Tensor<Real>({channels}), group);
  bn.running_mean = store.Add(name + ".running_mean", Tensor<Real>({channels}), group, false);
  bn.running_var =
      store.Add(name + ".running_var", Tensor<Real>::Full({channels}, Real(1)), group, false);
  return bn;
}

template <typename Real>
Tensor<Real> BatchNormLayer<Real>::Forward(const Context<Real>& ctx, const Tensor<Real>& x) const {
  // The running buffers are updated in place through these handles.
  Tensor<Real> mean = running_mean, var = running_var;
  return BatchNorm(x, ctx.Use(gamma), ctx.Use(beta), mean, var, ctx.bn_mode);
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template struct Dense<float>;
template struct Dense<double>;
template struct Conv<float>;
template struct Conv<double>;
template struct BatchNormLayer<float>;
template struct BatchNormLayer<double>;

}  // namespace datt
