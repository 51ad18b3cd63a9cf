// Parameter registry and the trainable layers built on top of the tensor ops.

#ifndef DATT_LAYERS_H_
#define DATT_LAYERS_H_

#include <cstdint>
#include <string>
#include <vector>

#include "datt/tensor.h"

namespace datt {

// Learning-rate groups: the backbone (including FC2) and the attention
// network together with the binary classifier.
enum class ParamGroup { kBackbone, kAttention };

template <typename Real>
struct NamedTensor {
  std::string name;
  Tensor<Real> value;  // shares storage with the owning layer
  ParamGroup group = ParamGroup::kBackbone;
  bool trainable = true;  // false for BN running statistics
};

// Ordered, name-unique list of every parameter and buffer in a model. Layers
// keep handles to the same storage, so in-place updates (SGD, checkpoint
// loads) are visible to them.
template <typename Real>
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor<Real> Add(const std::string& name, Tensor<Real> value, ParamGroup group,
                   bool trainable = true);
  // He-normal draw, std = sqrt(2 / fan_in), from a stream keyed by the name.
  Tensor<Real> AddHeNormal(const std::string& name, Shape shape, std::size_t fan_in,
                           ParamGroup group);

  const std::vector<NamedTensor<Real>>& entries() const { return entries_; }
  const NamedTensor<Real>* Find(const std::string& name) const;
  // InputError when missing.
  const NamedTensor<Real>& Get(const std::string& name) const;
  std::size_t NumTrainableValues() const;

 private:
  std::uint64_t seed_;
  std::vector<NamedTensor<Real>> entries_;
};

// Forward-pass settings threaded through every layer.
template <typename Real>
struct Context {
  Tape<Real>* tape = nullptr;  // null: no gradients recorded
  BnMode bn_mode = BnMode::kInfer;
  Rng* dropout_rng = nullptr;  // null: dropout disabled

  // Parameters enter the tape as watched leaves.
  Tensor<Real> Use(const Tensor<Real>& param) const {
    return tape != nullptr ? tape->Watch(param) : param;
  }
};

// x[..., in] -> x[..., out].
template <typename Real>
struct Dense {
  Tensor<Real> weight;  // in x out
  Tensor<Real> bias;    // out, or empty

  static Dense Create(ParameterStore<Real>& store, const std::string& name, std::size_t in,
                      std::size_t out, bool with_bias, ParamGroup group);
  Tensor<Real> Forward(const Context<Real>& ctx, const Tensor<Real>& x) const;
};

// "Same" padding (k / 2) on both axes.
template <typename Real>
struct Conv {
  Tensor<Real> weight;  // kh x kw x cin x cout
  Tensor<Real> bias;
  Conv2dSpec spec;

  static Conv Create(ParameterStore<Real>& store, const std::string& name, std::size_t kh,
                     std::size_t kw, std::size_t cin, std::size_t cout, std::size_t stride_h,
                     std::size_t stride_w, bool with_bias, ParamGroup group);
  Tensor<Real> Forward(const Context<Real>& ctx, const Tensor<Real>& x) const;
};

template <typename Real>
struct BatchNormLayer {
  Tensor<Real> gamma, beta;
  Tensor<Real> running_mean, running_var;

  static BatchNormLayer Create(ParameterStore<Real>& store, const std::string& name,
                               std::size_t channels, ParamGroup group);
  Tensor<Real> Forward(const Context<Real>& ctx, const Tensor<Real>& x) const;
};

// Stable 64-bit FNV-1a, used to key per-parameter random streams.
std::uint64_t HashName(const std::string& name);

}  // namespace datt

#endif  // DATT_LAYERS_H_
