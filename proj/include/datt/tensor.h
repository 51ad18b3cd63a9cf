// Dense n-dimensional arrays with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle: copies share storage. Tensors that belong to a
// Tape carry a node id; every op whose inputs are tracked records a backward
// closure on that tape. Untracked tensors never receive gradients.
//
// Layout conventions used by the model code:
//   feature maps   N x H x W x C  (channels last; H = time, W = frequency)
//   conv kernels   kh x kw x Cin x Cout
//   dense weights  in x out

#ifndef DATT_TENSOR_H_
#define DATT_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "datt/error.h"

namespace datt {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

template <typename Real>
class Tape;

template <typename Real>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero filled
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor Full(Shape shape, Real value);
  static Tensor Scalar(Real value) { return Full({}, value); }
  // Wraps existing storage; used by views such as Reshape.
  static Tensor FromStorage(Shape shape, std::shared_ptr<std::vector<Real>> values);

  bool empty() const { return data_ == nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  // Negative axes count from the back.
  std::size_t dim(int axis) const;

  std::span<const Real> data() const { return {data_->data(), data_->size()}; }
  // Writes are only meaningful on leaves (parameters, inputs); values already
  // captured by a tape are not copied.
  std::span<Real> mutable_data() { return {data_->data(), data_->size()}; }
  Real item() const;
  Real operator[](std::size_t i) const { return (*data_)[i]; }

  bool tracked() const { return tape_ != nullptr; }
  Tape<Real>* tape() const { return tape_; }
  int node() const { return node_; }

  // Same storage, no tape.
  Tensor Detach() const;
  Tensor Clone() const;

  const std::shared_ptr<std::vector<Real>>& storage() const { return data_; }

 private:
  friend class Tape<Real>;

  Shape shape_;
  std::shared_ptr<std::vector<Real>> data_;
  Tape<Real>* tape_ = nullptr;
  int node_ = -1;
};

// Ordered record of operations. Nodes are appended as ops execute, so node
// ids are already a topological order and Backward sweeps them in reverse.
template <typename Real>
class Tape {
 public:
  using BackwardFn = std::function<void(std::span<const Real> upstream, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a leaf (typically a parameter). Watching the same storage twice
  // returns the same node, so gradients from shared uses accumulate.
  Tensor<Real> Watch(const Tensor<Real>& leaf);

  Tensor<Real> Record(Shape shape, std::shared_ptr<std::vector<Real>> values,
                      BackwardFn backward);

  // Gradient buffer of a node, zero-allocated on first use.
  std::span<Real> GradBuffer(int node);

  void Backward(const Tensor<Real>& loss);
  bool consumed() const { return consumed_; }

  // Gradient of a watched leaf, looked up by node or by storage. nullopt when
  // the tensor never entered this tape or is an intermediate result
  // (intermediate gradients are released during the sweep). Zeros when the
  // loss does not depend on it.
  std::optional<Tensor<Real>> Grad(const Tensor<Real>& t) const;

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    BackwardFn backward;
    std::vector<Real> grad;
    bool leaf = false;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const void*, int> watched_;
  bool consumed_ = false;
};

// ---------------------------------------------------------------------------
// Elementwise and broadcasting ops. Shapes are right-aligned; an extent of 1
// (or a missing leading axis) is logically duplicated to match the other
// operand. Gradients of duplicated operands are summed over the duplicates.

enum class BinaryOp { kAdd, kSub, kMul };

Shape BroadcastShape(const Shape& a, const Shape& b);

template <typename Real>
Tensor<Real> Binary(const Tensor<Real>& a, const Tensor<Real>& b, BinaryOp op);
template <typename Real>
Tensor<Real> Add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return Binary(a, b, BinaryOp::kAdd);
}
template <typename Real>
Tensor<Real> Sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return Binary(a, b, BinaryOp::kSub);
}
template <typename Real>
Tensor<Real> Mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return Binary(a, b, BinaryOp::kMul);
}

template <typename Real>
Tensor<Real> Scale(const Tensor<Real>& x, Real factor);

template <typename Real>
Tensor<Real> Relu(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> Sigmoid(const Tensor<Real>& x);

// ---------------------------------------------------------------------------
// Linear algebra and spatial ops.

template <typename Real>
Tensor<Real> MatMul(const Tensor<Real>& a, const Tensor<Real>& b);

struct Conv2dSpec {
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

// floor((in + 2*pad - kernel) / stride) + 1; ShapeError when below 1.
std::size_t OutputExtent(std::size_t in, std::size_t kernel, std::size_t stride,
                         std::size_t pad);

// Cross-correlation. x: N x H x W x Cin (rank 3 input is treated as N = 1),
// w: kh x kw x Cin x Cout, bias: Cout or empty. Each output value is
// accumulated over (kh, kw, cin) in row-major order starting from zero, with
// the bias added last.
template <typename Real>
Tensor<Real> Conv2d(const Tensor<Real>& x, const Tensor<Real>& w,
                    const Tensor<Real>& bias, const Conv2dSpec& spec);

enum class PoolKind { kMax, kAvg };

struct Pool2dSpec {
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
};

// Max pooling treats padding as -inf and routes gradient to the first
// row-major argmax. Average pooling excludes padding from the divisor.
template <typename Real>
Tensor<Real> Pool2d(const Tensor<Real>& x, PoolKind kind, const Pool2dSpec& spec);

enum class BnMode { kTrain, kInfer };

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

// Normalizes every axis except the last (channel) one. In kTrain mode uses
// batch statistics and updates the running buffers in place (unbiased
// variance); in kInfer mode uses the running buffers.
template <typename Real>
Tensor<Real> BatchNorm(const Tensor<Real>& x, const Tensor<Real>& gamma,
                       const Tensor<Real>& beta, Tensor<Real>& running_mean,
                       Tensor<Real>& running_var, BnMode mode,
                       const BatchNormOptions& options = {});

// Max-subtracted softmax along one axis. NaN input raises NumericError.
template <typename Real>
Tensor<Real> Softmax(const Tensor<Real>& x, int axis);

// x / ||x|| along one axis; a zero-norm slice raises NumericError.
template <typename Real>
Tensor<Real> L2Normalize(const Tensor<Real>& x, int axis);

// ---------------------------------------------------------------------------
// Reductions and structural ops.

template <typename Real>
Tensor<Real> Sum(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> Sum(const Tensor<Real>& x, int axis, bool keepdim);
template <typename Real>
Tensor<Real> Mean(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> Mean(const Tensor<Real>& x, int axis, bool keepdim);

// Shares storage with x.
template <typename Real>
Tensor<Real> Reshape(const Tensor<Real>& x, Shape shape);
template <typename Real>
Tensor<Real> Concat(const std::vector<Tensor<Real>>& parts, int axis);
template <typename Real>
Tensor<Real> Slice(const Tensor<Real>& x, int axis, std::size_t begin, std::size_t end);

// Inverted dropout: kept units are scaled by 1 / (1 - rate).
template <typename Real>
Tensor<Real> Dropout(const Tensor<Real>& x, double rate, Rng& rng);

// ---------------------------------------------------------------------------
// Losses (scalar outputs, averaged over rows).

// logits: N x K. Mean over rows of -log softmax(row)[label].
template <typename Real>
Tensor<Real> SoftmaxCrossEntropy(const Tensor<Real>& logits, std::span<const int> labels);

// Mean of -[w*y*ln p + (1-y)*ln(1-p)] with p clamped to [1e-7, 1-1e-7]; the
// clamp passes zero gradient outside its range. w = positive_weight.
template <typename Real>
Tensor<Real> BinaryCrossEntropy(const Tensor<Real>& probs, std::span<const int> labels,
                                double positive_weight = 1.0);

// ---------------------------------------------------------------------------
// Gradient-check support.

// Accumulates a fingerprint of every ReLU mask and max-pool argmax computed on
// this thread while alive. Two forward passes with equal fingerprints took the
// same branch at every kink, so a central difference across them is valid.
class KinkFingerprint {
 public:
  KinkFingerprint();
  ~KinkFingerprint();
  KinkFingerprint(const KinkFingerprint&) = delete;
  KinkFingerprint& operator=(const KinkFingerprint&) = delete;
  std::uint64_t value() const;

 private:
  std::uint64_t* previous_;
  std::uint64_t state_;
};

namespace testing {
// Fault injection fixture: scales the conv2d weight gradient by (1 + 1e-2).
void SetConvWeightGradFault(bool enabled);
bool ConvWeightGradFault();
}  // namespace testing

}  // namespace datt

#endif  // DATT_TENSOR_H_
