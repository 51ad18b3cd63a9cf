#include "datt/gradcheck.h"

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>

#include "datt/attention.h"
#include "datt/finite_diff.h"
#include "datt/scoring.h"
#include "datt/training.h"

namespace datt {

namespace {

using T = Tensor<double>;
using Leaves = std::vector<T>;

class Checker {
 public:
  explicit Checker(std::uint64_t seed) : rng_(seed) {}

  T Random(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(NumElements(shape));
    for (double& x : v) x = u(rng_);
    return T(std::move(shape), std::move(v));
  }

  // sum(out * r) for a fixed random r, so every output gets its own upstream.
  T Project(const T& out) {
    auto it = projections_.find(out.shape());
    if (it == projections_.end()) it = projections_.emplace(out.shape(), Random(out.shape())).first;
    return Sum(Mul(out, it->second));
  }

  void Op(const std::string& layer, Leaves leaves, const LossBuilder& loss,
          const FiniteDiffOptions& fd = {}) {
    Add(layer, CheckGradients(leaves, loss, fd));
  }

  void Add(const std::string& layer, const FiniteDiffResult& r) {
    LayerCheck& c = results_[layer];
    c.layer = layer;
    c.max_rel_error = std::max(c.max_rel_error, r.max_rel_error);
    c.checked += r.checked;
    c.skipped += r.skipped;
  }

  std::mt19937_64& rng() { return rng_; }

  GradcheckReport Finish(double tolerance) {
    GradcheckReport report;
    for (auto& [name, c] : results_) {
      c.passed = c.checked > 0 && c.max_rel_error < tolerance;
      report.layers.push_back(c);
    }
    return report;
  }

 private:
  std::mt19937_64 rng_;
  std::map<Shape, T> projections_;
  std::map<std::string, LayerCheck> results_;
};

void CheckOps(Checker& c) {
  c.Op("conv", {c.Random({2, 7, 6, 3}), c.Random({3, 3, 3, 4}), c.Random({4})},
       [&](const Leaves& in) {
         return c.Project(Conv2d(in[0], in[1], in[2], {2, 1, 1, 1}));
       });
  c.Op("conv", {c.Random({1, 9, 17, 2}), c.Random({3, 3, 2, 3})}, [&](const Leaves& in) {
    return c.Project(Conv2d(in[0], in[1], T(), {1, 1, 1, 1}));
  });
  c.Op("dense", {c.Random({5, 6}), c.Random({6, 3}), c.Random({3})}, [&](const Leaves& in) {
    return c.Project(Add(MatMul(in[0], in[1]), in[2]));
  });
  c.Op("batchnorm", {c.Random({4, 3, 5}, -2.0, 2.0), c.Random({5}), c.Random({5})},
       [&](const Leaves& in) {
         T mean = T::Full({5}, 0.0), var = T::Full({5}, 1.0);
         return c.Project(BatchNorm(in[0], in[1], in[2], mean, var, BnMode::kTrain));
       });
  c.Op("relu", {c.Random({6, 7})}, [&](const Leaves& in) { return c.Project(Relu(in[0])); });
  c.Op("max_pool", {c.Random({2, 7, 8, 3})}, [&](const Leaves& in) {
    return c.Project(Pool2d(in[0], PoolKind::kMax, {3, 3, 2, 2, 1, 1}));
  });
  c.Op("avg_pool", {c.Random({2, 6, 9, 3})}, [&](const Leaves& in) {
    return c.Project(Pool2d(in[0], PoolKind::kAvg, {2, 3, 2, 3, 0, 0}));
  });
  c.Op("softmax", {c.Random({3, 5, 4}, -3.0, 3.0)},
       [&](const Leaves& in) { return c.Project(Softmax(in[0], 1)); });
  c.Op("self_attention", {c.Random({2, 5, 4}), c.Random({2, 5, 4})}, [&](const Leaves& in) {
    AttentionResult<double> r = SelfAttention(in[0], in[1]);
    return Add(c.Project(r.pooled), c.Project(r.weights));
  });
  for (GridAxis axis : {GridAxis::kRows, GridAxis::kColumns}) {
    c.Op("mutual_attention", {c.Random({2, 4, 3}), c.Random({2, 4, 3}), c.Random({3, 3})},
         [&, axis](const Leaves& in) {
           AttentionResult<double> r = MutualAttention(in[0], in[1], in[2], axis);
           return Add(c.Project(r.pooled), c.Project(r.weights));
         });
  }
  // Difference-product features -> BN (running stats) -> Dense -> sigmoid -> BCE.
  const std::vector<int> pair_labels{1, 0, 0, 0, 1, 0};
  T head_mean = c.Random({4}), head_var = c.Random({4}, 0.5, 2.0);
  c.Op("binary_head",
       {c.Random({2, 4}), c.Random({3, 4}), c.Random({2, 3, 4}), c.Random({2, 3, 4}),
        c.Random({4}), c.Random({4}), c.Random({4, 1}), c.Random({1})},
       [&](const Leaves& in) {
         T mean = head_mean, var = head_var;
         T d = HeadInput(in[0], in[1], in[2], in[3]);
         T z = BatchNorm(d, in[4], in[5], mean, var, BnMode::kInfer);
         T p = Sigmoid(Add(MatMul(Reshape(z, {6, 4}), in[6]), in[7]));
         return BinaryCrossEntropy(Reshape(p, {6}), pair_labels);
       });
  const std::vector<int> labels{2, 0, 3};
  // s = 30 makes the loss sharply curved: extrapolate out the truncation
  // error instead of shrinking the step into rounding noise.
  c.Op(
      "am_softmax", {c.Random({3, 5}), c.Random({5, 4})},
      [&](const Leaves& in) {
        return SoftmaxCrossEntropy(AmSoftmaxLogits(in[0], in[1], labels, 30.0, 0.2), labels);
      },
      {.step = 1e-4, .richardson = true});
  c.Op("am_softmax", {c.Random({3, 5}, -4.0, 4.0)},
       [&](const Leaves& in) { return SoftmaxCrossEntropy(in[0], labels); });
}

std::string LayerOf(const std::string& name) {
  if (name.rfind("head.", 0) == 0) return "binary_head";
  // The layer is the path component before the ".weight" / ".gamma" suffix.
  const std::size_t dot = name.rfind('.');
  const std::string suffix = name.substr(dot + 1);
  const std::size_t start = name.rfind('.', dot - 1) + 1;
  const std::string owner = name.substr(start, dot - start);
  if (suffix == "gamma" || suffix == "beta") return "batchnorm";
  if (owner.rfind("conv", 0) == 0) return "conv";
  return "dense";
}

// Combined identity + binary loss of the whole model on a tiny pair batch,
// with BN on batch statistics and no dropout.
double ModelLoss(const DualAttentionNet<double>& net, const T& x, std::span<const int> labels,
                 std::span<const int> pair_labels, Tape<double>* tape, T* loss_out = nullptr) {
  const Context<double> ctx{tape, BnMode::kTrain, nullptr};
  const std::size_t s = labels.size() / 2;
  EncodedBatch<double> e = net.Encode(ctx, x);
  PairGrid<double> grid = net.Pair(ctx, e.Rows(0, s), e.Rows(s, 2 * s));
  T loss = Add(SoftmaxCrossEntropy(e.features.logits, labels),
               BinaryCrossEntropy(Reshape(grid.score, {s * s}), pair_labels));
  if (loss_out) *loss_out = loss;
  return loss.item();
}

void CheckModel(Checker& c, const GradcheckOptions& options) {
  DualAttentionNet<double> net(GradcheckModelConfig(), options.seed);
  const T x = c.Random({4, 96, net.config().backbone.mel_bins}, -2.0, 2.0);
  const std::vector<int> labels{0, 1, 0, 1}, pair_labels{1, 0, 0, 1};

  Tape<double> tape;
  T loss;
  std::uint64_t base_kinks;
  {
    KinkFingerprint fp;
    ModelLoss(net, x, labels, pair_labels, &tape, &loss);
    base_kinks = fp.value();
  }
  tape.Backward(loss);

  FiniteDiffOptions fd;
  fd.step = options.model_step;
  fd.floor = options.model_floor;
  for (const auto& e : net.params().entries()) {
    if (!e.trainable) continue;
    const std::optional<T> grad = tape.Grad(e.value);
    const std::size_t n = std::min(options.probes_per_tensor, e.value.size());
    std::vector<std::size_t> picks(e.value.size());
    for (std::size_t i = 0; i < picks.size(); ++i) picks[i] = i;
    std::shuffle(picks.begin(), picks.end(), c.rng());
    FiniteDiffResult r;
    T param = e.value;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = picks[k];
      auto values = param.mutable_data();
      const double saved = values[i];
      auto eval = [&](double v) {
        values[i] = v;
        KinkFingerprint fp;
        const double l = ModelLoss(net, x, labels, pair_labels, nullptr);
        return std::pair{l, fp.value()};
      };
      const auto [plus, kp] = eval(saved + fd.step);
      const auto [minus, km] = eval(saved - fd.step);
      values[i] = saved;
      if (kp != base_kinks || km != base_kinks) {
        ++r.skipped;
        continue;
      }
      const double analytic = grad ? (*grad)[i] : 0.0;
      r.max_rel_error = std::max(
          r.max_rel_error, RelativeError(analytic, (plus - minus) / (2 * fd.step), fd.floor));
      ++r.checked;
    }
    c.Add(LayerOf(e.name), r);
  }
}

}  // namespace

ModelConfig GradcheckModelConfig() {
  ModelConfig m;
  m.backbone.channels = {8, 16, 32, 64};
  m.backbone.num_f = 32;
  m.backbone.num_speakers = 10;
  return m;
}

bool GradcheckReport::passed() const {
  return layers.size() >= 8 &&
         std::all_of(layers.begin(), layers.end(), [](const LayerCheck& l) { return l.passed; });
}

std::string GradcheckReport::Format() const {
  std::string out;
  char buf[160];
  for (const LayerCheck& l : layers) {
    std::snprintf(buf, sizeof(buf), "%-17s %-4s max_rel_err=%.3e checked=%zu skipped=%zu\n",
                  l.layer.c_str(), l.passed ? "ok" : "FAIL", l.max_rel_error, l.checked,
                  l.skipped);
    out += buf;
  }
  return out;
}

GradcheckReport RunGradcheck(const GradcheckOptions& options) {
  Checker c(options.seed);
  CheckOps(c);
  CheckModel(c, options);
  return c.Finish(options.tolerance);
}

}  // namespace datt
