#include "datt/scoring.h"

#include <cmath>

#include "datt/error.h"

namespace datt {

template <typename Real>
double CosineScore(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) {
    throw ShapeError("cosine: lengths " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero-norm embedding");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

template <typename Real>
BinaryHead<Real> BinaryHead<Real>::Create(ParameterStore<Real>& store, const std::string& name,
                                          std::size_t num_f, double dropout_rate) {
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
  BinaryHead h;
  h.bn = BatchNormLayer<Real>::Create(store, name + ".bn", num_f, ParamGroup::kAttention);
  h.fc = Dense<Real>::Create(store, name + ".fc", num_f, 1, true, ParamGroup::kAttention);
  h.dropout_rate = dropout_rate;
  return h;
}

template <typename Real>
Tensor<Real> BinaryHead<Real>::Forward(const Context<Real>& ctx, const Tensor<Real>& d) const {
  if (d.rank() == 0) throw ShapeError("binary head: scalar input");
  const std::size_t f = d.shape().back();
  Shape out_shape(d.shape().begin(), d.shape().end() - 1);
  Tensor<Real> h = bn.Forward(ctx, Reshape(d, {d.size() / f, f}));
  if (ctx.dropout_rng != nullptr && dropout_rate > 0.0) {
    h = Dropout(h, dropout_rate, *ctx.dropout_rng);
  }
  return Reshape(Sigmoid(fc.Forward(ctx, h)), out_shape);
}

template <typename Real>
Tensor<Real> HeadInput(const Tensor<Real>& f_self_a, const Tensor<Real>& f_self_b,
                       const Tensor<Real>& f_mutual_a, const Tensor<Real>& f_mutual_b) {
  if (f_self_a.rank() != 2 || f_self_b.rank() != 2) {
    throw ShapeError("head input: f_self must be rank 2");
  }
  const std::size_t a = f_self_a.shape()[0], b = f_self_b.shape()[0], f = f_self_a.shape()[1];
  const Shape grid{a, b, f};
  if (f_mutual_a.shape() != grid || f_mutual_b.shape() != grid) {
    throw ShapeError("head input: f_mutual " + ShapeToString(f_mutual_a.shape()) + " / " +
                     ShapeToString(f_mutual_b.shape()) + ", expected " + ShapeToString(grid));
  }
  Tensor<Real> self_diff = Sub(Reshape(f_self_a, {a, 1, f}), Reshape(f_self_b, {1, b, f}));
  return Mul(self_diff, Sub(f_mutual_a, f_mutual_b));
}

double FuseScores(double cos, double bin, const NormStats& s) {
  return 0.5 * ((cos - s.mean_cos) / s.std_cos + (bin - s.mean_bin) / s.std_bin);
}

namespace {

void MeanStd(std::span<const double> v, const char* what, double& mean, double& std,
             std::vector<std::string>& warnings) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  std = std::sqrt(var / static_cast<double>(v.size()));
  if (!(std >= kMinScoreStd)) {
    warnings.push_back(std::string(what) + " scores are degenerate (std " + std::to_string(std) +
                       "); using floor 1e-6");
    std = kMinScoreStd;
  }
}

}  // namespace

Calibration StatsFromScores(std::span<const double> cos, std::span<const double> bin) {
  if (cos.empty() || cos.size() != bin.size()) {
    throw InputError("calibration needs equally many, non-zero cosine and binary scores");
  }
  Calibration c;
  MeanStd(cos, "cosine", c.stats.mean_cos, c.stats.std_cos, c.warnings);
  MeanStd(bin, "binary", c.stats.mean_bin, c.stats.std_bin, c.warnings);
  return c;
}

Calibration CalibrateNormStats(const PairScorer& scorer, std::size_t num_items,
                               std::size_t num_pairs, std::uint64_t seed) {
  if (num_items < 2) throw InputError("calibration needs at least two utterances");
  if (num_pairs < 2) throw InputError("calibration needs at least two pairs");
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> first(0, num_items - 1);
  std::uniform_int_distribution<std::size_t> second(0, num_items - 2);
  std::vector<double> cos(num_pairs), bin(num_pairs);
  for (std::size_t p = 0; p < num_pairs; ++p) {
    const std::size_t i = first(rng);
    std::size_t j = second(rng);
    if (j >= i) ++j;
    std::tie(cos[p], bin[p]) = scorer(i, j);
  }
  return StatsFromScores(cos, bin);
}

template double CosineScore(std::span<const float>, std::span<const float>);
template double CosineScore(std::span<const double>, std::span<const double>);
template struct BinaryHead<float>;
template struct BinaryHead<double>;
template Tensor<float> HeadInput(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                 const Tensor<float>&);
template Tensor<double> HeadInput(const Tensor<double>&, const Tensor<double>&,
                                  const Tensor<double>&, const Tensor<double>&);

}  // namespace datt
