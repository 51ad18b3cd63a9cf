// Pair scores: cosine on embeddings, the sigmoid classifier on dual-attention
// features, and z-normalized fusion of the two.

#ifndef DATT_SCORING_H_
#define DATT_SCORING_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "datt/layers.h"

namespace datt {

// dot(a, b) / (|a| |b|) in double. NumericError when either norm is zero.
template <typename Real>
double CosineScore(std::span<const Real> a, std::span<const Real> b);

// BN -> dropout (train only) -> Dense(num_f -> 1) -> sigmoid.
template <typename Real>
struct BinaryHead {
  BatchNormLayer<Real> bn;
  Dense<Real> fc;
  double dropout_rate = 0.5;

  static BinaryHead Create(ParameterStore<Real>& store, const std::string& name,
                           std::size_t num_f, double dropout_rate);
  // d: ... x F -> probabilities with shape d.shape() minus the last axis.
  Tensor<Real> Forward(const Context<Real>& ctx, const Tensor<Real>& d) const;
};

// (f_self_a - f_self_b) * (f_mutual_a - f_mutual_b) over an A x B grid.
// f_self_a: A x F, f_self_b: B x F, f_mutual_*: A x B x F.
template <typename Real>
Tensor<Real> HeadInput(const Tensor<Real>& f_self_a, const Tensor<Real>& f_self_b,
                       const Tensor<Real>& f_mutual_a, const Tensor<Real>& f_mutual_b);

struct NormStats {
  double mean_cos = 0.0, std_cos = 1.0;
  double mean_bin = 0.0, std_bin = 1.0;
};

inline constexpr double kMinScoreStd = 1e-6;

// 0.5 * ((cos - mean_cos) / std_cos + (bin - mean_bin) / std_bin).
double FuseScores(double cos, double bin, const NormStats& stats);

struct Calibration {
  NormStats stats;
  std::vector<std::string> warnings;  // e.g. a floored standard deviation
};

// Population mean and standard deviation of each score list, with the
// standard deviations floored at kMinScoreStd.
Calibration StatsFromScores(std::span<const double> cos, std::span<const double> bin);

// (score_cos, score_binary) for items i != j.
using PairScorer = std::function<std::pair<double, double>(std::size_t, std::size_t)>;

// Draws num_pairs ordered pairs of distinct items uniformly with replacement
// from a seeded stream and calibrates on their scores. num_items >= 2,
// num_pairs >= 2.
Calibration CalibrateNormStats(const PairScorer& scorer, std::size_t num_items,
                               std::size_t num_pairs, std::uint64_t seed);

}  // namespace datt

#endif  // DATT_SCORING_H_
