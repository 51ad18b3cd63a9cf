#include "datt/finite_diff.h"

#include <algorithm>
#include <cmath>

namespace datt {

double RelativeError(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

namespace {

struct Evaluation {
  double loss;
  std::uint64_t kinks;
};

Evaluation Evaluate(const std::vector<Tensor<double>>& leaves, const LossBuilder& loss) {
  KinkFingerprint fingerprint;
  const double value = loss(leaves).item();
  return {value, fingerprint.value()};
}

}  // namespace

FiniteDiffResult CheckGradients(std::vector<Tensor<double>>& leaves, const LossBuilder& loss,
                                const FiniteDiffOptions& options, const ProbeList& probes) {
  std::vector<Tensor<double>> analytic;
  std::uint64_t base_kinks = 0;
  {
    Tape<double> tape;
    std::vector<Tensor<double>> watched;
    for (const auto& leaf : leaves) watched.push_back(tape.Watch(leaf));
    KinkFingerprint fingerprint;
    Tensor<double> value = loss(watched);
    base_kinks = fingerprint.value();
    tape.Backward(value);
    for (const auto& leaf : leaves) analytic.push_back(*tape.Grad(leaf));
  }

  ProbeList all = probes;
  if (all.empty()) {
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      for (std::size_t j = 0; j < leaves[i].size(); ++j) all.emplace_back(i, j);
    }
  }

  FiniteDiffResult result;
  for (const auto& [leaf, element] : all) {
    auto values = leaves[leaf].mutable_data();
    const double saved = values[element];
    bool kinked = false;
    auto central = [&](double h) {
      values[element] = saved + h;
      const Evaluation plus = Evaluate(leaves, loss);
      values[element] = saved - h;
      const Evaluation minus = Evaluate(leaves, loss);
      kinked = kinked || plus.kinks != base_kinks || minus.kinks != base_kinks;
      return (plus.loss - minus.loss) / (2.0 * h);
    };
    double numeric = central(options.step);
    if (options.richardson) numeric = (4.0 * central(options.step / 2) - numeric) / 3.0;
    values[element] = saved;
    if (kinked) {
      ++result.skipped;
      continue;
    }
    const double err = RelativeError(analytic[leaf][element], numeric, options.floor);
    result.max_rel_error = std::max(result.max_rel_error, err);
    ++result.checked;
  }
  return result;
}

}  // namespace datt
