// Central finite-difference checks of tape gradients (64-bit only).

#ifndef DATT_FINITE_DIFF_H_
#define DATT_FINITE_DIFF_H_

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "datt/tensor.h"

namespace datt {

struct FiniteDiffOptions {
  double step = 1e-5;
  // Relative errors are taken against max(|analytic|, |numeric|, floor), so
  // gradients that are zero up to round-off do not blow up the ratio.
  double floor = 1e-6;
  // Combine steps h and h/2 (Richardson) to cancel the h^2 truncation term;
  // for sharply curved losses where a small step would drown in rounding.
  bool richardson = false;
};

double RelativeError(double analytic, double numeric, double floor);

// Builds a scalar loss from the given leaves. Called once with watched
// leaves (tracked) and then repeatedly with the raw leaves (untracked).
using LossBuilder = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Probes whose +h/-h evaluations crossed a ReLU or max-pool kink.
  std::size_t skipped = 0;
};

// (leaf index, element index) pairs. Empty means every element of every leaf.
using ProbeList = std::vector<std::pair<std::size_t, std::size_t>>;

FiniteDiffResult CheckGradients(std::vector<Tensor<double>>& leaves, const LossBuilder& loss,
                                const FiniteDiffOptions& options = {},
                                const ProbeList& probes = {});

}  // namespace datt

#endif  // DATT_FINITE_DIFF_H_
