// Register-blocked kernels behind Conv2d. Output positions are processed in
// vector-wide tiles. Maps at least one tile wide use row tiles read from a
// padded planar copy of each image; narrower maps flatten positions over
// (n, y, x) and unfold each tile into col[j][lane]. Either way tap rows are
// indexed j = (a * kw + b) * Cin + c and padded taps read zeros.

#ifndef DATT_SRC_CONV_KERNELS_H_
#define DATT_SRC_CONV_KERNELS_H_

#include <cstddef>

namespace datt::detail {

struct ConvGeometry {
  std::size_t n, h, w, ci;  // input
  std::size_t kh, kw, co;   // kernel
  std::size_t oh, ow;       // output
  std::size_t stride_h, stride_w, pad_h, pad_w;
};

// out[p, k] = sum_j col[j][p] * w[j, k], accumulated in j order from zero,
// then bias[k] (may be null). Zero taps contribute exact zeros, so the result
// is bit-identical to a loop that skips padding.
template <typename Real>
void ConvForward(const ConvGeometry& g, const Real* x, const Real* w, const Real* bias,
                 Real* out);

// gx += col2im(up * w^T). gx may be null.
// gw += col^T * up. gw may be null.
template <typename Real>
void ConvBackward(const ConvGeometry& g, const Real* x, const Real* w, const Real* up,
                  Real* gx, Real* gw);

}  // namespace datt::detail

#endif  // DATT_SRC_CONV_KERNELS_H_
