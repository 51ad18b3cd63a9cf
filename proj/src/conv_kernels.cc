#include "conv_kernels.h"

#include <algorithm>
#include <cstring>
#include <vector>

namespace datt::detail {
namespace {

// One 64-byte vector per accumulator row: 16 floats or 8 doubles.
template <typename Real>
struct VecOf {
  typedef Real type __attribute__((vector_size(64)));
};
template <typename Real>
using Vec = typename VecOf<Real>::type;

template <typename Real>
constexpr std::size_t kTile = 64 / sizeof(Real);  // output positions per tile
constexpr std::size_t kBlock = 8;                   // accumulator rows held in registers

template <typename Real>
inline Vec<Real> Load(const Real* p) {
  Vec<Real> v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

template <typename Real>
inline void Store(Real* p, const Vec<Real>& v) {
  std::memcpy(p, &v, sizeof(v));
}

template <typename F>
void WithBlock(std::size_t rows, F&& f) {
  switch (rows) {
    case 1: f.template operator()<1>(); break;
    case 2: f.template operator()<2>(); break;
    case 3: f.template operator()<3>(); break;
    case 4: f.template operator()<4>(); break;
    case 5: f.template operator()<5>(); break;
    case 6: f.template operator()<6>(); break;
    case 7: f.template operator()<7>(); break;
    default: f.template operator()<8>(); break;
  }
}

// Visits every valid (tile lane, tap) pair: fn(lane, j0, input offset), where
// j0 = (a * kw + b) * ci is the first column row of the tap.
template <typename Fn>
void ForEachTap(const ConvGeometry& g, std::size_t p0, std::size_t count, Fn&& fn) {
  const std::size_t plane = g.oh * g.ow;
  for (std::size_t l = 0; l < count; ++l) {
    const std::size_t p = p0 + l;
    const std::size_t n = p / plane;
    const std::size_t y = (p % plane) / g.ow;
    const std::size_t xo = p % g.ow;
    const long long iy0 = static_cast<long long>(y * g.stride_h) - static_cast<long long>(g.pad_h);
    const long long ix0 = static_cast<long long>(xo * g.stride_w) - static_cast<long long>(g.pad_w);
    for (std::size_t a = 0; a < g.kh; ++a) {
      const long long iy = iy0 + static_cast<long long>(a);
      if (iy < 0 || iy >= static_cast<long long>(g.h)) continue;
      for (std::size_t b = 0; b < g.kw; ++b) {
        const long long ix = ix0 + static_cast<long long>(b);
        if (ix < 0 || ix >= static_cast<long long>(g.w)) continue;
        const std::size_t offset =
            ((n * g.h + static_cast<std::size_t>(iy)) * g.w + static_cast<std::size_t>(ix)) * g.ci;
        fn(l, (a * g.kw + b) * g.ci, offset);
      }
    }
  }
}

// Lanes [lo, hi) of a single-row tile whose input column for tap b is in range.
inline void LaneRange(const ConvGeometry& g, std::size_t xo0, std::size_t count,
                      std::size_t b, std::size_t& lo, std::size_t& hi) {
  // (xo0 + l) * stride + b - pad in [0, w)
  const long long s = static_cast<long long>(g.stride_w);
  const long long base = static_cast<long long>(xo0) * s + static_cast<long long>(b) -
                         static_cast<long long>(g.pad_w);
  long long first = base >= 0 ? 0 : (-base + s - 1) / s;
  long long last = (static_cast<long long>(g.w) - 1 - base);
  last = last < 0 ? -1 : last / s;
  first = std::min<long long>(first, static_cast<long long>(count));
  last = std::min<long long>(last + 1, static_cast<long long>(count));
  lo = static_cast<std::size_t>(first);
  hi = static_cast<std::size_t>(std::max(first, last));
}

// Moves data between a tile's column matrix and the input. kGather copies
// input into col; otherwise col is scatter-added into the input buffer.
template <bool kGather, typename Real, typename Ptr>
void Exchange(const ConvGeometry& g, Ptr x, std::size_t p0, std::size_t count, Real* col,
              std::size_t L) {
  const std::size_t plane = g.oh * g.ow;
  const std::size_t xo0 = p0 % g.ow;
  if (xo0 + count <= g.ow) {
    // Single output row: lanes are consecutive output columns.
    const std::size_t n = p0 / plane;
    const std::size_t y = (p0 % plane) / g.ow;
    const long long iy0 = static_cast<long long>(y * g.stride_h) - static_cast<long long>(g.pad_h);
    for (std::size_t a = 0; a < g.kh; ++a) {
      const long long iy = iy0 + static_cast<long long>(a);
      if (iy < 0 || iy >= static_cast<long long>(g.h)) continue;
      const std::size_t row = (n * g.h + static_cast<std::size_t>(iy)) * g.w;
      for (std::size_t b = 0; b < g.kw; ++b) {
        std::size_t lo, hi;
        LaneRange(g, xo0, count, b, lo, hi);
        if (lo == hi) continue;
        const std::size_t ix_lo = (xo0 + lo) * g.stride_w + b - g.pad_w;
        const std::size_t step = g.stride_w * g.ci;
        for (std::size_t c = 0; c < g.ci; ++c) {
          Real* cp = col + ((a * g.kw + b) * g.ci + c) * L;
          auto xp = x + (row + ix_lo) * g.ci + c;
          for (std::size_t l = lo; l < hi; ++l) {
            if constexpr (kGather) {
              cp[l] = xp[(l - lo) * step];
            } else {
              xp[(l - lo) * step] += cp[l];
            }
          }
        }
      }
    }
    return;
  }
  ForEachTap(g, p0, count, [&](std::size_t l, std::size_t j0, std::size_t offset) {
    Real* cp = col + j0 * L + l;
    auto xp = x + offset;
    for (std::size_t c = 0; c < g.ci; ++c) {
      if constexpr (kGather) {
        cp[c * L] = xp[c];
      } else {
        xp[c] += cp[c * L];
      }
    }
  });
}

template <typename Real>
void Unfold(const ConvGeometry& g, const Real* x, std::size_t p0, std::size_t count,
            Real* col) {
  constexpr std::size_t L = kTile<Real>;
  std::fill(col, col + g.kh * g.kw * g.ci * L, Real(0));
  Exchange<true>(g, x, p0, count, col, L);
}


template <typename F>
void WithSmallBlock(std::size_t rows, F&& f) {
  switch (rows) {
    case 1: f.template operator()<1>(); break;
    case 2: f.template operator()<2>(); break;
    case 3: f.template operator()<3>(); break;
    default: f.template operator()<4>(); break;
  }
}

template <typename Real>
Real LaneSum(const Vec<Real>& v) {
  Real s = 0;
  for (std::size_t l = 0; l < kTile<Real>; ++l) s += v[l];
  return s;
}

// Row tiles read straight from a zero-padded, channel-planar copy of one
// image. Columns are split into stride phases, so the input of tap (a, b)
// for a run of consecutive output columns is one contiguous vector:
// data[((c * hp + y * sh + a) * s + b % s) * q + x0 + b / s].
template <typename Real>
class PlanarImage {
 public:
  explicit PlanarImage(const ConvGeometry& g)
      : g_(g),
        hp_(g.h + 2 * g.pad_h),
        s_(g.stride_w),
        tiles_((g.ow + kTile<Real> - 1) / kTile<Real>),
        q_(std::max(tiles_ * kTile<Real> + (g.kw - 1) / s_ + 1,
                    (g.w + 2 * g.pad_w + s_ - 1) / s_)),
        data_(g.ci * hp_ * s_ * q_),
        offsets_(g.kh * g.kw * g.ci) {
    for (std::size_t a = 0; a < g.kh; ++a) {
      for (std::size_t b = 0; b < g.kw; ++b) {
        for (std::size_t c = 0; c < g.ci; ++c) {
          offsets_[(a * g.kw + b) * g.ci + c] = ((c * hp_ + a) * s_ + b % s_) * q_ + b / s_;
        }
      }
    }
  }

  std::size_t tiles() const { return tiles_; }
  const std::size_t* offsets() const { return offsets_.data(); }
  Real* data() { return data_.data(); }
  std::size_t Base(std::size_t y, std::size_t tile) const {
    return y * g_.stride_h * s_ * q_ + tile * kTile<Real>;
  }

  void Load(const Real* x, std::size_t n) {
    std::fill(data_.begin(), data_.end(), Real(0));
    Visit(n, [](Real& planar, Real& dense) { planar = dense; }, const_cast<Real*>(x));
  }
  void Clear() { std::fill(data_.begin(), data_.end(), Real(0)); }
  void AddTo(Real* x, std::size_t n) {
    Visit(n, [](Real& planar, Real& dense) { dense += planar; }, x);
  }

 private:
  template <typename Fn>
  void Visit(std::size_t n, Fn&& fn, Real* x) {
    const ConvGeometry& g = g_;
    for (std::size_t iy = 0; iy < g.h; ++iy) {
      Real* row = x + (n * g.h + iy) * g.w * g.ci;
      for (std::size_t ix = 0; ix < g.w; ++ix) {
        const std::size_t px = ix + g.pad_w;
        const std::size_t col = (px % s_) * q_ + px / s_;
        for (std::size_t c = 0; c < g.ci; ++c) {
          fn(data_[((c * hp_ + iy + g.pad_h) * s_) * q_ + col], row[ix * g.ci + c]);
        }
      }
    }
  }

  ConvGeometry g_;
  std::size_t hp_, s_, tiles_, q_;
  std::vector<Real> data_;
  std::vector<std::size_t> offsets_;
};

// Row tiles waste lanes once an output row is narrower than a tile.
template <typename Real>
bool UsePlanar(const ConvGeometry& g) {
  return g.ow >= kTile<Real>;
}

template <typename Real>
void PlanarForward(const ConvGeometry& g, const Real* x, const Real* w, const Real* bias,
                   Real* out) {
  constexpr std::size_t L = kTile<Real>;
  const std::size_t rows = g.kh * g.kw * g.ci;
  PlanarImage<Real> img(g);
  const std::size_t* off = img.offsets();
  for (std::size_t n = 0; n < g.n; ++n) {
    img.Load(x, n);
    const Real* src = img.data();
    for (std::size_t y = 0; y < g.oh; ++y) {
      for (std::size_t t = 0; t < img.tiles(); ++t) {
        const Real* base = src + img.Base(y, t);
        const std::size_t x0 = t * L;
        const std::size_t count = std::min(L, g.ow - x0);
        Real* o = out + ((n * g.oh + y) * g.ow + x0) * g.co;
        for (std::size_t k0 = 0; k0 < g.co; k0 += kBlock) {
          WithBlock(std::min(kBlock, g.co - k0), [&]<int B>() {
            Vec<Real> acc[B] = {};
            for (std::size_t j = 0; j < rows; ++j) {
              const Vec<Real> cv = Load(base + off[j]);
              const Real* wr = w + j * g.co + k0;
              for (int kk = 0; kk < B; ++kk) acc[kk] += cv * wr[kk];
            }
            for (std::size_t l = 0; l < count; ++l) {
              for (int kk = 0; kk < B; ++kk) o[l * g.co + k0 + kk] = acc[kk][l];
            }
          });
        }
        if (bias != nullptr) {
          for (std::size_t l = 0; l < count; ++l) {
            for (std::size_t k = 0; k < g.co; ++k) o[l * g.co + k] += bias[k];
          }
        }
      }
    }
  }
}

template <typename Real>
void PlanarBackward(const ConvGeometry& g, const Real* x, const Real* w, const Real* up,
                    Real* gx, Real* gw) {
  constexpr std::size_t L = kTile<Real>;
  const std::size_t rows = g.kh * g.kw * g.ci;
  PlanarImage<Real> img(g);
  const std::size_t* off = img.offsets();
  const std::size_t ow_pad = img.tiles() * L;
  // up of one image, channel-planar with zero lanes past each row's end.
  std::vector<Real> u(g.co * g.oh * ow_pad);
  auto urow = [&](std::size_t k, std::size_t y) { return u.data() + (k * g.oh + y) * ow_pad; };

  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t y = 0; y < g.oh; ++y) {
      const Real* src = up + (n * g.oh + y) * g.ow * g.co;
      for (std::size_t xo = 0; xo < g.ow; ++xo) {
        for (std::size_t k = 0; k < g.co; ++k) urow(k, y)[xo] = src[xo * g.co + k];
      }
    }

    if (gx != nullptr) {
      img.Clear();
      Real* dst = img.data();
      for (std::size_t y = 0; y < g.oh; ++y) {
        for (std::size_t t = 0; t < img.tiles(); ++t) {
          Real* base = dst + img.Base(y, t);
          for (std::size_t j0 = 0; j0 < rows; j0 += kBlock) {
            WithBlock(std::min(kBlock, rows - j0), [&]<int B>() {
              Vec<Real> acc[B] = {};
              for (std::size_t k = 0; k < g.co; ++k) {
                const Vec<Real> uv = Load(urow(k, y) + t * L);
                for (int jj = 0; jj < B; ++jj) acc[jj] += uv * w[(j0 + jj) * g.co + k];
              }
              for (int jj = 0; jj < B; ++jj) {
                Real* d = base + off[j0 + jj];
                Store(d, Load(d) + acc[jj]);
              }
            });
          }
        }
      }
      img.AddTo(gx, n);
    }

    if (gw != nullptr) {
      img.Load(x, n);
      const Real* src = img.data();
      for (std::size_t j0 = 0; j0 < rows; j0 += 4) {
        for (std::size_t k0 = 0; k0 < g.co; k0 += 4) {
          WithSmallBlock(std::min<std::size_t>(4, rows - j0), [&]<int BJ>() {
            WithSmallBlock(std::min<std::size_t>(4, g.co - k0), [&]<int BK>() {
              Vec<Real> acc[BJ][BK] = {};
              for (std::size_t y = 0; y < g.oh; ++y) {
                for (std::size_t t = 0; t < img.tiles(); ++t) {
                  const Real* base = src + img.Base(y, t);
                  Vec<Real> xv[BJ], uv[BK];
                  for (int jj = 0; jj < BJ; ++jj) xv[jj] = Load(base + off[j0 + jj]);
                  for (int kk = 0; kk < BK; ++kk) uv[kk] = Load(urow(k0 + kk, y) + t * L);
                  for (int jj = 0; jj < BJ; ++jj) {
                    for (int kk = 0; kk < BK; ++kk) acc[jj][kk] += xv[jj] * uv[kk];
                  }
                }
              }
              for (int jj = 0; jj < BJ; ++jj) {
                for (int kk = 0; kk < BK; ++kk) {
                  gw[(j0 + jj) * g.co + k0 + kk] += LaneSum<Real>(acc[jj][kk]);
                }
              }
            });
          });
        }
      }
    }
  }
}

}  // namespace

template <typename Real>
void ConvForward(const ConvGeometry& g, const Real* x, const Real* w, const Real* bias,
                 Real* out) {
  if (UsePlanar<Real>(g)) return PlanarForward(g, x, w, bias, out);
  constexpr std::size_t L = kTile<Real>;
  const std::size_t rows = g.kh * g.kw * g.ci;
  const std::size_t positions = g.n * g.oh * g.ow;
  std::vector<Real> col(rows * L);
  for (std::size_t p0 = 0; p0 < positions; p0 += L) {
    const std::size_t count = std::min(L, positions - p0);
    Unfold(g, x, p0, count, col.data());
    for (std::size_t k0 = 0; k0 < g.co; k0 += kBlock) {
      WithBlock(std::min(kBlock, g.co - k0), [&]<int B>() {
        Vec<Real> acc[B] = {};
        for (std::size_t j = 0; j < rows; ++j) {
          const Vec<Real> cv = Load(col.data() + j * L);
          const Real* wr = w + j * g.co + k0;
          for (int kk = 0; kk < B; ++kk) acc[kk] += cv * wr[kk];
        }
        for (std::size_t l = 0; l < count; ++l) {
          Real* o = out + (p0 + l) * g.co + k0;
          for (int kk = 0; kk < B; ++kk) o[kk] = acc[kk][l];
        }
      });
    }
    if (bias != nullptr) {
      for (std::size_t l = 0; l < count; ++l) {
        Real* o = out + (p0 + l) * g.co;
        for (std::size_t k = 0; k < g.co; ++k) o[k] += bias[k];
      }
    }
  }
}

template <typename Real>
void ConvBackward(const ConvGeometry& g, const Real* x, const Real* w, const Real* up,
                  Real* gx, Real* gw) {
  if (UsePlanar<Real>(g)) return PlanarBackward(g, x, w, up, gx, gw);
  constexpr std::size_t L = kTile<Real>;
  const std::size_t rows = g.kh * g.kw * g.ci;
  const std::size_t positions = g.n * g.oh * g.ow;
  const std::size_t co_pad = (g.co + L - 1) / L * L;
  std::vector<Real> col(gw != nullptr ? rows * L : 0);
  std::vector<Real> ut(gx != nullptr ? g.co * L : 0);  // tile of up, transposed
  std::vector<Real> res(gx != nullptr ? rows * L : 0);
  std::vector<Real> upk(gw != nullptr ? L * co_pad : 0);  // tile of up, channel padded
  std::vector<Real> gw_pad(gw != nullptr ? rows * co_pad : 0);

  for (std::size_t p0 = 0; p0 < positions; p0 += L) {
    const std::size_t count = std::min(L, positions - p0);
    const Real* u = up + p0 * g.co;

    if (gx != nullptr) {
      std::fill(ut.begin(), ut.end(), Real(0));
      for (std::size_t l = 0; l < count; ++l) {
        for (std::size_t k = 0; k < g.co; ++k) ut[k * L + l] = u[l * g.co + k];
      }
      for (std::size_t j0 = 0; j0 < rows; j0 += kBlock) {
        WithBlock(std::min(kBlock, rows - j0), [&]<int B>() {
          Vec<Real> acc[B] = {};
          for (std::size_t k = 0; k < g.co; ++k) {
            const Vec<Real> uv = Load(ut.data() + k * L);
            for (int jj = 0; jj < B; ++jj) acc[jj] += uv * w[(j0 + jj) * g.co + k];
          }
          for (int jj = 0; jj < B; ++jj) Store(res.data() + (j0 + jj) * L, acc[jj]);
        });
      }
      Exchange<false>(g, gx, p0, count, res.data(), L);
    }

    if (gw != nullptr) {
      Unfold(g, x, p0, count, col.data());
      std::fill(upk.begin(), upk.end(), Real(0));
      for (std::size_t l = 0; l < count; ++l) {
        std::copy(u + l * g.co, u + (l + 1) * g.co, upk.data() + l * co_pad);
      }
      for (std::size_t k0 = 0; k0 < co_pad; k0 += L) {
        for (std::size_t j0 = 0; j0 < rows; j0 += kBlock) {
          WithBlock(std::min(kBlock, rows - j0), [&]<int B>() {
            Vec<Real> acc[B] = {};
            for (std::size_t l = 0; l < count; ++l) {
              const Vec<Real> uv = Load(upk.data() + l * co_pad + k0);
              for (int jj = 0; jj < B; ++jj) acc[jj] += col[(j0 + jj) * L + l] * uv;
            }
            for (int jj = 0; jj < B; ++jj) {
              Real* dst = gw_pad.data() + (j0 + jj) * co_pad + k0;
              Store(dst, Load(dst) + acc[jj]);
            }
          });
        }
      }
    }
  }

  if (gw != nullptr) {
    for (std::size_t j = 0; j < rows; ++j) {
      for (std::size_t k = 0; k < g.co; ++k) gw[j * g.co + k] += gw_pad[j * co_pad + k];
    }
  }
}

template void ConvForward(const ConvGeometry&, const float*, const float*, const float*, float*);
template void ConvForward(const ConvGeometry&, const double*, const double*, const double*,
                          double*);
template void ConvBackward(const ConvGeometry&, const float*, const float*, const float*,
                           float*, float*);
template void ConvBackward(const ConvGeometry&, const double*, const double*, const double*,
                           double*, double*);

}  // namespace datt::detail
