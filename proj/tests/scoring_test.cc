#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "datt/error.h"
#include "datt/scoring.h"
#include "test_util.h"

namespace datt {
namespace {

using test::RandomTensor;
using T = Tensor<double>;

TEST(Cosine, Examples) {
  const std::vector<double> v{0.3, -1.2, 2.0}, neg{-0.3, 1.2, -2.0};
  const std::vector<double> e1{1, 0}, e2{0, 1};
  EXPECT_NEAR(CosineScore<double>(v, v), 1.0, 1e-15);
  EXPECT_EQ(CosineScore<double>(e1, e2), 0.0);
  EXPECT_NEAR(CosineScore<double>(v, neg), -1.0, 1e-15);
}

TEST(Cosine, ScaleInvariantAndSymmetric) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1), scale(0.01, 100);
  for (int i = 0; i < 100; ++i) {
    std::vector<float> a(16), b(16), sa(16);
    const float s = static_cast<float>(scale(rng));
    for (std::size_t k = 0; k < 16; ++k) {
      a[k] = static_cast<float>(u(rng));
      b[k] = static_cast<float>(u(rng));
      sa[k] = s * a[k];
    }
    EXPECT_NEAR(CosineScore<float>(sa, b), CosineScore<float>(a, b), 1e-6);
    EXPECT_EQ(CosineScore<float>(a, b), CosineScore<float>(b, a));
  }
}

TEST(Cosine, ZeroNormIsAnError) {
  const std::vector<double> z{0, 0, 0}, v{1, 2, 3};
  EXPECT_THROW(CosineScore<double>(z, v), NumericError);
  EXPECT_THROW(CosineScore<double>(v, z), NumericError);
  const std::vector<double> shorter{1, 2};
  EXPECT_THROW(CosineScore<double>(shorter, v), ShapeError);
}

// Head with non-trivial BN statistics and affine parameters so the oracle
// exercises every term.
BinaryHead<double> RandomHead(ParameterStore<double>& store, std::size_t f, std::mt19937_64& rng) {
  BinaryHead<double> h = BinaryHead<double>::Create(store, "head", f, 0.5);
  std::uniform_real_distribution<double> u(-1, 1), pos(0.5, 2.0);
  for (const auto& e : store.entries()) {
    Tensor<double> v = e.value;
    const bool is_var = e.name.find("running_var") != std::string::npos;
    for (double& x : v.mutable_data()) x = is_var ? pos(rng) : u(rng);
  }
  return h;
}

double HeadOracle(const BinaryHead<double>& h, const std::vector<double>& d) {
  const std::size_t f = d.size();
  double z = h.fc.bias[0];
  for (std::size_t c = 0; c < f; ++c) {
    const double bn = (d[c] - h.bn.running_mean[c]) / std::sqrt(h.bn.running_var[c] + 1e-5) *
                          h.bn.gamma[c] +
                      h.bn.beta[c];
    z += bn * h.fc.weight[c];
  }
  return 1.0 / (1.0 + std::exp(-z));
}

TEST(BinaryScore, MatchesExplicitFormulaOverGrid) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t a = test::RandomExtent(rng, 1, 3), b = test::RandomExtent(rng, 1, 3),
                      f = test::RandomExtent(rng, 1, 16);
    ParameterStore<double> store(trial);
    BinaryHead<double> h = RandomHead(store, f, rng);
    T sa = RandomTensor({a, f}, rng), sb = RandomTensor({b, f}, rng);
    T ma = RandomTensor({a, b, f}, rng), mb = RandomTensor({a, b, f}, rng);
    T scores = h.Forward(Context<double>{}, HeadInput(sa, sb, ma, mb));
    ASSERT_EQ(scores.shape(), (Shape{a, b}));
    for (std::size_t i = 0; i < a; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        std::vector<double> d(f);
        for (std::size_t c = 0; c < f; ++c) {
          d[c] = (sa[i * f + c] - sb[j * f + c]) *
                 (ma[(i * b + j) * f + c] - mb[(i * b + j) * f + c]);
        }
        EXPECT_NEAR(scores[i * b + j], HeadOracle(h, d), 1e-6);
      }
    }
  }
}

TEST(BinaryScore, OrderSwapIsExact) {
  std::mt19937_64 rng(3);
  ParameterStore<double> store(3);
  BinaryHead<double> h = RandomHead(store, 8, rng);
  for (int i = 0; i < 200; ++i) {
    T s1 = RandomTensor({1, 8}, rng), s2 = RandomTensor({1, 8}, rng);
    T m1 = RandomTensor({1, 1, 8}, rng), m2 = RandomTensor({1, 1, 8}, rng);
    const double forward = h.Forward(Context<double>{}, HeadInput(s1, s2, m1, m2))[0];
    const double swapped = h.Forward(Context<double>{}, HeadInput(s2, s1, m2, m1))[0];
    ASSERT_EQ(forward, swapped);
  }
}

TEST(BinaryScore, IdenticalUtterancesGiveTheZeroInputConstant) {
  std::mt19937_64 rng(4);
  ParameterStore<double> store(4);
  BinaryHead<double> h = RandomHead(store, 6, rng);
  T s = RandomTensor({1, 6}, rng), m = RandomTensor({1, 1, 6}, rng);
  const double score = h.Forward(Context<double>{}, HeadInput(s, s, m, m))[0];
  EXPECT_NEAR(score, HeadOracle(h, std::vector<double>(6, 0.0)), 1e-15);
}

TEST(BinaryScore, DropoutOnlyWhenRequested) {
  std::mt19937_64 rng(5);
  ParameterStore<double> store(5);
  BinaryHead<double> h = RandomHead(store, 32, rng);
  T d = RandomTensor({4, 4, 32}, rng);
  Context<double> infer;
  T a = h.Forward(infer, d), b = h.Forward(infer, d);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  Rng drop(7);
  Context<double> train{nullptr, BnMode::kInfer, &drop};
  T c = h.Forward(train, d);
  int changed = 0;
  for (std::size_t i = 0; i < a.size(); ++i) changed += c[i] != a[i];
  EXPECT_GT(changed, 0);
  EXPECT_THROW(BinaryHead<double>::Create(store, "bad", 4, 1.0), ConfigError);
}

TEST(Fusion, Examples) {
  NormStats unit;
  EXPECT_NEAR(FuseScores(0.4, 0.8, unit), 0.6, 1e-15);
  NormStats s{0.2, 0.1, 0.7, 0.05};
  EXPECT_EQ(FuseScores(0.2, 0.7, s), 0.0);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    const double c = u(rng), b = u(rng), d = std::abs(u(rng)) + 1e-3;
    EXPECT_GT(FuseScores(c + d, b, s), FuseScores(c, b, s));
    EXPECT_GT(FuseScores(c, b + d, s), FuseScores(c, b, s));
  }
}

TEST(Calibration, DegenerateScoresAreFloored) {
  const std::vector<double> cos(50, 0.3), bin(50, 0.9);
  Calibration c = StatsFromScores(cos, bin);
  EXPECT_NEAR(c.stats.mean_cos, 0.3, 1e-15);
  EXPECT_EQ(c.stats.std_cos, 1e-6);
  EXPECT_NEAR(c.stats.mean_bin, 0.9, 1e-15);
  EXPECT_EQ(c.stats.std_bin, 1e-6);
  EXPECT_EQ(c.warnings.size(), 2u);
  EXPECT_THROW(StatsFromScores({}, {}), InputError);
}

TEST(Calibration, BernoulliScoresAndDeterminism) {
  // Each pair scores 0 or 1 from a hash of the pair, roughly half each.
  PairScorer scorer = [](std::size_t i, std::size_t j) {
    const double s = static_cast<double>((i * 2654435761u + j * 40503u) >> 7 & 1u);
    return std::pair<double, double>{s, 1.0 - s};
  };
  Calibration a = CalibrateNormStats(scorer, 500, 1000, 42);
  Calibration b = CalibrateNormStats(scorer, 500, 1000, 42);
  // Binomial(1000, 1/2): 4 standard errors of the mean is 0.063.
  EXPECT_NEAR(a.stats.mean_cos, 0.5, 0.063);
  EXPECT_NEAR(a.stats.std_cos, 0.5, 0.01);
  EXPECT_NEAR(a.stats.mean_bin, 1.0 - a.stats.mean_cos, 1e-12);
  EXPECT_EQ(a.stats.mean_cos, b.stats.mean_cos);
  EXPECT_EQ(a.stats.std_cos, b.stats.std_cos);
  EXPECT_EQ(a.stats.mean_bin, b.stats.mean_bin);
  EXPECT_EQ(a.stats.std_bin, b.stats.std_bin);
  EXPECT_TRUE(a.warnings.empty());
}

TEST(Calibration, NeverPairsAnItemWithItself) {
  int self_pairs = 0;
  PairScorer scorer = [&](std::size_t i, std::size_t j) {
    self_pairs += i == j;
    return std::pair<double, double>{double(i), double(j)};
  };
  CalibrateNormStats(scorer, 2, 500, 1);
  EXPECT_EQ(self_pairs, 0);
  EXPECT_THROW(CalibrateNormStats(scorer, 1, 10, 1), InputError);
  EXPECT_THROW(CalibrateNormStats(scorer, 5, 1, 1), InputError);
}

// Re-scoring every pair as alpha * s + beta and recalibrating on the same
// sample leaves fused scores unchanged.
TEST(Fusion, AffineEquivariantUnderRecalibration) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> cos(300), bin(300);
  for (std::size_t i = 0; i < cos.size(); ++i) {
    cos[i] = 0.3 * n(rng);
    bin[i] = 1.0 / (1.0 + std::exp(-n(rng)));
  }
  const NormStats base = StatsFromScores(cos, bin).stats;
  for (auto [ac, bc, ab, bb] : {std::array<double, 4>{2.0, 0.5, 0.1, -3.0},
                                std::array<double, 4>{0.01, 10.0, 7.0, 0.2}}) {
    std::vector<double> cos2(cos.size()), bin2(bin.size());
    for (std::size_t i = 0; i < cos.size(); ++i) {
      cos2[i] = ac * cos[i] + bc;
      bin2[i] = ab * bin[i] + bb;
    }
    const NormStats moved = StatsFromScores(cos2, bin2).stats;
    for (std::size_t i = 0; i < cos.size(); ++i) {
      EXPECT_NEAR(FuseScores(cos2[i], bin2[i], moved), FuseScores(cos[i], bin[i], base), 1e-6);
    }
  }
}

}  // namespace
}  // namespace datt
