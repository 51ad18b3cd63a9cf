// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Runs single-threaded in deterministic mode.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "datt/attention.h"
#include "datt/backbone.h"
#include "datt/commands.h"
#include "datt/io.h"
#include "datt/training.h"

namespace {

using namespace datt;
namespace fs = std::filesystem;
using T = Tensor<double>;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

template <typename Real = double>
Tensor<Real> Random(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Real> v(NumElements(shape));
  for (auto& x : v) x = static_cast<Real>(u(rng));
  return Tensor<Real>(std::move(shape), std::move(v));
}

std::size_t Between(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

ModelConfig DeskModel(std::size_t mel_bins = 64) {
  ModelConfig m;
  m.backbone.mel_bins = mel_bins;
  m.backbone.channels = {8, 16, 32, 64};
  m.backbone.num_f = 32;
  m.backbone.num_speakers = 10;
  return m;
}

FbankMatrix Gaussian(std::size_t frames, std::size_t bins, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  FbankMatrix m(frames, bins);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < bins; ++f) m.at(t, f) = n(rng);
  }
  return m;
}

// ---------------------------------------------------------------------------

Outcome GradientIntegrity() {
  const auto start = std::chrono::steady_clock::now();
  GradcheckOptions options;
  options.seed = 0;
  const GradcheckReport report = RunGradcheck(options);
  const double secs = Seconds(start);
  double worst = 0.0;
  std::string failed;
  for (const LayerCheck& l : report.layers) {
    worst = std::max(worst, l.max_rel_error);
    if (!l.passed) failed += " " + l.layer;
  }
  Outcome o{report.passed() && secs < 120.0,
            Format("%zu layer types, worst rel err %.2e (limit 1e-4), %.1f s (limit 120 s)",
                   report.layers.size(), worst, secs)};
  if (!failed.empty()) o.detail += ", failing:" + failed;
  return o;
}

// Largest |column sum - 1| over every (group, channel), or +inf on a negative weight.
double StochasticError(const Tensor<float>& w, std::size_t frames, std::size_t f) {
  double worst = 0.0;
  const std::size_t groups = w.size() / (frames * f);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t c = 0; c < f; ++c) {
      double sum = 0.0;
      for (std::size_t t = 0; t < frames; ++t) {
        const float v = w[(g * frames + t) * f + c];
        if (!(v >= 0.0f)) return std::numeric_limits<double>::infinity();
        sum += v;
      }
      worst = std::max(worst, std::abs(sum - 1.0));
    }
  }
  return worst;
}

Outcome AttentionStochasticity() {
  std::mt19937_64 rng(2);
  double worst_sum = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t frames = Between(rng, 1, 20), f = Between(rng, 1, 32);
    const double spread = std::uniform_real_distribution<double>(0.1, 20.0)(rng);
    const auto att = Random<float>({2, frames, f}, rng, -spread, spread);
    const auto id = Random<float>({2, frames, f}, rng, -spread, spread);
    const auto other = Random<float>({3, f}, rng, -spread, spread);
    worst_sum = std::max(worst_sum, StochasticError(SelfAttention(att, id).weights, frames, f));
    for (GridAxis axis : {GridAxis::kRows, GridAxis::kColumns}) {
      worst_sum = std::max(
          worst_sum, StochasticError(MutualAttention(att, id, other, axis).weights, frames, f));
    }
  }

  // Every frame carries the same f_att row.
  double worst_uniform = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t frames = Between(rng, 1, 20), f = Between(rng, 1, 32);
    const auto row = Random<float>({f}, rng, -10.0, 10.0);
    Tensor<float> att = Tensor<float>::Full({1, frames, f}, 0.0f);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t c = 0; c < f; ++c) att.mutable_data()[t * f + c] = row[c];
    }
    const auto id = Random<float>({1, frames, f}, rng);
    const auto other = Random<float>({2, f}, rng, -10.0, 10.0);
    const double want = 1.0 / static_cast<double>(frames);
    for (const Tensor<float>& w : {SelfAttention(att, id).weights,
                                   MutualAttention(att, id, other, GridAxis::kRows).weights}) {
      for (float v : w.data()) worst_uniform = std::max(worst_uniform, std::abs(v - want));
    }
  }
  return {worst_sum <= 1e-5 && worst_uniform <= 1e-6,
          Format("max |column sum - 1| %.2e (limit 1e-5), negatives %s, "
                 "max |w - 1/T'| %.2e (limit 1e-6)",
                 std::isinf(worst_sum) ? 0.0 : worst_sum, std::isinf(worst_sum) ? "yes" : "none",
                 worst_uniform)};
}

// Explicit-loop attention for one utterance with a per-channel scale.
struct LoopAttention {
  std::vector<double> weights, pooled;
};

LoopAttention LoopAttend(const double* att, const double* id, const std::vector<double>& scale,
                         std::size_t frames, std::size_t f) {
  LoopAttention r{std::vector<double>(frames * f), std::vector<double>(f, 0.0)};
  for (std::size_t c = 0; c < f; ++c) {
    double z = 0.0;
    for (std::size_t t = 0; t < frames; ++t) z += std::exp(att[t * f + c] * scale[c]);
    for (std::size_t t = 0; t < frames; ++t) {
      const double w = std::exp(att[t * f + c] * scale[c]) / z;
      r.weights[t * f + c] = w;
      r.pooled[c] += w * id[t * f + c];
    }
  }
  return r;
}

double MaxDiff(const double* a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

Outcome OracleEquivalence() {
  std::mt19937_64 rng(3);
  double self_err = 0.0, mutual_err = 0.0, head_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t a = Between(rng, 1, 3), b = Between(rng, 1, 3), frames = Between(rng, 1, 8),
                      f = Between(rng, 1, 16);
    const T att = Random({a, frames, f}, rng, -3, 3), id = Random({a, frames, f}, rng, -3, 3);
    const T other = Random({b, f}, rng, -2, 2);

    const AttentionResult<double> self = SelfAttention(att, id);
    for (std::size_t i = 0; i < a; ++i) {
      const double* ai = att.data().data() + i * frames * f;
      std::vector<double> mean(f, 0.0);
      for (std::size_t t = 0; t < frames; ++t) {
        for (std::size_t c = 0; c < f; ++c) mean[c] += ai[t * f + c] / static_cast<double>(frames);
      }
      const LoopAttention o = LoopAttend(ai, id.data().data() + i * frames * f, mean, frames, f);
      self_err = std::max(self_err, MaxDiff(self.weights.data().data() + i * frames * f, o.weights));
      self_err = std::max(self_err, MaxDiff(self.pooled.data().data() + i * f, o.pooled));
    }

    for (GridAxis axis : {GridAxis::kRows, GridAxis::kColumns}) {
      const AttentionResult<double> r = MutualAttention(att, id, other, axis);
      for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t j = 0; j < b; ++j) {
          const std::vector<double> scale(other.data().begin() + j * f,
                                          other.data().begin() + (j + 1) * f);
          const LoopAttention o = LoopAttend(att.data().data() + i * frames * f,
                                             id.data().data() + i * frames * f, scale, frames, f);
          const std::size_t cell = axis == GridAxis::kRows ? i * b + j : j * a + i;
          mutual_err =
              std::max(mutual_err, MaxDiff(r.weights.data().data() + cell * frames * f, o.weights));
          mutual_err = std::max(mutual_err, MaxDiff(r.pooled.data().data() + cell * f, o.pooled));
        }
      }
    }

    // Classifier on the dual-attention difference product, with non-trivial
    // BN statistics.
    ParameterStore<double> store(trial);
    const BinaryHead<double> h = BinaryHead<double>::Create(store, "head", f, 0.5);
    std::uniform_real_distribution<double> u(-1, 1), pos(0.5, 2.0);
    for (const auto& e : store.entries()) {
      Tensor<double> v = e.value;
      const bool var = e.name.find("running_var") != std::string::npos;
      for (double& x : v.mutable_data()) x = var ? pos(rng) : u(rng);
    }
    const T sa = Random({a, f}, rng), sb = Random({b, f}, rng);
    const T ma = Random({a, b, f}, rng), mb = Random({a, b, f}, rng);
    const T scores = h.Forward(Context<double>{}, HeadInput(sa, sb, ma, mb));
    for (std::size_t i = 0; i < a; ++i) {
      for (std::size_t j = 0; j < b; ++j) {
        double z = h.fc.bias[0];
        for (std::size_t c = 0; c < f; ++c) {
          const double d = (sa[i * f + c] - sb[j * f + c]) *
                           (ma[(i * b + j) * f + c] - mb[(i * b + j) * f + c]);
          const double bn = (d - h.bn.running_mean[c]) / std::sqrt(h.bn.running_var[c] + 1e-5) *
                                h.bn.gamma[c] +
                            h.bn.beta[c];
          z += bn * h.fc.weight[c];
        }
        head_err = std::max(head_err, std::abs(scores[i * b + j] - 1.0 / (1.0 + std::exp(-z))));
      }
    }
  }
  const double worst = std::max({self_err, mutual_err, head_err});
  return {worst <= 1e-6, Format("max |diff| self %.1e, mutual %.1e, head %.1e (limit 1e-6)",
                                self_err, mutual_err, head_err)};
}

Outcome AmSoftmaxIdentities() {
  std::mt19937_64 rng(4);
  double reduce_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t f = Between(rng, 1, 16), k = Between(rng, 2, 12);
    const T w = Random({f, k}, rng), e = Random({f}, rng);
    const int label = static_cast<int>(Between(rng, 0, k - 1));
    const double s = std::uniform_real_distribution<double>(1.0, 40.0)(rng);
    double ne = 0.0;
    for (std::size_t c = 0; c < f; ++c) ne += e[c] * e[c];
    std::vector<double> z(k);
    for (std::size_t j = 0; j < k; ++j) {
      double dot = 0.0, nw = 0.0;
      for (std::size_t c = 0; c < f; ++c) {
        dot += e[c] * w[c * k + j];
        nw += w[c * k + j] * w[c * k + j];
      }
      z[j] = s * dot / std::sqrt(ne * nw);
    }
    const double peak = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - peak);
    const double want = std::exp(z[label] - peak) / sum;
    reduce_err = std::max(reduce_err, std::abs(AmSoftmaxProb(e.data(), w, label, s, 0.0) - want));
  }

  // Two classes whose weight columns point the same way: equal cosines.
  const double closed = 1.0 / (1.0 + std::exp(6.0));
  double margin_err = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t f = Between(rng, 1, 16);
    const T e = Random({f}, rng), dir = Random({f}, rng);
    const double k0 = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
    const double k1 = std::uniform_real_distribution<double>(0.1, 5.0)(rng);
    T w = T::Full({f, 2}, 0.0);
    for (std::size_t c = 0; c < f; ++c) {
      w.mutable_data()[c * 2] = k0 * dir[c];
      w.mutable_data()[c * 2 + 1] = k1 * dir[c];
    }
    const int label = static_cast<int>(trial % 2);
    margin_err = std::max(margin_err, std::abs(AmSoftmaxProb(e.data(), w, label, 30.0, 0.2) - closed));
  }
  return {reduce_err <= 1e-10 && margin_err <= 1e-9,
          Format("m=0 vs scaled softmax %.1e (limit 1e-10), equal cosines vs 1/(1+e^6)=%.6f: "
                 "%.1e (limit 1e-9)",
                 reduce_err, closed, margin_err)};
}

Outcome OrderSymmetry() {
  std::mt19937_64 rng(5);
  std::size_t head_mismatch = 0;
  ParameterStore<double> store(5);
  const BinaryHead<double> h = BinaryHead<double>::Create(store, "head", 16, 0.5);
  for (const auto& e : store.entries()) {
    Tensor<double> v = e.value;
    const bool var = e.name.find("running_var") != std::string::npos;
    std::uniform_real_distribution<double> u(var ? 0.5 : -1.0, var ? 2.0 : 1.0);
    for (double& x : v.mutable_data()) x = u(rng);
  }
  for (int i = 0; i < 200; ++i) {
    const T s1 = Random({1, 16}, rng), s2 = Random({1, 16}, rng);
    const T m1 = Random({1, 1, 16}, rng), m2 = Random({1, 1, 16}, rng);
    head_mismatch += h.Forward(Context<double>{}, HeadInput(s1, s2, m1, m2))[0] !=
                     h.Forward(Context<double>{}, HeadInput(s2, s1, m2, m1))[0];
  }

  // The full model on random utterances of 1 to 5 segments.
  const DualAttentionNet<float> net(DeskModel(), 5);
  std::vector<EncodedBatch<float>> pool;
  for (int i = 0; i < 40; ++i) pool.push_back(EncodeUtterance(net, Gaussian(Between(rng, 300, 900), 64, rng())));
  const NormStats stats{0.1, 0.3, 0.5, 0.2};
  std::size_t segment_mismatch = 0;
  double trial_err = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t x = Between(rng, 0, pool.size() - 1);
    std::size_t y = Between(rng, 0, pool.size() - 2);
    if (y >= x) ++y;
    const SegmentPairScores ab = ScoreSegmentPairs(net, pool[x], pool[y]);
    const SegmentPairScores ba = ScoreSegmentPairs(net, pool[y], pool[x]);
    for (std::size_t p = 0; p < ab.x; ++p) {
      for (std::size_t q = 0; q < ab.y; ++q) {
        segment_mismatch += ab.binary[p * ab.y + q] != ba.binary[q * ab.x + p];
      }
    }
    const TrialScore t1 = ScoreTrial(net, pool[x], pool[y], stats);
    const TrialScore t2 = ScoreTrial(net, pool[y], pool[x], stats);
    trial_err = std::max({trial_err, std::abs(t1.score_cos - t2.score_cos),
                          std::abs(t1.score_binary - t2.score_binary),
                          std::abs(t1.score_all - t2.score_all)});
  }
  return {head_mismatch == 0 && segment_mismatch == 0 && trial_err <= 1e-10,
          Format("binary head swaps differing: %zu/200, model segment-pair binary scores "
                 "differing: %zu, trial aggregates max |diff| %.1e (limit 1e-10)",
                 head_mismatch, segment_mismatch, trial_err)};
}

// Every score and +inf as a candidate threshold; each rate counted directly.
double BruteForceEer(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> cand = s;
  cand.push_back(std::numeric_limits<double>::infinity());
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  auto rates = [&](double t) {
    double fa = 0, fr = 0, n = 0, p = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (y[i]) {
        ++p;
        fr += s[i] < t;
      } else {
        ++n;
        fa += s[i] >= t;
      }
    }
    return std::pair{fa / n, fr / p};
  };
  auto [far0, frr0] = rates(cand[0]);
  for (std::size_t k = 1; k < cand.size(); ++k) {
    auto [far, frr] = rates(cand[k]);
    if (far <= frr) {
      const double g0 = far0 - frr0, g1 = far - frr;
      return far0 + g0 / (g0 - g1) * (far - far0);
    }
    far0 = far;
    frr0 = frr;
  }
  return -1.0;
}

Outcome EerCorrectness() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-3, 3);
  double oracle_err = 0.0, transform_err = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = Between(rng, 2, 60);
    std::vector<double> s(n);
    std::vector<int> y(n);
    const bool ties = trial % 3 == 0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng() & 1);
      s[i] = ties ? std::round(u(rng)) + 0.5 * y[i] : u(rng) + 0.7 * y[i];
    }
    y[0] = 1;
    y[1] = 0;
    const double eer = ComputeEer(s, y).eer;
    oracle_err = std::max(oracle_err, std::abs(eer - BruteForceEer(s, y)));
    const std::vector<std::function<double(double)>> transforms{
        [](double v) { return std::exp(v); }, [](double v) { return 2.5 * v - 4.0; },
        [](double v) { return v * v * v + v; }, [](double v) { return std::atan(v); }};
    for (const auto& g : transforms) {
      std::vector<double> t(n);
      std::transform(s.begin(), s.end(), t.begin(), g);
      transform_err = std::max(transform_err, std::abs(ComputeEer(t, y).eer - eer));
    }
  }
  return {oracle_err <= 1e-9 && transform_err <= 1e-9,
          Format("max |EER - brute force| %.1e, max change under increasing transforms %.1e "
                 "(limit 1e-9)",
                 oracle_err, transform_err)};
}

Outcome SegmentationProtocol() {
  auto ramp = [](std::size_t frames) {
    FbankMatrix m(frames, 64);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t f = 0; f < 64; ++f) m.at(t, f) = static_cast<float>(t) + 0.01f * f;
    }
    return m;
  };
  std::vector<std::string> problems;
  const FbankMatrix long_utt = ramp(700);
  const std::vector<FbankMatrix> segs = SegmentUtterance(long_utt);
  if (segs.size() != 3) problems.push_back("T=700 gave " + std::to_string(segs.size()) + " segments");
  for (std::size_t i = 0; i < segs.size() && i < 3; ++i) {
    if (!(segs[i] == long_utt.Rows(100 * i, 100 * i + 500))) {
      problems.push_back("segment " + std::to_string(i) + " is not frames [" +
                         std::to_string(100 * i) + ", " + std::to_string(100 * i + 500) + ")");
    }
  }
  const FbankMatrix short_utt = ramp(400);
  const std::vector<FbankMatrix> one = SegmentUtterance(short_utt);
  if (one.size() != 1 || one[0].frames() != 500 || !(one[0].Rows(0, 400) == short_utt)) {
    problems.push_back("T=400 is not one 500-frame segment starting with the input");
  } else {
    const std::vector<double> mean = short_utt.MeanFrame();
    for (std::size_t t = 400; t < 500; ++t) {
      for (std::size_t f = 0; f < 64; ++f) {
        if (one[0].at(t, f) != static_cast<float>(mean[f])) {
          problems.push_back("T=400 padding is not the mean frame");
          t = 500;
          break;
        }
      }
    }
  }

  // X x Y grid against scoring each segment pair on its own.
  const DualAttentionNet<float> net(DeskModel(), 7);
  const FbankMatrix a = Gaussian(700, 64, 1), b = Gaussian(620, 64, 2);
  const SegmentPairScores grid = ScoreSegmentPairs(net, EncodeUtterance(net, a), EncodeUtterance(net, b));
  const auto sa = SegmentUtterance(a), sb = SegmentUtterance(b);
  double cos_sum = 0.0, bin_sum = 0.0;
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    for (std::size_t j = 0; j < sb.size(); ++j) {
      const SegmentPairScores s =
          ScoreSegmentPairs(net, EncodeUtterance(net, sa[i]), EncodeUtterance(net, sb[j]));
      mismatched += grid.cos[i * sb.size() + j] != s.cos[0];
      mismatched += grid.binary[i * sb.size() + j] != s.binary[0];
      cos_sum += s.cos[0];
      bin_sum += s.binary[0];
    }
  }
  const double cells = static_cast<double>(sa.size() * sb.size());
  if (grid.x != 3 || grid.y != 2) problems.push_back("grid is not 3 x 2");
  if (mismatched != 0) problems.push_back(std::to_string(mismatched) + " grid cells differ");
  if (grid.MeanCos() != cos_sum / cells || grid.MeanBinary() != bin_sum / cells) {
    problems.push_back("grid average differs from the enumerated average");
  }
  std::string detail = "T=700 -> offsets {0,100,200}; T=400 -> one mean-padded segment; "
                       "3 x 2 grid equals direct enumeration";
  if (!problems.empty()) {
    detail.clear();
    for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
  }
  return {problems.empty(), detail};
}

double EpochMean(const std::vector<LogRow>& log, std::size_t epoch) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const LogRow& r : log) {
    if (r.epoch == epoch) {
      sum += r.losses.loss_all;
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

Outcome EndToEnd(const RunConfig& desk, const fs::path& work) {
  const auto start = std::chrono::steady_clock::now();
  const std::string ckpt = (work / "desk.ckpt").string();
  const TrainOutcome trained = CmdTrain(desk, ckpt, (work / "desk_log.csv").string(), 1, &std::cerr);

  // Held out: the same speakers, freshly drawn utterances.
  RunConfig held = desk;
  held.corpus.utterance_salt = desk.corpus.utterance_salt + 1;
  CmdSynth(held, (work / "heldout").string(), 200);
  const EvalReport r = CmdEval(ckpt, (work / "heldout" / "trials.txt").string(),
                               (work / "heldout_scores.csv").string(), 1);
  const double secs = Seconds(start);

  const double first = EpochMean(trained.log, 0);
  const double last = EpochMean(trained.log, desk.train.epochs - 1);
  const double drop = 1.0 - last / first;
  const double best_single = std::max(r.eer_cos.eer, r.eer_binary.eer);
  const bool a = drop >= 0.5, b = r.eer_all.eer <= 0.15 && r.rows.size() == 200,
             c = r.eer_all.eer <= best_single + 0.005, timely = secs <= 600.0;
  return {a && b && c && timely,
          Format("(a) loss_all epoch mean %.4f -> %.4f, drop %.1f%% %s; (b) EER score_all %.2f%% "
                 "on %zu held-out trials %s; (c) EER cos %.2f%%, binary %.2f%%, all %.2f%% %s; "
                 "%.0f s single-threaded %s",
                 first, last, 100.0 * drop, a ? "ok" : "FAIL", 100.0 * r.eer_all.eer, r.rows.size(),
                 b ? "ok" : "FAIL", 100.0 * r.eer_cos.eer, 100.0 * r.eer_binary.eer,
                 100.0 * r.eer_all.eer, c ? "ok" : "FAIL", secs, timely ? "ok" : "FAIL (limit 600 s)")};
}

Outcome Determinism(const RunConfig& desk, const fs::path& work) {
  // The desk setup cut to two epochs: every step runs the same code, so the
  // comparison does not need the full schedule.
  RunConfig config = desk;
  config.train.epochs = 2;
  config.calibration_pairs = 1000;
  RunConfig held = config;
  held.corpus.utterance_salt = config.corpus.utterance_salt + 1;
  const fs::path trials_dir = work / "det_trials";
  CmdSynth(held, trials_dir.string(), 200);
  std::vector<std::string> ckpts, csvs;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = work / ("det_run" + std::to_string(run));
    fs::create_directories(dir);
    CmdTrain(config, (dir / "model.ckpt").string(), (dir / "log.csv").string(), 1, nullptr);
    CmdEval((dir / "model.ckpt").string(), (trials_dir / "trials.txt").string(),
            (dir / "scores.csv").string(), 1);
    ckpts.push_back(ReadFile((dir / "model.ckpt").string()));
    csvs.push_back(ReadFile((dir / "scores.csv").string()));
  }
  const bool same_ckpt = ckpts[0] == ckpts[1], same_csv = csvs[0] == csvs[1];
  return {same_ckpt && same_csv,
          Format("checkpoint (%zu bytes) %s, eval CSV (%zu bytes) %s across two runs "
                 "(%zu steps each)",
                 ckpts[0].size(), same_ckpt ? "bit-identical" : "DIFFERS", csvs[0].size(),
                 same_csv ? "bit-identical" : "DIFFERS", config.train.total_steps())};
}

// Independent extent bookkeeping: a 3x3/2 pool, stride-2 stages 2 to 4 and a
// time-only 3x1/2 pool, all with padding 1.
std::size_t Halve(std::size_t n) { return (n + 2 - 3) / 2 + 1; }

Outcome ShapeLedger() {
  std::mt19937_64 rng(10);
  std::size_t checked = 0;
  std::vector<std::string> mismatches;
  for (std::size_t f : {32, 64}) {
    ParameterStore<float> store(1);
    const Backbone<float> net(DeskModel(f).backbone, store);
    for (std::size_t t = 100; t <= 600; t += 50) {
      const Context<float> ctx;
      const Tensor<float> trunk = net.Trunk(ctx, net.Preprocess(ctx, Random<float>({1, t, f}, rng)));
      const std::size_t tp = Halve(Halve(Halve(Halve(Halve(t))))), fp = Halve(Halve(Halve(Halve(f))));
      const UtteranceFeatures<float> u = net.Postprocess(ctx, trunk);
      const bool ok = trunk.shape() == Shape{1, tp, fp, 64} && u.f_raw.shape() == Shape{1, tp, 64} &&
                      u.f_id.shape() == Shape{1, tp, 32} && u.embedding.shape() == Shape{1, 32};
      if (!ok) mismatches.push_back("T=" + std::to_string(t) + " F=" + std::to_string(f));
      ++checked;
    }
  }
  ParameterStore<float> store(2);
  const Backbone<float> wide(BackboneConfig{}, store);
  const Context<float> ctx;
  const Shape full = wide.Trunk(ctx, wide.Preprocess(ctx, Random<float>({1, 300, 64}, rng))).shape();
  const bool full_ok = full == Shape{1, 10, 4, 512};
  std::string detail = Format("%zu/%zu (T, F) combinations match; T=300 F=64 full widths -> %s",
                              checked - mismatches.size(), checked, ShapeToString(full).c_str());
  for (const auto& m : mismatches) detail += "; mismatch at " + m;
  return {mismatches.empty() && full_ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::string work_dir = (fs::temp_directory_path() / "datt_acceptance").string();
  std::string desk_path = DATT_DESK_CONFIG;
  std::vector<int> only;
  app.add_option("--work", work_dir, "Scratch directory for checkpoints and corpora");
  app.add_option("--config", desk_path, "Desk run config");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  ::setenv("DATT_DETERMINISTIC", "1", 1);
  const fs::path work(work_dir);
  fs::remove_all(work);
  fs::create_directories(work);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  RunConfig desk;
  const std::vector<Criterion> criteria{
      {1, "gradient integrity", GradientIntegrity},
      {2, "attention stochasticity", AttentionStochasticity},
      {3, "attention and head oracle equivalence", OracleEquivalence},
      {4, "AM-Softmax identities", AmSoftmaxIdentities},
      {5, "order symmetry", OrderSymmetry},
      {6, "EER correctness", EerCorrectness},
      {7, "segmentation protocol", SegmentationProtocol},
      {8, "end-to-end synthetic run", [&] { return EndToEnd(desk, work); }},
      {9, "determinism", [&] { return Determinism(desk, work); }},
      {10, "shape ledger", ShapeLedger},
  };

  int failed = 0, ran = 0;
  try {
    desk = LoadRunConfig(desk_path);
  } catch (const std::exception& e) {
    std::cerr << "cannot load desk config: " << e.what() << "\n";
    return 2;
  }
  const std::set<int> selected(only.begin(), only.end());
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ++ran;
    failed += !o.pass;
    std::printf("%s [%d] %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), Seconds(start));
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
