#include "datt/evaluation.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "datt/error.h"

namespace datt {

std::vector<FbankMatrix> SegmentUtterance(const FbankMatrix& f) {
  if (f.frames() == 0) throw InputError("cannot segment an empty utterance");
  std::vector<FbankMatrix> out;
  if (f.frames() < kSegmentFrames) {
    out.push_back(PadOrCrop(f, kSegmentFrames, CropMode::kEvalPad, nullptr));
    return out;
  }
  for (std::size_t start = 0; start + kSegmentFrames <= f.frames(); start += kSegmentHop) {
    out.push_back(f.Rows(start, start + kSegmentFrames));
  }
  return out;
}

std::vector<Trial> ParseTrials(std::istream& in, const std::string& origin) {
  std::vector<Trial> trials;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    std::istringstream fields(line);
    std::string label, a, b, extra;
    if (!(fields >> label)) continue;
    auto fail = [&](const std::string& why) {
      throw InputError(origin + ":" + std::to_string(number) + ": " + why);
    };
    if (!(fields >> a >> b)) fail("expected \"label path1 path2\"");
    if (fields >> extra) fail("unexpected trailing field \"" + extra + "\"");
    if (label != "0" && label != "1") fail("label must be 0 or 1, got \"" + label + "\"");
    trials.push_back({label == "1" ? 1 : 0, a, b});
  }
  return trials;
}

EncodedBatch<float> EncodeUtterance(const DualAttentionNet<float>& net, const FbankMatrix& f) {
  const std::vector<FbankMatrix> segments = SegmentUtterance(f);
  const std::size_t bins = f.bins(), per = kSegmentFrames * bins;
  std::vector<float> values(segments.size() * per);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    std::copy(segments[i].values().begin(), segments[i].values().end(),
              values.begin() + static_cast<std::ptrdiff_t>(i * per));
  }
  Tensor<float> x({segments.size(), kSegmentFrames, bins}, std::move(values));
  return net.Encode(Context<float>{}, x);
}

namespace {

double Mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double SegmentPairScores::MeanCos() const { return Mean(cos); }
double SegmentPairScores::MeanBinary() const { return Mean(binary); }

SegmentPairScores ScoreSegmentPairs(const DualAttentionNet<float>& net,
                                    const EncodedBatch<float>& a, const EncodedBatch<float>& b) {
  SegmentPairScores out;
  out.x = a.size();
  out.y = b.size();
  const Tensor<float>& ea = a.features.embedding;
  const Tensor<float>& eb = b.features.embedding;
  const std::size_t f = ea.shape()[1];
  PairGrid<float> grid = net.Pair(Context<float>{}, a, b);
  out.cos.reserve(out.x * out.y);
  out.binary.reserve(out.x * out.y);
  for (std::size_t i = 0; i < out.x; ++i) {
    for (std::size_t j = 0; j < out.y; ++j) {
      out.cos.push_back(
          CosineScore<float>(ea.data().subspan(i * f, f), eb.data().subspan(j * f, f)));
      out.binary.push_back(grid.score[i * out.y + j]);
    }
  }
  return out;
}

TrialScore ScoreTrial(const DualAttentionNet<float>& net, const EncodedBatch<float>& a,
                      const EncodedBatch<float>& b, const NormStats& stats, int label) {
  const SegmentPairScores pairs = ScoreSegmentPairs(net, a, b);
  TrialScore s;
  s.label = label;
  s.score_cos = pairs.MeanCos();
  s.score_binary = pairs.MeanBinary();
  s.score_all = FuseScores(s.score_cos, s.score_binary, stats);
  return s;
}

namespace {

// FAR/FRR at each unique score, ascending.
std::vector<DetPoint> Sweep(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw InputError("score and label counts differ");
  std::vector<std::pair<double, int>> items;
  items.reserve(scores.size());
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (std::isnan(scores[i])) throw InputError("NaN score");
    items.emplace_back(scores[i], labels[i] != 0);
    pos += labels[i] != 0;
  }
  const std::size_t neg = items.size() - pos;
  if (pos == 0 || neg == 0) throw InputError("EER needs both positive and negative trials");
  std::sort(items.begin(), items.end());
  std::vector<DetPoint> points;
  std::size_t pos_below = 0, neg_below = 0;
  for (std::size_t i = 0; i < items.size();) {
    const double t = items[i].first;
    points.push_back({t, static_cast<double>(neg - neg_below) / static_cast<double>(neg),
                      static_cast<double>(pos_below) / static_cast<double>(pos)});
    for (; i < items.size() && items[i].first == t; ++i) {
      (items[i].second ? pos_below : neg_below) += 1;
    }
  }
  return points;
}

}  // namespace

std::vector<DetPoint> DetCurve(std::span<const double> scores, std::span<const int> labels) {
  return Sweep(scores, labels);
}

EerResult ComputeEer(std::span<const double> scores, std::span<const int> labels) {
  std::vector<DetPoint> p = Sweep(scores, labels);
  // Above every score nothing is accepted.
  p.push_back({std::numeric_limits<double>::infinity(), 0.0, 1.0});
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double d = p[i].far - p[i].frr;
    if (d > 0.0) continue;
    if (d == 0.0) {
      return {p[i].far, std::isinf(p[i].threshold) ? p[i - 1].threshold : p[i].threshold};
    }
    const double d0 = p[i - 1].far - p[i - 1].frr;
    const double alpha = d0 / (d0 - d);
    EerResult r;
    r.eer = p[i - 1].far + alpha * (p[i].far - p[i - 1].far);
    r.threshold = std::isinf(p[i].threshold)
                      ? p[i - 1].threshold
                      : p[i - 1].threshold + alpha * (p[i].threshold - p[i - 1].threshold);
    return r;
  }
  throw NumericError("EER sweep found no crossing");  // unreachable: the sweep ends at FAR 0, FRR 1
}

Calibration CalibrateOnUtterances(const DualAttentionNet<float>& net,
                                  const std::vector<EncodedBatch<float>>& utterances,
                                  std::size_t num_pairs, std::uint64_t seed) {
  PairScorer scorer = [&](std::size_t i, std::size_t j) {
    const SegmentPairScores s = ScoreSegmentPairs(net, utterances[i], utterances[j]);
    return std::pair<double, double>{s.MeanCos(), s.MeanBinary()};
  };
  return CalibrateNormStats(scorer, utterances.size(), num_pairs, seed);
}

void ParallelFor(std::size_t n, std::size_t threads,
                 const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<double> EvalReport::Column(double TrialScore::* field) const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const EvalRow& r : rows) out.push_back(r.score.*field);
  return out;
}

std::vector<int> EvalReport::Labels() const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const EvalRow& r : rows) out.push_back(r.score.label);
  return out;
}

EvalReport RunEval(const std::vector<Trial>& trials, const UtteranceLoader& load,
                   const DualAttentionNet<float>& net, const NormStats& stats,
                   std::size_t threads) {
  if (trials.empty()) throw InputError("empty trial list");
  std::map<std::string, std::size_t> index;
  std::vector<std::string> paths;
  for (const Trial& t : trials) {
    for (const std::string* p : {&t.utt1, &t.utt2}) {
      if (index.emplace(*p, paths.size()).second) paths.push_back(*p);
    }
  }

  std::vector<std::optional<EncodedBatch<float>>> encoded(paths.size());
  std::vector<std::string> load_errors(paths.size());
  ParallelFor(paths.size(), threads, [&](std::size_t i) {
    FbankMatrix f;
    try {
      f = load(paths[i]);
    } catch (const std::exception& e) {
      load_errors[i] = e.what();
      return;
    }
    encoded[i] = EncodeUtterance(net, f);
  });

  std::vector<std::optional<TrialScore>> scores(trials.size());
  ParallelFor(trials.size(), threads, [&](std::size_t k) {
    const auto& a = encoded[index.at(trials[k].utt1)];
    const auto& b = encoded[index.at(trials[k].utt2)];
    if (a && b) scores[k] = ScoreTrial(net, *a, *b, stats, trials[k].label);
  });

  EvalReport report;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (!encoded[i]) report.failures.push_back(paths[i] + ": " + load_errors[i]);
  }
  for (std::size_t k = 0; k < trials.size(); ++k) {
    if (scores[k]) {
      report.rows.push_back({k, *scores[k]});
    } else {
      ++report.skipped;
    }
  }
  if (report.rows.empty()) throw InputError("no trial could be scored");
  const std::vector<int> labels = report.Labels();
  report.eer_cos = ComputeEer(report.Column(&TrialScore::score_cos), labels);
  report.eer_binary = ComputeEer(report.Column(&TrialScore::score_binary), labels);
  report.eer_all = ComputeEer(report.Column(&TrialScore::score_all), labels);
  return report;
}

namespace {

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string ScoresCsv(const EvalReport& report) {
  std::string out = "trial_idx,label,score_cos,score_binary,score_all\n";
  for (const EvalRow& r : report.rows) {
    out += std::to_string(r.trial_idx) + "," + std::to_string(r.score.label) + "," +
           Num(r.score.score_cos) + "," + Num(r.score.score_binary) + "," +
           Num(r.score.score_all) + "\n";
  }
  return out;
}

std::string DetCsv(const EvalReport& report) {
  std::string out = "score,threshold,far,frr\n";
  const std::vector<int> labels = report.Labels();
  const std::pair<const char*, double TrialScore::*> columns[] = {
      {"score_cos", &TrialScore::score_cos},
      {"score_binary", &TrialScore::score_binary},
      {"score_all", &TrialScore::score_all}};
  for (const auto& [name, field] : columns) {
    for (const DetPoint& p : DetCurve(report.Column(field), labels)) {
      out += std::string(name) + "," + Num(p.threshold) + "," + Num(p.far) + "," + Num(p.frr) +
             "\n";
    }
  }
  return out;
}

std::string SummaryText(const EvalReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "trials scored: %zu  skipped: %zu\n"
                "EER score_cos:    %.4f%%\n"
                "EER score_binary: %.4f%%\n"
                "EER score_all:    %.4f%%\n",
                report.rows.size(), report.skipped, 100.0 * report.eer_cos.eer,
                100.0 * report.eer_binary.eer, 100.0 * report.eer_all.eer);
  return buf;
}

}  // namespace datt
