// Trial-list evaluation: segmentation, segment-pair score averaging, EER.

#ifndef DATT_EVALUATION_H_
#define DATT_EVALUATION_H_

#include <functional>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "datt/features.h"
#include "datt/model.h"
#include "datt/scoring.h"

namespace datt {

inline constexpr std::size_t kSegmentFrames = 500;
inline constexpr std::size_t kSegmentHop = 100;

// Windows of kSegmentFrames starting at 0, kSegmentHop, ... while they fit.
// Shorter inputs yield one segment padded with the mean frame.
std::vector<FbankMatrix> SegmentUtterance(const FbankMatrix& f);

struct Trial {
  int label = 0;  // 1: same speaker
  std::string utt1, utt2;
};

// "label path1 path2" per line, label 0 or 1; blank lines are skipped.
// InputError naming origin:line on anything else.
std::vector<Trial> ParseTrials(std::istream& in, const std::string& origin);

// Every segment of an utterance, encoded in one batch (inference mode).
EncodedBatch<float> EncodeUtterance(const DualAttentionNet<float>& net, const FbankMatrix& f);

// Scores for all X x Y segment pairs, row-major over (segment of a, segment of b).
struct SegmentPairScores {
  std::size_t x = 0, y = 0;
  std::vector<double> cos, binary;

  double MeanCos() const;
  double MeanBinary() const;
};

SegmentPairScores ScoreSegmentPairs(const DualAttentionNet<float>& net,
                                    const EncodedBatch<float>& a, const EncodedBatch<float>& b);

struct TrialScore {
  int label = 0;
  double score_cos = 0.0, score_binary = 0.0, score_all = 0.0;
};

TrialScore ScoreTrial(const DualAttentionNet<float>& net, const EncodedBatch<float>& a,
                      const EncodedBatch<float>& b, const NormStats& stats, int label = 0);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// FAR(t): negatives scoring >= t; FRR(t): positives scoring < t. Swept over
// the sorted unique scores, with the crossing linearly interpolated between
// the bracketing thresholds. InputError unless both classes are present.
EerResult ComputeEer(std::span<const double> scores, std::span<const int> labels);

struct DetPoint {
  double threshold, far, frr;
};

// FAR/FRR at every unique score.
std::vector<DetPoint> DetCurve(std::span<const double> scores, std::span<const int> labels);

// Calibration on num_pairs random pairs of already encoded utterances.
Calibration CalibrateOnUtterances(const DualAttentionNet<float>& net,
                                  const std::vector<EncodedBatch<float>>& utterances,
                                  std::size_t num_pairs, std::uint64_t seed);

using UtteranceLoader = std::function<FbankMatrix(const std::string&)>;

struct EvalRow {
  std::size_t trial_idx = 0;
  TrialScore score;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // ascending trial_idx
  std::vector<std::string> failures;
  std::size_t skipped = 0;
  EerResult eer_cos, eer_binary, eer_all;

  std::vector<double> Column(double TrialScore::* field) const;
  std::vector<int> Labels() const;
};

// Loads and encodes each distinct utterance once, then scores every trial.
// Unreadable utterances skip their trials; the count and messages land in
// the report. Results do not depend on the thread count.
EvalReport RunEval(const std::vector<Trial>& trials, const UtteranceLoader& load,
                   const DualAttentionNet<float>& net, const NormStats& stats,
                   std::size_t threads = 1);

std::string ScoresCsv(const EvalReport& report);
std::string DetCsv(const EvalReport& report);
std::string SummaryText(const EvalReport& report);

// Runs body(i) for i in [0, n) on up to `threads` workers. The first
// exception is rethrown after all workers stop.
void ParallelFor(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace datt

#endif  // DATT_EVALUATION_H_
