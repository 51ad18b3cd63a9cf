// Losses, pair batches, the learning-rate schedule, SGD and the training loop.

#ifndef DATT_TRAINING_H_
#define DATT_TRAINING_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "datt/features.h"
#include "datt/model.h"

namespace datt {

enum class LossKind { kSoftmax, kAmSoftmax };

std::string LossKindName(LossKind kind);
// ConfigError for anything but "softmax" / "am_softmax".
LossKind ParseLossKind(const std::string& name);

struct TrainConfig {
  std::size_t speakers_per_batch = 64;
  double lambda = 1.0;
  LossKind loss_kind = LossKind::kSoftmax;
  double scale = 30.0;   // s
  double margin = 0.2;   // m
  double lr_backbone = 0.1;
  double lr_attention = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.001;
  std::size_t epochs = 20;
  std::size_t steps_per_epoch = 50;
  std::size_t crop_frames = 300;
  // Weight on positive pairs in the binary loss; 1 leaves it unweighted.
  double positive_weight = 1.0;
  std::uint64_t seed = 7;

  // ConfigError on speakers_per_batch < 2, m outside [0, 1), s <= 0,
  // lambda < 0, zero epochs/steps/crop, or negative rates.
  void Validate() const;
  std::size_t total_steps() const { return epochs * steps_per_epoch; }
};

// speakers_per_batch speakers, two crops each. Row i of both groups belongs
// to speakers[i]; pair (i, j) is positive iff i == j.
struct PairBatch {
  Tensor<float> group1, group2;  // S x crop_frames x F
  std::vector<int> speakers;     // corpus speaker ids
  std::vector<int> pair_labels;  // S x S, row-major

  std::size_t size() const { return speakers.size(); }
};

// Speakers drawn without replacement, two distinct utterances each, random
// crops via PadOrCrop. ConfigError when the corpus has fewer speakers than
// the batch or a chosen speaker has fewer than two utterances.
PairBatch BuildPairBatch(const Corpus& corpus, const TrainConfig& config, Rng& rng);

// AM-Softmax class scores s * cos(theta) - s * m * onehot(label), with the
// embeddings and FC2 weight columns L2-normalized. embedding: N x F,
// weight: F x K. NumericError on a zero-norm embedding or column.
template <typename Real>
Tensor<Real> AmSoftmaxLogits(const Tensor<Real>& embedding, const Tensor<Real>& weight,
                             std::span<const int> labels, double scale, double margin);

// Probability assigned to the true class by AM-Softmax for one embedding.
// weight: F x K (one column per class).
double AmSoftmaxProb(std::span<const double> embedding, const Tensor<double>& weight, int label,
                     double scale, double margin);

// loss_all = loss_id + lambda * loss_binary.
template <typename Real>
Tensor<Real> CombinedLoss(const Tensor<Real>& loss_id, const Tensor<Real>& loss_binary,
                          double lambda);

// base_lr * 0.5 * (1 + cos(pi * step / total_steps)).
double LrAt(std::size_t step, std::size_t total_steps, double base_lr);

// v = momentum * v + grad + weight_decay * param; param -= lr * v.
// ShapeError when the spans differ in length.
template <typename Real>
void SgdUpdate(std::span<Real> param, std::span<const Real> grad, std::span<Real> velocity,
               double lr, double momentum, double weight_decay);

// One velocity buffer per trainable parameter of a store.
template <typename Real>
class Sgd {
 public:
  Sgd(const ParameterStore<Real>& store, double momentum, double weight_decay);

  // Updates every trainable parameter the tape recorded a gradient for.
  // Parameters absent from the tape (e.g. the attention network when the
  // binary loss is off) are left untouched, weight decay included.
  void Step(const ParameterStore<Real>& store, const Tape<Real>& tape, double lr_backbone,
            double lr_attention);

 private:
  double momentum_, weight_decay_;
  std::vector<std::vector<Real>> velocity_;
};

struct StepLosses {
  double loss_id = 0.0;
  double loss_binary = 0.0;
  double loss_all = 0.0;
};

// Losses for one batch under the given context. With lambda = 0 the
// attention network and binary head are not evaluated at all.
template <typename Real>
struct BatchLosses {
  Tensor<Real> loss_id, loss_binary, loss_all;
};

BatchLosses<float> ComputeLosses(const DualAttentionNet<float>& net, const Context<float>& ctx,
                                 const PairBatch& batch, const TrainConfig& config);

// The model configuration implied by a training run: FC2 loses its bias
// under AM-Softmax and the speaker count comes from the corpus.
ModelConfig ModelConfigFor(ModelConfig base, const TrainConfig& config, std::size_t num_speakers);

struct LogRow {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global, 0-based
  StepLosses losses;
  double lr_backbone = 0.0, lr_attention = 0.0;
};

// CSV header and row formatting for the training log.
std::string LogHeader();
std::string FormatLogRow(const LogRow& row);

class Trainer {
 public:
  // The corpus must outlive the trainer. The model's speaker count must match
  // the corpus.
  Trainer(DualAttentionNet<float>& net, const Corpus& corpus, const TrainConfig& config);

  // Runs one SGD step on a fresh batch and returns its losses.
  LogRow Step();
  // Runs every remaining step; on_step sees each row as it is produced.
  std::vector<LogRow> Run(const std::function<void(const LogRow&)>& on_step = {});

  std::size_t step() const { return step_; }

 private:
  DualAttentionNet<float>& net_;
  const Corpus& corpus_;
  TrainConfig config_;
  Sgd<float> sgd_;
  Rng batch_rng_, dropout_rng_;
  std::size_t step_ = 0;
};

}  // namespace datt

#endif  // DATT_TRAINING_H_
