#include "datt/training.h"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "datt/error.h"

namespace datt {

std::string LossKindName(LossKind kind) {
  return kind == LossKind::kSoftmax ? "softmax" : "am_softmax";
}

LossKind ParseLossKind(const std::string& name) {
  if (name == "softmax") return LossKind::kSoftmax;
  if (name == "am_softmax") return LossKind::kAmSoftmax;
  throw ConfigError("loss_kind must be \"softmax\" or \"am_softmax\", got \"" + name + "\"");
}

void TrainConfig::Validate() const {
  if (speakers_per_batch < 2) throw ConfigError("speakers_per_batch must be at least 2");
  if (!(margin >= 0.0 && margin < 1.0)) throw ConfigError("m must be in [0, 1)");
  if (!(scale > 0.0)) throw ConfigError("s must be positive");
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (epochs == 0 || steps_per_epoch == 0) {
    throw ConfigError("epochs and steps_per_epoch must be positive");
  }
  if (crop_frames == 0) throw ConfigError("crop_frames must be positive");
  if (!(lr_backbone >= 0.0) || !(lr_attention >= 0.0)) {
    throw ConfigError("learning rates must be non-negative");
  }
  if (!(momentum >= 0.0) || !(weight_decay >= 0.0)) {
    throw ConfigError("momentum and weight_decay must be non-negative");
  }
  if (!(positive_weight > 0.0)) throw ConfigError("positive_weight must be positive");
}

PairBatch BuildPairBatch(const Corpus& corpus, const TrainConfig& config, Rng& rng) {
  const std::size_t s = config.speakers_per_batch;
  if (corpus.by_speaker.size() < s) {
    throw ConfigError("batch needs " + std::to_string(s) + " speakers, corpus has " +
                      std::to_string(corpus.by_speaker.size()));
  }
  if (corpus.utterances.empty()) throw ConfigError("empty corpus");
  const std::size_t bins = corpus.utterances.front().features.bins();
  const std::size_t frames = config.crop_frames;

  // Partial Fisher-Yates: the first s entries become the batch speakers.
  std::vector<int> pool(corpus.by_speaker.size());
  std::iota(pool.begin(), pool.end(), 0);
  for (std::size_t i = 0; i < s; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }

  PairBatch batch;
  batch.speakers.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(s));
  std::vector<float> g1(s * frames * bins), g2(s * frames * bins);
  for (std::size_t i = 0; i < s; ++i) {
    const auto& utts = corpus.by_speaker[static_cast<std::size_t>(batch.speakers[i])];
    if (utts.size() < 2) {
      throw ConfigError("speaker " + std::to_string(batch.speakers[i]) +
                        " has fewer than two utterances");
    }
    const std::size_t a = std::uniform_int_distribution<std::size_t>(0, utts.size() - 1)(rng);
    std::size_t b = std::uniform_int_distribution<std::size_t>(0, utts.size() - 2)(rng);
    if (b >= a) ++b;
    for (auto [index, dst] : {std::pair{utts[a], &g1}, std::pair{utts[b], &g2}}) {
      FbankMatrix crop = PadOrCrop(corpus.utterances[index].features, frames,
                                   CropMode::kRandomCrop, &rng);
      std::copy(crop.values().begin(), crop.values().end(),
                dst->begin() + static_cast<std::ptrdiff_t>(i * frames * bins));
    }
  }
  batch.group1 = Tensor<float>({s, frames, bins}, std::move(g1));
  batch.group2 = Tensor<float>({s, frames, bins}, std::move(g2));
  batch.pair_labels.assign(s * s, 0);
  for (std::size_t i = 0; i < s; ++i) batch.pair_labels[i * s + i] = 1;
  return batch;
}

template <typename Real>
Tensor<Real> AmSoftmaxLogits(const Tensor<Real>& embedding, const Tensor<Real>& weight,
                             std::span<const int> labels, double scale, double margin) {
  if (embedding.rank() != 2 || weight.rank() != 2 || embedding.shape()[1] != weight.shape()[0]) {
    throw ShapeError("am-softmax: embedding " + ShapeToString(embedding.shape()) +
                     " and weight " + ShapeToString(weight.shape()) + " do not chain");
  }
  const std::size_t n = embedding.shape()[0], k = weight.shape()[1];
  if (labels.size() != n) throw ShapeError("am-softmax: label count mismatch");
  Tensor<Real> cos = MatMul(L2Normalize(embedding, 1), L2Normalize(weight, 0));
  std::vector<Real> offset(n * k, Real(0));
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw InputError("label " + std::to_string(labels[i]) + " outside [0, " +
                       std::to_string(k) + ")");
    }
    offset[i * k + static_cast<std::size_t>(labels[i])] = static_cast<Real>(-scale * margin);
  }
  return Add(Scale(cos, static_cast<Real>(scale)), Tensor<Real>({n, k}, std::move(offset)));
}

double AmSoftmaxProb(std::span<const double> embedding, const Tensor<double>& weight, int label,
                     double scale, double margin) {
  Tensor<double> e({1, embedding.size()}, {embedding.begin(), embedding.end()});
  const int labels[] = {label};
  Tensor<double> p = Softmax(AmSoftmaxLogits(e, weight, labels, scale, margin), 1);
  return p[static_cast<std::size_t>(label)];
}

template <typename Real>
Tensor<Real> CombinedLoss(const Tensor<Real>& loss_id, const Tensor<Real>& loss_binary,
                          double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  return Add(loss_id, Scale(loss_binary, static_cast<Real>(lambda)));
}

double LrAt(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0 || step > total_steps) {
    throw InputError("lr schedule: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(total_steps) + "]");
  }
  return base_lr * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                         static_cast<double>(total_steps)));
}

template <typename Real>
void SgdUpdate(std::span<Real> param, std::span<const Real> grad, std::span<Real> velocity,
               double lr, double momentum, double weight_decay) {
  if (grad.size() != param.size() || velocity.size() != param.size()) {
    throw ShapeError("sgd: parameter, gradient and velocity sizes differ (" +
                     std::to_string(param.size()) + ", " + std::to_string(grad.size()) + ", " +
                     std::to_string(velocity.size()) + ")");
  }
  const Real mu = static_cast<Real>(momentum), wd = static_cast<Real>(weight_decay),
             rate = static_cast<Real>(lr);
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = mu * velocity[i] + grad[i] + wd * param[i];
    param[i] -= rate * velocity[i];
  }
}

template <typename Real>
Sgd<Real>::Sgd(const ParameterStore<Real>& store, double momentum, double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& e : store.entries()) {
    if (e.trainable) velocity_.emplace_back(e.value.size(), Real(0));
  }
}

template <typename Real>
void Sgd<Real>::Step(const ParameterStore<Real>& store, const Tape<Real>& tape,
                     double lr_backbone, double lr_attention) {
  std::size_t v = 0;
  for (const auto& e : store.entries()) {
    if (!e.trainable) continue;
    auto& velocity = velocity_.at(v++);
    std::optional<Tensor<Real>> grad = tape.Grad(e.value);
    if (!grad) continue;
    Tensor<Real> param = e.value;
    SgdUpdate<Real>(param.mutable_data(), grad->data(), velocity,
                    e.group == ParamGroup::kBackbone ? lr_backbone : lr_attention, momentum_,
                    weight_decay_);
  }
}

BatchLosses<float> ComputeLosses(const DualAttentionNet<float>& net, const Context<float>& ctx,
                                 const PairBatch& batch, const TrainConfig& config) {
  const std::size_t s = batch.size();
  Tensor<float> x = Concat<float>({batch.group1, batch.group2}, 0);
  std::vector<int> labels(batch.speakers);
  labels.insert(labels.end(), batch.speakers.begin(), batch.speakers.end());

  const bool binary = config.lambda > 0.0;
  std::optional<EncodedBatch<float>> encoded;
  UtteranceFeatures<float> features;
  if (binary) {
    encoded = net.Encode(ctx, x);
    features = encoded->features;
  } else {
    features = net.backbone().Forward(ctx, x);
  }

  BatchLosses<float> out;
  if (config.loss_kind == LossKind::kSoftmax) {
    out.loss_id = SoftmaxCrossEntropy<float>(features.logits, labels);
  } else {
    Tensor<float> w = ctx.Use(net.backbone().fc2().weight);
    out.loss_id = SoftmaxCrossEntropy<float>(
        AmSoftmaxLogits<float>(features.embedding, w, labels, config.scale, config.margin),
        labels);
  }
  if (!binary) {
    out.loss_binary = Tensor<float>::Scalar(0.0f);
    out.loss_all = out.loss_id;
    return out;
  }
  PairGrid<float> grid = net.Pair(ctx, encoded->Rows(0, s), encoded->Rows(s, 2 * s));
  out.loss_binary = BinaryCrossEntropy<float>(Reshape(grid.score, {s * s}), batch.pair_labels,
                                              config.positive_weight);
  out.loss_all = CombinedLoss(out.loss_id, out.loss_binary, config.lambda);
  return out;
}

ModelConfig ModelConfigFor(ModelConfig base, const TrainConfig& config, std::size_t num_speakers) {
  base.backbone.num_speakers = num_speakers;
  base.backbone.fc2_bias = config.loss_kind == LossKind::kSoftmax;
  return base;
}

std::string LogHeader() {
  return "epoch,step,loss_id,loss_binary,loss_all,lr_backbone,lr_attention";
}

std::string FormatLogRow(const LogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%zu,%zu,%.9g,%.9g,%.9g,%.9g,%.9g", r.epoch, r.step,
                r.losses.loss_id, r.losses.loss_binary, r.losses.loss_all, r.lr_backbone,
                r.lr_attention);
  return buf;
}

Trainer::Trainer(DualAttentionNet<float>& net, const Corpus& corpus, const TrainConfig& config)
    : net_(net),
      corpus_(corpus),
      config_(config),
      sgd_(net.params(), config.momentum, config.weight_decay),
      batch_rng_(DeriveSeed(config.seed, 0x6261746368)),
      dropout_rng_(DeriveSeed(config.seed, 0x64726f70)) {
  config_.Validate();
  const BackboneConfig& bc = net.config().backbone;
  if (bc.num_speakers != corpus.num_speakers) {
    throw ConfigError("model has " + std::to_string(bc.num_speakers) + " speaker classes, corpus " +
                      std::to_string(corpus.num_speakers));
  }
  if (corpus.utterances.empty() || corpus.utterances.front().features.bins() != bc.mel_bins) {
    throw ConfigError("corpus features do not have " + std::to_string(bc.mel_bins) + " bins");
  }
}

LogRow Trainer::Step() {
  const std::size_t total = config_.total_steps();
  if (step_ >= total) throw ConfigError("training already finished");
  LogRow row;
  row.epoch = step_ / config_.steps_per_epoch;
  row.step = step_;
  row.lr_backbone = LrAt(step_, total, config_.lr_backbone);
  row.lr_attention = LrAt(step_, total, config_.lr_attention);

  PairBatch batch = BuildPairBatch(corpus_, config_, batch_rng_);
  Tape<float> tape;
  Context<float> ctx{&tape, BnMode::kTrain, &dropout_rng_};
  BatchLosses<float> losses = ComputeLosses(net_, ctx, batch, config_);
  row.losses = {losses.loss_id[0], losses.loss_binary[0], losses.loss_all[0]};
  if (!std::isfinite(row.losses.loss_all)) {
    throw NumericError("non-finite loss at step " + std::to_string(step_));
  }
  tape.Backward(losses.loss_all);
  sgd_.Step(net_.params(), tape, row.lr_backbone, row.lr_attention);
  ++step_;
  return row;
}

std::vector<LogRow> Trainer::Run(const std::function<void(const LogRow&)>& on_step) {
  std::vector<LogRow> rows;
  while (step_ < config_.total_steps()) {
    rows.push_back(Step());
    if (on_step) on_step(rows.back());
  }
  return rows;
}

template Tensor<float> AmSoftmaxLogits(const Tensor<float>&, const Tensor<float>&,
                                       std::span<const int>, double, double);
template Tensor<double> AmSoftmaxLogits(const Tensor<double>&, const Tensor<double>&,
                                        std::span<const int>, double, double);
template Tensor<float> CombinedLoss(const Tensor<float>&, const Tensor<float>&, double);
template Tensor<double> CombinedLoss(const Tensor<double>&, const Tensor<double>&, double);
template void SgdUpdate(std::span<float>, std::span<const float>, std::span<float>, double,
                        double, double);
template void SgdUpdate(std::span<double>, std::span<const double>, std::span<double>, double,
                        double, double);
template class Sgd<float>;
template class Sgd<double>;

}  // namespace datt
