#include "datt/commands.h"

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "datt/checkpoint.h"
#include "datt/error.h"
#include "datt/io.h"

namespace datt {

namespace fs = std::filesystem;

std::size_t ResolveThreads(std::size_t requested) {
  const char* env = std::getenv("DATT_DETERMINISTIC");
  if (env != nullptr && std::string(env) == "1") return 1;
  return std::max<std::size_t>(requested, 1);
}

Corpus BuildCorpus(const RunConfig& config) {
  if (!config.corpus_dir.empty()) return LoadCorpus(config.corpus_dir);
  return GenerateSyntheticCorpus(config.corpus);
}

std::vector<Trial> SyntheticTrials(const Corpus& corpus, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> speakers;
  for (std::size_t s = 0; s < corpus.by_speaker.size(); ++s) {
    if (corpus.by_speaker[s].size() >= 2) speakers.push_back(s);
  }
  if (speakers.size() < 2) throw ConfigError("trials need two speakers with two utterances each");
  Rng rng(seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
  auto file = [&](std::size_t utt) { return corpus.utterances[utt].id + ".fbnk"; };
  std::vector<Trial> trials;
  for (std::size_t k = 0; k < count; ++k) {
    Trial t;
    t.label = k % 2 == 0;
    const std::size_t ai = pick(speakers.size());
    const auto& ua = corpus.by_speaker[speakers[ai]];
    const std::size_t i = pick(ua.size());
    t.utt1 = file(ua[i]);
    if (t.label) {
      std::size_t j = pick(ua.size() - 1);
      if (j >= i) ++j;
      t.utt2 = file(ua[j]);
    } else {
      std::size_t bi = pick(speakers.size() - 1);
      if (bi >= ai) ++bi;
      const auto& ub = corpus.by_speaker[speakers[bi]];
      t.utt2 = file(ub[pick(ub.size())]);
    }
    trials.push_back(std::move(t));
  }
  return trials;
}

std::string FormatTrials(const std::vector<Trial>& trials) {
  std::string out;
  for (const Trial& t : trials) out += std::to_string(t.label) + " " + t.utt1 + " " + t.utt2 + "\n";
  return out;
}

TrainOutcome CmdTrain(const RunConfig& config, const std::string& checkpoint_path,
                      const std::string& log_path, std::size_t threads, std::ostream* progress) {
  threads = ResolveThreads(threads);
  const Corpus corpus = BuildCorpus(config);
  const ModelConfig model = ModelConfigFor(config.model, config.train, corpus.num_speakers);
  DualAttentionNet<float> net(model, config.train.seed);

  TrainOutcome outcome;
  Trainer trainer(net, corpus, config.train);
  double epoch_sum = 0.0;
  outcome.log = trainer.Run([&](const LogRow& row) {
    epoch_sum += row.losses.loss_all;
    if (progress != nullptr && (row.step + 1) % config.train.steps_per_epoch == 0) {
      *progress << "epoch " << row.epoch + 1 << "/" << config.train.epochs
                << "  mean loss_all " << epoch_sum / config.train.steps_per_epoch << "\n";
      epoch_sum = 0.0;
    }
  });

  std::vector<std::optional<EncodedBatch<float>>> slots(corpus.utterances.size());
  ParallelFor(slots.size(), threads,
              [&](std::size_t i) { slots[i] = EncodeUtterance(net, corpus.utterances[i].features); });
  std::vector<EncodedBatch<float>> encoded;
  for (auto& s : slots) encoded.push_back(std::move(*s));
  Calibration cal = CalibrateOnUtterances(net, encoded, config.calibration_pairs,
                                          DeriveSeed(config.train.seed, 0x63616c6962));
  outcome.stats = cal.stats;
  outcome.warnings = cal.warnings;
  if (progress != nullptr) {
    for (const std::string& w : cal.warnings) *progress << "warning: " << w << "\n";
  }

  const nlohmann::json training{
      {"config", RunConfigToJson(config)},
      {"steps", outcome.log.size()},
      {"final_loss_all", outcome.log.empty() ? 0.0 : outcome.log.back().losses.loss_all},
      {"corpus_utterances", corpus.utterances.size()},
      {"calibration_warnings", cal.warnings}};
  SaveCheckpoint(checkpoint_path, net, outcome.stats, training);
  if (!log_path.empty()) {
    std::string csv = LogHeader() + "\n";
    for (const LogRow& row : outcome.log) csv += FormatLogRow(row) + "\n";
    WriteFileAtomic(log_path, csv);
  }
  return outcome;
}

namespace {

FbankMatrix LoadUtterance(const fs::path& path) {
  if (path.extension() == ".wav") {
    const Wave w = ReadWav(path.string());
    return ComputeFbank(w.samples, w.sample_rate);
  }
  return ReadFbank(path.string());
}

}  // namespace

EvalReport CmdEval(const std::string& checkpoint_path, const std::string& trials_path,
                   const std::string& out_csv, std::size_t threads) {
  const Checkpoint ckpt = LoadCheckpoint(checkpoint_path);
  std::istringstream list(ReadFile(trials_path));
  const std::vector<Trial> trials = ParseTrials(list, trials_path);
  const fs::path base = fs::path(trials_path).parent_path();
  UtteranceLoader load = [&](const std::string& p) {
    const fs::path path(p);
    return LoadUtterance(path.is_absolute() ? path : base / path);
  };
  EvalReport report = RunEval(trials, load, *ckpt.net, ckpt.stats, ResolveThreads(threads));
  WriteFileAtomic(out_csv, ScoresCsv(report));
  WriteFileAtomic(out_csv + ".det.csv", DetCsv(report));
  return report;
}

void CmdSynth(const RunConfig& config, const std::string& out_dir, std::size_t num_trials) {
  const Corpus corpus = GenerateSyntheticCorpus(config.corpus);
  SaveCorpus(corpus, out_dir);
  const std::uint64_t seed = DeriveSeed(config.corpus.seed ^ config.corpus.utterance_salt, 0x747269616c);
  WriteFileAtomic((fs::path(out_dir) / "trials.txt").string(),
                  FormatTrials(SyntheticTrials(corpus, num_trials, seed)));
}

void CmdFbank(const std::string& wav_path, const std::string& out_path) {
  const Wave w = ReadWav(wav_path);
  WriteFbank(out_path, ComputeFbank(w.samples, w.sample_rate));
}

}  // namespace datt
