// The pipeline behind each `datt` subcommand, callable without the argument
// parser so tests and the acceptance suite drive the same code.

#ifndef DATT_COMMANDS_H_
#define DATT_COMMANDS_H_

#include <ostream>
#include <string>
#include <vector>

#include "datt/config.h"
#include "datt/evaluation.h"
#include "datt/gradcheck.h"

namespace datt {

// 1 when DATT_DETERMINISTIC=1 is set, otherwise max(requested, 1).
std::size_t ResolveThreads(std::size_t requested);

// The configured feature directory, or the synthetic corpus.
Corpus BuildCorpus(const RunConfig& config);

// count trials alternating same / different speaker, utterances referenced
// as "<id>.fbnk" (the SaveCorpus layout).
std::vector<Trial> SyntheticTrials(const Corpus& corpus, std::size_t count, std::uint64_t seed);
std::string FormatTrials(const std::vector<Trial>& trials);

struct TrainOutcome {
  std::vector<LogRow> log;
  NormStats stats;
  std::vector<std::string> warnings;
};

// Trains, calibrates score normalization on the training corpus and writes
// the checkpoint and (if log_path is non-empty) the per-step CSV log.
TrainOutcome CmdTrain(const RunConfig& config, const std::string& checkpoint_path,
                      const std::string& log_path, std::size_t threads, std::ostream* progress);

// Scores a trial list. Relative utterance paths resolve against the trial
// list's directory; ".wav" inputs go through the FBank frontend. Writes the
// per-trial CSV and "<out>.det.csv" only after every trial is scored.
EvalReport CmdEval(const std::string& checkpoint_path, const std::string& trials_path,
                   const std::string& out_csv, std::size_t threads);

// Writes the corpus (SaveCorpus layout) plus "trials.txt" with num_trials trials.
void CmdSynth(const RunConfig& config, const std::string& out_dir, std::size_t num_trials);

// WAV -> FBank file.
void CmdFbank(const std::string& wav_path, const std::string& out_path);

}  // namespace datt

#endif  // DATT_COMMANDS_H_
