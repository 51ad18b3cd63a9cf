// Run configuration: one flat JSON object covering training, model shape and
// the training corpus. Unknown keys are rejected.

#ifndef DATT_CONFIG_H_
#define DATT_CONFIG_H_

#include <string>

#include <json.hpp>

#include "datt/features.h"
#include "datt/model.h"
#include "datt/training.h"

namespace datt {

struct RunConfig {
  TrainConfig train;
  ModelConfig model;  // num_speakers is taken from the corpus
  CorpusConfig corpus;
  // Feature directory written by `synth` or prepared externally; empty means
  // a synthetic corpus generated from `corpus`.
  std::string corpus_dir;
  std::size_t calibration_pairs = 10000;
};

// ConfigError naming the offending key for unknown keys, wrong types or
// invalid values. "corpus_seed" defaults to "seed".
RunConfig ParseRunConfig(const std::string& text, const std::string& origin);
RunConfig LoadRunConfig(const std::string& path);
nlohmann::json RunConfigToJson(const RunConfig& config);

nlohmann::json ModelConfigToJson(const ModelConfig& model);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);

}  // namespace datt

#endif  // DATT_CONFIG_H_
