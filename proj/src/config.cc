#include "datt/config.h"

#include <algorithm>
#include <array>
#include <functional>
#include <map>
#include <optional>

#include "datt/error.h"
#include "datt/io.h"

namespace datt {

using nlohmann::json;

namespace {

using Setter = std::function<void(const json&)>;

[[noreturn]] void Bad(const std::string& origin, const std::string& key, const std::string& why) {
  throw ConfigError(origin + ": key \"" + key + "\": " + why);
}

class Fields {
 public:
  explicit Fields(std::string origin) : origin_(std::move(origin)) {}

  void Count(const std::string& key, std::size_t& out) {
    setters_[key] = [this, key, &out](const json& v) {
      if (!v.is_number_unsigned()) Bad(origin_, key, "expected a non-negative integer");
      out = v.get<std::size_t>();
    };
  }
  void Seed(const std::string& key, std::uint64_t& out) {
    setters_[key] = [this, key, &out](const json& v) {
      if (!v.is_number_unsigned()) Bad(origin_, key, "expected a non-negative integer");
      out = v.get<std::uint64_t>();
    };
  }
  void Real(const std::string& key, double& out) {
    setters_[key] = [this, key, &out](const json& v) {
      if (!v.is_number()) Bad(origin_, key, "expected a number");
      out = v.get<double>();
    };
  }
  void Flag(const std::string& key, bool& out) {
    setters_[key] = [this, key, &out](const json& v) {
      if (!v.is_boolean()) Bad(origin_, key, "expected true or false");
      out = v.get<bool>();
    };
  }
  void Text(const std::string& key, std::string& out) {
    setters_[key] = [this, key, &out](const json& v) {
      if (!v.is_string()) Bad(origin_, key, "expected a string");
      out = v.get<std::string>();
    };
  }
  void Widths(const std::string& key, std::array<std::size_t, 4>& out) {
    setters_[key] = [this, key, &out](const json& v) {
      if (!v.is_array() || v.size() != 4) Bad(origin_, key, "expected an array of 4 integers");
      for (std::size_t i = 0; i < 4; ++i) {
        if (!v[i].is_number_unsigned()) Bad(origin_, key, "expected an array of 4 integers");
        out[i] = v[i].get<std::size_t>();
      }
    };
  }
  void Custom(const std::string& key, Setter setter) { setters_[key] = std::move(setter); }

  void Apply(const json& object) {
    if (!object.is_object()) throw ConfigError(origin_ + ": expected a JSON object");
    for (const auto& [key, value] : object.items()) {
      auto it = setters_.find(key);
      if (it == setters_.end()) Bad(origin_, key, "unknown key");
      it->second(value);
    }
  }

 private:
  std::string origin_;
  std::map<std::string, Setter> setters_;
};

}  // namespace

nlohmann::json ModelConfigToJson(const ModelConfig& m) {
  const BackboneConfig& b = m.backbone;
  return json{{"mel_bins", b.mel_bins},
              {"channels", b.channels},
              {"blocks_per_stage", b.blocks_per_stage},
              {"num_f", b.num_f},
              {"num_speakers", b.num_speakers},
              {"stream1_filters", b.stream1_filters},
              {"fc2_bias", b.fc2_bias},
              {"shared_attention_stacks", m.shared_attention_stacks},
              {"dropout_rate", m.dropout_rate}};
}

ModelConfig ModelConfigFromJson(const nlohmann::json& j) {
  ModelConfig m;
  BackboneConfig& b = m.backbone;
  Fields f("model config");
  f.Count("mel_bins", b.mel_bins);
  f.Widths("channels", b.channels);
  f.Widths("blocks_per_stage", b.blocks_per_stage);
  f.Count("num_f", b.num_f);
  f.Count("num_speakers", b.num_speakers);
  f.Count("stream1_filters", b.stream1_filters);
  f.Flag("fc2_bias", b.fc2_bias);
  f.Flag("shared_attention_stacks", m.shared_attention_stacks);
  f.Real("dropout_rate", m.dropout_rate);
  f.Apply(j);
  b.Validate();
  return m;
}

RunConfig ParseRunConfig(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  RunConfig c;
  TrainConfig& t = c.train;
  BackboneConfig& b = c.model.backbone;
  std::optional<std::uint64_t> corpus_seed;
  std::size_t mel_bins = b.mel_bins;

  Fields f(origin);
  f.Count("speakers_per_batch", t.speakers_per_batch);
  f.Real("lambda", t.lambda);
  f.Custom("loss_kind", [&](const json& v) {
    if (!v.is_string()) Bad(origin, "loss_kind", "expected a string");
    try {
      t.loss_kind = ParseLossKind(v.get<std::string>());
    } catch (const ConfigError& e) {
      Bad(origin, "loss_kind", e.what());
    }
  });
  f.Real("s", t.scale);
  f.Real("m", t.margin);
  f.Real("lr_backbone", t.lr_backbone);
  f.Real("lr_attention", t.lr_attention);
  f.Real("momentum", t.momentum);
  f.Real("weight_decay", t.weight_decay);
  f.Count("epochs", t.epochs);
  f.Count("steps_per_epoch", t.steps_per_epoch);
  f.Count("crop_frames", t.crop_frames);
  f.Real("positive_weight", t.positive_weight);
  f.Seed("seed", t.seed);

  f.Count("mel_bins", mel_bins);
  f.Widths("channels", b.channels);
  f.Widths("blocks_per_stage", b.blocks_per_stage);
  f.Count("num_f", b.num_f);
  f.Count("stream1_filters", b.stream1_filters);
  f.Real("dropout_rate", c.model.dropout_rate);
  f.Flag("shared_attention_stacks", c.model.shared_attention_stacks);

  f.Text("corpus_dir", c.corpus_dir);
  f.Count("num_speakers", c.corpus.num_speakers);
  f.Count("utts_per_speaker", c.corpus.utts_per_speaker);
  f.Real("sigma", c.corpus.sigma);
  f.Real("min_seconds", c.corpus.min_seconds);
  f.Real("max_seconds", c.corpus.max_seconds);
  f.Custom("corpus_seed", [&](const json& v) {
    if (!v.is_number_unsigned()) Bad(origin, "corpus_seed", "expected a non-negative integer");
    corpus_seed = v.get<std::uint64_t>();
  });
  f.Seed("utterance_salt", c.corpus.utterance_salt);
  f.Count("calibration_pairs", c.calibration_pairs);
  f.Apply(j);

  b.mel_bins = c.corpus.mel_bins = mel_bins;
  c.corpus.seed = corpus_seed.value_or(t.seed);
  b.num_speakers = std::max<std::size_t>(c.corpus.num_speakers, 2);
  try {
    t.Validate();
    b.Validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  if (!(c.model.dropout_rate >= 0.0 && c.model.dropout_rate < 1.0)) {
    Bad(origin, "dropout_rate", "must be in [0, 1)");
  }
  if (c.calibration_pairs < 2) Bad(origin, "calibration_pairs", "must be at least 2");
  return c;
}

RunConfig LoadRunConfig(const std::string& path) {
  std::string text;
  try {
    text = ReadFile(path);
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  return ParseRunConfig(text, path);
}

nlohmann::json RunConfigToJson(const RunConfig& c) {
  const TrainConfig& t = c.train;
  const BackboneConfig& b = c.model.backbone;
  json j{{"speakers_per_batch", t.speakers_per_batch},
         {"lambda", t.lambda},
         {"loss_kind", LossKindName(t.loss_kind)},
         {"s", t.scale},
         {"m", t.margin},
         {"lr_backbone", t.lr_backbone},
         {"lr_attention", t.lr_attention},
         {"momentum", t.momentum},
         {"weight_decay", t.weight_decay},
         {"epochs", t.epochs},
         {"steps_per_epoch", t.steps_per_epoch},
         {"crop_frames", t.crop_frames},
         {"positive_weight", t.positive_weight},
         {"seed", t.seed},
         {"mel_bins", b.mel_bins},
         {"channels", b.channels},
         {"blocks_per_stage", b.blocks_per_stage},
         {"num_f", b.num_f},
         {"stream1_filters", b.stream1_filters},
         {"dropout_rate", c.model.dropout_rate},
         {"shared_attention_stacks", c.model.shared_attention_stacks},
         {"num_speakers", c.corpus.num_speakers},
         {"utts_per_speaker", c.corpus.utts_per_speaker},
         {"sigma", c.corpus.sigma},
         {"min_seconds", c.corpus.min_seconds},
         {"max_seconds", c.corpus.max_seconds},
         {"corpus_seed", c.corpus.seed},
         {"utterance_salt", c.corpus.utterance_salt},
         {"calibration_pairs", c.calibration_pairs}};
  if (!c.corpus_dir.empty()) j["corpus_dir"] = c.corpus_dir;
  return j;
}

}  // namespace datt
