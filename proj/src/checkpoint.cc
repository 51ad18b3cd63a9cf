#include "datt/checkpoint.h"

#include <cstring>
#include <set>

#include "datt/config.h"
#include "datt/error.h"
#include "datt/io.h"

namespace datt {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'A', 'T', 'T', 'C', 'K', 'P', 'T'};

}  // namespace

std::string EncodeCheckpoint(const DualAttentionNet<float>& net, const NormStats& stats,
                             const json& training) {
  json index = json::array();
  std::size_t offset = 0;
  for (const auto& e : net.params().entries()) {
    index.push_back({{"name", e.name}, {"shape", e.value.shape()}, {"offset", offset}});
    offset += e.value.size() * sizeof(float);
  }
  const json manifest{{"format_version", kCheckpointVersion},
                      {"model", ModelConfigToJson(net.config())},
                      {"init_seed", net.seed()},
                      {"parameters", index},
                      {"payload_bytes", offset},
                      {"norm_stats",
                       {{"mean_cos", stats.mean_cos},
                        {"std_cos", stats.std_cos},
                        {"mean_bin", stats.mean_bin},
                        {"std_bin", stats.std_bin}}},
                      {"training", training}};
  const std::string text = manifest.dump(1);

  std::string out(kMagic, sizeof(kMagic));
  AppendLe<std::uint64_t>(out, text.size());
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& e : net.params().entries()) {
    for (float v : e.value.data()) AppendLe<float>(out, v);
  }
  return out;
}

Checkpoint DecodeCheckpoint(const std::string& bytes, const std::string& origin) {
  auto fail = [&](const std::string& why) -> FormatError {
    return FormatError(origin + ": " + why);
  };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw fail("not a checkpoint file");
  }
  const std::uint64_t length = LoadLe<std::uint64_t>(bytes.data() + 8);
  if (length > bytes.size() - 16) throw fail("truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(16, length));
  } catch (const json::parse_error& e) {
    throw fail(std::string("manifest: ") + e.what());
  }

  Checkpoint c;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw fail("format version " + std::to_string(version) + ", this build reads version " +
                 std::to_string(kCheckpointVersion));
    }
    ModelConfig model;
    try {
      model = ModelConfigFromJson(manifest.at("model"));
    } catch (const ConfigError& e) {
      throw fail(e.what());
    }
    c.net = std::make_unique<DualAttentionNet<float>>(model,
                                                      manifest.at("init_seed").get<std::uint64_t>());
    const json& ns = manifest.at("norm_stats");
    c.stats = {ns.at("mean_cos").get<double>(), ns.at("std_cos").get<double>(),
               ns.at("mean_bin").get<double>(), ns.at("std_bin").get<double>()};
    c.training = manifest.at("training");

    const char* payload = bytes.data() + 16 + length;
    const std::size_t payload_size = bytes.size() - 16 - length;
    if (manifest.at("payload_bytes").get<std::size_t>() != payload_size) {
      throw fail("payload is " + std::to_string(payload_size) + " bytes, manifest declares " +
                 manifest.at("payload_bytes").dump());
    }
    const auto& entries = c.net->params().entries();
    std::set<std::string> seen;
    for (const json& p : manifest.at("parameters")) {
      const std::string name = p.at("name").get<std::string>();
      if (!seen.insert(name).second) throw fail("parameter " + name + " listed twice");
      const NamedTensor<float>* e = c.net->params().Find(name);
      if (e == nullptr) throw fail("unknown parameter " + name);
      if (p.at("shape").get<Shape>() != e->value.shape()) {
        throw fail("parameter " + name + " has shape " + p.at("shape").dump() + ", model expects " +
                   ShapeToString(e->value.shape()));
      }
      const std::size_t offset = p.at("offset").get<std::size_t>();
      const std::size_t size = e->value.size() * sizeof(float);
      if (offset > payload_size || size > payload_size - offset) {
        throw fail("parameter " + name + " runs past the payload");
      }
      Tensor<float> target = e->value;
      auto values = target.mutable_data();
      for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] = LoadLe<float>(payload + offset + i * sizeof(float));
      }
    }
    if (seen.size() != entries.size()) {
      for (const auto& e : entries) {
        if (!seen.count(e.name)) throw fail("missing parameter " + e.name);
      }
    }
  } catch (const json::exception& e) {
    throw fail(std::string("manifest: ") + e.what());
  }
  return c;
}

void SaveCheckpoint(const std::string& path, const DualAttentionNet<float>& net,
                    const NormStats& stats, const json& training) {
  WriteFileAtomic(path, EncodeCheckpoint(net, stats, training));
}

Checkpoint LoadCheckpoint(const std::string& path) {
  return DecodeCheckpoint(ReadFile(path), path);
}

}  // namespace datt
