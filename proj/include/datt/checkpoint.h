// Single-file checkpoints: "DATTCKPT", a u64 manifest length, a JSON
// manifest, then every parameter and buffer as little-endian f32 in manifest
// order.

#ifndef DATT_CHECKPOINT_H_
#define DATT_CHECKPOINT_H_

#include <memory>
#include <string>

#include <json.hpp>

#include "datt/model.h"
#include "datt/scoring.h"

namespace datt {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::unique_ptr<DualAttentionNet<float>> net;
  NormStats stats;
  nlohmann::json training;  // free-form run metadata
};

std::string EncodeCheckpoint(const DualAttentionNet<float>& net, const NormStats& stats,
                             const nlohmann::json& training);
// FormatError on a bad magic, a version other than kCheckpointVersion, a
// parameter index that does not match the model layout, or a short payload.
Checkpoint DecodeCheckpoint(const std::string& bytes, const std::string& origin);

// Atomic write (temp file + rename).
void SaveCheckpoint(const std::string& path, const DualAttentionNet<float>& net,
                    const NormStats& stats, const nlohmann::json& training);
Checkpoint LoadCheckpoint(const std::string& path);

}  // namespace datt

#endif  // DATT_CHECKPOINT_H_
