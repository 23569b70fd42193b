#pragma once

// Single-file parameter container:
//   "TCFCKPT\0" | u32 version | u64 manifest bytes | manifest JSON | f32 blobs
// The manifest lists every tensor (name, shape, trainable flag, offset) and
// carries free-form metadata (model/schedule/codec config, epoch, ...).
// Optimizer moments, when present, are stored as extra tensors.

#include "tcfoley/params.hpp"
#include "tcfoley/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>

namespace tcfoley::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

struct AdamState {
  training::AdamConfig config;
  std::uint64_t steps = 0;
  std::vector<std::string> names;  // tensors with moments
  std::vector<Mat<float>> m, v;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  ParamSet<float> params;
  std::optional<AdamState> adam;
};

void save(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load(const std::filesystem::path& path);

/// Copies values (and trainable flags when `flags`) into `dst` by name.
/// Every tensor of `dst` must be present with the same shape.
void restore_params(ParamSet<float>& dst, const ParamSet<float>& src, bool flags = false);

AdamState capture_adam(const training::Adam<float>& opt, const ParamSet<float>& p);
/// Rebuilds an optimizer for `p` holding the captured moments.
training::Adam<float> restore_adam(const AdamState& s, const ParamSet<float>& p);

}  // namespace tcfoley::checkpoint
