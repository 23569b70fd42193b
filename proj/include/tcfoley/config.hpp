#pragma once

// Run configuration shared by the CLI subcommands. Layering is
// defaults < JSON file < command-line flags; the JSON schema is closed, so an
// unknown key anywhere is a usage error.

#include "tcfoley/detector.hpp"
#include "tcfoley/diffusion.hpp"
#include "tcfoley/model.hpp"
#include "tcfoley/pipeline.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>

namespace tcfoley {

struct StageConfig {
  double lr = 1e-3;
  int epochs = 10;
  int batch_size = 16;
};

struct RunConfig {
  std::uint64_t seed = 0;
  int jobs = 0;  // 0: library default

  std::string corpus;      // synthetic or manifest-backed corpus directory
  std::string checkpoint;  // output (train) or input (sample/sweep)
  std::string resume;      // checkpoint to continue from
  std::string base_checkpoint;  // frozen base for adapter training

  pipeline::Codec codec;
  timeline::ActivityConfig activity;
  diffusion::ScheduleConfig schedule;
  ModelConfig model;
  detector::DetectorConfig detector;
  conditioning::ConditionMode condition_mode = conditioning::ConditionMode::kMaskOnly;

  StageConfig base{1e-3, 60, 16};
  StageConfig adapter{3e-5, 150, 16};
  StageConfig detector_stage{1e-3, 200, 24};
  std::size_t holdout = 64;  // clips at the end of the corpus kept out of training

  RunConfig();
  void validate() const;
};

/// Overlays the keys present in `j` onto `c`. Throws a usage error naming the
/// offending path for unknown keys or wrongly typed values.
void apply_json(RunConfig& c, const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

/// Applies the worker cap to the parallel runtime (no-op without OpenMP).
void set_jobs(int jobs);

}  // namespace tcfoley
