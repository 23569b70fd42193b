#pragma once

// End-to-end workflows shared by the CLI and the acceptance suite: training
// stages with checkpoint/resume, generation sweeps and detector training.

#include "tcfoley/checkpoint.hpp"
#include "tcfoley/config.hpp"

#include <nlohmann/json.hpp>

#include <functional>

namespace tcfoley::workflow {

/// Receives one JSON object per log event (epoch losses, validation scores).
using Log = std::function<void(const nlohmann::json&)>;

struct Corpus {
  std::vector<pipeline::PreparedClip> train;
  std::vector<pipeline::PreparedClip> holdout;  // the last clips of the corpus
};

Corpus split_corpus(std::vector<pipeline::PreparedClip> all, std::size_t holdout);
/// Loads `root` with the config's codec and activity settings and splits it.
Corpus load_split(const RunConfig& cfg);

struct DiffusionRun {
  FoleyModel<float> model;
  ParamSet<float> params;
  pipeline::Codec codec;
  diffusion::ScheduleConfig schedule_config;
  diffusion::NoiseSchedule schedule;
  std::string stage;  // "base" or "adapter"
  int epoch = 0;      // completed epochs of this stage
  std::optional<checkpoint::AdamState> adam;
};

checkpoint::Checkpoint to_checkpoint(const DiffusionRun& run);
DiffusionRun load_diffusion(const std::filesystem::path& path);

/// Trains the base denoiser and caption table (adapter and E_a frozen).
/// Resumes from `cfg.resume` when set; saves to `cfg.checkpoint` after every
/// epoch when set.
DiffusionRun train_base(const RunConfig& cfg, const Corpus& corpus, const Log& log);

/// Trains adapter and E_a on top of the frozen base from
/// `cfg.base_checkpoint` (or resumes `cfg.resume`). Every `val_every` epochs
/// the mean IoU over the first `val_clips` held-out prompts is logged.
DiffusionRun train_adapter(const RunConfig& cfg, const Corpus& corpus, const Log& log, int val_every = 0,
                           std::size_t val_clips = 16);

struct ScalePoint {
  double scale = 0.0;
  metrics::MetricReport report;
};

/// Mean metrics on `prompts` per conditioning scale; the run's own scale is
/// restored afterwards.
std::vector<ScalePoint> sweep_scales(DiffusionRun& run, const std::vector<pipeline::PreparedClip>& prompts,
                                     const std::vector<double>& scales, std::uint64_t seed,
                                     const metrics::EvalConfig& eval);

nlohmann::json to_json(const std::vector<ScalePoint>& points);

// ---------------------------------------------------------------- detector

struct DetectorRun {
  detector::Detector<float> det;
  ParamSet<float> params;
  int epoch = 0;
  std::optional<checkpoint::AdamState> adam;
};

/// One sample per manifest entry: features/<id>.bin plus the target built from
/// the clip's audio.
std::vector<detector::DetectorSample> load_detector_corpus(const std::filesystem::path& root,
                                                           const timeline::ActivityConfig& activity);

checkpoint::Checkpoint to_checkpoint(const DetectorRun& run);
DetectorRun load_detector(const std::filesystem::path& path);

DetectorRun train_detector(const RunConfig& cfg, const std::vector<detector::DetectorSample>& train, const Log& log);

/// Frame AP pooled over every frame of every sample.
double pooled_frame_ap(const DetectorRun& run, const std::vector<detector::DetectorSample>& samples);

}  // namespace tcfoley::workflow
