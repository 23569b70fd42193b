#pragma once

// Glue between audio and the toy latent model: a fixed average-pool codec on
// normalized mel grids, per-clip training items, sampling and rendering back
// to audio through Griffin-Lim.

#include "tcfoley/conditioning.hpp"
#include "tcfoley/data.hpp"
#include "tcfoley/metrics.hpp"
#include "tcfoley/training.hpp"

#include <nlohmann/json_fwd.hpp>

namespace tcfoley::pipeline {

inline constexpr int kLatentStride = 4;

/// latent = 2 * avgpool4x4(normalized mel) - 1. Decoding upsamples by
/// repetition and maps back to [0, 1]; denormalization uses a reference
/// log-domain range fitted on the training corpus, since a generated grid has
/// no range of its own.
struct Codec {
  dsp::SpectralConfig spectral;
  double ref_min = 0.0;
  double ref_max = 1.0;
  int griffin_lim_iterations = 32;

  Eigen::Index latent_rows() const { return spectral.n_mels / kLatentStride; }
  static Eigen::Index cropped_frames(Eigen::Index n) { return n - n % kLatentStride; }

  MatrixXd encode(const dsp::MelSpectrogram& normalized) const;
  dsp::MelSpectrogram decode(const MatrixXd& latent) const;
  dsp::Waveform render(const MatrixXd& latent, std::uint64_t seed) const;
};

nlohmann::json to_json(const Codec& c);
Codec codec_from_json(const nlohmann::json& j);

struct PreparedClip {
  std::string id;
  std::string caption;
  MatrixXd latent;                   // latent_rows x T/4
  timeline::BinaryTimeline target;   // T_ct on the cropped mel grid
  double norm_min = 0.0, norm_max = 0.0;
};

/// Requested timeline for a track on the codec's cropped mel grid.
timeline::BinaryTimeline target_timeline(const timeline::EventTrack& track, const Codec& codec,
                                         Eigen::Index mel_frames);

/// Mel frame count for a clip of `samples` samples after cropping.
Eigen::Index mel_frames_for(std::size_t samples, const Codec& codec);

/// mask-only condition grid a_c for a target timeline.
MatrixXd condition_grid(const timeline::BinaryTimeline& target, const Codec& codec);

/// Mel, normalization, latent and the timeline extracted from the audio itself.
PreparedClip prepare_clip(const std::string& id, const dsp::Waveform& audio, const std::string& caption,
                          const Codec& codec, const timeline::ActivityConfig& activity);

/// Sets the codec's reference range to the mean per-clip range.
void fit_reference(Codec& codec, const std::vector<PreparedClip>& clips);

/// Loads every manifest entry below `root` and prepares it.
std::vector<PreparedClip> load_corpus(const std::filesystem::path& root, const Codec& codec,
                                      const timeline::ActivityConfig& activity);

template <typename Scalar>
training::TrainingItem<Scalar> make_item(const PreparedClip& clip, const Vocabulary& vocab, const Codec& codec) {
  training::TrainingItem<Scalar> item;
  item.latent = clip.latent.cast<Scalar>();
  item.tokens = vocab.tokenize(clip.caption);
  item.condition = condition_grid(clip.target, codec).cast<Scalar>();
  return item;
}

/// Reverse-process sample. With `condition` null the base model runs alone.
template <typename Scalar>
Mat<Scalar> sample_latent(const FoleyModel<Scalar>& model, const ParamSet<Scalar>& p,
                          const diffusion::NoiseSchedule& s, const std::vector<int>& tokens,
                          const Mat<Scalar>* condition, std::uint64_t seed, Eigen::Index cols) {
  diffusion::NoisePredictor<Scalar> predict = [&](const Mat<Scalar>& z, int n) {
    typename FoleyModel<Scalar>::Request req;
    req.z = &z;
    req.step = n;
    req.tokens = &tokens;
    req.condition = condition;
    typename FoleyModel<Scalar>::Cache cache;
    return model.predict(p, req, cache);
  };
  return diffusion::ddpm_sample<Scalar>(predict, s, seed, model.config.denoiser.latent_dim, cols);
}

struct GenerationEval {
  std::vector<std::pair<std::string, metrics::MetricReport>> rows;
  metrics::MetricReport mean;
};

/// Samples one clip per prompt (seed + index), renders it and scores it
/// against the prompt's timeline. Clips are processed in parallel.
GenerationEval evaluate_generation(const FoleyModel<float>& model, const ParamSet<float>& p,
                                   const diffusion::NoiseSchedule& s, const Codec& codec,
                                   const std::vector<PreparedClip>& prompts, bool with_adapter, std::uint64_t seed,
                                   const metrics::EvalConfig& eval);

}  // namespace tcfoley::pipeline
