#include "tcfoley/pipeline.hpp"

#include <nlohmann/json.hpp>

namespace tcfoley::pipeline {

MatrixXd Codec::encode(const dsp::MelSpectrogram& normalized) const {
  if (!normalized.normalized) throw data_error("codec input must be a normalized mel grid");
  const Eigen::Index F = normalized.n_mels(), T = cropped_frames(normalized.n_frames());
  if (F % kLatentStride != 0 || T == 0)
    throw data_error("mel grid " + std::to_string(F) + "x" + std::to_string(normalized.n_frames()) +
                     " is too small or not divisible by the codec stride");
  MatrixXd z(F / kLatentStride, T / kLatentStride);
  for (Eigen::Index t = 0; t < z.cols(); ++t)
    for (Eigen::Index f = 0; f < z.rows(); ++f)
      z(f, t) = 2.0 * normalized.values.block(kLatentStride * f, kLatentStride * t, kLatentStride, kLatentStride).mean() - 1.0;
  return z;
}

dsp::MelSpectrogram Codec::decode(const MatrixXd& latent) const {
  dsp::MelSpectrogram m;
  m.frame_rate = spectral.frame_rate();
  m.normalized = true;
  m.norm_min = ref_min;
  m.norm_max = ref_max;
  m.values.resize(latent.rows() * kLatentStride, latent.cols() * kLatentStride);
  for (Eigen::Index t = 0; t < m.values.cols(); ++t)
    for (Eigen::Index f = 0; f < m.values.rows(); ++f)
      m.values(f, t) = std::clamp(0.5 * (latent(f / kLatentStride, t / kLatentStride) + 1.0), 0.0, 1.0);
  return m;
}

dsp::Waveform Codec::render(const MatrixXd& latent, std::uint64_t seed) const {
  const dsp::MelSpectrogram mel = dsp::denormalize_mel(decode(latent));
  const MatrixXd mag = dsp::mel_to_magnitude(mel, spectral);
  const auto length = static_cast<std::size_t>(mel.n_frames()) * static_cast<std::size_t>(spectral.hop);
  return dsp::griffin_lim(mag, spectral, griffin_lim_iterations, seed, length);
}

nlohmann::json to_json(const Codec& c) {
  return {{"sample_rate", c.spectral.sample_rate}, {"n_fft", c.spectral.n_fft},   {"hop", c.spectral.hop},
          {"n_mels", c.spectral.n_mels},           {"f_min", c.spectral.f_min},   {"f_max", c.spectral.f_max},
          {"ref_min", c.ref_min},                  {"ref_max", c.ref_max},
          {"griffin_lim_iterations", c.griffin_lim_iterations}};
}

Codec codec_from_json(const nlohmann::json& j) {
  Codec c;
  c.spectral.sample_rate = j.value("sample_rate", c.spectral.sample_rate);
  c.spectral.n_fft = j.value("n_fft", c.spectral.n_fft);
  c.spectral.hop = j.value("hop", c.spectral.hop);
  c.spectral.n_mels = j.value("n_mels", c.spectral.n_mels);
  c.spectral.f_min = j.value("f_min", c.spectral.f_min);
  c.spectral.f_max = j.value("f_max", c.spectral.f_max);
  c.ref_min = j.value("ref_min", c.ref_min);
  c.ref_max = j.value("ref_max", c.ref_max);
  c.griffin_lim_iterations = j.value("griffin_lim_iterations", c.griffin_lim_iterations);
  c.spectral.validate();
  return c;
}

Eigen::Index mel_frames_for(std::size_t samples, const Codec& codec) {
  return Codec::cropped_frames(1 + static_cast<Eigen::Index>(samples) / codec.spectral.hop);
}

timeline::BinaryTimeline target_timeline(const timeline::EventTrack& track, const Codec& codec,
                                         Eigen::Index mel_frames) {
  const double fr = codec.spectral.frame_rate();
  const double span = static_cast<double>(mel_frames) / fr;
  timeline::EventTrack clipped;
  clipped.source_duration_s = span;
  for (const auto& iv : track.intervals)
    if (iv.start_s < span) clipped.intervals.push_back({iv.start_s, std::min(iv.end_s, span)});
  return timeline::intervals_to_timeline(clipped, fr, static_cast<std::size_t>(mel_frames));
}

MatrixXd condition_grid(const timeline::BinaryTimeline& target, const Codec& codec) {
  return conditioning::build_condition(target, codec.spectral.n_mels, static_cast<Eigen::Index>(target.size()))
      .values;
}

PreparedClip prepare_clip(const std::string& id, const dsp::Waveform& audio, const std::string& caption,
                          const Codec& codec, const timeline::ActivityConfig& activity) {
  PreparedClip c;
  c.id = id;
  c.caption = caption;
  const dsp::MelSpectrogram mel = dsp::normalize_mel(dsp::mel_spectrogram(audio, codec.spectral));
  c.norm_min = mel.norm_min;
  c.norm_max = mel.norm_max;
  c.latent = codec.encode(mel);
  c.target = target_timeline(timeline::extract_track(audio, activity), codec, Codec::cropped_frames(mel.n_frames()));
  return c;
}

void fit_reference(Codec& codec, const std::vector<PreparedClip>& clips) {
  if (clips.empty()) throw usage_error("cannot fit the codec range on an empty corpus");
  double lo = 0.0, hi = 0.0;
  for (const auto& c : clips) {
    lo += c.norm_min;
    hi += c.norm_max;
  }
  codec.ref_min = lo / static_cast<double>(clips.size());
  codec.ref_max = hi / static_cast<double>(clips.size());
}

std::vector<PreparedClip> load_corpus(const std::filesystem::path& root, const Codec& codec,
                                      const timeline::ActivityConfig& activity) {
  const auto load = data::load_manifest(root / "manifest.jsonl");
  if (!load.errors.empty())
    throw data_error("manifest line " + std::to_string(load.errors.front().line) + ": " + load.errors.front().message);
  std::vector<PreparedClip> out(load.entries.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i) {
    const auto& e = load.entries[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] =
        prepare_clip(e.id, dsp::load_wav(root / e.audio_path), e.caption, codec, activity);
  }
  return out;
}

GenerationEval evaluate_generation(const FoleyModel<float>& model, const ParamSet<float>& p,
                                   const diffusion::NoiseSchedule& s, const Codec& codec,
                                   const std::vector<PreparedClip>& prompts, bool with_adapter, std::uint64_t seed,
                                   const metrics::EvalConfig& eval) {
  GenerationEval out;
  out.rows.resize(prompts.size());
  std::vector<metrics::MetricReport> reports(prompts.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(prompts.size()); ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto& clip = prompts[k];
    const auto item = make_item<float>(clip, model.vocab, codec);
    const Mat<float> z = sample_latent<float>(model, p, s, item.tokens, with_adapter ? &item.condition : nullptr,
                                              seed + k, clip.latent.cols());
    const dsp::Waveform audio = codec.render(z.cast<double>(), seed + k);
    reports[k] = metrics::evaluate_clip(audio, clip.target, eval);
    out.rows[k] = {clip.id, reports[k]};
  }
  out.mean = metrics::mean_report(reports);
  return out;
}

}  // namespace tcfoley::pipeline
