#include "tcfoley/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tcfoley {

using nlohmann::json;

RunConfig::RunConfig() {
  model.vocabulary = data::caption_vocabulary();
  model.n_mels = codec.spectral.n_mels;
}

void RunConfig::validate() const {
  codec.spectral.validate();
  activity.validate();
  model.denoiser.validate();
  detector.validate();
  if (model.n_mels != codec.spectral.n_mels) throw usage_error("model.n_mels must equal dsp.n_mels");
  if (model.denoiser.latent_dim != codec.spectral.n_mels / pipeline::kLatentStride)
    throw usage_error("model.latent_dim must be dsp.n_mels / 4");
  if (codec.spectral.n_mels % pipeline::kLatentStride != 0) throw usage_error("dsp.n_mels must be divisible by 4");
  if (jobs < 0) throw usage_error("jobs must be non-negative");
  for (const auto* s : {&base, &adapter, &detector_stage})
    if (!(s->lr > 0.0) || s->epochs < 0 || s->batch_size < 1)
      throw usage_error("training stages need lr > 0, epochs >= 0, batch_size >= 1");
  if (codec.griffin_lim_iterations < 1) throw usage_error("dsp.griffin_lim_iterations must be >= 1");
  (void)diffusion::make_schedule(schedule.steps, schedule.beta_min, schedule.beta_max);
}

namespace {

// Walks one JSON object; every key must be claimed by a field() call.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw usage_error("config: '" + path_ + "' must be an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw usage_error("config: unknown key '" + join(k) + "'");
  }

  template <typename T>
  void field(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw usage_error("config: '" + join(key) + "' has the wrong type");
    }
  }

  /// Descends into a child object when present.
  template <typename F>
  void child(const char* key, F&& f) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Section s(j_.at(key), join(key));
    f(s);
  }

 private:
  std::string join(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void stage(Section& s, StageConfig& st) {
  s.field("lr", st.lr);
  s.field("epochs", st.epochs);
  s.field("batch_size", st.batch_size);
}

json stage_json(const StageConfig& s) { return {{"lr", s.lr}, {"epochs", s.epochs}, {"batch_size", s.batch_size}}; }

}  // namespace

void apply_json(RunConfig& c, const json& j) {
  Section root(j, "");
  root.field("seed", c.seed);
  root.field("jobs", c.jobs);
  root.field("holdout", c.holdout);
  root.child("paths", [&](Section& s) {
    s.field("corpus", c.corpus);
    s.field("checkpoint", c.checkpoint);
    s.field("resume", c.resume);
    s.field("base_checkpoint", c.base_checkpoint);
  });
  root.child("dsp", [&](Section& s) {
    auto& sp = c.codec.spectral;
    s.field("sample_rate", sp.sample_rate);
    s.field("n_fft", sp.n_fft);
    s.field("hop", sp.hop);
    s.field("n_mels", sp.n_mels);
    s.field("f_min", sp.f_min);
    s.field("f_max", sp.f_max);
    s.field("griffin_lim_iterations", c.codec.griffin_lim_iterations);
    c.model.n_mels = sp.n_mels;
    c.model.denoiser.latent_dim = sp.n_mels / pipeline::kLatentStride;
  });
  root.child("activity", [&](Section& s) {
    s.field("frame_len_s", c.activity.frame_len_s);
    s.field("hop_s", c.activity.hop_s);
    s.field("threshold_db", c.activity.threshold_db);
    s.field("merge_gap_s", c.activity.merge_gap_s);
  });
  root.child("schedule", [&](Section& s) {
    s.field("steps", c.schedule.steps);
    s.field("beta_min", c.schedule.beta_min);
    s.field("beta_max", c.schedule.beta_max);
  });
  root.child("model", [&](Section& s) {
    s.field("width", c.model.denoiser.width);
    s.field("depth", c.model.denoiser.depth);
    s.field("text_dim", c.model.denoiser.text_dim);
    s.field("key_dim", c.model.denoiser.key_dim);
    s.field("cond_hidden_channels", c.model.cond_encoder.hidden_channels);
    s.field("cond_out_channels", c.model.cond_encoder.out_channels);
    s.field("cond_pooling_fallback", c.model.cond_encoder.pooling_fallback);
    s.field("vocabulary", c.model.vocabulary);
  });
  root.child("adapter", [&](Section& s) {
    s.field("conditioning_scale", c.model.adapter.conditioning_scale);
    s.field("literal_middle_fusion", c.model.adapter.literal_middle_fusion);
    std::string mode = c.condition_mode == conditioning::ConditionMode::kMaskOnly ? "mask-only" : "max-with-mel";
    s.field("condition_mode", mode);
    if (mode == "mask-only")
      c.condition_mode = conditioning::ConditionMode::kMaskOnly;
    else if (mode == "max-with-mel")
      c.condition_mode = conditioning::ConditionMode::kMaxWithMel;
    else
      throw usage_error("config: adapter.condition_mode must be 'mask-only' or 'max-with-mel'");
  });
  root.child("detector", [&](Section& s) {
    s.field("input_dim", c.detector.input_dim);
    s.field("hidden", c.detector.hidden);
    s.field("layers", c.detector.layers);
  });
  root.child("train", [&](Section& s) {
    s.child("base", [&](Section& t) { stage(t, c.base); });
    s.child("adapter", [&](Section& t) { stage(t, c.adapter); });
    s.child("detector", [&](Section& t) { stage(t, c.detector_stage); });
  });
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& ex) {
    throw usage_error("config " + path.string() + ": " + ex.what());
  }
  RunConfig c;
  apply_json(c, j);
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  const auto& sp = c.codec.spectral;
  return {
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"holdout", c.holdout},
      {"paths",
       {{"corpus", c.corpus}, {"checkpoint", c.checkpoint}, {"resume", c.resume}, {"base_checkpoint", c.base_checkpoint}}},
      {"dsp",
       {{"sample_rate", sp.sample_rate},
        {"n_fft", sp.n_fft},
        {"hop", sp.hop},
        {"n_mels", sp.n_mels},
        {"f_min", sp.f_min},
        {"f_max", sp.f_max},
        {"griffin_lim_iterations", c.codec.griffin_lim_iterations}}},
      {"activity",
       {{"frame_len_s", c.activity.frame_len_s},
        {"hop_s", c.activity.hop_s},
        {"threshold_db", c.activity.threshold_db},
        {"merge_gap_s", c.activity.merge_gap_s}}},
      {"schedule", to_json(c.schedule)},
      {"model",
       {{"width", c.model.denoiser.width},
        {"depth", c.model.denoiser.depth},
        {"text_dim", c.model.denoiser.text_dim},
        {"key_dim", c.model.denoiser.key_dim},
        {"cond_hidden_channels", c.model.cond_encoder.hidden_channels},
        {"cond_out_channels", c.model.cond_encoder.out_channels},
        {"cond_pooling_fallback", c.model.cond_encoder.pooling_fallback},
        {"vocabulary", c.model.vocabulary}}},
      {"adapter",
       {{"conditioning_scale", c.model.adapter.conditioning_scale},
        {"literal_middle_fusion", c.model.adapter.literal_middle_fusion},
        {"condition_mode", c.condition_mode == conditioning::ConditionMode::kMaskOnly ? "mask-only" : "max-with-mel"}}},
      {"detector", to_json(c.detector)},
      {"train",
       {{"base", stage_json(c.base)}, {"adapter", stage_json(c.adapter)}, {"detector", stage_json(c.detector_stage)}}},
  };
}

void set_jobs(int jobs) {
#ifdef _OPENMP
  if (jobs > 0) omp_set_num_threads(jobs);
#else
  (void)jobs;
#endif
}

}  // namespace tcfoley
