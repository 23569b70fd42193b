// tcfoley: command-line entry point.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

#include "tcfoley/workflow.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tcfoley;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitInternal = 3;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::kUsage: return kExitUsage;
    case ErrorKind::kData:
    case ErrorKind::kIo:
    case ErrorKind::kNetwork: return kExitData;
    case ErrorKind::kInternal: return kExitInternal;
  }
  return kExitInternal;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw data_error(path.string() + ": " + ex.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << text;
}

/// Accepts a bare timeline, a track, or the output of `timeline extract`.
struct TimelineInput {
  std::optional<timeline::BinaryTimeline> bits;
  std::optional<timeline::EventTrack> track;
};

TimelineInput read_timeline(const fs::path& path) {
  const json j = read_json(path);
  TimelineInput t;
  if (j.contains("timeline")) t.bits = timeline::timeline_from_json(j.at("timeline"));
  if (j.contains("bits")) t.bits = timeline::timeline_from_json(j);
  if (j.contains("events")) t.track = timeline::track_from_json(j);
  if (!t.bits && !t.track) throw data_error(path.string() + " holds neither a timeline nor an event track");
  return t;
}

/// Requested timeline on the codec's cropped mel grid for a clip of `duration_s`.
timeline::BinaryTimeline request_timeline(const TimelineInput& in, const pipeline::Codec& codec, double duration_s) {
  const auto samples = static_cast<std::size_t>(std::llround(duration_s * codec.spectral.sample_rate));
  const Eigen::Index frames = pipeline::mel_frames_for(samples, codec);
  if (in.track) return pipeline::target_timeline(*in.track, codec, frames);
  return timeline::resample_timeline(*in.bits, static_cast<std::size_t>(frames));
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw usage_error("not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw usage_error("empty value list");
  return out;
}

void log_line(const json& j) { std::cerr << j.dump() << std::endl; }

// Options shared by the training commands; unset flags leave the config alone.
struct TrainFlags {
  std::string config, corpus, out, resume, base;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch;
  std::optional<double> lr, scale;
  int val_every = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "Run configuration (JSON)");
    cmd->add_option("--corpus", corpus, "Corpus directory (from `synth`)");
    cmd->add_option("--out", out, "Checkpoint to write");
    cmd->add_option("--resume", resume, "Checkpoint to continue from");
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--epochs", epochs, "Total epochs for this stage");
    cmd->add_option("--batch-size", batch, "Mini-batch size");
    cmd->add_option("--lr", lr, "Learning rate");
  }

  RunConfig resolve(StageConfig RunConfig::*stage) const {
    RunConfig c = config.empty() ? RunConfig{} : load_run_config(config);
    if (!corpus.empty()) c.corpus = corpus;
    if (!out.empty()) c.checkpoint = out;
    if (!resume.empty()) c.resume = resume;
    if (!base.empty()) c.base_checkpoint = base;
    if (seed) c.seed = *seed;
    if (epochs) (c.*stage).epochs = *epochs;
    if (batch) (c.*stage).batch_size = *batch;
    if (lr) (c.*stage).lr = *lr;
    if (scale) c.model.adapter.conditioning_scale = *scale;
    c.validate();
    if (c.checkpoint.empty()) throw usage_error("no output checkpoint (--out or paths.checkpoint)");
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-controllable Foley synthesis toolkit"};
  app.require_subcommand(1);
  int jobs = 0;
  app.add_option("--jobs", jobs, "Cap on worker threads (0: all cores)")->check(CLI::NonNegativeNumber);
  std::function<void()> action;

  // ---- timeline extract
  auto* tl = app.add_subcommand("timeline", "Sound-event timelines");
  tl->require_subcommand(1);
  auto* tl_ex = tl->add_subcommand("extract", "Detect events in a WAV file");
  std::string tl_wav, tl_out;
  timeline::ActivityConfig tl_act;
  std::uint64_t tl_seed = 0;
  tl_ex->add_option("wav", tl_wav, "Input WAV")->required();
  tl_ex->add_option("--threshold-db", tl_act.threshold_db, "Activity threshold in dBFS");
  tl_ex->add_option("--merge-gap", tl_act.merge_gap_s, "Gaps up to this many seconds are merged");
  tl_ex->add_option("--frame-len", tl_act.frame_len_s, "Analysis window in seconds");
  tl_ex->add_option("--hop", tl_act.hop_s, "Analysis hop in seconds");
  tl_ex->add_option("--out", tl_out, "Output JSON (default stdout)");
  tl_ex->add_option("--seed", tl_seed, "Accepted for uniformity; extraction is deterministic");
  tl_ex->callback([&] {
    action = [&] {
      tl_act.validate();
      const dsp::Waveform w = dsp::load_wav(tl_wav);
      const auto track = timeline::extract_track(w, tl_act);
      dsp::SpectralConfig sc;
      const std::size_t frames = 1 + w.samples.size() / static_cast<std::size_t>(sc.hop);
      json j = timeline::to_json(track);
      j["timeline"] = timeline::to_json(
          timeline::intervals_to_timeline(track, static_cast<double>(w.sample_rate) / sc.hop, frames));
      write_text(tl_out, j.dump(2) + "\n");
    };
  });

  // ---- condition build
  auto* cond = app.add_subcommand("condition", "Condition grids");
  cond->require_subcommand(1);
  auto* cond_b = cond->add_subcommand("build", "Build the condition grid a_c from a timeline");
  std::string cb_in, cb_out, cb_mode = "mask-only", cb_ref;
  int cb_frames = 0, cb_mels = 64;
  bool cb_resample = false;
  std::uint64_t cb_seed = 0;
  cond_b->add_option("timeline", cb_in, "Timeline JSON")->required();
  cond_b->add_option("--mel-frames", cb_frames, "Frame count of the target mel grid")->required();
  cond_b->add_option("--n-mels", cb_mels, "Mel bins");
  cond_b->add_option("--mode", cb_mode, "mask-only | max-with-mel")->check(CLI::IsMember({"mask-only", "max-with-mel"}));
  cond_b->add_option("--ref", cb_ref, "Normalized reference mel (max-with-mel)");
  cond_b->add_flag("--resample", cb_resample, "OR-pool the timeline to --mel-frames first");
  cond_b->add_option("--out", cb_out, "Output grid (mel container)")->required();
  cond_b->add_option("--seed", cb_seed, "Accepted for uniformity; the build is deterministic");
  cond_b->callback([&] {
    action = [&] {
      const TimelineInput in = read_timeline(cb_in);
      if (!in.bits) throw data_error(cb_in + " has no binary timeline");
      timeline::BinaryTimeline t = *in.bits;
      if (cb_resample) t = timeline::resample_timeline(t, static_cast<std::size_t>(cb_frames));
      std::optional<dsp::MelSpectrogram> ref;
      if (!cb_ref.empty()) ref = binio::read_mel(cb_ref);
      const auto mode =
          cb_mode == "mask-only" ? conditioning::ConditionMode::kMaskOnly : conditioning::ConditionMode::kMaxWithMel;
      const auto spec = conditioning::build_condition(t, cb_mels, cb_frames, mode, ref ? &*ref : nullptr);
      dsp::MelSpectrogram m;
      m.values = spec.values;
      m.frame_rate = spec.frame_rate;
      m.normalized = true;
      m.norm_min = 0.0;
      m.norm_max = 1.0;
      binio::write_mel(cb_out, m);
    };
  });

  // ---- synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic caption + timeline corpus");
  std::string sy_spec, sy_out;
  std::optional<std::uint64_t> sy_seed;
  std::optional<std::size_t> sy_clips;
  synth->add_option("--spec", sy_spec, "Synthetic spec JSON (defaults when omitted)");
  synth->add_option("--out", sy_out, "Output directory")->required();
  synth->add_option("--seed", sy_seed, "Overrides the spec seed");
  synth->add_option("--clips", sy_clips, "Overrides the spec clip count");
  synth->callback([&] {
    action = [&] {
      data::SyntheticSpec spec = sy_spec.empty() ? data::SyntheticSpec{} : data::synthetic_spec_from_json(read_json(sy_spec));
      if (sy_seed) spec.seed = *sy_seed;
      if (sy_clips) spec.clips = *sy_clips;
      const auto entries = data::synth_generate(spec, sy_out);
      log_line({{"clips", entries.size()}, {"out", sy_out}});
    };
  });

  // ---- manifest validate
  auto* man = app.add_subcommand("manifest", "Manifest tools");
  man->require_subcommand(1);
  auto* man_v = man->add_subcommand("validate", "Load and validate a JSON-Lines manifest");
  std::string mv_path, mv_out;
  std::uint64_t mv_seed = 0;
  man_v->add_option("manifest", mv_path, "manifest.jsonl")->required();
  man_v->add_option("--out", mv_out, "Report JSON (default stdout)");
  man_v->add_option("--seed", mv_seed, "Accepted for uniformity");
  man_v->callback([&] {
    action = [&] {
      const auto load = data::load_manifest(mv_path);
      const auto report = data::validate_manifest(load.entries);
      json errors = json::array();
      for (const auto& e : load.errors) errors.push_back("line " + std::to_string(e.line) + ": " + e.message);
      for (const auto& e : report.errors) errors.push_back(e);
      json hist = json::object();
      for (const auto& [k, n] : report.histogram) hist[k] = n;
      const json j = {{"entries", load.entries.size()}, {"errors", errors}, {"warnings", report.warnings},
                      {"histogram", hist}};
      write_text(mv_out, j.dump(2) + "\n");
      if (!errors.empty()) throw data_error(std::to_string(errors.size()) + " manifest error(s)");
    };
  });

  // ---- train
  auto* train = app.add_subcommand("train", "Training stages");
  train->require_subcommand(1);
  TrainFlags tf_base, tf_ad, tf_det;
  auto* tr_base = train->add_subcommand("base", "Train the base denoiser and caption table");
  tf_base.attach(tr_base);
  tr_base->callback([&] {
    action = [&] {
      const RunConfig cfg = tf_base.resolve(&RunConfig::base);
      set_jobs(jobs ? jobs : cfg.jobs);
      workflow::train_base(cfg, workflow::load_split(cfg), log_line);
    };
  });
  auto* tr_ad = train->add_subcommand("adapter", "Train the time adapter on a frozen base");
  tf_ad.attach(tr_ad);
  tr_ad->add_option("--base", tf_ad.base, "Base checkpoint (frozen)");
  tr_ad->add_option("--scale", tf_ad.scale, "Conditioning scale used during training");
  tr_ad->add_option("--val-every", tf_ad.val_every, "Log held-out IoU every N epochs (0: never)");
  tr_ad->callback([&] {
    action = [&] {
      const RunConfig cfg = tf_ad.resolve(&RunConfig::adapter);
      set_jobs(jobs ? jobs : cfg.jobs);
      workflow::train_adapter(cfg, workflow::load_split(cfg), log_line, tf_ad.val_every);
    };
  });
  auto* tr_det = train->add_subcommand("detector", "Train the timestamp detector");
  tf_det.attach(tr_det);
  tr_det->callback([&] {
    action = [&] {
      const RunConfig cfg = tf_det.resolve(&RunConfig::detector_stage);
      set_jobs(jobs ? jobs : cfg.jobs);
      if (cfg.corpus.empty()) throw usage_error("no corpus directory configured");
      auto samples = workflow::load_detector_corpus(cfg.corpus, cfg.activity);
      if (samples.size() <= cfg.holdout) throw data_error("corpus too small for the holdout");
      std::vector<detector::DetectorSample> held(samples.end() - static_cast<std::ptrdiff_t>(cfg.holdout), samples.end());
      samples.resize(samples.size() - cfg.holdout);
      const auto run = workflow::train_detector(cfg, samples, log_line);
      log_line({{"stage", "detector"}, {"holdout_frame_ap", workflow::pooled_frame_ap(run, held)}});
    };
  });

  // ---- sample
  auto* sample = app.add_subcommand("sample", "Generate a clip from a caption and a timeline");
  std::string sa_ckpt, sa_caption, sa_timeline, sa_out;
  std::uint64_t sa_seed = 0;
  double sa_duration = 2.0;
  std::optional<double> sa_scale;
  bool sa_no_adapter = false;
  sample->add_option("--checkpoint", sa_ckpt, "Diffusion checkpoint")->required();
  sample->add_option("--caption", sa_caption, "Caption text")->required();
  sample->add_option("--timeline", sa_timeline, "Requested timeline or track JSON");
  sample->add_option("--seed", sa_seed, "Sampling seed");
  sample->add_option("--duration", sa_duration, "Clip length in seconds")->check(CLI::PositiveNumber);
  sample->add_option("--scale", sa_scale, "Conditioning scale override");
  sample->add_flag("--no-adapter", sa_no_adapter, "Run the base model alone");
  sample->add_option("--out", sa_out, "Output WAV")->required();
  sample->callback([&] {
    action = [&] {
      set_jobs(jobs);
      workflow::DiffusionRun run = workflow::load_diffusion(sa_ckpt);
      const bool adapter = run.stage == "adapter" && !sa_no_adapter;
      if (adapter && sa_timeline.empty()) throw usage_error("the adapter is enabled but no --timeline was given");
      if (sa_scale) run.model.adapter.config.conditioning_scale = *sa_scale;
      const auto samples = static_cast<std::size_t>(std::llround(sa_duration * run.codec.spectral.sample_rate));
      const Eigen::Index frames = pipeline::mel_frames_for(samples, run.codec);
      if (frames < pipeline::kLatentStride) throw usage_error("--duration is too short");
      const auto tokens = run.model.vocab.tokenize(sa_caption);
      Mat<float> cond;
      if (adapter) {
        const auto target = request_timeline(read_timeline(sa_timeline), run.codec, sa_duration);
        cond = pipeline::condition_grid(target, run.codec).cast<float>();
      }
      const Mat<float> z = pipeline::sample_latent<float>(run.model, run.params, run.schedule, tokens,
                                                          adapter ? &cond : nullptr, sa_seed,
                                                          frames / pipeline::kLatentStride);
      dsp::save_wav(sa_out, run.codec.render(z.cast<double>(), sa_seed), dsp::WavEncoding::kPcm16);
    };
  });

  // ---- detect
  auto* detect = app.add_subcommand("detect", "Predict a timeline from frame features");
  std::string de_ckpt, de_feat, de_out;
  double de_thr = 0.5;
  std::uint64_t de_seed = 0;
  detect->add_option("--checkpoint", de_ckpt, "Detector checkpoint")->required();
  detect->add_option("--features", de_feat, "Frame feature container")->required();
  detect->add_option("--threshold", de_thr, "Decision threshold (bit = p >= threshold)");
  detect->add_option("--out", de_out, "Output timeline JSON (default stdout)");
  detect->add_option("--seed", de_seed, "Accepted for uniformity; detection is deterministic");
  detect->callback([&] {
    action = [&] {
      const auto run = workflow::load_detector(de_ckpt);
      const auto f = binio::read_features(de_feat);
      detector::Detector<float>::Cache cache;
      const VectorXd probs = run.det.forward(run.params, f.features.cast<float>(), cache).cast<double>();
      json j = timeline::to_json(detector::threshold_predictions(probs, f.fps, de_thr));
      j["probabilities"] = std::vector<double>(probs.data(), probs.data() + probs.size());
      write_text(de_out, j.dump(2) + "\n");
    };
  });

  // ---- eval
  auto* eval = app.add_subcommand("eval", "Score predictions against ground-truth timelines");
  std::string ev_pred, ev_gt, ev_out;
  double ev_rate = 62.5;
  std::uint64_t ev_seed = 0;
  metrics::EvalConfig ev_cfg;
  eval->add_option("--pred-dir", ev_pred, "Predicted <id>.wav or <id>.json files")->required();
  eval->add_option("--gt-dir", ev_gt, "Ground-truth <id>.json tracks or timelines")->required();
  eval->add_option("--out", ev_out, "CSV report (default stdout)");
  eval->add_option("--frame-rate", ev_rate, "Frame rate used for tracks without a grid");
  eval->add_option("--threshold-db", ev_cfg.activity.threshold_db, "Activity threshold for predicted audio");
  eval->add_option("--seed", ev_seed, "Accepted for uniformity; scoring is deterministic");
  eval->callback([&] {
    action = [&] {
      std::vector<fs::path> gts;
      for (const auto& e : fs::directory_iterator(ev_gt))
        if (e.path().extension() == ".json") gts.push_back(e.path());
      if (gts.empty()) throw data_error("no ground-truth JSON files in " + ev_gt);
      std::sort(gts.begin(), gts.end());
      std::vector<std::pair<std::string, metrics::MetricReport>> rows;
      for (const auto& g : gts) {
        const std::string id = g.stem().string();
        const TimelineInput gt = read_timeline(g);
        timeline::BinaryTimeline target;
        if (gt.bits) {
          target = *gt.bits;
        } else {
          const auto frames = static_cast<std::size_t>(std::ceil(gt.track->source_duration_s * ev_rate - 1e-9));
          target = timeline::intervals_to_timeline(*gt.track, ev_rate, std::max<std::size_t>(frames, 1));
        }
        const fs::path wav = fs::path(ev_pred) / (id + ".wav"), js = fs::path(ev_pred) / (id + ".json");
        metrics::MetricReport r;
        if (fs::exists(wav)) {
          r = metrics::evaluate_clip(dsp::load_wav(wav), target, ev_cfg);
        } else if (fs::exists(js)) {
          const TimelineInput p = read_timeline(js);
          r = metrics::evaluate_track(p.track ? *p.track : timeline::timeline_to_intervals(*p.bits), target, ev_cfg);
        } else {
          throw data_error("no prediction for " + id + " in " + ev_pred);
        }
        rows.emplace_back(id, r);
      }
      write_text(ev_out, metrics::to_csv(rows));
    };
  });

  // ---- sweep scale
  auto* sweep = app.add_subcommand("sweep", "Parameter sweeps");
  sweep->require_subcommand(1);
  auto* sw_scale = sweep->add_subcommand("scale", "IoU and friends per conditioning scale");
  std::string sw_ckpt, sw_corpus, sw_values = "0.6,1.0,1.4,2.0,3.0", sw_out;
  std::size_t sw_prompts = 64;
  std::uint64_t sw_seed = 0;
  sw_scale->add_option("--checkpoint", sw_ckpt, "Adapter checkpoint")->required();
  sw_scale->add_option("--corpus", sw_corpus, "Corpus directory; prompts are its last clips")->required();
  sw_scale->add_option("--values", sw_values, "Comma-separated scales");
  sw_scale->add_option("--prompts", sw_prompts, "Number of held-out prompts");
  sw_scale->add_option("--seed", sw_seed, "Sampling seed");
  sw_scale->add_option("--out", sw_out, "Report JSON (default stdout)");
  sw_scale->callback([&] {
    action = [&] {
      set_jobs(jobs);
      workflow::DiffusionRun run = workflow::load_diffusion(sw_ckpt);
      metrics::EvalConfig ev;
      const auto corpus = workflow::split_corpus(pipeline::load_corpus(sw_corpus, run.codec, ev.activity), sw_prompts);
      const auto points = workflow::sweep_scales(run, corpus.holdout, parse_list(sw_values), sw_seed, ev);
      write_text(sw_out, workflow::to_json(points).dump(2) + "\n");
    };
  });

  // ---- caption
  auto* cap = app.add_subcommand("caption", "Build the four-frame prompt and optionally query a provider");
  std::vector<std::string> ca_frames;
  std::string ca_task = "[foley]", ca_instr = data::CaptionRequest{}.instruction, ca_mock, ca_endpoint;
  int ca_timeout_ms = 10000;
  std::uint64_t ca_seed = 0;
  cap->add_option("--frames", ca_frames, "Four frame identifiers")->delimiter(',')->required();
  cap->add_option("--task", ca_task, "Task identifier");
  cap->add_option("--instruction", ca_instr, "Instruction text");
  cap->add_option("--mock", ca_mock, "JSON table of canned captions keyed by comma-joined frame ids");
  cap->add_option("--endpoint", ca_endpoint, std::string("Caption endpoint URL (default $") + data::kCaptionEndpointEnv + ")");
  cap->add_option("--timeout-ms", ca_timeout_ms, "HTTP timeout")->check(CLI::PositiveNumber);
  cap->add_option("--seed", ca_seed, "Accepted for uniformity");
  cap->callback([&] {
    action = [&] {
      data::CaptionRequest req{ca_frames, ca_task, ca_instr};
      if (!ca_mock.empty()) {
        data::MockCaptionProvider provider(read_json(ca_mock).get<std::map<std::string, std::string>>());
        std::cout << provider.describe(req) << "\n";
        return;
      }
      std::string endpoint = ca_endpoint;
      if (endpoint.empty())
        if (const char* env = std::getenv(data::kCaptionEndpointEnv)) endpoint = env;
      if (endpoint.empty()) {
        std::cout << data::build_caption_prompt(req) << "\n";
        return;
      }
      const char* token = std::getenv(data::kCaptionTokenEnv);
      data::HttpCaptionProvider provider(endpoint, std::chrono::milliseconds(ca_timeout_ms), token ? token : "");
      std::cout << provider.describe(req) << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  try {
    set_jobs(jobs);
    if (action) action();
    return kExitOk;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}
