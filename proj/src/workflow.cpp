#include "tcfoley/workflow.hpp"

namespace tcfoley::workflow {

namespace fs = std::filesystem;
using nlohmann::json;

Corpus split_corpus(std::vector<pipeline::PreparedClip> all, std::size_t holdout) {
  if (all.size() <= holdout)
    throw data_error("corpus has " + std::to_string(all.size()) + " clips, not enough for a holdout of " +
                     std::to_string(holdout));
  Corpus c;
  c.holdout.assign(std::make_move_iterator(all.end() - static_cast<std::ptrdiff_t>(holdout)),
                   std::make_move_iterator(all.end()));
  all.resize(all.size() - holdout);
  c.train = std::move(all);
  return c;
}

Corpus load_split(const RunConfig& cfg) {
  if (cfg.corpus.empty()) throw usage_error("no corpus directory configured");
  return split_corpus(pipeline::load_corpus(cfg.corpus, cfg.codec, cfg.activity), cfg.holdout);
}

checkpoint::Checkpoint to_checkpoint(const DiffusionRun& run) {
  checkpoint::Checkpoint ck;
  ck.meta = {{"kind", "diffusion"},
             {"stage", run.stage},
             {"epoch", run.epoch},
             {"model", to_json(run.model.config)},
             {"schedule", diffusion::to_json(run.schedule_config)},
             {"codec", pipeline::to_json(run.codec)}};
  ck.params = run.params;
  ck.adam = run.adam;
  return ck;
}

DiffusionRun load_diffusion(const fs::path& path) {
  checkpoint::Checkpoint ck = checkpoint::load(path);
  if (ck.meta.value("kind", "") != "diffusion") throw data_error(path.string() + " is not a diffusion checkpoint");
  DiffusionRun run;
  run.stage = ck.meta.at("stage").get<std::string>();
  run.epoch = ck.meta.at("epoch").get<int>();
  run.codec = pipeline::codec_from_json(ck.meta.at("codec"));
  run.schedule_config = diffusion::schedule_config_from_json(ck.meta.at("schedule"));
  run.schedule = diffusion::make_schedule(run.schedule_config.steps, run.schedule_config.beta_min,
                                          run.schedule_config.beta_max);
  run.model = FoleyModel<float>::build(model_config_from_json(ck.meta.at("model")), run.params, 0);
  checkpoint::restore_params(run.params, ck.params, true);
  run.adam = std::move(ck.adam);
  return run;
}

namespace {

std::vector<training::TrainingItem<float>> make_items(const std::vector<pipeline::PreparedClip>& clips,
                                                      const FoleyModel<float>& model, const pipeline::Codec& codec) {
  std::vector<training::TrainingItem<float>> items;
  items.reserve(clips.size());
  for (const auto& c : clips) items.push_back(pipeline::make_item<float>(c, model.vocab, codec));
  return items;
}

void check_stage(const DiffusionRun& run, const std::string& want, const std::string& path) {
  if (run.stage != want)
    throw usage_error(path + " holds a '" + run.stage + "' checkpoint, expected '" + want + "'");
}

void fit_epochs(DiffusionRun& run, training::Adam<float>& opt, const std::vector<training::TrainingItem<float>>& items,
                const RunConfig& cfg, const StageConfig& stage, bool with_adapter, const Log& log,
                const std::function<void(int)>& after_epoch) {
  training::LoopConfig loop;
  loop.epochs = stage.epochs;
  loop.start_epoch = run.epoch;
  loop.batch_size = stage.batch_size;
  loop.seed = cfg.seed;
  loop.with_adapter = with_adapter;
  training::run_epochs(run.model, run.params, opt, items, run.schedule, loop, [&](int epoch, double loss) {
    run.epoch = epoch + 1;
    if (log) log({{"stage", run.stage}, {"epoch", run.epoch}, {"loss", loss}});
    if (after_epoch) after_epoch(run.epoch);
    if (!cfg.checkpoint.empty()) {
      run.adam = checkpoint::capture_adam(opt, run.params);
      checkpoint::save(cfg.checkpoint, to_checkpoint(run));
    }
  });
  run.adam = checkpoint::capture_adam(opt, run.params);
}

}  // namespace

DiffusionRun train_base(const RunConfig& cfg, const Corpus& corpus, const Log& log) {
  cfg.validate();
  DiffusionRun run;
  if (!cfg.resume.empty()) {
    run = load_diffusion(cfg.resume);
    check_stage(run, "base", cfg.resume);
  } else {
    run.stage = "base";
    run.codec = cfg.codec;
    pipeline::fit_reference(run.codec, corpus.train);
    run.schedule_config = cfg.schedule;
    run.schedule = diffusion::make_schedule(cfg.schedule.steps, cfg.schedule.beta_min, cfg.schedule.beta_max);
    run.model = FoleyModel<float>::build(cfg.model, run.params, cfg.seed);
    run.params.set_trainable("adapter", false);
    run.params.set_trainable("cond", false);
  }
  training::Adam<float> opt = run.adam ? checkpoint::restore_adam(*run.adam, run.params)
                                       : training::Adam<float>(run.params, {cfg.base.lr});
  opt.set_lr(cfg.base.lr);
  const auto items = make_items(corpus.train, run.model, run.codec);
  fit_epochs(run, opt, items, cfg, cfg.base, false, log, nullptr);
  return run;
}

DiffusionRun train_adapter(const RunConfig& cfg, const Corpus& corpus, const Log& log, int val_every,
                           std::size_t val_clips) {
  cfg.validate();
  DiffusionRun run;
  if (!cfg.resume.empty()) {
    run = load_diffusion(cfg.resume);
    check_stage(run, "adapter", cfg.resume);
  } else {
    if (cfg.base_checkpoint.empty()) throw usage_error("adapter training needs a base checkpoint");
    run = load_diffusion(cfg.base_checkpoint);
    check_stage(run, "base", cfg.base_checkpoint);
    run.stage = "adapter";
    run.epoch = 0;
    run.adam.reset();
    run.model.config.adapter = cfg.model.adapter;
    run.model.adapter.config = cfg.model.adapter;
    FoleyModel<float>::init_adapter_from_base(run.params);
    run.params.set_trainable("base", false);
    run.params.set_trainable("text", false);
    run.params.set_trainable("adapter", true);
    run.params.set_trainable("cond", true);
  }
  training::Adam<float> opt = run.adam ? checkpoint::restore_adam(*run.adam, run.params)
                                       : training::Adam<float>(run.params, {cfg.adapter.lr});
  opt.set_lr(cfg.adapter.lr);
  const auto items = make_items(corpus.train, run.model, run.codec);
  const std::vector<pipeline::PreparedClip> val(
      corpus.holdout.begin(), corpus.holdout.begin() + static_cast<std::ptrdiff_t>(std::min(val_clips, corpus.holdout.size())));
  metrics::EvalConfig eval;
  eval.activity = cfg.activity;
  fit_epochs(run, opt, items, cfg, cfg.adapter, true, log, [&](int epoch) {
    if (val_every <= 0 || epoch % val_every != 0 || val.empty()) return;
    const auto r = pipeline::evaluate_generation(run.model, run.params, run.schedule, run.codec, val, true,
                                                 cfg.seed, eval);
    if (log) log({{"stage", "adapter"}, {"epoch", epoch}, {"val_iou", r.mean.iou}});
  });
  return run;
}

std::vector<ScalePoint> sweep_scales(DiffusionRun& run, const std::vector<pipeline::PreparedClip>& prompts,
                                     const std::vector<double>& scales, std::uint64_t seed,
                                     const metrics::EvalConfig& eval) {
  if (run.stage != "adapter") throw usage_error("scale sweep needs an adapter checkpoint");
  const double keep = run.model.adapter.config.conditioning_scale;
  std::vector<ScalePoint> out;
  for (double s : scales) {
    run.model.adapter.config.conditioning_scale = s;
    out.push_back({s, pipeline::evaluate_generation(run.model, run.params, run.schedule, run.codec, prompts, true,
                                                    seed, eval)
                          .mean});
  }
  run.model.adapter.config.conditioning_scale = keep;
  return out;
}

json to_json(const std::vector<ScalePoint>& points) {
  json rows = json::array();
  for (const auto& p : points) {
    json r = metrics::to_json(p.report);
    r["scale"] = p.scale;
    rows.push_back(r);
  }
  return rows;
}

// ---------------------------------------------------------------- detector

std::vector<detector::DetectorSample> load_detector_corpus(const fs::path& root,
                                                           const timeline::ActivityConfig& activity) {
  const auto load = data::load_manifest(root / "manifest.jsonl");
  if (!load.errors.empty())
    throw data_error("manifest line " + std::to_string(load.errors.front().line) + ": " + load.errors.front().message);
  std::vector<detector::DetectorSample> out(load.entries.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i) {
    const auto& e = load.entries[static_cast<std::size_t>(i)];
    const auto f = binio::read_features(root / "features" / (e.id + ".bin"));
    auto& s = out[static_cast<std::size_t>(i)];
    s.features = f.features.cast<float>();
    s.target = detector::build_target(dsp::load_wav(root / e.audio_path), activity,
                                      static_cast<std::size_t>(f.features.rows()));
  }
  return out;
}

checkpoint::Checkpoint to_checkpoint(const DetectorRun& run) {
  checkpoint::Checkpoint ck;
  ck.meta = {{"kind", "detector"}, {"epoch", run.epoch}, {"detector", detector::to_json(run.det.config)}};
  ck.params = run.params;
  ck.adam = run.adam;
  return ck;
}

DetectorRun load_detector(const fs::path& path) {
  checkpoint::Checkpoint ck = checkpoint::load(path);
  if (ck.meta.value("kind", "") != "detector") throw data_error(path.string() + " is not a detector checkpoint");
  DetectorRun run;
  Rng rng(0);
  run.det = detector::Detector<float>::make(run.params, detector::detector_config_from_json(ck.meta.at("detector")), rng);
  checkpoint::restore_params(run.params, ck.params, true);
  run.epoch = ck.meta.at("epoch").get<int>();
  run.adam = std::move(ck.adam);
  return run;
}

DetectorRun train_detector(const RunConfig& cfg, const std::vector<detector::DetectorSample>& train, const Log& log) {
  cfg.validate();
  DetectorRun run;
  if (!cfg.resume.empty()) {
    run = load_detector(cfg.resume);
  } else {
    Rng rng = derive_rng(cfg.seed, {0xDE7Eull});
    run.det = detector::Detector<float>::make(run.params, cfg.detector, rng);
  }
  training::Adam<float> opt = run.adam ? checkpoint::restore_adam(*run.adam, run.params)
                                       : training::Adam<float>(run.params, {cfg.detector_stage.lr});
  opt.set_lr(cfg.detector_stage.lr);
  detector::DetectorLoop loop;
  loop.epochs = cfg.detector_stage.epochs;
  loop.start_epoch = run.epoch;
  loop.batch_size = cfg.detector_stage.batch_size;
  loop.seed = cfg.seed;
  detector::train_detector(run.det, run.params, opt, train, loop, [&](int epoch, double loss) {
    run.epoch = epoch + 1;
    if (log) log({{"stage", "detector"}, {"epoch", run.epoch}, {"loss", loss}});
    if (!cfg.checkpoint.empty()) {
      run.adam = checkpoint::capture_adam(opt, run.params);
      checkpoint::save(cfg.checkpoint, to_checkpoint(run));
    }
  });
  run.adam = checkpoint::capture_adam(opt, run.params);
  return run;
}

double pooled_frame_ap(const DetectorRun& run, const std::vector<detector::DetectorSample>& samples) {
  std::vector<double> scores;
  std::vector<std::uint8_t> bits;
  for (const auto& s : samples) {
    detector::Detector<float>::Cache cache;
    const auto probs = run.det.forward(run.params, s.features, cache);
    for (Eigen::Index t = 0; t < probs.size(); ++t) {
      scores.push_back(probs[t]);
      bits.push_back(s.target.target.bits[static_cast<std::size_t>(t)]);
    }
  }
  return detector::frame_average_precision(scores, bits);
}

}  // namespace tcfoley::workflow
