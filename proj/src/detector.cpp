#include "tcfoley/detector.hpp"

#include <nlohmann/json.hpp>

#include <numeric>

namespace tcfoley::detector {

WeightedTarget weighted_target(const timeline::EventTrack& track, std::size_t frames, double duration_s) {
  if (frames == 0) throw usage_error("target needs at least one frame");
  if (!(duration_s > 0.0)) throw data_error("target duration must be positive");
  WeightedTarget out;
  out.target.frame_rate = static_cast<double>(frames) / duration_s;
  out.target.bits.assign(frames, 0);
  out.weights.assign(frames, 1.0);
  const double total = track.total_duration();
  if (track.intervals.empty() || !(total > 0.0)) return out;
  const double K = static_cast<double>(track.intervals.size());
  const double cell = duration_s / static_cast<double>(frames);
  // Overlaps below this are rounding residue from frame-aligned boundaries.
  const double eps = 1e-9 * cell;
  for (std::size_t t = 0; t < frames; ++t) {
    const double lo = static_cast<double>(t) * cell, hi = lo + cell;
    double best = eps;
    for (const auto& iv : track.intervals) {
      const double overlap = std::min(hi, iv.end_s) - std::max(lo, iv.start_s);
      if (overlap > best) {
        best = overlap;
        out.target.bits[t] = 1;
        out.weights[t] = iv.duration() / total * K;
      }
    }
  }
  return out;
}

WeightedTarget build_target(const dsp::Waveform& audio, const timeline::ActivityConfig& cfg,
                            std::size_t video_frames) {
  if (audio.samples.empty()) throw data_error("build_target: empty audio");
  return weighted_target(timeline::extract_track(audio, cfg), video_frames, audio.duration_s());
}

void DetectorConfig::validate() const {
  if (input_dim < 1 || hidden < 1 || layers < 0) throw usage_error("detector config: sizes must be positive");
}

nlohmann::json to_json(const DetectorConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden}, {"layers", c.layers}};
}

DetectorConfig detector_config_from_json(const nlohmann::json& j) {
  DetectorConfig c;
  c.input_dim = j.value("input_dim", c.input_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.validate();
  return c;
}

BceResult weighted_bce(const VectorXd& probs, const WeightedTarget& target) {
  const auto T = static_cast<std::size_t>(probs.size());
  if (T != target.target.size() || T != target.weights.size())
    throw data_error("weighted_bce: prediction length " + std::to_string(T) + " != target length " +
                     std::to_string(target.target.size()));
  constexpr double kEps = 1e-7;
  const double wsum = std::accumulate(target.weights.begin(), target.weights.end(), 0.0);
  if (!(wsum > 0.0)) throw data_error("weighted_bce: weights must sum to a positive value");
  BceResult r;
  r.d_logits = VectorXd::Zero(static_cast<Eigen::Index>(T));
  for (std::size_t t = 0; t < T; ++t) {
    const double raw = probs[static_cast<Eigen::Index>(t)];
    const double p = std::clamp(raw, kEps, 1.0 - kEps);
    const double y = target.target.bits[t];
    const double w = target.weights[t] / wsum;
    r.loss += w * (-y * std::log(p) - (1.0 - y) * std::log(1.0 - p));
    if (raw == p) r.d_logits[static_cast<Eigen::Index>(t)] = w * (p - y);
  }
  return r;
}

timeline::BinaryTimeline threshold_predictions(const VectorXd& probs, double frame_rate, double threshold) {
  timeline::BinaryTimeline t;
  t.frame_rate = frame_rate;
  t.bits.resize(static_cast<std::size_t>(probs.size()));
  for (Eigen::Index i = 0; i < probs.size(); ++i) t.bits[static_cast<std::size_t>(i)] = probs[i] >= threshold;
  return t;
}

double frame_average_precision(const std::vector<double>& scores, const std::vector<std::uint8_t>& bits) {
  if (scores.size() != bits.size()) throw data_error("frame AP: length mismatch");
  const auto positives = static_cast<double>(std::count(bits.begin(), bits.end(), 1));
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  if (positives == 0.0) return 1.0;
  double ap = 0.0, tp = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!bits[order[k]]) continue;
    tp += 1.0;
    ap += tp / static_cast<double>(k + 1);
  }
  return ap / positives;
}

namespace {

double clip_step(const Detector<float>& det, const ParamSet<float>& p, const DetectorSample& s,
                 GradSet<float>* g) {
  Detector<float>::Cache cache;
  const VectorXd probs = det.forward(p, s.features, cache).cast<double>();
  const BceResult r = weighted_bce(probs, s.target);
  if (g != nullptr) det.backward(p, cache, r.d_logits.transpose().cast<float>(), *g);
  return r.loss;
}

}  // namespace

void train_detector(const Detector<float>& det, ParamSet<float>& p, training::Adam<float>& opt,
                    const std::vector<DetectorSample>& data, const DetectorLoop& loop,
                    const std::function<void(int, double)>& on_epoch) {
  if (data.empty()) throw usage_error("detector training set is empty");
  const auto bs = static_cast<std::size_t>(std::max(1, loop.batch_size));
  GradSet<float> grads(p, false);
  for (int epoch = loop.start_epoch; epoch < loop.epochs; ++epoch) {
    const auto order = training::epoch_order(data.size(), loop.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t n = std::min(order.size(), start + bs) - start;
      std::vector<std::optional<GradSet<float>>> per(n);
      std::vector<double> losses(n);
#pragma omp parallel for schedule(dynamic, 1)
      for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(n); ++k) {
        auto& g = per[static_cast<std::size_t>(k)].emplace(p, false);
        losses[static_cast<std::size_t>(k)] = clip_step(det, p, data[order[start + static_cast<std::size_t>(k)]], &g);
      }
      grads.set_zero();
      for (auto& g : per) grads += *g;
      grads.scale(1.0f / static_cast<float>(n));
      opt.step(p, grads);
      loss_sum += std::accumulate(losses.begin(), losses.end(), 0.0);
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(data.size()));
  }
}

double detector_loss(const Detector<float>& det, const ParamSet<float>& p, const std::vector<DetectorSample>& data) {
  if (data.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : data) sum += clip_step(det, p, s, nullptr);
  return sum / static_cast<double>(data.size());
}

}  // namespace tcfoley::detector
