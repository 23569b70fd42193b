#pragma once

// Independent oracles shared by the unit tests and the acceptance binary.
// Nothing here calls into the code it is used to check.

#include "tcfoley/detector.hpp"
#include "tcfoley/model.hpp"
#include "tcfoley/training.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace tcfoley::testing {

// ---------------------------------------------------------------- timeline

/// Two-phase oracle: lay every maximal run out as a time interval, then keep
/// fusing neighbours whose gap is at most merge_gap_s until nothing changes.
inline timeline::EventTrack oracle_merge(const std::vector<bool>& frames, const timeline::ActivityConfig& cfg,
                                         double duration_s) {
  const double lead = 0.5 * (cfg.frame_len_s - cfg.hop_s);
  std::vector<std::pair<long, long>> runs;  // [first, last] frame indices
  for (long k = 0; k < static_cast<long>(frames.size()); ++k) {
    if (!frames[static_cast<std::size_t>(k)]) continue;
    if (!runs.empty() && runs.back().second == k - 1)
      runs.back().second = k;
    else
      runs.push_back({k, k});
  }
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
      const double gap = static_cast<double>(runs[i + 1].first - runs[i].second - 1) * cfg.hop_s;
      if (gap <= cfg.merge_gap_s + 1e-9) {
        runs[i].second = runs[i + 1].second;
        runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        changed = true;
        break;
      }
    }
  }
  timeline::EventTrack track;
  track.source_duration_s = duration_s;
  for (const auto& [a, b] : runs) {
    const double s = std::min(std::max(static_cast<double>(a) * cfg.hop_s + lead, 0.0), duration_s);
    const double e = std::min(std::max(static_cast<double>(b + 1) * cfg.hop_s + lead, 0.0), duration_s);
    if (e > s) track.intervals.push_back({s, e});
  }
  return track;
}

/// Frame RMS in dBFS over a fixed-length window, zero-padded past the end.
inline std::vector<bool> oracle_activity(const dsp::Waveform& w, const timeline::ActivityConfig& cfg) {
  const long hop = std::lround(cfg.hop_s * w.sample_rate);
  const long len = std::lround(cfg.frame_len_s * w.sample_rate);
  const long n = static_cast<long>(w.samples.size());
  std::vector<bool> out;
  for (long start = 0; start < n; start += hop) {
    double energy = 0.0;
    for (long i = start; i < start + len; ++i) {
      const double x = i < n ? w.samples[static_cast<std::size_t>(i)] : 0.0;
      energy += x * x;
    }
    const double power = energy / static_cast<double>(len);
    out.push_back(power > 0.0 && 10.0 * std::log10(power) > cfg.threshold_db);
  }
  return out;
}

/// Random activity pattern whose gaps cluster around the merge boundary.
inline std::vector<bool> random_pattern(Rng& rng, std::size_t frames, std::size_t boundary_gap) {
  std::vector<bool> out(frames, false);
  std::size_t k = rng() % 4;
  while (k < frames) {
    const std::size_t run = 1 + rng() % 8;
    for (std::size_t i = k; i < std::min(frames, k + run); ++i) out[i] = true;
    std::size_t gap;
    switch (rng() % 4) {
      case 0: gap = boundary_gap; break;
      case 1: gap = boundary_gap + 1; break;
      case 2: gap = 1 + rng() % std::max<std::size_t>(boundary_gap, 1); break;
      default: gap = 1 + rng() % 12; break;
    }
    k += run + gap;
  }
  return out;
}

// ---------------------------------------------------------------- gradients

struct GradCheck {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

/// Relative error with a floor so that gradients that are zero up to rounding
/// compare on an absolute scale.
inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Central differences for `count` scalars drawn uniformly from the whole
/// parameter set (every slot weighted by its size).
template <typename LossFn>
GradCheck check_gradients(ParamSet<double>& p, const GradSet<double>& g, const LossFn& loss, std::size_t count,
                          std::uint64_t seed, double h = 1e-4) {
  std::vector<std::pair<std::size_t, Eigen::Index>> pool;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (g.active(i))
      for (Eigen::Index k = 0; k < p[i].size(); ++k) pool.push_back({i, k});
  Rng rng(seed);
  GradCheck out;
  for (std::size_t c = 0; c < count && !pool.empty(); ++c) {
    const auto [slot, k] = pool[rng() % pool.size()];
    double& x = p.mutable_value(slot).data()[k];
    const double keep = x;
    x = keep + h;
    const double up = loss();
    x = keep - h;
    const double down = loss();
    x = keep;
    const double numeric = (up - down) / (2.0 * h);
    out.max_rel_error = std::max(out.max_rel_error, rel_error(g[slot].data()[k], numeric));
    ++out.checked;
  }
  return out;
}

inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.denoiser.latent_dim = 4;
  c.denoiser.width = 8;
  c.denoiser.depth = 2;
  c.denoiser.text_dim = 6;
  c.denoiser.key_dim = 5;
  c.cond_encoder.hidden_channels = 3;
  c.cond_encoder.out_channels = 2;
  c.n_mels = 16;
  c.vocabulary = {"one", "two", "low", "high", "beep", "beeps", "hiss"};
  return c;
}

/// dm_loss with the adapter path, every parameter trainable and the zero
/// layers moved off zero so that all branches carry gradient.
inline GradCheck check_dm_loss_gradients(std::size_t count, std::uint64_t seed) {
  ParamSet<double> p;
  const auto model = FoleyModel<double>::build(tiny_model_config(), p, seed);
  Rng rng(seed + 1);
  for (std::size_t i = 0; i < p.size(); ++i) p.mutable_value(i) += normal_matrix<double>(p[i].rows(), p[i].cols(), rng, 0.1);
  const auto s = diffusion::make_schedule(10, 1e-3, 0.2);

  std::vector<training::TrainingItem<double>> items(3);
  for (std::size_t i = 0; i < items.size(); ++i) {
    items[i].latent = normal_matrix<double>(4, 6, rng);
    items[i].tokens = model.vocab.tokenize(i % 2 ? "two high beeps" : "one low hiss");
    items[i].condition = MatrixXd::Zero(16, 24);
    items[i].condition.middleCols(4 * i, 8).setOnes();
  }
  std::vector<const training::TrainingItem<double>*> batch;
  for (const auto& it : items) batch.push_back(&it);

  GradSet<double> g(p, true);
  training::dm_loss(model, p, batch, s, true, seed, 7, &g);
  auto loss = [&] { return training::dm_loss<double>(model, p, batch, s, true, seed, 7, nullptr); };
  return check_gradients(p, g, loss, count, seed + 2);
}

/// weighted_bce composed with the detector forward, checked on detector
/// parameters and directly on the logits.
inline GradCheck check_weighted_bce_gradients(std::size_t count, std::uint64_t seed) {
  ParamSet<double> p;
  Rng rng(seed);
  detector::DetectorConfig dc;
  dc.input_dim = 5;
  dc.hidden = 6;
  dc.layers = 2;
  const auto det = detector::Detector<double>::make(p, dc, rng);
  const MatrixXd x = normal_matrix<double>(20, 5, rng);
  timeline::EventTrack track;
  track.source_duration_s = 2.0;
  track.intervals = {{0.2, 0.5}, {0.9, 1.6}};
  const auto target = detector::weighted_target(track, 20, 2.0);

  auto loss = [&] {
    detector::Detector<double>::Cache c;
    return detector::weighted_bce(det.forward(p, x, c), target).loss;
  };
  detector::Detector<double>::Cache c;
  const VectorXd probs = det.forward(p, x, c);
  const auto bce = detector::weighted_bce(probs, target);
  GradSet<double> g(p, true);
  det.backward(p, c, bce.d_logits.transpose(), g);
  GradCheck out = check_gradients(p, g, loss, count, seed + 1);

  // Logit-level check: perturb the logits themselves.
  VectorXd logits = normal_matrix<double>(20, 1, rng, 2.0).col(0);
  auto sig = [](const VectorXd& l) { return VectorXd(l.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); })); };
  const auto at = detector::weighted_bce(sig(logits), target);
  for (Eigen::Index t = 0; t < logits.size(); ++t) {
    const double keep = logits[t];
    logits[t] = keep + 1e-4;
    const double up = detector::weighted_bce(sig(logits), target).loss;
    logits[t] = keep - 1e-4;
    const double down = detector::weighted_bce(sig(logits), target).loss;
    logits[t] = keep;
    out.max_rel_error = std::max(out.max_rel_error, rel_error(at.d_logits[t], (up - down) / 2e-4));
    ++out.checked;
  }
  return out;
}

}  // namespace tcfoley::testing
