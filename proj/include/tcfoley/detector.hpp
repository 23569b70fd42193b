#pragma once

// Per-frame sound-presence detector over precomputed visual features, trained
// with a duration-weighted binary cross-entropy.

#include "tcfoley/binio.hpp"
#include "tcfoley/nn.hpp"
#include "tcfoley/params.hpp"
#include "tcfoley/timeline.hpp"
#include "tcfoley/training.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>

namespace tcfoley::detector {

struct WeightedTarget {
  timeline::BinaryTimeline target;  // V_ct
  std::vector<double> weights;
};

/// Weights for a track laid on `frames` frames spanning `duration_s`: a frame
/// of event k gets (dur_k / total) * K, silent frames get 1. A frame touched
/// by several events belongs to the one it overlaps most.
WeightedTarget weighted_target(const timeline::EventTrack& track, std::size_t frames, double duration_s);

/// Extracts the audio's track and lays it onto the video frame grid.
WeightedTarget build_target(const dsp::Waveform& audio, const timeline::ActivityConfig& cfg,
                            std::size_t video_frames);

struct DetectorConfig {
  int input_dim = 8;
  int hidden = 16;
  int layers = 2;  // kernel-3 temporal convolutions, same padding
  void validate() const;
};

nlohmann::json to_json(const DetectorConfig& c);
DetectorConfig detector_config_from_json(const nlohmann::json& j);

/// Three-tap moving average with edge renormalization. Symmetric, so it keeps
/// the stack time-reversal equivariant.
template <typename Scalar>
Mat<Scalar> smooth3(const Mat<Scalar>& x) {
  const Eigen::Index t = x.cols();
  Mat<Scalar> y = x;
  if (t > 1) {
    y.leftCols(t - 1) += x.rightCols(t - 1);
    y.rightCols(t - 1) += x.leftCols(t - 1);
  }
  for (Eigen::Index j = 0; j < t; ++j) y.col(j) /= static_cast<Scalar>(1 + (j > 0) + (j + 1 < t));
  return y;
}

template <typename Scalar>
Mat<Scalar> smooth3_backward(const Mat<Scalar>& dy) {
  const Eigen::Index t = dy.cols();
  Mat<Scalar> s = dy;
  for (Eigen::Index j = 0; j < t; ++j) s.col(j) /= static_cast<Scalar>(1 + (j > 0) + (j + 1 < t));
  Mat<Scalar> dx = s;
  if (t > 1) {
    dx.rightCols(t - 1) += s.leftCols(t - 1);
    dx.leftCols(t - 1) += s.rightCols(t - 1);
  }
  return dx;
}

template <typename Scalar>
struct Detector {
  DetectorConfig config;
  std::vector<nn::Conv3<Scalar>> convs;
  nn::Dense<Scalar> head;

  struct Cache {
    std::vector<Mat<Scalar>> in3, pre;  // per conv layer
    Mat<Scalar> pooled, logits, probs;
  };

  static Detector make(ParamSet<Scalar>& p, const DetectorConfig& c, Rng& rng) {
    c.validate();
    Detector d;
    d.config = c;
    int in = c.input_dim;
    for (int l = 0; l < c.layers; ++l) {
      d.convs.push_back(nn::Conv3<Scalar>::make(p, "det.conv" + std::to_string(l + 1), in, c.hidden, rng));
      in = c.hidden;
    }
    d.head = nn::Dense<Scalar>::make(p, "det.head", in, 1, rng);
    return d;
  }

  /// `features` is T x D (one row per video frame). Returns T probabilities.
  Vec<Scalar> forward(const ParamSet<Scalar>& p, const Mat<Scalar>& features, Cache& c) const {
    if (features.cols() != config.input_dim)
      throw data_error("detector expects feature width " + std::to_string(config.input_dim) + ", got " +
                       std::to_string(features.cols()));
    if (features.rows() < 1) throw data_error("detector input has no frames");
    Mat<Scalar> h = features.transpose();
    c.in3.clear();
    c.pre.clear();
    for (const auto& conv : convs) {
      c.in3.push_back(nn::unfold3(h));
      c.pre.push_back(conv.forward(p, c.in3.back()));
      h = nn::silu(c.pre.back());
    }
    c.pooled = smooth3(h);
    c.logits = head.forward(p, c.pooled);
    c.probs = c.logits.unaryExpr([](Scalar v) { return nn::sigmoid(v); });
    return c.probs.row(0).transpose();
  }

  /// Backpropagates dL/dlogits (1 x T).
  void backward(const ParamSet<Scalar>& p, const Cache& c, const Mat<Scalar>& d_logits, GradSet<Scalar>& g) const {
    Mat<Scalar> dh = smooth3_backward<Scalar>(head.backward(p, c.pooled, d_logits, g));
    for (std::size_t l = convs.size(); l-- > 0;) {
      const Mat<Scalar> dpre = nn::silu_backward(c.pre[l], dh);
      dh = convs[l].backward(p, c.in3[l], dpre, g);
    }
  }
};

struct BceResult {
  double loss = 0.0;
  VectorXd d_logits;  // dL/dlogit per frame
};

/// sum_t w_t [-y log p - (1-y) log(1-p)] / sum_t w_t with p clamped to
/// [1e-7, 1 - 1e-7]. Gradients are taken w.r.t. the logits behind `probs`
/// (zero where the clamp is active).
BceResult weighted_bce(const VectorXd& probs, const WeightedTarget& target);

/// bit = 1 iff p >= threshold.
timeline::BinaryTimeline threshold_predictions(const VectorXd& probs, double frame_rate, double threshold = 0.5);

/// Frame-level average precision of scores against bits (ties broken by
/// frame index). 1 when there are no positives and no scores exceed zero.
double frame_average_precision(const std::vector<double>& scores, const std::vector<std::uint8_t>& bits);

struct DetectorSample {
  Mat<float> features;  // T x D
  WeightedTarget target;
};

struct DetectorLoop {
  int epochs = 200;
  int start_epoch = 0;
  int batch_size = 24;
  std::uint64_t seed = 0;
};

/// Weighted BCE averaged over each mini-batch; per-clip gradients are reduced
/// in batch order. `on_epoch(epoch, mean_loss)` runs after every epoch.
void train_detector(const Detector<float>& det, ParamSet<float>& p, training::Adam<float>& opt,
                    const std::vector<DetectorSample>& data, const DetectorLoop& loop,
                    const std::function<void(int, double)>& on_epoch);

/// Mean loss over a set, without gradients.
double detector_loss(const Detector<float>& det, const ParamSet<float>& p, const std::vector<DetectorSample>& data);

}  // namespace tcfoley::detector
