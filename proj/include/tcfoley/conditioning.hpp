#pragma once

#include "tcfoley/dsp.hpp"
#include "tcfoley/params.hpp"
#include "tcfoley/nn.hpp"
#include "tcfoley/timeline.hpp"

#include <optional>

namespace tcfoley::conditioning {

/// Condition grid a_c: n_mels x n_frames in [0, 1].
struct ConditionSpec {
  MatrixXd values;
  double frame_rate = 62.5;
};

enum class ConditionMode { kMaskOnly, kMaxWithMel };

/// mask-only: column j is all ones iff bit j is set. max-with-mel: elementwise
/// max of the normalized reference mel and the frame bit.
ConditionSpec build_condition(const timeline::BinaryTimeline& t, Eigen::Index n_mels, Eigen::Index n_frames,
                              ConditionMode mode = ConditionMode::kMaskOnly,
                              const dsp::MelSpectrogram* reference = nullptr);

struct EncoderConfig {
  int hidden_channels = 8;
  int out_channels = 4;
  bool pooling_fallback = false;  // parameter-free 4x4 average pool

  /// Rows of the embedding for a grid with `n_mels` mel bins.
  int embedding_rows(int n_mels) const { return (pooling_fallback ? 1 : out_channels) * (n_mels / 4); }
};

/// Maps a condition grid (F x T) to A_ct: (C * F/4) x (T/4). Row index is
/// c * (F/4) + f. Two 2x2 stride-2 patch layers with SiLU between them, or a
/// 4x4 average pool in fallback mode.
template <typename Scalar>
struct ConditionEncoder {
  EncoderConfig config;
  std::size_t w1 = 0, b1 = 0, w2 = 0, b2 = 0;

  struct Cache {
    Mat<Scalar> patches1, pre1, act1, patches2;
    Eigen::Index f1 = 0, t1 = 0, f2 = 0, t2 = 0;
  };

  static ConditionEncoder make(ParamSet<Scalar>& p, const std::string& name, const EncoderConfig& c, Rng& rng) {
    ConditionEncoder e;
    e.config = c;
    if (c.pooling_fallback) return e;
    e.w1 = p.add(name + ".l1.w", normal_matrix<Scalar>(c.hidden_channels, 4, rng, 0.5));
    e.b1 = p.add(name + ".l1.b", Mat<Scalar>::Zero(c.hidden_channels, 1));
    e.w2 = p.add(name + ".l2.w",
                 normal_matrix<Scalar>(c.out_channels, 4 * c.hidden_channels, rng, 1.0 / std::sqrt(4.0 * c.hidden_channels)));
    e.b2 = p.add(name + ".l2.b", Mat<Scalar>::Zero(c.out_channels, 1));
    return e;
  }

  static void check_shape(Eigen::Index f, Eigen::Index t) {
    if (f % 4 != 0 || t % 4 != 0 || f == 0 || t == 0)
      throw data_error("condition grid " + std::to_string(f) + "x" + std::to_string(t) +
                       " is not divisible by the encoder downsample factor 4");
  }

  Mat<Scalar> forward(const ParamSet<Scalar>& p, const Mat<Scalar>& spec, Cache& c) const {
    const Eigen::Index F = spec.rows(), T = spec.cols();
    check_shape(F, T);
    if (config.pooling_fallback) {
      Mat<Scalar> out(F / 4, T / 4);
      for (Eigen::Index t = 0; t < T / 4; ++t)
        for (Eigen::Index f = 0; f < F / 4; ++f) out(f, t) = spec.block(4 * f, 4 * t, 4, 4).mean();
      return out;
    }
    const int C1 = config.hidden_channels, C2 = config.out_channels;
    c.f1 = F / 2;
    c.t1 = T / 2;
    c.f2 = F / 4;
    c.t2 = T / 4;
    c.patches1.resize(4, c.f1 * c.t1);
    for (Eigen::Index t = 0; t < c.t1; ++t)
      for (Eigen::Index f = 0; f < c.f1; ++f) {
        const Eigen::Index col = t * c.f1 + f;
        c.patches1(0, col) = spec(2 * f, 2 * t);
        c.patches1(1, col) = spec(2 * f, 2 * t + 1);
        c.patches1(2, col) = spec(2 * f + 1, 2 * t);
        c.patches1(3, col) = spec(2 * f + 1, 2 * t + 1);
      }
    c.pre1 = p[w1] * c.patches1;
    c.pre1.colwise() += p[b1].col(0);
    c.act1 = nn::silu(c.pre1);  // C1 x (f1 * t1)
    c.patches2.resize(4 * C1, c.f2 * c.t2);
    for (Eigen::Index t = 0; t < c.t2; ++t)
      for (Eigen::Index f = 0; f < c.f2; ++f) {
        const Eigen::Index col = t * c.f2 + f;
        int k = 0;
        for (int dt = 0; dt < 2; ++dt)
          for (int df = 0; df < 2; ++df, ++k)
            c.patches2.block(k * C1, col, C1, 1) = c.act1.col((2 * t + dt) * c.f1 + 2 * f + df);
      }
    Mat<Scalar> pre2 = p[w2] * c.patches2;
    pre2.colwise() += p[b2].col(0);
    Mat<Scalar> out(C2 * c.f2, c.t2);
    for (Eigen::Index t = 0; t < c.t2; ++t)
      for (Eigen::Index f = 0; f < c.f2; ++f)
        for (int ch = 0; ch < C2; ++ch) out(ch * c.f2 + f, t) = pre2(ch, t * c.f2 + f);
    return out;
  }

  void backward(const ParamSet<Scalar>& p, const Cache& c, const Mat<Scalar>& d_out, GradSet<Scalar>& g) const {
    if (config.pooling_fallback) return;
    const int C1 = config.hidden_channels, C2 = config.out_channels;
    Mat<Scalar> dpre2(C2, c.f2 * c.t2);
    for (Eigen::Index t = 0; t < c.t2; ++t)
      for (Eigen::Index f = 0; f < c.f2; ++f)
        for (int ch = 0; ch < C2; ++ch) dpre2(ch, t * c.f2 + f) = d_out(ch * c.f2 + f, t);
    if (g.active(w2)) g[w2].noalias() += dpre2 * c.patches2.transpose();
    if (g.active(b2)) g[b2] += dpre2.rowwise().sum();
    if (!g.active(w1) && !g.active(b1)) return;
    const Mat<Scalar> dpatch2 = p[w2].transpose() * dpre2;
    Mat<Scalar> dact1 = Mat<Scalar>::Zero(C1, c.f1 * c.t1);
    for (Eigen::Index t = 0; t < c.t2; ++t)
      for (Eigen::Index f = 0; f < c.f2; ++f) {
        const Eigen::Index col = t * c.f2 + f;
        int k = 0;
        for (int dt = 0; dt < 2; ++dt)
          for (int df = 0; df < 2; ++df, ++k)
            dact1.col((2 * t + dt) * c.f1 + 2 * f + df) += dpatch2.block(k * C1, col, C1, 1);
      }
    const Mat<Scalar> dpre1 = nn::silu_backward(c.pre1, dact1);
    if (g.active(w1)) g[w1].noalias() += dpre1 * c.patches1.transpose();
    if (g.active(b1)) g[b1] += dpre1.rowwise().sum();
  }
};

}  // namespace tcfoley::conditioning
