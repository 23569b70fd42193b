#pragma once

// Small dense layers over feature x time matrices with hand-written reverse
// passes. Activations are (features x frames); a "1x1" layer mixes features at
// every frame independently.

#include "tcfoley/params.hpp"

#include <cmath>

namespace tcfoley::nn {

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Scalar>
Mat<Scalar> silu(const Mat<Scalar>& a) {
  return a.unaryExpr([](Scalar x) { return x * sigmoid(x); });
}

/// d silu / da evaluated at a, multiplied by the upstream gradient.
template <typename Scalar>
Mat<Scalar> silu_backward(const Mat<Scalar>& a, const Mat<Scalar>& dy) {
  return a.binaryExpr(dy, [](Scalar x, Scalar g) {
    const Scalar s = sigmoid(x);
    return g * s * (Scalar(1) + x * (Scalar(1) - s));
  });
}

/// Stacks [x(t-1); x(t); x(t+1)] with zero padding at both ends.
template <typename Scalar>
Mat<Scalar> unfold3(const Mat<Scalar>& x) {
  const Eigen::Index c = x.rows(), t = x.cols();
  Mat<Scalar> out = Mat<Scalar>::Zero(3 * c, t);
  if (t > 1) {
    out.block(0, 1, c, t - 1) = x.leftCols(t - 1);
    out.block(2 * c, 0, c, t - 1) = x.rightCols(t - 1);
  }
  out.middleRows(c, c) = x;
  return out;
}

/// Adjoint of unfold3.
template <typename Scalar>
Mat<Scalar> fold3(const Mat<Scalar>& d, Eigen::Index c) {
  const Eigen::Index t = d.cols();
  Mat<Scalar> dx = d.middleRows(c, c);
  if (t > 1) {
    dx.leftCols(t - 1) += d.block(0, 1, c, t - 1);
    dx.rightCols(t - 1) += d.block(2 * c, 0, c, t - 1);
  }
  return dx;
}

/// y = W x + b at every frame.
template <typename Scalar>
struct Dense {
  std::size_t w = 0, b = 0;
  int in = 0, out = 0;

  static Dense make(ParamSet<Scalar>& p, const std::string& name, int in, int out, Rng& rng, double gain = 1.0) {
    Dense d;
    d.in = in;
    d.out = out;
    d.w = p.add(name + ".w", normal_matrix<Scalar>(out, in, rng, gain / std::sqrt(static_cast<double>(in))));
    d.b = p.add(name + ".b", Mat<Scalar>::Zero(out, 1));
    return d;
  }
  static Dense zeros(ParamSet<Scalar>& p, const std::string& name, int in, int out) {
    Dense d;
    d.in = in;
    d.out = out;
    d.w = p.add(name + ".w", Mat<Scalar>::Zero(out, in));
    d.b = p.add(name + ".b", Mat<Scalar>::Zero(out, 1));
    return d;
  }

  Mat<Scalar> forward(const ParamSet<Scalar>& p, const Mat<Scalar>& x) const {
    Mat<Scalar> y = p[w] * x;
    y.colwise() += p[b].col(0);
    return y;
  }

  /// Accumulates weight gradients and returns dL/dx.
  Mat<Scalar> backward(const ParamSet<Scalar>& p, const Mat<Scalar>& x, const Mat<Scalar>& dy,
                       GradSet<Scalar>& g) const {
    if (g.active(w)) g[w].noalias() += dy * x.transpose();
    if (g.active(b)) g[b] += dy.rowwise().sum();
    return p[w].transpose() * dy;
  }
};

/// Kernel-3, stride-1, same-padded temporal convolution.
template <typename Scalar>
struct Conv3 {
  Dense<Scalar> lin;  // acts on unfold3(x)

  static Conv3 make(ParamSet<Scalar>& p, const std::string& name, int in, int out, Rng& rng, double gain = 1.0) {
    return Conv3{Dense<Scalar>::make(p, name, 3 * in, out, rng, gain)};
  }
  Mat<Scalar> forward(const ParamSet<Scalar>& p, const Mat<Scalar>& x3) const { return lin.forward(p, x3); }
  Mat<Scalar> backward(const ParamSet<Scalar>& p, const Mat<Scalar>& x3, const Mat<Scalar>& dy,
                       GradSet<Scalar>& g) const {
    return fold3<Scalar>(lin.backward(p, x3, dy, g), lin.in / 3);
  }
};

/// Single-head cross-attention from frames (queries) to context tokens.
template <typename Scalar>
struct CrossAttention {
  std::size_t wq = 0, wk = 0, wv = 0, wo = 0;
  int width = 0, ctx_dim = 0, key_dim = 0;

  struct Cache {
    Mat<Scalar> q, k, v, probs, mixed;
  };

  static CrossAttention make(ParamSet<Scalar>& p, const std::string& name, int width, int ctx_dim, int key_dim,
                             Rng& rng) {
    CrossAttention a;
    a.width = width;
    a.ctx_dim = ctx_dim;
    a.key_dim = key_dim;
    a.wq = p.add(name + ".wq", normal_matrix<Scalar>(key_dim, width, rng, 1.0 / std::sqrt(double(width))));
    a.wk = p.add(name + ".wk", normal_matrix<Scalar>(key_dim, ctx_dim, rng, 1.0 / std::sqrt(double(ctx_dim))));
    a.wv = p.add(name + ".wv", normal_matrix<Scalar>(width, ctx_dim, rng, 1.0 / std::sqrt(double(ctx_dim))));
    a.wo = p.add(name + ".wo", normal_matrix<Scalar>(width, width, rng, 0.5 / std::sqrt(double(width))));
    return a;
  }

  /// h: width x T, ctx: ctx_dim x L. Returns width x T.
  Mat<Scalar> forward(const ParamSet<Scalar>& p, const Mat<Scalar>& h, const Mat<Scalar>& ctx, Cache& c) const {
    const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(key_dim));
    c.q = p[wq] * h;
    c.k = p[wk] * ctx;
    c.v = p[wv] * ctx;
    Mat<Scalar> scores = (c.k.transpose() * c.q) * inv_sqrt;  // L x T
    for (Eigen::Index t = 0; t < scores.cols(); ++t) {
      const Scalar mx = scores.col(t).maxCoeff();
      scores.col(t) = (scores.col(t).array() - mx).exp().matrix();
      scores.col(t) /= scores.col(t).sum();
    }
    c.probs = std::move(scores);
    c.mixed = c.v * c.probs;
    return p[wo] * c.mixed;
  }

  /// Adds into dh and dctx.
  void backward(const ParamSet<Scalar>& p, const Mat<Scalar>& h, const Mat<Scalar>& ctx, const Cache& c,
                const Mat<Scalar>& dy, GradSet<Scalar>& g, Mat<Scalar>& dh, Mat<Scalar>& dctx) const {
    const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(key_dim));
    if (g.active(wo)) g[wo].noalias() += dy * c.mixed.transpose();
    const Mat<Scalar> dmixed = p[wo].transpose() * dy;
    const Mat<Scalar> dv = dmixed * c.probs.transpose();
    const Mat<Scalar> dprobs = c.v.transpose() * dmixed;
    // Column-wise softmax Jacobian.
    Mat<Scalar> dscores = c.probs.cwiseProduct(dprobs);
    const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dots = dscores.colwise().sum();
    dscores -= c.probs * dots.asDiagonal();
    dscores *= inv_sqrt;
    const Mat<Scalar> dq = c.k * dscores;
    const Mat<Scalar> dk = c.q * dscores.transpose();
    if (g.active(wq)) g[wq].noalias() += dq * h.transpose();
    if (g.active(wk)) g[wk].noalias() += dk * ctx.transpose();
    if (g.active(wv)) g[wv].noalias() += dv * ctx.transpose();
    dh.noalias() += p[wq].transpose() * dq;
    dctx.noalias() += p[wk].transpose() * dk + p[wv].transpose() * dv;
  }
};

/// Sinusoidal embedding of a diffusion step, `dim` entries (sin half, cos half).
template <typename Scalar>
Mat<Scalar> step_embedding(int step, int dim) {
  Mat<Scalar> e(dim, 1);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half));
    e(i, 0) = static_cast<Scalar>(std::sin(step * freq));
    e(half + i, 0) = static_cast<Scalar>(std::cos(step * freq));
  }
  if (dim % 2) e(dim - 1, 0) = Scalar(0);
  return e;
}

/// x -> r = x + P silu(Conv3(x) + T e) ; out = r + Attn(r, ctx)
template <typename Scalar>
struct ResBlock {
  Conv3<Scalar> conv;
  Dense<Scalar> step_proj;
  Dense<Scalar> proj;
  CrossAttention<Scalar> attn;
  int width = 0;

  struct Cache {
    Mat<Scalar> x3, pre, act, r;
    typename CrossAttention<Scalar>::Cache attn;
  };

  static ResBlock make(ParamSet<Scalar>& p, const std::string& name, int width, int ctx_dim, int key_dim, Rng& rng) {
    ResBlock b;
    b.width = width;
    b.conv = Conv3<Scalar>::make(p, name + ".conv", width, width, rng);
    b.step_proj = Dense<Scalar>::make(p, name + ".step", width, width, rng, 0.5);
    b.proj = Dense<Scalar>::make(p, name + ".proj", width, width, rng, 0.5);
    b.attn = CrossAttention<Scalar>::make(p, name + ".attn", width, ctx_dim, key_dim, rng);
    return b;
  }

  Mat<Scalar> forward(const ParamSet<Scalar>& p, const Mat<Scalar>& x, const Mat<Scalar>& step_emb,
                      const Mat<Scalar>& ctx, Cache& c) const {
    c.x3 = unfold3(x);
    c.pre = conv.forward(p, c.x3);
    c.pre.colwise() += step_proj.forward(p, step_emb).col(0);
    c.act = silu(c.pre);
    c.r = x + proj.forward(p, c.act);
    return c.r + attn.forward(p, c.r, ctx, c.attn);
  }

  /// Returns dL/dx; adds into dctx.
  Mat<Scalar> backward(const ParamSet<Scalar>& p, const Mat<Scalar>& step_emb, const Mat<Scalar>& ctx,
                       const Cache& c, const Mat<Scalar>& dy, GradSet<Scalar>& g, Mat<Scalar>& dctx) const {
    Mat<Scalar> dr = dy;
    attn.backward(p, c.r, ctx, c.attn, dy, g, dr, dctx);
    const Mat<Scalar> dact = proj.backward(p, c.act, dr, g);
    const Mat<Scalar> dpre = silu_backward(c.pre, dact);
    if (g.active(step_proj.w) || g.active(step_proj.b)) {
      const Mat<Scalar> dstep = dpre.rowwise().sum();
      step_proj.backward(p, step_emb, dstep, g);
    }
    return dr + conv.backward(p, c.x3, dpre, g);
  }
};

}  // namespace tcfoley::nn
