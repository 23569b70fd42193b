#pragma once

// Time-controllable adapter: a trainable mirror of the base encoder and
// middle block fed with z_n + P(A_ct), whose outputs are added to the base
// skips through zero-initialized 1x1 layers scaled by the conditioning scale.

#include "tcfoley/conditioning.hpp"
#include "tcfoley/denoiser.hpp"

#include <optional>

namespace tcfoley {

struct AdapterConfig {
  double conditioning_scale = 2.0;
  /// Uses m + m' on the middle path (no zero layer) instead of m + s*zero_m(m').
  bool literal_middle_fusion = false;
};

template <typename Scalar>
using AdapterActivations = SkipStack<Scalar>;

template <typename Scalar>
struct Adapter {
  AdapterConfig config;
  nn::Dense<Scalar> cond_proj;  // A_ct rows -> latent_dim
  EncoderStack<Scalar> mirror;
  std::vector<nn::Dense<Scalar>> zero;  // one per skip f'_1..f'_B
  nn::Dense<Scalar> zero_mid;

  struct Cache {
    Mat<Scalar> cond, input;
    typename EncoderStack<Scalar>::Cache enc;
  };

  static Adapter make(ParamSet<Scalar>& p, const std::string& name, const DenoiserConfig& dc, int cond_rows,
                      const AdapterConfig& ac, Rng& rng) {
    Adapter a;
    a.config = ac;
    a.cond_proj = nn::Dense<Scalar>::make(p, name + ".cond_proj", cond_rows, dc.latent_dim, rng);
    a.mirror = EncoderStack<Scalar>::make(p, name + ".enc", dc, rng);
    for (int i = 0; i < dc.depth; ++i)
      a.zero.push_back(nn::Dense<Scalar>::zeros(p, name + ".zero" + std::to_string(i + 1), dc.width, dc.width));
    a.zero_mid = nn::Dense<Scalar>::zeros(p, name + ".zero_mid", dc.width, dc.width);
    return a;
  }

  /// A_ct must share the latent's time length.
  const AdapterActivations<Scalar>& forward(const ParamSet<Scalar>& p, const Mat<Scalar>& z, const Mat<Scalar>& a_ct,
                                            const Mat<Scalar>& temb, const Mat<Scalar>& ctx, Cache& c) const {
    if (a_ct.cols() != z.cols())
      throw data_error("adapter: A_ct time length " + std::to_string(a_ct.cols()) + " != latent time length " +
                       std::to_string(z.cols()));
    if (a_ct.rows() != cond_proj.in) throw data_error("adapter: A_ct row count does not match the projection");
    c.cond = a_ct;
    c.input = z + cond_proj.forward(p, a_ct);
    return mirror.forward(p, c.input, temb, ctx, c.enc);
  }

  /// Fused decoder inputs. Returns g_0 and writes the fused skips.
  Mat<Scalar> fuse(const ParamSet<Scalar>& p, const SkipStack<Scalar>& base, const AdapterActivations<Scalar>& act,
                   std::vector<Mat<Scalar>>& fused_skips) const {
    if (base.f.size() != act.f.size() || base.f.size() != zero.size())
      throw data_error("fuse_skips: adapter depth does not match the base denoiser");
    const auto s = static_cast<Scalar>(config.conditioning_scale);
    fused_skips.resize(base.f.size());
    for (std::size_t j = 0; j < base.f.size(); ++j) fused_skips[j] = base.f[j] + s * zero[j].forward(p, act.f[j]);
    if (config.literal_middle_fusion) return base.m + act.m;
    return base.m + s * zero_mid.forward(p, act.m);
  }

  /// Given gradients w.r.t. g_0 and the fused skips, accumulates zero-layer
  /// gradients and returns gradients w.r.t. the adapter activations.
  AdapterActivations<Scalar> fuse_backward(const ParamSet<Scalar>& p, const AdapterActivations<Scalar>& act,
                                           const Mat<Scalar>& d_g0, const std::vector<Mat<Scalar>>& d_skips,
                                           GradSet<Scalar>& g) const {
    const auto s = static_cast<Scalar>(config.conditioning_scale);
    AdapterActivations<Scalar> d;
    d.f.resize(act.f.size());
    for (std::size_t j = 0; j < act.f.size(); ++j) {
      const Mat<Scalar> scaled = s * d_skips[j];
      d.f[j] = zero[j].backward(p, act.f[j], scaled, g);
    }
    if (config.literal_middle_fusion) {
      d.m = d_g0;
    } else {
      const Mat<Scalar> scaled = s * d_g0;
      d.m = zero_mid.backward(p, act.m, scaled, g);
    }
    return d;
  }

  /// Returns dL/dA_ct.
  Mat<Scalar> backward(const ParamSet<Scalar>& p, const Mat<Scalar>& temb, const Mat<Scalar>& ctx, const Cache& c,
                       const AdapterActivations<Scalar>& d_act, GradSet<Scalar>& g, Mat<Scalar>& dctx) const {
    const Mat<Scalar> d_input = mirror.backward(p, temb, ctx, c.enc, d_act.f, d_act.m, g, dctx);
    return cond_proj.backward(p, c.cond, d_input, g);
  }
};

}  // namespace tcfoley
