#pragma once

// The full noise predictor used for training and sampling: caption table,
// frozen-able base denoiser, condition encoder E_a and the adapter, all
// registered in one ParamSet under the prefixes text., base., cond., adapter.

#include "tcfoley/adapter.hpp"

#include <nlohmann/json_fwd.hpp>

namespace tcfoley {

struct ModelConfig {
  DenoiserConfig denoiser;
  conditioning::EncoderConfig cond_encoder;
  AdapterConfig adapter;
  int n_mels = 64;  // rows of the condition grid
  std::vector<std::string> vocabulary;

  int cond_rows() const { return cond_encoder.embedding_rows(n_mels); }
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

template <typename Scalar>
class FoleyModel {
 public:
  ModelConfig config;
  Vocabulary vocab;
  TextTable<Scalar> text;
  Denoiser<Scalar> base;
  conditioning::ConditionEncoder<Scalar> cond_encoder;
  Adapter<Scalar> adapter;

  struct Request {
    const Mat<Scalar>* z = nullptr;
    int step = 1;
    const std::vector<int>* tokens = nullptr;
    /// Condition grid a_c (n_mels x n_frames); nullptr runs the base alone.
    const Mat<Scalar>* condition = nullptr;
  };

  struct Cache {
    Mat<Scalar> temb, ctx, a_ct, g0;
    std::vector<Mat<Scalar>> fused;
    typename Denoiser<Scalar>::Cache base;
    typename Adapter<Scalar>::Cache adapter;
    typename conditioning::ConditionEncoder<Scalar>::Cache cond;
  };

  /// Builds the topology and registers freshly initialized parameters. Two
  /// models built from the same config share slot indices, so one model can
  /// run on a ParamSet cast from another scalar type.
  static FoleyModel build(const ModelConfig& c, ParamSet<Scalar>& p, std::uint64_t seed) {
    FoleyModel m;
    m.config = c;
    m.vocab = Vocabulary(c.vocabulary);
    Rng rng(seed);
    m.text = TextTable<Scalar>::make(p, "text", m.vocab.size(), c.denoiser.text_dim, rng);
    m.base = Denoiser<Scalar>::make(p, "base", c.denoiser, rng);
    m.cond_encoder = conditioning::ConditionEncoder<Scalar>::make(p, "cond", c.cond_encoder, rng);
    m.adapter = Adapter<Scalar>::make(p, "adapter", c.denoiser, c.cond_rows(), c.adapter, rng);
    return m;
  }

  /// Copies the base encoder/middle weights into the adapter mirror.
  static void init_adapter_from_base(ParamSet<Scalar>& p) {
    const std::string from = "base.enc.", to = "adapter.enc.";
    for (std::size_t i = 0; i < p.size(); ++i) {
      const std::string& n = p.name(i);
      if (n.rfind(to, 0) == 0) p.mutable_value(i) = p[p.index(from + n.substr(to.size()))];
    }
  }

  Mat<Scalar> predict(const ParamSet<Scalar>& p, const Request& r, Cache& c) const {
    c.temb = nn::step_embedding<Scalar>(r.step, config.denoiser.width);
    c.ctx = text.forward(p, *r.tokens);
    if (r.condition == nullptr) return base.forward(p, *r.z, c.temb, c.ctx, c.base);
    const auto& skips = base.encoder.forward(p, *r.z, c.temb, c.ctx, c.base.enc);
    c.a_ct = cond_encoder.forward(p, *r.condition, c.cond);
    const auto& act = adapter.forward(p, *r.z, c.a_ct, c.temb, c.ctx, c.adapter);
    c.g0 = adapter.fuse(p, skips, act, c.fused);
    return base.decoder.forward(p, c.g0, c.fused, c.temb, c.ctx, c.base.dec);
  }

  /// Accumulates dL/dparams for every active slot of `g`.
  void backward(const ParamSet<Scalar>& p, const Request& r, const Cache& c, const Mat<Scalar>& d_eps,
                GradSet<Scalar>& g) const {
    Mat<Scalar> dctx = Mat<Scalar>::Zero(c.ctx.rows(), c.ctx.cols());
    Mat<Scalar> d_g0;
    std::vector<Mat<Scalar>> d_skips;
    base.decoder.backward(p, c.temb, c.ctx, c.base.dec, d_eps, g, dctx, d_g0, d_skips);
    if (r.condition != nullptr) {
      const auto d_act = adapter.fuse_backward(p, c.adapter.enc.out, d_g0, d_skips, g);
      const Mat<Scalar> d_a_ct = adapter.backward(p, c.temb, c.ctx, c.adapter, d_act, g, dctx);
      cond_encoder.backward(p, c.cond, d_a_ct, g);
    }
    if (base_encoder_active(g)) base.encoder.backward(p, c.temb, c.ctx, c.base.enc, d_skips, d_g0, g, dctx);
    text.backward(*r.tokens, dctx, g);
  }

 private:
  bool base_encoder_active(const GradSet<Scalar>& g) const {
    // The text table feeds every block, so its gradient needs the full pass too.
    return g.active(base.encoder.input.w) || g.active(text.table);
  }
};

}  // namespace tcfoley
