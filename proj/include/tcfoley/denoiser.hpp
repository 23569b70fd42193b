#pragma once

// U-Net style noise predictor: input projection, B encoder blocks, one middle
// block, B decoder blocks that each take Concat(previous, skip), output
// projection. Every block sees the diffusion step and cross-attends to the
// caption tokens.

#include "tcfoley/nn.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace tcfoley {

struct DenoiserConfig {
  int latent_dim = 16;  // channels * freq of the latent
  int width = 32;
  int depth = 3;        // B
  int text_dim = 16;
  int key_dim = 16;

  void validate() const;
};

nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

/// Encoder outputs f_1..f_B and the middle output m.
template <typename Scalar>
struct SkipStack {
  std::vector<Mat<Scalar>> f;
  Mat<Scalar> m;
};

/// Learned per-token embedding table; captions are whitespace tokenized over a
/// closed vocabulary with index 0 reserved for unknown words.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }
  std::vector<int> tokenize(const std::string& caption) const;

 private:
  std::vector<std::string> words_;  // words_[0] == "<unk>"
};

template <typename Scalar>
struct TextTable {
  std::size_t table = 0;
  int dim = 0;

  static TextTable make(ParamSet<Scalar>& p, const std::string& name, std::size_t vocab, int dim, Rng& rng) {
    TextTable t;
    t.dim = dim;
    t.table = p.add(name + ".embed", normal_matrix<Scalar>(dim, static_cast<Eigen::Index>(vocab), rng));
    return t;
  }

  /// dim x L context matrix.
  Mat<Scalar> forward(const ParamSet<Scalar>& p, const std::vector<int>& tokens) const {
    if (tokens.empty()) throw data_error("caption has no tokens");
    Mat<Scalar> ctx(dim, static_cast<Eigen::Index>(tokens.size()));
    for (std::size_t i = 0; i < tokens.size(); ++i) ctx.col(static_cast<Eigen::Index>(i)) = p[table].col(tokens[i]);
    return ctx;
  }

  void backward(const std::vector<int>& tokens, const Mat<Scalar>& dctx, GradSet<Scalar>& g) const {
    if (!g.active(table)) return;
    for (std::size_t i = 0; i < tokens.size(); ++i) g[table].col(tokens[i]) += dctx.col(static_cast<Eigen::Index>(i));
  }
};

template <typename Scalar>
struct EncoderStack {
  nn::Dense<Scalar> input;
  std::vector<nn::ResBlock<Scalar>> blocks;
  nn::ResBlock<Scalar> middle;

  struct Cache {
    Mat<Scalar> x, h0;
    std::vector<typename nn::ResBlock<Scalar>::Cache> blocks;
    typename nn::ResBlock<Scalar>::Cache middle;
    SkipStack<Scalar> out;
  };

  static EncoderStack make(ParamSet<Scalar>& p, const std::string& name, const DenoiserConfig& c, Rng& rng) {
    EncoderStack e;
    e.input = nn::Dense<Scalar>::make(p, name + ".in", c.latent_dim, c.width, rng);
    for (int i = 0; i < c.depth; ++i)
      e.blocks.push_back(nn::ResBlock<Scalar>::make(p, name + ".block" + std::to_string(i + 1), c.width, c.text_dim,
                                                    c.key_dim, rng));
    e.middle = nn::ResBlock<Scalar>::make(p, name + ".middle", c.width, c.text_dim, c.key_dim, rng);
    return e;
  }

  const SkipStack<Scalar>& forward(const ParamSet<Scalar>& p, const Mat<Scalar>& x, const Mat<Scalar>& temb,
                                   const Mat<Scalar>& ctx, Cache& c) const {
    c.x = x;
    c.h0 = input.forward(p, x);
    c.blocks.resize(blocks.size());
    c.out.f.resize(blocks.size());
    const Mat<Scalar>* prev = &c.h0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      c.out.f[i] = blocks[i].forward(p, *prev, temb, ctx, c.blocks[i]);
      prev = &c.out.f[i];
    }
    c.out.m = middle.forward(p, *prev, temb, ctx, c.middle);
    return c.out;
  }

  /// d_f[i] is dL/df_{i+1} arriving from outside the stack (skips), d_m is dL/dm.
  Mat<Scalar> backward(const ParamSet<Scalar>& p, const Mat<Scalar>& temb, const Mat<Scalar>& ctx, const Cache& c,
                       const std::vector<Mat<Scalar>>& d_f, const Mat<Scalar>& d_m, GradSet<Scalar>& g,
                       Mat<Scalar>& dctx) const {
    Mat<Scalar> d = middle.backward(p, temb, ctx, c.middle, d_m, g, dctx);
    for (std::size_t i = blocks.size(); i-- > 0;) {
      if (!d_f.empty() && d_f[i].size() > 0) d += d_f[i];
      d = blocks[i].backward(p, temb, ctx, c.blocks[i], d, g, dctx);
    }
    return input.backward(p, c.x, d, g);
  }
};

template <typename Scalar>
struct DecoderStack {
  std::vector<nn::Dense<Scalar>> merge;
  std::vector<nn::ResBlock<Scalar>> blocks;
  nn::Dense<Scalar> output;

  struct Cache {
    std::vector<Mat<Scalar>> cat;
    std::vector<Mat<Scalar>> merged;
    std::vector<typename nn::ResBlock<Scalar>::Cache> blocks;
    Mat<Scalar> last;
  };

  static DecoderStack make(ParamSet<Scalar>& p, const std::string& name, const DenoiserConfig& c, Rng& rng) {
    DecoderStack d;
    for (int i = 0; i < c.depth; ++i) {
      const std::string b = name + ".block" + std::to_string(i + 1);
      d.merge.push_back(nn::Dense<Scalar>::make(p, b + ".merge", 2 * c.width, c.width, rng));
      d.blocks.push_back(nn::ResBlock<Scalar>::make(p, b, c.width, c.text_dim, c.key_dim, rng));
    }
    d.output = nn::Dense<Scalar>::make(p, name + ".out", c.width, c.latent_dim, rng, 0.5);
    return d;
  }

  /// Decoder block i (1-based) consumes Concat(g_{i-1}, skips[j-1]) with
  /// i + j = B + 1; g_0 is the (possibly fused) middle output.
  Mat<Scalar> forward(const ParamSet<Scalar>& p, const Mat<Scalar>& g0, const std::vector<Mat<Scalar>>& skips,
                      const Mat<Scalar>& temb, const Mat<Scalar>& ctx, Cache& c) const {
    const std::size_t depth = blocks.size();
    if (skips.size() != depth) throw Error(ErrorKind::kInternal, "decoder: skip count does not match depth");
    c.cat.resize(depth);
    c.merged.resize(depth);
    c.blocks.resize(depth);
    Mat<Scalar> g = g0;
    for (std::size_t i = 0; i < depth; ++i) {
      const Mat<Scalar>& skip = skips[depth - 1 - i];
      c.cat[i].resize(g.rows() + skip.rows(), g.cols());
      c.cat[i] << g, skip;
      c.merged[i] = merge[i].forward(p, c.cat[i]);
      g = blocks[i].forward(p, c.merged[i], temb, ctx, c.blocks[i]);
    }
    c.last = std::move(g);
    return output.forward(p, c.last);
  }

  void backward(const ParamSet<Scalar>& p, const Mat<Scalar>& temb, const Mat<Scalar>& ctx, const Cache& c,
                const Mat<Scalar>& d_out, GradSet<Scalar>& g, Mat<Scalar>& dctx, Mat<Scalar>& d_g0,
                std::vector<Mat<Scalar>>& d_skips) const {
    const std::size_t depth = blocks.size();
    d_skips.assign(depth, Mat<Scalar>());
    Mat<Scalar> d = output.backward(p, c.last, d_out, g);
    for (std::size_t i = depth; i-- > 0;) {
      d = blocks[i].backward(p, temb, ctx, c.blocks[i], d, g, dctx);
      const Mat<Scalar> dcat = merge[i].backward(p, c.cat[i], d, g);
      const Eigen::Index w = dcat.rows() / 2;
      d_skips[depth - 1 - i] = dcat.bottomRows(w);
      d = dcat.topRows(w);
    }
    d_g0 = std::move(d);
  }
};

template <typename Scalar>
struct Denoiser {
  DenoiserConfig config;
  EncoderStack<Scalar> encoder;
  DecoderStack<Scalar> decoder;

  struct Cache {
    typename EncoderStack<Scalar>::Cache enc;
    typename DecoderStack<Scalar>::Cache dec;
  };

  static Denoiser make(ParamSet<Scalar>& p, const std::string& name, const DenoiserConfig& c, Rng& rng) {
    c.validate();
    Denoiser d;
    d.config = c;
    d.encoder = EncoderStack<Scalar>::make(p, name + ".enc", c, rng);
    d.decoder = DecoderStack<Scalar>::make(p, name + ".dec", c, rng);
    return d;
  }

  /// Plain forward: returns eps_hat and leaves f_1..f_B, m in the cache.
  Mat<Scalar> forward(const ParamSet<Scalar>& p, const Mat<Scalar>& z, const Mat<Scalar>& temb,
                      const Mat<Scalar>& ctx, Cache& c) const {
    const auto& skips = encoder.forward(p, z, temb, ctx, c.enc);
    return decoder.forward(p, skips.m, skips.f, temb, ctx, c.dec);
  }
};

}  // namespace tcfoley
