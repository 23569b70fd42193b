#include "support.hpp"

#include "tcfoley/checkpoint.hpp"
#include "tcfoley/pipeline.hpp"

#include <doctest.h>

using namespace tcfoley;

namespace {

struct Fixture {
  ParamSet<double> p;
  FoleyModel<double> model;
  std::vector<int> tokens;
  MatrixXd z, temb, ctx;

  explicit Fixture(std::uint64_t seed = 5) {
    model = FoleyModel<double>::build(testing::tiny_model_config(), p, seed);
    tokens = model.vocab.tokenize("one low hiss");
    Rng rng(seed + 100);
    z = normal_matrix<double>(4, 6, rng);
    temb = nn::step_embedding<double>(7, model.config.denoiser.width);
    ctx = model.text.forward(p, tokens);
  }

  void randomize(const std::string& prefix, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p.name(i).rfind(prefix, 0) == 0) p.mutable_value(i) = normal_matrix<double>(p[i].rows(), p[i].cols(), rng, 0.3);
  }
};

MatrixXd cond_grid(int first, int count) {
  MatrixXd g = MatrixXd::Zero(16, 24);
  g.middleCols(first, count).setOnes();
  return g;
}

}  // namespace

TEST_CASE("adapter mirror equals the base encoder with a silent projection") {
  Fixture f;
  FoleyModel<double>::init_adapter_from_base(f.p);
  f.p.mutable_value(f.model.adapter.cond_proj.w).setZero();
  const MatrixXd a_ct = MatrixXd::Zero(f.model.config.cond_rows(), 6);
  Adapter<double>::Cache ac;
  EncoderStack<double>::Cache bc;
  const auto act = f.model.adapter.forward(f.p, f.z, a_ct, f.temb, f.ctx, ac);
  const auto base = f.model.base.encoder.forward(f.p, f.z, f.temb, f.ctx, bc);
  for (std::size_t i = 0; i < base.f.size(); ++i) CHECK(act.f[i] == base.f[i]);
  CHECK(act.m == base.m);
}

TEST_CASE("adapter activations are deterministic and respond to A_ct") {
  Fixture f;
  Adapter<double>::Cache c1, c2;
  Rng rng(3);
  const MatrixXd a = normal_matrix<double>(f.model.config.cond_rows(), 6, rng);
  const MatrixXd b = normal_matrix<double>(f.model.config.cond_rows(), 6, rng);
  const auto x = f.model.adapter.forward(f.p, f.z, a, f.temb, f.ctx, c1).m;
  CHECK(x == f.model.adapter.forward(f.p, f.z, a, f.temb, f.ctx, c2).m);
  CHECK((f.model.adapter.forward(f.p, f.z, b, f.temb, f.ctx, c2).m - x).cwiseAbs().maxCoeff() > 0.0);
  CHECK_THROWS_AS(f.model.adapter.forward(f.p, f.z, MatrixXd::Zero(f.model.config.cond_rows(), 5), f.temb, f.ctx, c2),
                  Error);
}

TEST_CASE("fuse_skips: zero init, zero scale, linearity") {
  Fixture f;
  Rng rng(12);
  const MatrixXd a_ct = normal_matrix<double>(f.model.config.cond_rows(), 6, rng);
  Adapter<double>::Cache ac;
  EncoderStack<double>::Cache bc;
  const auto act = f.model.adapter.forward(f.p, f.z, a_ct, f.temb, f.ctx, ac);
  const auto base = f.model.base.encoder.forward(f.p, f.z, f.temb, f.ctx, bc);
  std::vector<MatrixXd> fused;
  MatrixXd g0 = f.model.adapter.fuse(f.p, base, act, fused);
  CHECK(g0 == base.m);
  for (std::size_t j = 0; j < fused.size(); ++j) CHECK(fused[j] == base.f[j]);

  f.randomize("adapter.zero", 4);
  auto adapter = f.model.adapter;
  adapter.config.conditioning_scale = 0.0;
  g0 = adapter.fuse(f.p, base, act, fused);
  CHECK(g0 == base.m);
  for (std::size_t j = 0; j < fused.size(); ++j) CHECK(fused[j] == base.f[j]);

  // Doubling the adapter activations doubles the fused offset.
  adapter.config.conditioning_scale = 1.7;
  for (std::size_t i = 0; i < f.p.size(); ++i)
    if (f.p.name(i).rfind("adapter.zero", 0) == 0 && f.p.name(i).ends_with(".b")) f.p.mutable_value(i).setZero();
  AdapterActivations<double> twice = act;
  for (auto& m : twice.f) m *= 2.0;
  twice.m *= 2.0;
  std::vector<MatrixXd> f1, f2;
  const MatrixXd m1 = adapter.fuse(f.p, base, act, f1), m2 = adapter.fuse(f.p, base, twice, f2);
  CHECK(((m2 - base.m) - 2.0 * (m1 - base.m)).cwiseAbs().maxCoeff() < 1e-12);
  for (std::size_t j = 0; j < f1.size(); ++j)
    CHECK(((f2[j] - base.f[j]) - 2.0 * (f1[j] - base.f[j])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decoder block i consumes skip j with i + j = B + 1") {
  ParamSet<double> p;
  ModelConfig cfg = testing::tiny_model_config();
  cfg.denoiser.depth = 3;
  const auto model = FoleyModel<double>::build(cfg, p, 9);
  const int w = cfg.denoiser.width;
  std::vector<MatrixXd> skips;
  for (int j = 1; j <= 3; ++j) skips.push_back(MatrixXd::Constant(w, 5, static_cast<double>(j)));
  DecoderStack<double>::Cache c;
  const MatrixXd temb = nn::step_embedding<double>(1, w);
  const MatrixXd ctx = model.text.forward(p, model.vocab.tokenize("two beeps"));
  model.base.decoder.forward(p, MatrixXd::Zero(w, 5), skips, temb, ctx, c);
  for (int i = 1; i <= 3; ++i) {
    const int j = 3 + 1 - i;
    CHECK(c.cat[static_cast<std::size_t>(i - 1)].bottomRows(w).isConstant(static_cast<double>(j), 0.0));
  }
}

TEST_CASE("fresh adapter leaves 50-step samples unchanged at any scale") {
  ParamSet<float> p;
  ModelConfig cfg;
  cfg.vocabulary = data::caption_vocabulary();
  auto model = FoleyModel<float>::build(cfg, p, 21);
  FoleyModel<float>::init_adapter_from_base(p);
  const auto s = diffusion::make_schedule(50, 1e-4, 0.2);
  const auto tokens = model.vocab.tokenize("two high beeps");
  Mat<float> cond = Mat<float>::Zero(64, 124);
  cond.middleCols(30, 40).setOnes();
  for (std::uint64_t seed : {1u, 2u}) {
    const auto plain = pipeline::sample_latent<float>(model, p, s, tokens, nullptr, seed, 31);
    for (double scale : {0.6, 2.0, 3.0}) {
      model.adapter.config.conditioning_scale = scale;
      const auto with = pipeline::sample_latent<float>(model, p, s, tokens, &cond, seed, 31);
      CHECK((with - plain).cwiseAbs().maxCoeff() <= 1e-6f);
    }
  }
}

TEST_CASE("adapter training step: base frozen, zero layers move, frozen updates rejected") {
  ParamSet<float> p;
  ModelConfig cfg = testing::tiny_model_config();
  const auto model = FoleyModel<float>::build(cfg, p, 2);
  FoleyModel<float>::init_adapter_from_base(p);
  p.set_trainable("base", false);
  p.set_trainable("text", false);
  const ParamSet<float> before = p;
  const auto s = diffusion::make_schedule(10, 1e-3, 0.2);

  std::vector<training::TrainingItem<float>> items(4);
  Rng rng(8);
  for (std::size_t i = 0; i < items.size(); ++i) {
    items[i].latent = normal_matrix<float>(4, 6, rng);
    items[i].tokens = model.vocab.tokenize("two low beeps");
    items[i].condition = cond_grid(4 * static_cast<int>(i), 6).cast<float>();
  }
  training::Adam<float> opt(p, {1e-3});
  training::LoopConfig loop;
  loop.epochs = 3;
  loop.batch_size = 2;
  loop.with_adapter = true;
  training::run_epochs(model, p, opt, items, s, loop, nullptr);

  bool zero_moved = false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string& n = p.name(i);
    if (n.rfind("base.", 0) == 0 || n.rfind("text.", 0) == 0) CHECK(p[i] == before[i]);
    if (n.rfind("adapter.zero", 0) == 0 && !p[i].isZero(0.0f)) zero_moved = true;
  }
  CHECK(zero_moved);

  GradSet<float> all(p, true);
  CHECK_THROWS_AS(opt.step(p, all), Error);

  // Optimizer state that names a frozen tensor is refused on restore.
  ParamSet<float> q = p;
  q.set_trainable("base", true);
  training::Adam<float> wide(q, {1e-3});
  GradSet<float> gq(q, false);
  wide.step(q, gq);
  CHECK_THROWS_AS(checkpoint::restore_adam(checkpoint::capture_adam(wide, q), p), Error);
}
