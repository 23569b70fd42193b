#pragma once

#include "tcfoley/diffusion.hpp"
#include "tcfoley/model.hpp"

#include <functional>
#include <numeric>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tcfoley::training {

template <typename Scalar>
struct TrainingItem {
  Mat<Scalar> latent;           // z_0
  std::vector<int> tokens;      // caption
  Mat<Scalar> condition;        // a_c grid, empty when unused
};

/// Step and noise drawn for one item of one optimizer step; a pure function
/// of (seed, key, item).
template <typename Scalar>
struct NoiseDraw {
  int step = 1;
  Mat<Scalar> eps;
};

template <typename Scalar>
NoiseDraw<Scalar> draw_noise(const diffusion::NoiseSchedule& s, Eigen::Index rows, Eigen::Index cols,
                             std::uint64_t seed, std::uint64_t key, std::uint64_t item) {
  Rng rng = derive_rng(seed, {key, item});
  NoiseDraw<Scalar> d;
  d.step = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(s.steps()));
  d.eps = normal_matrix<Scalar>(rows, cols, rng);
  return d;
}

/// Loss only, for arbitrary predictors (used with oracle stubs).
template <typename Scalar>
double dm_loss_value(const std::function<Mat<Scalar>(std::size_t item, const Mat<Scalar>& z_n, int n,
                                                     const Mat<Scalar>& eps)>& predict,
                     const std::vector<const TrainingItem<Scalar>*>& batch, const diffusion::NoiseSchedule& s,
                     std::uint64_t seed, std::uint64_t key) {
  if (batch.empty()) throw usage_error("dm_loss: empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& z0 = batch[i]->latent;
    const auto d = draw_noise<Scalar>(s, z0.rows(), z0.cols(), seed, key, i);
    const Mat<Scalar> z_n = diffusion::q_sample(z0, d.step, d.eps, s);
    const Mat<Scalar> err = predict(i, z_n, d.step, d.eps) - d.eps;
    total += s.gamma(d.step) * static_cast<double>(err.squaredNorm());
  }
  return total / static_cast<double>(batch.size());
}

/// Mean over items of gamma_n ||eps - eps_hat(z_n, tau [, A_ct])||^2. When
/// `grads` is given, accumulates its gradient into every active slot.
/// Items are processed in parallel; per-item gradients are reduced in item
/// order, so the result does not depend on the thread count.
template <typename Scalar>
double dm_loss(const FoleyModel<Scalar>& model, const ParamSet<Scalar>& p,
               const std::vector<const TrainingItem<Scalar>*>& batch, const diffusion::NoiseSchedule& s,
               bool with_adapter, std::uint64_t seed, std::uint64_t key, GradSet<Scalar>* grads) {
  if (batch.empty()) throw usage_error("dm_loss: empty batch");
  const auto count = static_cast<std::ptrdiff_t>(batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<std::optional<GradSet<Scalar>>> per_item(batch.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const TrainingItem<Scalar>& item = *batch[static_cast<std::size_t>(i)];
    const auto d = draw_noise<Scalar>(s, item.latent.rows(), item.latent.cols(), seed, key,
                                      static_cast<std::uint64_t>(i));
    const Mat<Scalar> z_n = diffusion::q_sample(item.latent, d.step, d.eps, s);
    typename FoleyModel<Scalar>::Request req;
    req.z = &z_n;
    req.step = d.step;
    req.tokens = &item.tokens;
    req.condition = with_adapter ? &item.condition : nullptr;
    typename FoleyModel<Scalar>::Cache cache;
    const Mat<Scalar> err = model.predict(p, req, cache) - d.eps;
    const double gamma = s.gamma(d.step);
    losses[static_cast<std::size_t>(i)] = gamma * static_cast<double>(err.squaredNorm());
    if (grads != nullptr) {
      auto& g = per_item[static_cast<std::size_t>(i)].emplace(p, false);
      const Mat<Scalar> d_eps = static_cast<Scalar>(2.0 * gamma / static_cast<double>(batch.size())) * err;
      model.backward(p, req, cache, d_eps, g);
    }
  }
  if (grads != nullptr)
    for (auto& g : per_item) *grads += *g;
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(batch.size());
}

struct AdamConfig {
  double lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
class Adam {
 public:
  Adam() = default;
  Adam(const ParamSet<Scalar>& p, AdamConfig c) : config_(c), m_(p.size()), v_(p.size()) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!p.trainable(i)) continue;
      m_[i] = Mat<Scalar>::Zero(p[i].rows(), p[i].cols());
      v_[i] = Mat<Scalar>::Zero(p[i].rows(), p[i].cols());
    }
  }

  /// Applies one update. Any gradient aimed at a frozen tensor is an error.
  void step(ParamSet<Scalar>& p, const GradSet<Scalar>& g) {
    for (std::size_t i = 0; i < p.size(); ++i)
      if (g.active(i) && !p.trainable(i))
        throw Error(ErrorKind::kInternal, "attempt to update frozen parameter " + p.name(i));
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(config_.beta1), b2 = static_cast<Scalar>(config_.beta2);
    const auto lr = static_cast<Scalar>(config_.lr * std::sqrt(c2) / c1);
    const auto eps = static_cast<Scalar>(config_.eps * std::sqrt(c2));
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!g.active(i)) continue;
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * g[i];
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * g[i].cwiseAbs2();
      p.mutable_value(i).array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
  }

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::uint64_t steps_taken() const { return t_; }
  void set_steps_taken(std::uint64_t t) { t_ = t; }
  Mat<Scalar>& first_moment(std::size_t i) { return m_[i]; }
  Mat<Scalar>& second_moment(std::size_t i) { return v_[i]; }
  const Mat<Scalar>& first_moment(std::size_t i) const { return m_[i]; }
  const Mat<Scalar>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  AdamConfig config_;
  std::vector<Mat<Scalar>> m_, v_;
  std::uint64_t t_ = 0;
};

struct LoopConfig {
  int epochs = 10;
  int start_epoch = 0;
  int batch_size = 16;
  std::uint64_t seed = 0;
  bool with_adapter = false;
};

/// Deterministic epoch order: Fisher-Yates with a generator derived from the
/// seed and the epoch number.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(seed, {0xE90C7ull, static_cast<std::uint64_t>(epoch)});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

/// Runs epochs [start_epoch, epochs). `on_epoch(epoch, mean_loss)` is called
/// after each one.
template <typename Scalar>
void run_epochs(const FoleyModel<Scalar>& model, ParamSet<Scalar>& p, Adam<Scalar>& opt,
                const std::vector<TrainingItem<Scalar>>& data, const diffusion::NoiseSchedule& s,
                const LoopConfig& loop, const std::function<void(int, double)>& on_epoch) {
  if (data.empty()) throw usage_error("training set is empty");
  GradSet<Scalar> grads(p, false);
  for (int epoch = loop.start_epoch; epoch < loop.epochs; ++epoch) {
    const auto order = epoch_order(data.size(), loop.seed, epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(loop.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(loop.batch_size));
      std::vector<const TrainingItem<Scalar>*> batch;
      for (std::size_t k = start; k < stop; ++k) batch.push_back(&data[order[k]]);
      grads.set_zero();
      const std::uint64_t key = (static_cast<std::uint64_t>(epoch) << 32) | batches;
      loss_sum += dm_loss(model, p, batch, s, loop.with_adapter, loop.seed, key, &grads);
      opt.step(p, grads);
      ++batches;
    }
    if (on_epoch) on_epoch(epoch, loss_sum / static_cast<double>(batches));
  }
}

}  // namespace tcfoley::training
