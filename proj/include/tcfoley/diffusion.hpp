#pragma once

// Noise schedule, closed-form forward process and the ancestral reverse
// sampler. The sampler is generic over the noise predictor.

#include "tcfoley/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <functional>
#include <vector>

namespace tcfoley::diffusion {

/// Steps are 1-based: beta(1) .. beta(N).
class NoiseSchedule {
 public:
  NoiseSchedule() = default;
  /// Accepts any strictly increasing betas in (0, 1), N >= 1.
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int n) const { return betas_.at(n - 1); }
  double alpha(int n) const { return 1.0 - beta(n); }
  double alpha_bar(int n) const { return n == 0 ? 1.0 : alpha_bars_.at(n - 1); }
  double gamma(int n) const { return gammas_.at(n - 1); }
  const std::vector<double>& betas() const { return betas_; }

 private:
  std::vector<double> betas_, alpha_bars_, gammas_;
};

/// Linear beta spacing, uniform loss weights. Requires N >= 2 and
/// 0 < beta_min < beta_max < 1.
NoiseSchedule make_schedule(int steps, double beta_min, double beta_max);

struct ScheduleConfig {
  int steps = 50;
  double beta_min = 1e-4;
  double beta_max = 0.2;
};

nlohmann::json to_json(const ScheduleConfig& c);
ScheduleConfig schedule_config_from_json(const nlohmann::json& j);

void check_step(const NoiseSchedule& s, int n);

/// sqrt(abar_n) z0 + sqrt(1 - abar_n) eps
template <typename Derived1, typename Derived2>
auto q_sample(const Eigen::MatrixBase<Derived1>& z0, int n, const Eigen::MatrixBase<Derived2>& eps,
              const NoiseSchedule& s) {
  check_step(s, n);
  if (z0.rows() != eps.rows() || z0.cols() != eps.cols()) throw data_error("q_sample: shape mismatch");
  using Scalar = typename Derived1::Scalar;
  const auto a = static_cast<Scalar>(std::sqrt(s.alpha_bar(n)));
  const auto b = static_cast<Scalar>(std::sqrt(1.0 - s.alpha_bar(n)));
  return (a * z0 + b * eps).eval();
}

/// One Markov step of the forward chain: sqrt(1 - beta_n) z + sqrt(beta_n) eps
template <typename Derived1, typename Derived2>
auto forward_step(const Eigen::MatrixBase<Derived1>& z_prev, int n, const Eigen::MatrixBase<Derived2>& eps,
                  const NoiseSchedule& s) {
  check_step(s, n);
  using Scalar = typename Derived1::Scalar;
  return (static_cast<Scalar>(std::sqrt(s.alpha(n))) * z_prev + static_cast<Scalar>(std::sqrt(s.beta(n))) * eps)
      .eval();
}

/// (1/sqrt(alpha_n)) [z_n - (1 - alpha_n)/sqrt(1 - abar_n) eps_hat]
template <typename Derived1, typename Derived2>
auto posterior_mean(const Eigen::MatrixBase<Derived1>& z_n, const Eigen::MatrixBase<Derived2>& eps_hat, int n,
                    const NoiseSchedule& s) {
  check_step(s, n);
  using Scalar = typename Derived1::Scalar;
  const double coef = (1.0 - s.alpha(n)) / std::sqrt(1.0 - s.alpha_bar(n));
  return (static_cast<Scalar>(1.0 / std::sqrt(s.alpha(n))) * (z_n - static_cast<Scalar>(coef) * eps_hat)).eval();
}

/// ((1 - abar_{n-1}) / (1 - abar_n)) beta_n, and 0 at n = 1.
double posterior_var(int n, const NoiseSchedule& s);

template <typename Scalar>
using NoisePredictor = std::function<Mat<Scalar>(const Mat<Scalar>& z_n, int n)>;

/// Ancestral sampling from z_N ~ N(0, I). Every draw comes from one generator
/// seeded with `seed`, so the result is a pure function of its inputs.
template <typename Scalar>
Mat<Scalar> ddpm_sample(const NoisePredictor<Scalar>& predict, const NoiseSchedule& s, std::uint64_t seed,
                        Eigen::Index rows, Eigen::Index cols) {
  Rng rng(seed);
  Mat<Scalar> z = normal_matrix<Scalar>(rows, cols, rng);
  for (int n = s.steps(); n >= 1; --n) {
    const Mat<Scalar> eps_hat = predict(z, n);
    Mat<Scalar> mean = posterior_mean(z, eps_hat, n, s);
    const double var = posterior_var(n, s);
    if (var > 0.0) {
      mean += normal_matrix<Scalar>(rows, cols, rng, std::sqrt(var));
    }
    z = std::move(mean);
  }
  return z;
}

}  // namespace tcfoley::diffusion
