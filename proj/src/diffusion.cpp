#include "tcfoley/diffusion.hpp"

#include <nlohmann/json.hpp>

namespace tcfoley::diffusion {

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw usage_error("schedule needs at least one step");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0 && betas[i] < 1.0)) throw usage_error("schedule betas must lie in (0, 1)");
    if (i > 0 && !(betas[i] > betas[i - 1])) throw usage_error("schedule betas must be strictly increasing");
  }
  NoiseSchedule s;
  s.betas_ = std::move(betas);
  s.alpha_bars_.resize(s.betas_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < s.betas_.size(); ++i) {
    prod *= 1.0 - s.betas_[i];
    s.alpha_bars_[i] = prod;
  }
  s.gammas_.assign(s.betas_.size(), 1.0);
  return s;
}

NoiseSchedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 2) throw usage_error("make_schedule: need N >= 2");
  if (!(0.0 < beta_min && beta_min < beta_max && beta_max < 1.0))
    throw usage_error("make_schedule: need 0 < beta_min < beta_max < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) betas[i] = beta_min + (beta_max - beta_min) * i / (steps - 1);
  return NoiseSchedule::from_betas(std::move(betas));
}

void check_step(const NoiseSchedule& s, int n) {
  if (n < 1 || n > s.steps())
    throw usage_error("diffusion step " + std::to_string(n) + " outside [1, " + std::to_string(s.steps()) + "]");
}

double posterior_var(int n, const NoiseSchedule& s) {
  check_step(s, n);
  if (n == 1) return 0.0;
  return (1.0 - s.alpha_bar(n - 1)) / (1.0 - s.alpha_bar(n)) * s.beta(n);
}

nlohmann::json to_json(const ScheduleConfig& c) {
  return {{"steps", c.steps}, {"beta_min", c.beta_min}, {"beta_max", c.beta_max}};
}

ScheduleConfig schedule_config_from_json(const nlohmann::json& j) {
  ScheduleConfig c;
  c.steps = j.value("steps", c.steps);
  c.beta_min = j.value("beta_min", c.beta_min);
  c.beta_max = j.value("beta_max", c.beta_max);
  return c;
}

}  // namespace tcfoley::diffusion
