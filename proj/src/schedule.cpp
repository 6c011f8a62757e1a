#include "dgsr/schedule.hpp"

#include <cmath>
#include <numbers>

namespace dgsr {

std::string to_string(ScheduleFamily f) {
  return f == ScheduleFamily::linear ? "linear" : "cosine";
}

ScheduleFamily schedule_family_from_string(const std::string& name) {
  if (name == "linear") return ScheduleFamily::linear;
  if (name == "cosine") return ScheduleFamily::cosine;
  throw std::invalid_argument("unknown schedule family '" + name + "'");
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas) {
  if (betas.empty()) throw std::invalid_argument("schedule needs T >= 1");
  betas_.reserve(betas.size() + 1);
  betas_.push_back(0.0);
  alpha_bars_.reserve(betas.size() + 1);
  alpha_bars_.push_back(1.0);
  for (double b : betas) {
    if (!(b >= 0.0 && b < 1.0))
      throw std::invalid_argument("beta " + std::to_string(b) + " outside [0, 1)");
    betas_.push_back(b);
    alpha_bars_.push_back(alpha_bars_.back() * (1.0 - b));
  }
  spec_.T = int(betas.size());
}

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  // beta_start = 0 is accepted as the zero-noise degenerate case.
  if (!(beta_start >= 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("linear schedule needs 0 <= beta_start <= beta_end < 1");
  std::vector<double> betas(T);
  for (int i = 0; i < T; ++i)
    betas[i] = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / double(T - 1);
  NoiseSchedule s(std::move(betas));
  s.spec_ = {ScheduleFamily::linear, T, beta_start, beta_end, s.spec_.cosine_offset};
  return s;
}

NoiseSchedule NoiseSchedule::cosine(int T, double offset) {
  if (T < 1) throw std::invalid_argument("schedule needs T >= 1");
  if (!(offset > 0.0)) throw std::invalid_argument("cosine offset must be positive");
  auto f = [&](int t) {
    const double x = (double(t) / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0;
    return std::cos(x) * std::cos(x);
  };
  std::vector<double> betas(T);
  for (int t = 1; t <= T; ++t) betas[t - 1] = std::min(1.0 - f(t) / f(t - 1), 0.999);
  NoiseSchedule s(std::move(betas));
  s.spec_.family = ScheduleFamily::cosine;
  s.spec_.cosine_offset = offset;
  return s;
}

NoiseSchedule NoiseSchedule::from_spec(const ScheduleSpec& spec) {
  if (spec.family == ScheduleFamily::linear) return linear(spec.T, spec.beta_start, spec.beta_end);
  NoiseSchedule s = cosine(spec.T, spec.cosine_offset);
  s.spec_ = spec;  // keeps the unused linear fields as given
  return s;
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  return NoiseSchedule(std::move(betas));
}

int NoiseSchedule::check(int t, int lowest) const {
  if (t < lowest || t > T())
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [" +
                            std::to_string(lowest) + ", " + std::to_string(T()) + "]");
  return t;
}

PosteriorCoefficients posterior_coefficients(const NoiseSchedule& schedule, int t) {
  return posterior_coefficients(schedule, t, t - 1);
}

PosteriorCoefficients posterior_coefficients(const NoiseSchedule& schedule, int t, int t_prev) {
  if (t < 1 || t > schedule.T())
    throw std::invalid_argument("posterior timestep " + std::to_string(t) + " outside [1, " +
                                std::to_string(schedule.T()) + "]");
  if (t_prev < 0 || t_prev >= t)
    throw std::invalid_argument("posterior needs 0 <= t_prev < t");
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double denom = 1.0 - ab_t;
  if (!(denom > 0.0))
    throw DegenerateScheduleError("1 - alpha_bar_" + std::to_string(t) +
                                  " = 0; the posterior is undefined");
  // With t_prev = t - 1 these are exactly alpha_t and beta_t. At t_prev = 0
  // the ratio form keeps coef_x0 = (1 - ab_t) / (1 - ab_t) = 1 exact.
  const bool single = t_prev == t - 1 && t_prev > 0;
  const double step_alpha = single ? schedule.alpha(t) : ab_t / ab_prev;
  const double step_beta = single ? schedule.beta(t) : 1.0 - step_alpha;
  PosteriorCoefficients c;
  c.coef_xt = std::sqrt(step_alpha) * (1.0 - ab_prev) / denom;
  c.coef_x0 = std::sqrt(ab_prev) * step_beta / denom;
  c.variance = std::max(0.0, step_beta * (1.0 - ab_prev) / denom);
  return c;
}

}  // namespace dgsr
