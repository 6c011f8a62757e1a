#ifndef DGSR_SCHEDULE_HPP
#define DGSR_SCHEDULE_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace dgsr {

/// Raised when a closed-form quantity would divide by 1 - alpha_bar_t = 0.
class DegenerateScheduleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class ScheduleFamily { linear, cosine };

std::string to_string(ScheduleFamily f);
ScheduleFamily schedule_family_from_string(const std::string& name);

/// Everything needed to rebuild a schedule exactly. Stored in checkpoints.
struct ScheduleSpec {
  ScheduleFamily family = ScheduleFamily::linear;
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  // cosine offset; ignored by the linear family
  double cosine_offset = 0.008;

  bool operator==(const ScheduleSpec&) const = default;
};

/// beta_t, alpha_t and alpha_bar_t for t = 1..T with alpha_bar_0 = 1.
/// All arithmetic is double precision. Immutable after construction.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int T, double beta_start, double beta_end);
  static NoiseSchedule cosine(int T, double offset = 0.008);
  static NoiseSchedule from_spec(const ScheduleSpec& spec);
  /// Arbitrary per-step variances, betas[t - 1] = beta_t, each in [0, 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  int T() const { return int(betas_.size()) - 1; }
  double beta(int t) const { return betas_.at(check(t, 1)); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bars_.at(check(t, 0)); }

  const ScheduleSpec& spec() const { return spec_; }

 private:
  explicit NoiseSchedule(std::vector<double> betas);
  int check(int t, int lowest) const;

  ScheduleSpec spec_;
  // index 0 is a placeholder (beta_0 = 0) so that betas_[t] is beta_t
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

struct PosteriorCoefficients {
  double coef_xt = 0;
  double coef_x0 = 0;
  double variance = 0;
};

/// Mean coefficients and variance of q(x_{t-1} | x_t, x_0).
PosteriorCoefficients posterior_coefficients(const NoiseSchedule& schedule, int t);

/// q(x_{t_prev} | x_t, x_0) for a skipped chain, treating alpha_bar_t /
/// alpha_bar_{t_prev} as the single-step alpha. Equals the one-argument
/// overload when t_prev = t - 1.
PosteriorCoefficients posterior_coefficients(const NoiseSchedule& schedule, int t, int t_prev);

}  // namespace dgsr

#endif  // DGSR_SCHEDULE_HPP
