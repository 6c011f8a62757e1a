#include "dgsr/adversarial.hpp"

#include "dgsr/diffusion.hpp"
#include "dgsr/log.hpp"
#include "dgsr/random.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dgsr {

AdaptiveCorruptionState update_ema(const AdaptiveCorruptionState& state, double acc_batch) {
  if (!(acc_batch >= 0.0 && acc_batch <= 1.0))
    throw std::invalid_argument("acc_batch " + std::to_string(acc_batch) + " outside [0, 1]");
  if (!(state.lambda_ema > 0.0 && state.lambda_ema <= 1.0))
    throw std::invalid_argument("lambda_ema outside (0, 1]");
  AdaptiveCorruptionState next = state;
  next.acc_ema = acc_batch * state.lambda_ema + state.acc_ema * (1.0 - state.lambda_ema);
  next.acc_ema = std::clamp(next.acc_ema, 0.0, 1.0);
  return next;
}

int corruption_timestep(const AdaptiveCorruptionState& state) {
  // The offset absorbs rounding in decimal inputs: 2 * 1000 * (0.6 - 0.5)
  // evaluates to 199.99999999999997.
  const double raw = std::max(2.0 * state.T * (state.acc_ema - 0.5) + 1e-9, 0.0);
  return std::min(int(std::floor(raw)), state.T);
}

template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> corrupt_pair(const Tensor<Scalar>& z0,
                                                       const Tensor<Scalar>& z0_hat, int s,
                                                       const NoiseSchedule& schedule,
                                                       std::uint64_t seed) {
  require_same_shape(z0, z0_hat, "corrupt_pair");
  if (s < 0 || s > schedule.T()) throw std::invalid_argument("corrupt_pair: s outside [0, T]");
  if (s == 0) return {z0, z0_hat};
  Rng rng(seed);
  Tensor<Scalar> noise_real = rng.normal_like<Scalar>(z0.shape());
  Tensor<Scalar> noise_fake = rng.normal_like<Scalar>(z0.shape());
  return {forward_diffuse(z0, s, schedule, noise_real),
          forward_diffuse(z0_hat, s, schedule, noise_fake)};
}

template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> corrupt_pair(const Tensor<Scalar>& z0,
                                                 const Var<Scalar>& z0_hat, int s,
                                                 const NoiseSchedule& schedule,
                                                 std::uint64_t seed) {
  require_same_shape(z0, z0_hat.value(), "corrupt_pair");
  if (s < 0 || s > schedule.T()) throw std::invalid_argument("corrupt_pair: s outside [0, T]");
  if (s == 0) return {constant(z0), z0_hat};
  Rng rng(seed);
  Tensor<Scalar> noise_real = rng.normal_like<Scalar>(z0.shape());
  Tensor<Scalar> noise_fake = rng.normal_like<Scalar>(z0.shape());
  return {constant(forward_diffuse(z0, s, schedule, noise_real)),
          forward_diffuse(z0_hat, s, schedule, noise_fake)};
}

std::vector<std::uint8_t> random_order(int batch, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> y(batch);
  for (auto& v : y) v = rng.bernoulli(0.5) ? 1 : 0;
  return y;
}

template <typename Scalar>
ConcatPair<Scalar> concat_with_order(const Tensor<Scalar>& x_real, const Tensor<Scalar>& x_fake,
                                     std::vector<std::uint8_t> y) {
  require_same_shape(x_real, x_fake, "random_concat");
  NoGradGuard guard;
  auto pair = ordered_concat(constant(x_real), constant(x_fake), y).value();
  return {std::move(pair), std::move(y)};
}

template <typename Scalar>
ConcatPair<Scalar> random_concat(const Tensor<Scalar>& x_real, const Tensor<Scalar>& x_fake,
                                 std::uint64_t seed) {
  require_same_shape(x_real, x_fake, "random_concat");
  return concat_with_order(x_real, x_fake, random_order(x_real.shape().n, seed));
}

double discriminator_loss(std::span<const double> pred, std::span<const std::uint8_t> y) {
  if (pred.size() != y.size() || pred.empty())
    throw std::invalid_argument("discriminator_loss: prediction/label length mismatch");
  const double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  std::size_t clamped = 0;
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double p = pred[i];
    if (p < lo || p > hi) {
      ++clamped;
      p = std::clamp(p, lo, hi);
    }
    total -= y[i] ? std::log(p) : std::log(1.0 - p);
  }
  if (clamped > 0)
    log_warning("discriminator_loss: clamped " + std::to_string(clamped) +
                " predictions to [1e-7, 1 - 1e-7]");
  return total / double(pred.size());
}

double batch_accuracy(std::span<const double> pred, std::span<const std::uint8_t> y) {
  if (pred.size() != y.size()) throw std::invalid_argument("batch_accuracy: length mismatch");
  if (pred.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool says_real_first = pred[i] > 0.5;
    if (says_real_first == bool(y[i]) && pred[i] != 0.5) ++correct;
  }
  return double(correct) / double(pred.size());
}

template <typename Scalar>
LossReport generator_loss(const Tensor<Scalar>& z0, const Tensor<Scalar>& z0_hat, double l_d,
                          double lambda_adv) {
  require_same_shape(z0, z0_hat, "generator_loss");
  if (lambda_adv < 0) throw std::invalid_argument("lambda_adv must be >= 0");
  LossReport r;
  r.l_mse = double((z0.data() - z0_hat.data()).square().template cast<double>().mean());
  r.l_d = l_d;
  r.l_adv = -l_d;
  r.l_g = r.l_mse + lambda_adv * r.l_adv;
  r.lambda_adv = lambda_adv;
  return r;
}

#define DGSR_INSTANTIATE_ADVERSARIAL(S)                                                        \
  template std::pair<Tensor<S>, Tensor<S>> corrupt_pair<S>(                                    \
      const Tensor<S>&, const Tensor<S>&, int, const NoiseSchedule&, std::uint64_t);           \
  template std::pair<Var<S>, Var<S>> corrupt_pair<S>(const Tensor<S>&, const Var<S>&, int,     \
                                                     const NoiseSchedule&, std::uint64_t);     \
  template ConcatPair<S> random_concat<S>(const Tensor<S>&, const Tensor<S>&, std::uint64_t);  \
  template ConcatPair<S> concat_with_order<S>(const Tensor<S>&, const Tensor<S>&,              \
                                              std::vector<std::uint8_t>);                      \
  template LossReport generator_loss<S>(const Tensor<S>&, const Tensor<S>&, double, double);

DGSR_INSTANTIATE_ADVERSARIAL(float)
DGSR_INSTANTIATE_ADVERSARIAL(double)

}  // namespace dgsr
