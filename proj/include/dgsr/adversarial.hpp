#ifndef DGSR_ADVERSARIAL_HPP
#define DGSR_ADVERSARIAL_HPP

#include "dgsr/autograd.hpp"
#include "dgsr/schedule.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace dgsr {

/// EMA of discriminator accuracy driving the corruption timestep s.
struct AdaptiveCorruptionState {
  double acc_ema = 0.5;
  double lambda_ema = 0.05;
  int T = 1000;

  bool operator==(const AdaptiveCorruptionState&) const = default;
};

/// acc_ema <- acc_batch * lambda + acc_ema * (1 - lambda).
AdaptiveCorruptionState update_ema(const AdaptiveCorruptionState& state, double acc_batch);

/// s = floor(max(2T(acc_ema - 1/2), 0)), in [0, T].
int corruption_timestep(const AdaptiveCorruptionState& state);

/// Forward-diffuses both latents to the same timestep s with independent
/// noise draws from `seed`. s = 0 returns the inputs.
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> corrupt_pair(const Tensor<Scalar>& z0,
                                                       const Tensor<Scalar>& z0_hat, int s,
                                                       const NoiseSchedule& schedule,
                                                       std::uint64_t seed);

/// Graph variant used in training: z0 is data, z0_hat carries gradients.
template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> corrupt_pair(const Tensor<Scalar>& z0,
                                                 const Var<Scalar>& z0_hat, int s,
                                                 const NoiseSchedule& schedule,
                                                 std::uint64_t seed);

/// y[n] = 1 means the real image goes first. Each order has probability 1/2.
std::vector<std::uint8_t> random_order(int batch, std::uint64_t seed);

template <typename Scalar>
struct ConcatPair {
  Tensor<Scalar> pair;  // (N, 2C, H, W)
  std::vector<std::uint8_t> y;
};

template <typename Scalar>
ConcatPair<Scalar> random_concat(const Tensor<Scalar>& x_real, const Tensor<Scalar>& x_fake,
                                 std::uint64_t seed);

/// Concatenation with a caller-chosen order.
template <typename Scalar>
ConcatPair<Scalar> concat_with_order(const Tensor<Scalar>& x_real, const Tensor<Scalar>& x_fake,
                                     std::vector<std::uint8_t> y);

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean BCE; predictions outside [eps, 1 - eps] are clamped and a warning logged.
double discriminator_loss(std::span<const double> pred, std::span<const std::uint8_t> y);

/// Fraction with (pred > 0.5) == y. pred = 0.5 counts as wrong.
double batch_accuracy(std::span<const double> pred, std::span<const std::uint8_t> y);

struct LossReport {
  double l_mse = 0;
  double l_d = 0;    // discriminator loss the generator objective is built on
  double l_adv = 0;  // = -l_d
  double l_g = 0;    // = l_mse + lambda_adv * l_adv
  double acc_batch = 0;
  int s_used = 0;
  double lambda_adv = 1e-3;
  double l_d_disc = 0;  // loss of the discriminator update (before it is applied)
  std::int64_t step = 0;
};

template <typename Scalar>
LossReport generator_loss(const Tensor<Scalar>& z0, const Tensor<Scalar>& z0_hat, double l_d,
                          double lambda_adv);

template <typename Scalar>
std::vector<double> to_doubles(const Tensor<Scalar>& t) {
  return std::vector<double>(t.data().begin(), t.data().end());
}

}  // namespace dgsr

#endif  // DGSR_ADVERSARIAL_HPP
