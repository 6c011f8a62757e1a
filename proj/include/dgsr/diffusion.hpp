#ifndef DGSR_DIFFUSION_HPP
#define DGSR_DIFFUSION_HPP

#include "dgsr/autograd.hpp"
#include "dgsr/schedule.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dgsr {

/// ancestral = DDPM posterior sampling, deterministic = DDIM (eta-controlled).
enum class SamplerMethod { ancestral, deterministic };
enum class TimestepSpacing { uniform };

std::string to_string(SamplerMethod m);
SamplerMethod sampler_method_from_string(const std::string& name);

struct SamplerConfig {
  SamplerMethod method = SamplerMethod::ancestral;
  int num_steps = 10;
  double eta = 0.0;  // deterministic sampler only
  TimestepSpacing spacing = TimestepSpacing::uniform;
  std::optional<double> clamp_prediction;  // |z0_hat| bound, off by default
};

/// sqrt(ab_t) * z0 + sqrt(1 - ab_t) * noise. t = 0 returns z0.
template <typename Scalar>
Tensor<Scalar> forward_diffuse(const Tensor<Scalar>& z0, int t, const NoiseSchedule& schedule,
                               const Tensor<Scalar>& noise);

/// Graph-recording variant; noise is a constant.
template <typename Scalar>
Var<Scalar> forward_diffuse(const Var<Scalar>& z0, int t, const NoiseSchedule& schedule,
                            const Tensor<Scalar>& noise);

/// Per-element timesteps.
template <typename Scalar>
Tensor<Scalar> forward_diffuse(const Tensor<Scalar>& z0, const std::vector<int>& t,
                               const NoiseSchedule& schedule, const Tensor<Scalar>& noise);

/// One posterior step z_t -> z_{t_prev} using the clean estimate z0_hat.
/// t_prev defaults to t - 1; larger gaps use the skipped-chain posterior.
template <typename Scalar>
Tensor<Scalar> ddpm_step(const Tensor<Scalar>& z_t, int t, const Tensor<Scalar>& z0_hat,
                         const NoiseSchedule& schedule, const Tensor<Scalar>& noise,
                         std::optional<int> t_prev = std::nullopt);

template <typename Scalar>
Tensor<Scalar> ddim_step(const Tensor<Scalar>& z_t, int t, int t_prev,
                         const Tensor<Scalar>& z0_hat, const NoiseSchedule& schedule, double eta,
                         const Tensor<Scalar>& noise);

/// T, T - s, T - 2s, ... with stride s = floor(T / num_steps); num_steps entries.
std::vector<int> timestep_spacing(int T, int num_steps);

/// (t, t_prev) pairs for a sampling run; the last t_prev is 0.
std::vector<std::pair<int, int>> timestep_pairs(int T, int num_steps);

/// z0_hat = G(z_t, t, z_low) with per-element timesteps.
template <typename Scalar>
using Denoiser = std::function<Tensor<Scalar>(const Tensor<Scalar>& z_t,
                                              const std::vector<int>& t,
                                              const Tensor<Scalar>& z_low)>;

/// Reverse process from z_T ~ N(0, I). Returns the clean prediction made at
/// the last visited timestep. All draws come from `seed`.
template <typename Scalar>
Tensor<Scalar> sample(const Denoiser<Scalar>& generator, const Tensor<Scalar>& z_low,
                      const NoiseSchedule& schedule, const SamplerConfig& config,
                      std::uint64_t seed);

}  // namespace dgsr

#endif  // DGSR_DIFFUSION_HPP
