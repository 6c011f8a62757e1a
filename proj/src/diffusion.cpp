#include "dgsr/diffusion.hpp"

#include "dgsr/random.hpp"

#include <algorithm>
#include <cmath>

namespace dgsr {

std::string to_string(SamplerMethod m) {
  return m == SamplerMethod::ancestral ? "ddpm" : "ddim";
}

SamplerMethod sampler_method_from_string(const std::string& name) {
  if (name == "ddpm" || name == "ancestral") return SamplerMethod::ancestral;
  if (name == "ddim" || name == "deterministic") return SamplerMethod::deterministic;
  throw std::invalid_argument("unknown sampling method '" + name + "' (expected ddpm or ddim)");
}

template <typename Scalar>
Tensor<Scalar> forward_diffuse(const Tensor<Scalar>& z0, int t, const NoiseSchedule& schedule,
                               const Tensor<Scalar>& noise) {
  require_same_shape(z0, noise, "forward_diffuse");
  if (t == 0) return z0;
  const double ab = schedule.alpha_bar(t);
  return Tensor<Scalar>(z0.shape(), Scalar(std::sqrt(ab)) * z0.data() +
                                        Scalar(std::sqrt(1.0 - ab)) * noise.data());
}

template <typename Scalar>
Var<Scalar> forward_diffuse(const Var<Scalar>& z0, int t, const NoiseSchedule& schedule,
                            const Tensor<Scalar>& noise) {
  require_same_shape(z0.value(), noise, "forward_diffuse");
  if (t == 0) return z0;
  const double ab = schedule.alpha_bar(t);
  Tensor<Scalar> offset(noise.shape(), Scalar(std::sqrt(1.0 - ab)) * noise.data());
  return affine(z0, std::sqrt(ab), offset);
}

template <typename Scalar>
Tensor<Scalar> forward_diffuse(const Tensor<Scalar>& z0, const std::vector<int>& t,
                               const NoiseSchedule& schedule, const Tensor<Scalar>& noise) {
  require_same_shape(z0, noise, "forward_diffuse");
  if (t.size() != std::size_t(z0.shape().n))
    throw std::invalid_argument("forward_diffuse: one timestep per batch element required");
  Tensor<Scalar> out(z0.shape());
  const auto per = z0.shape().image_size();
  for (int n = 0; n < z0.shape().n; ++n) {
    const double ab = schedule.alpha_bar(t[n]);
    out.data().segment(n * per, per) = Scalar(std::sqrt(ab)) * z0.data().segment(n * per, per) +
                                       Scalar(std::sqrt(1.0 - ab)) * noise.data().segment(n * per, per);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> ddpm_step(const Tensor<Scalar>& z_t, int t, const Tensor<Scalar>& z0_hat,
                         const NoiseSchedule& schedule, const Tensor<Scalar>& noise,
                         std::optional<int> t_prev) {
  require_same_shape(z_t, z0_hat, "ddpm_step");
  require_same_shape(z_t, noise, "ddpm_step");
  const auto c = posterior_coefficients(schedule, t, t_prev.value_or(t - 1));
  Tensor<Scalar> out(z_t.shape(), Scalar(c.coef_xt) * z_t.data() + Scalar(c.coef_x0) * z0_hat.data());
  if (c.variance > 0) out.data() += Scalar(std::sqrt(c.variance)) * noise.data();
  return out;
}

template <typename Scalar>
Tensor<Scalar> ddim_step(const Tensor<Scalar>& z_t, int t, int t_prev,
                         const Tensor<Scalar>& z0_hat, const NoiseSchedule& schedule, double eta,
                         const Tensor<Scalar>& noise) {
  require_same_shape(z_t, z0_hat, "ddim_step");
  require_same_shape(z_t, noise, "ddim_step");
  if (t_prev < 0 || t_prev >= t) throw std::invalid_argument("ddim_step needs 0 <= t_prev < t");
  if (eta < 0 || eta > 1) throw std::invalid_argument("ddim_step: eta outside [0, 1]");
  const double ab_t = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  if (!(1.0 - ab_t > 0.0))
    throw DegenerateScheduleError("1 - alpha_bar_" + std::to_string(t) + " = 0 in ddim_step");
  const double sigma =
      eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_prev);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  // eps_hat = (z_t - sqrt(ab_t) z0_hat) / sqrt(1 - ab_t)
  const double inv = 1.0 / std::sqrt(1.0 - ab_t);
  Tensor<Scalar> out(z_t.shape());
  if (dir == 0.0) {
    out.data() = Scalar(std::sqrt(ab_prev)) * z0_hat.data();
  } else {
    const Scalar k_x0 = Scalar(std::sqrt(ab_prev) - dir * inv * std::sqrt(ab_t));
    const Scalar k_xt = Scalar(dir * inv);
    out.data() = k_x0 * z0_hat.data() + k_xt * z_t.data();
  }
  if (sigma > 0) out.data() += Scalar(sigma) * noise.data();
  return out;
}

std::vector<int> timestep_spacing(int T, int num_steps) {
  if (T < 1) throw std::invalid_argument("timestep_spacing needs T >= 1");
  if (num_steps < 1 || num_steps > T)
    throw std::invalid_argument("num_steps " + std::to_string(num_steps) + " outside [1, " +
                                std::to_string(T) + "]");
  const int stride = T / num_steps;
  std::vector<int> ts(num_steps);
  for (int i = 0; i < num_steps; ++i) ts[i] = T - i * stride;
  return ts;
}

std::vector<std::pair<int, int>> timestep_pairs(int T, int num_steps) {
  auto ts = timestep_spacing(T, num_steps);
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < ts.size(); ++i)
    pairs.emplace_back(ts[i], i + 1 < ts.size() ? ts[i + 1] : 0);
  return pairs;
}

template <typename Scalar>
Tensor<Scalar> sample(const Denoiser<Scalar>& generator, const Tensor<Scalar>& z_low,
                      const NoiseSchedule& schedule, const SamplerConfig& config,
                      std::uint64_t seed) {
  if (config.method == SamplerMethod::deterministic && (config.eta < 0 || config.eta > 1))
    throw std::invalid_argument("sampler eta outside [0, 1]");
  const auto pairs = timestep_pairs(schedule.T(), config.num_steps);
  Rng rng(seed);
  Tensor<Scalar> z = rng.normal_like<Scalar>(z_low.shape());
  const int batch = z_low.shape().n;
  Tensor<Scalar> z0_hat;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [t, t_prev] = pairs[i];
    z0_hat = generator(z, std::vector<int>(batch, t), z_low);
    require_same_shape(z0_hat, z, "sample: generator output");
    if (config.clamp_prediction) {
      const Scalar b = Scalar(*config.clamp_prediction);
      z0_hat.data() = z0_hat.data().max(-b).min(b);
    }
    if (i + 1 == pairs.size()) break;
    const bool needs_noise =
        config.method == SamplerMethod::ancestral || config.eta > 0.0;
    Tensor<Scalar> noise = needs_noise ? rng.normal_like<Scalar>(z.shape())
                                       : Tensor<Scalar>(z.shape());
    z = config.method == SamplerMethod::ancestral
            ? ddpm_step(z, t, z0_hat, schedule, noise, t_prev)
            : ddim_step(z, t, t_prev, z0_hat, schedule, config.eta, noise);
  }
  return z0_hat;
}

#define DGSR_INSTANTIATE_DIFFUSION(S)                                                          \
  template Tensor<S> forward_diffuse<S>(const Tensor<S>&, int, const NoiseSchedule&,           \
                                        const Tensor<S>&);                                     \
  template Var<S> forward_diffuse<S>(const Var<S>&, int, const NoiseSchedule&,                 \
                                     const Tensor<S>&);                                        \
  template Tensor<S> forward_diffuse<S>(const Tensor<S>&, const std::vector<int>&,             \
                                        const NoiseSchedule&, const Tensor<S>&);               \
  template Tensor<S> ddpm_step<S>(const Tensor<S>&, int, const Tensor<S>&,                     \
                                  const NoiseSchedule&, const Tensor<S>&, std::optional<int>); \
  template Tensor<S> ddim_step<S>(const Tensor<S>&, int, int, const Tensor<S>&,                \
                                  const NoiseSchedule&, double, const Tensor<S>&);             \
  template Tensor<S> sample<S>(const Denoiser<S>&, const Tensor<S>&, const NoiseSchedule&,     \
                               const SamplerConfig&, std::uint64_t);

DGSR_INSTANTIATE_DIFFUSION(float)
DGSR_INSTANTIATE_DIFFUSION(double)

}  // namespace dgsr
