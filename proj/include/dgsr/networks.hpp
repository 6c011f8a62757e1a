#ifndef DGSR_NETWORKS_HPP
#define DGSR_NETWORKS_HPP

#include "dgsr/layers.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace dgsr {

/// Sinusoidal embedding, shape (N, dim, 1, 1), entries interleaved
/// [sin(t w_0), cos(t w_0), sin(t w_1), ...] with w_i = 10000^(-i / (dim/2)).
template <typename Scalar>
Tensor<Scalar> time_embedding(const std::vector<int>& t, int dim);

struct UNetConfig {
  int latent_channels = 3;
  int base_width = 64;
  std::vector<int> channel_mults{1, 2, 4};
  int num_res_blocks = 2;
  /// Levels (indices into channel_mults) that get self-attention.
  std::vector<int> attention_levels{2};
  /// Width of the timestep MLP; 0 means 4 * base_width.
  int time_embed_dim = 0;
  /// Predict z_low + f(z_t, t, z_low) instead of f directly.
  bool residual_from_condition = true;
  /// Gain on the output projection's init range.
  double output_init_gain = 0.1;

  bool operator==(const UNetConfig&) const = default;
};

/// Conditional U-Net: z0_hat = G(z_t, t, z_low). z_low is fused by channel
/// concatenation at the input; the timestep enters every residual block.
template <typename Scalar>
class UNetGenerator {
 public:
  UNetGenerator(const UNetConfig& config, int max_timestep, std::uint64_t seed);
  ~UNetGenerator();
  UNetGenerator(UNetGenerator&&) noexcept;
  UNetGenerator& operator=(UNetGenerator&&) noexcept;

  Var<Scalar> operator()(const Var<Scalar>& z_t, const std::vector<int>& t,
                         const Var<Scalar>& z_low) const;

  /// Inference without graph recording.
  Tensor<Scalar> predict(const Tensor<Scalar>& z_t, const std::vector<int>& t,
                         const Tensor<Scalar>& z_low) const;

  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  const UNetConfig& config() const { return config_; }
  int max_timestep() const { return max_timestep_; }
  /// Spatial sizes must be multiples of this.
  int spatial_multiple() const;

 private:
  struct Impl;
  UNetConfig config_;
  int max_timestep_;
  ParameterSet<Scalar> params_;
  std::unique_ptr<Impl> impl_;
};

struct DiscriminatorConfig {
  int image_channels = 3;
  int base_width = 32;
  int stages = 4;
  double leaky_slope = 0.2;

  bool operator==(const DiscriminatorConfig&) const = default;
};

/// Strided conv stack -> global average pool -> logit -> sigmoid. Input is a
/// channel-concatenated image pair; output (N, 1, 1, 1) is the probability
/// that the real image occupies the first channel block.
template <typename Scalar>
class Discriminator {
 public:
  Discriminator(const DiscriminatorConfig& config, std::uint64_t seed);

  Var<Scalar> operator()(const Var<Scalar>& pair) const;
  Tensor<Scalar> predict(const Tensor<Scalar>& pair) const;

  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }
  const DiscriminatorConfig& config() const { return config_; }

 private:
  DiscriminatorConfig config_;
  ParameterSet<Scalar> params_;
  std::vector<Conv2d<Scalar>> stages_;
  Linear<Scalar> head_;
};

extern template class UNetGenerator<float>;
extern template class UNetGenerator<double>;
extern template class Discriminator<float>;
extern template class Discriminator<double>;

}  // namespace dgsr

#endif  // DGSR_NETWORKS_HPP
