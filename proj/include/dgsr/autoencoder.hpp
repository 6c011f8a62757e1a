#ifndef DGSR_AUTOENCODER_HPP
#define DGSR_AUTOENCODER_HPP

#include "dgsr/layers.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

namespace dgsr {

enum class AutoencoderKind { identity, conv_vae };

std::string to_string(AutoencoderKind k);
AutoencoderKind autoencoder_kind_from_string(const std::string& name);

struct AutoencoderSpec {
  AutoencoderKind kind = AutoencoderKind::identity;
  int spatial_factor = 1;
  int latent_channels = 3;
  int image_channels = 3;
  int width = 32;  // conv_vae hidden width

  static AutoencoderSpec identity(int image_channels = 3) {
    return {AutoencoderKind::identity, 1, image_channels, image_channels, 0};
  }
  static AutoencoderSpec conv_vae(int latent_channels = 4, int width = 32) {
    return {AutoencoderKind::conv_vae, 4, latent_channels, 3, width};
  }

  bool operator==(const AutoencoderSpec&) const = default;
};

/// Latent codec between pixel space ([-1, 1] images) and the diffusion space.
/// Encoding is deterministic (posterior mean); decoding clamps to [-1, 1].
/// Graph variants let gradients flow through a frozen codec.
template <typename Scalar>
class Autoencoder {
 public:
  virtual ~Autoencoder() = default;

  const AutoencoderSpec& spec() const { return spec_; }

  virtual Var<Scalar> encode(const Var<Scalar>& image) const = 0;
  virtual Var<Scalar> decode(const Var<Scalar>& latent) const = 0;

  Tensor<Scalar> encode(const Tensor<Scalar>& image) const;
  Tensor<Scalar> decode(const Tensor<Scalar>& latent) const;

  Shape latent_shape(Shape image) const;
  Shape image_shape(Shape latent) const;

  ParameterSet<Scalar>& parameters() { return params_; }
  const ParameterSet<Scalar>& parameters() const { return params_; }

 protected:
  explicit Autoencoder(AutoencoderSpec spec) : spec_(spec) {}
  void check_image(const Shape& s) const;
  void check_latent(const Shape& s) const;

  AutoencoderSpec spec_;
  ParameterSet<Scalar> params_;
};

template <typename Scalar>
class IdentityCodec final : public Autoencoder<Scalar> {
 public:
  explicit IdentityCodec(int image_channels = 3)
      : Autoencoder<Scalar>(AutoencoderSpec::identity(image_channels)) {}

  Var<Scalar> encode(const Var<Scalar>& image) const override;
  Var<Scalar> decode(const Var<Scalar>& latent) const override;
  using Autoencoder<Scalar>::encode;
  using Autoencoder<Scalar>::decode;
};

/// Small convolutional VAE, spatial factor 4.
template <typename Scalar>
class ConvVae final : public Autoencoder<Scalar> {
 public:
  ConvVae(AutoencoderSpec spec, std::uint64_t seed);
  ~ConvVae() override;

  Var<Scalar> encode(const Var<Scalar>& image) const override;
  Var<Scalar> decode(const Var<Scalar>& latent) const override;
  using Autoencoder<Scalar>::encode;
  using Autoencoder<Scalar>::decode;

  /// Posterior mean and log-variance, each (N, latent, H/4, W/4).
  std::pair<Var<Scalar>, Var<Scalar>> posterior(const Var<Scalar>& image) const;
  /// Decoder output before the range clamp (used for pre-training).
  Var<Scalar> decode_raw(const Var<Scalar>& latent) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

template <typename Scalar>
std::unique_ptr<Autoencoder<Scalar>> make_autoencoder(const AutoencoderSpec& spec,
                                                      std::uint64_t seed);

struct VaeTrainOptions {
  int steps = 2000;
  int batch_size = 8;
  double learning_rate = 1e-3;
  double kl_weight = 1e-6;
  std::uint64_t seed = 0;
};

struct VaeTrainReport {
  double first_loss = 0;
  double last_loss = 0;
};

/// Pre-trains a conv VAE with MSE + KL on batches from `next_batch(step)`.
/// The codec is frozen by the caller afterwards.
template <typename Scalar>
VaeTrainReport pretrain_vae(ConvVae<Scalar>& vae,
                            const std::function<Tensor<Scalar>(int step)>& next_batch,
                            const VaeTrainOptions& options);

extern template class Autoencoder<float>;
extern template class Autoencoder<double>;
extern template class IdentityCodec<float>;
extern template class IdentityCodec<double>;
extern template class ConvVae<float>;
extern template class ConvVae<double>;

}  // namespace dgsr

#endif  // DGSR_AUTOENCODER_HPP
