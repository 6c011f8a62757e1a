#include "dgsr/autoencoder.hpp"

#include "dgsr/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace dgsr {

std::string to_string(AutoencoderKind k) {
  return k == AutoencoderKind::identity ? "identity" : "conv_vae";
}

AutoencoderKind autoencoder_kind_from_string(const std::string& name) {
  if (name == "identity") return AutoencoderKind::identity;
  if (name == "conv_vae") return AutoencoderKind::conv_vae;
  throw std::invalid_argument("unknown autoencoder '" + name + "' (expected identity or conv_vae)");
}

template <typename Scalar>
void Autoencoder<Scalar>::check_image(const Shape& s) const {
  if (s.c != spec_.image_channels)
    throw std::invalid_argument("autoencoder expects " + std::to_string(spec_.image_channels) +
                                "-channel images, got " + s.str());
  const int f = spec_.spatial_factor;
  if (s.h % f != 0 || s.w % f != 0)
    throw std::invalid_argument("image size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                                " is not divisible by the autoencoder factor " +
                                std::to_string(f));
}

template <typename Scalar>
void Autoencoder<Scalar>::check_latent(const Shape& s) const {
  if (s.c != spec_.latent_channels)
    throw std::invalid_argument("autoencoder expects " + std::to_string(spec_.latent_channels) +
                                "-channel latents, got " + s.str());
}

template <typename Scalar>
Shape Autoencoder<Scalar>::latent_shape(Shape image) const {
  check_image(image);
  return {image.n, spec_.latent_channels, image.h / spec_.spatial_factor,
          image.w / spec_.spatial_factor};
}

template <typename Scalar>
Shape Autoencoder<Scalar>::image_shape(Shape latent) const {
  check_latent(latent);
  return {latent.n, spec_.image_channels, latent.h * spec_.spatial_factor,
          latent.w * spec_.spatial_factor};
}

template <typename Scalar>
Tensor<Scalar> Autoencoder<Scalar>::encode(const Tensor<Scalar>& image) const {
  NoGradGuard guard;
  return encode(constant(image)).value();
}

template <typename Scalar>
Tensor<Scalar> Autoencoder<Scalar>::decode(const Tensor<Scalar>& latent) const {
  NoGradGuard guard;
  return decode(constant(latent)).value();
}

template <typename Scalar>
Var<Scalar> IdentityCodec<Scalar>::encode(const Var<Scalar>& image) const {
  this->check_image(image.shape());
  return image;
}

template <typename Scalar>
Var<Scalar> IdentityCodec<Scalar>::decode(const Var<Scalar>& latent) const {
  this->check_latent(latent.shape());
  return clamp(latent, -1.0, 1.0);
}

template <typename Scalar>
struct ConvVae<Scalar>::Impl {
  std::vector<Conv2d<Scalar>> encoder;
  Conv2d<Scalar> moments;
  std::vector<Conv2d<Scalar>> decoder;
  std::vector<bool> upsample_before;  // parallel to decoder
  Conv2d<Scalar> to_image;
};

template <typename Scalar>
ConvVae<Scalar>::ConvVae(AutoencoderSpec spec, std::uint64_t seed)
    : Autoencoder<Scalar>(spec), impl_(std::make_unique<Impl>()) {
  if (spec.kind != AutoencoderKind::conv_vae || spec.spatial_factor != 4)
    throw std::invalid_argument("ConvVae requires kind conv_vae with spatial factor 4");
  if (spec.width < 1 || spec.latent_channels < 1)
    throw std::invalid_argument("ConvVae width and latent channels must be positive");
  Rng rng = Rng::derive(seed, {0x7ae});
  auto& p = this->params_;
  auto& m = *impl_;
  const int w = spec.width, w2 = 2 * spec.width;
  m.encoder.emplace_back(p, "enc.0", spec.image_channels, w, 3, 1, rng);
  m.encoder.emplace_back(p, "enc.1", w, w2, 3, 2, rng);
  m.encoder.emplace_back(p, "enc.2", w2, w2, 3, 1, rng);
  m.encoder.emplace_back(p, "enc.3", w2, w2, 3, 2, rng);
  m.encoder.emplace_back(p, "enc.4", w2, w2, 3, 1, rng);
  m.moments = Conv2d<Scalar>(p, "enc.moments", w2, 2 * spec.latent_channels, 3, 1, rng);
  // Start with a narrow posterior (sigma ~ 0.05) so early decoder updates see
  // informative latents.
  auto& moment_bias = p.entries().back().second.mutable_value().data();
  moment_bias.tail(spec.latent_channels).setConstant(Scalar(-6));

  m.decoder.emplace_back(p, "dec.0", spec.latent_channels, w2, 3, 1, rng);
  m.decoder.emplace_back(p, "dec.1", w2, w2, 3, 1, rng);
  m.decoder.emplace_back(p, "dec.2", w2, w, 3, 1, rng);
  m.decoder.emplace_back(p, "dec.3", w, w, 3, 1, rng);
  m.decoder.emplace_back(p, "dec.4", w, w, 3, 1, rng);
  m.upsample_before = {false, false, true, false, true};
  m.to_image = Conv2d<Scalar>(p, "dec.out", w, spec.image_channels, 3, 1, rng);
}

template <typename Scalar>
ConvVae<Scalar>::~ConvVae() = default;

namespace {

// Shape-preserving layers get a skip path.
template <typename Scalar>
Var<Scalar> residual(const Conv2d<Scalar>& conv, const Var<Scalar>& h) {
  auto out = silu(conv(h));
  return out.shape() == h.shape() ? h + out : out;
}

}  // namespace

template <typename Scalar>
std::pair<Var<Scalar>, Var<Scalar>> ConvVae<Scalar>::posterior(const Var<Scalar>& image) const {
  this->check_image(image.shape());
  auto h = image;
  for (const auto& conv : impl_->encoder) h = residual(conv, h);
  auto moments = impl_->moments(h);
  const int lc = this->spec_.latent_channels;
  return {slice_channels(moments, 0, lc), slice_channels(moments, lc, lc)};
}

template <typename Scalar>
Var<Scalar> ConvVae<Scalar>::encode(const Var<Scalar>& image) const {
  return posterior(image).first;
}

template <typename Scalar>
Var<Scalar> ConvVae<Scalar>::decode_raw(const Var<Scalar>& latent) const {
  this->check_latent(latent.shape());
  const auto& m = *impl_;
  auto h = latent;
  for (std::size_t i = 0; i < m.decoder.size(); ++i) {
    if (m.upsample_before[i]) h = upsample_nearest2(h);
    h = residual(m.decoder[i], h);
  }
  return m.to_image(h);
}

template <typename Scalar>
Var<Scalar> ConvVae<Scalar>::decode(const Var<Scalar>& latent) const {
  return clamp(decode_raw(latent), -1.0, 1.0);
}

template <typename Scalar>
std::unique_ptr<Autoencoder<Scalar>> make_autoencoder(const AutoencoderSpec& spec,
                                                      std::uint64_t seed) {
  if (spec.kind == AutoencoderKind::identity) {
    if (spec.spatial_factor != 1 || spec.latent_channels != spec.image_channels)
      throw std::invalid_argument(
          "identity autoencoder requires factor 1 and latent channels = image channels");
    return std::make_unique<IdentityCodec<Scalar>>(spec.image_channels);
  }
  return std::make_unique<ConvVae<Scalar>>(spec, seed);
}

template <typename Scalar>
VaeTrainReport pretrain_vae(ConvVae<Scalar>& vae,
                            const std::function<Tensor<Scalar>(int step)>& next_batch,
                            const VaeTrainOptions& options) {
  auto& params = vae.parameters();
  params.set_requires_grad(true);
  Adam<Scalar> opt(params, {options.learning_rate});
  VaeTrainReport report;
  for (int step = 0; step < options.steps; ++step) {
    Tensor<Scalar> images = next_batch(step);
    Rng rng = Rng::derive(options.seed, {0x7ae7, std::uint64_t(step)});
    opt.zero_grad();
    auto x = constant(images);
    auto [mu, logvar] = vae.posterior(x);
    Tensor<Scalar> eps = rng.normal_like<Scalar>(mu.shape());
    auto z = add(mu, mul(exp(scale(logvar, 0.5)), constant(eps)));
    auto recon = mse_loss(vae.decode_raw(z), x);
    // KL(N(mu, sigma^2) || N(0, 1)), averaged over latent elements
    auto kl = affine(mean(sub(add(square(mu), exp(logvar)), logvar)), 0.5,
                     Tensor<Scalar>::scalar(Scalar(-0.5)));
    auto loss = add(recon, scale(kl, options.kl_weight));
    backward(loss);
    opt.step();
    const double value = double(loss.value().item());
    if (!std::isfinite(value))
      throw std::runtime_error("VAE pre-training diverged at step " + std::to_string(step));
    if (step == 0) report.first_loss = value;
    report.last_loss = value;
  }
  params.zero_grad();
  params.set_requires_grad(false);
  return report;
}

template class Autoencoder<float>;
template class Autoencoder<double>;
template class IdentityCodec<float>;
template class IdentityCodec<double>;
template class ConvVae<float>;
template class ConvVae<double>;
template std::unique_ptr<Autoencoder<float>> make_autoencoder<float>(const AutoencoderSpec&,
                                                                     std::uint64_t);
template std::unique_ptr<Autoencoder<double>> make_autoencoder<double>(const AutoencoderSpec&,
                                                                       std::uint64_t);
template VaeTrainReport pretrain_vae<float>(ConvVae<float>&,
                                            const std::function<Tensor<float>(int)>&,
                                            const VaeTrainOptions&);
template VaeTrainReport pretrain_vae<double>(ConvVae<double>&,
                                             const std::function<Tensor<double>(int)>&,
                                             const VaeTrainOptions&);

}  // namespace dgsr
