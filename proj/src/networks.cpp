#include "dgsr/networks.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dgsr {

template <typename Scalar>
Tensor<Scalar> time_embedding(const std::vector<int>& t, int dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("time_embedding: dim must be even, got " + std::to_string(dim));
  const int half = dim / 2;
  Tensor<Scalar> out({int(t.size()), dim, 1, 1});
  for (std::size_t n = 0; n < t.size(); ++n) {
    if (t[n] < 0) throw std::invalid_argument("time_embedding: negative timestep");
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      const double angle = t[n] * freq;
      out(int(n), 2 * i, 0, 0) = Scalar(std::sin(angle));
      out(int(n), 2 * i + 1, 0, 0) = Scalar(std::cos(angle));
    }
  }
  return out;
}

namespace {

template <typename Scalar>
struct ResBlock {
  GroupNorm<Scalar> norm1, norm2;
  Conv2d<Scalar> conv1, conv2;
  Linear<Scalar> time_proj;
  std::optional<Conv2d<Scalar>> skip;

  ResBlock(ParameterSet<Scalar>& p, const std::string& name, int cin, int cout, int temb,
           Rng& rng)
      : norm1(p, name + ".norm1", cin, norm_groups(cin)),
        norm2(p, name + ".norm2", cout, norm_groups(cout)),
        conv1(p, name + ".conv1", cin, cout, 3, 1, rng),
        conv2(p, name + ".conv2", cout, cout, 3, 1, rng),
        time_proj(p, name + ".time", temb, cout, rng) {
    if (cin != cout) skip.emplace(p, name + ".skip", cin, cout, 1, 1, rng);
  }

  Var<Scalar> operator()(const Var<Scalar>& x, const Var<Scalar>& temb) const {
    auto h = conv1(silu(norm1(x)));
    h = add_channelwise(h, time_proj(temb));
    h = conv2(silu(norm2(h)));
    return add(h, skip ? (*skip)(x) : x);
  }
};

template <typename Scalar>
struct AttentionBlock {
  GroupNorm<Scalar> norm;
  Conv2d<Scalar> q, k, v, proj;

  AttentionBlock(ParameterSet<Scalar>& p, const std::string& name, int ch, Rng& rng)
      : norm(p, name + ".norm", ch, norm_groups(ch)),
        q(p, name + ".q", ch, ch, 1, 1, rng),
        k(p, name + ".k", ch, ch, 1, 1, rng),
        v(p, name + ".v", ch, ch, 1, 1, rng),
        proj(p, name + ".proj", ch, ch, 1, 1, rng) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    auto h = norm(x);
    return add(x, proj(spatial_attention(q(h), k(h), v(h))));
  }
};

template <typename Scalar>
struct Stage {
  std::vector<ResBlock<Scalar>> blocks;
  std::vector<std::optional<AttentionBlock<Scalar>>> attention;
  std::optional<Conv2d<Scalar>> resample;  // stride-2 conv going down, conv after upsample going up
};

}  // namespace

template <typename Scalar>
struct UNetGenerator<Scalar>::Impl {
  int sinusoid_dim = 0;
  Linear<Scalar> time1, time2;
  Conv2d<Scalar> input;
  std::vector<Stage<Scalar>> down;
  std::optional<ResBlock<Scalar>> mid1, mid2;
  std::optional<AttentionBlock<Scalar>> mid_attention;
  std::vector<Stage<Scalar>> up;  // ordered deepest first
  GroupNorm<Scalar> out_norm;
  Conv2d<Scalar> output;
};

template <typename Scalar>
UNetGenerator<Scalar>::UNetGenerator(const UNetConfig& config, int max_timestep,
                                     std::uint64_t seed)
    : config_(config), max_timestep_(max_timestep), impl_(std::make_unique<Impl>()) {
  if (config.base_width < 2 || config.base_width % 2 != 0)
    throw std::invalid_argument("generator base_width must be even and >= 2");
  if (config.channel_mults.empty() || config.num_res_blocks < 1 || config.latent_channels < 1)
    throw std::invalid_argument("generator needs at least one level and one block per level");
  if (max_timestep < 1) throw std::invalid_argument("generator max timestep must be >= 1");
  const int levels = int(config.channel_mults.size());
  for (int l : config.attention_levels)
    if (l < 0 || l >= levels) throw std::invalid_argument("attention level out of range");

  Rng rng = Rng::derive(seed, {0x6e6e});
  auto& p = params_;
  auto& m = *impl_;
  const int base = config.base_width;
  const int temb = config.time_embed_dim > 0 ? config.time_embed_dim : 4 * base;
  m.sinusoid_dim = base;
  m.time1 = Linear<Scalar>(p, "time.0", base, temb, rng);
  m.time2 = Linear<Scalar>(p, "time.1", temb, temb, rng);
  m.input = Conv2d<Scalar>(p, "input", 2 * config.latent_channels, base, 3, 1, rng);

  auto has_attention = [&](int level) {
    return std::find(config.attention_levels.begin(), config.attention_levels.end(), level) !=
           config.attention_levels.end();
  };

  std::vector<int> skip_channels{base};
  int ch = base;
  for (int l = 0; l < levels; ++l) {
    Stage<Scalar> stage;
    const int out = base * config.channel_mults[l];
    for (int b = 0; b < config.num_res_blocks; ++b) {
      const std::string name = "down." + std::to_string(l) + "." + std::to_string(b);
      stage.blocks.emplace_back(p, name, ch, out, temb, rng);
      ch = out;
      if (has_attention(l))
        stage.attention.emplace_back(std::in_place, p, name + ".attn", ch, rng);
      else
        stage.attention.emplace_back(std::nullopt);
      skip_channels.push_back(ch);
    }
    if (l + 1 < levels) {
      stage.resample.emplace(p, "down." + std::to_string(l) + ".downsample", ch, ch, 3, 2, rng);
      skip_channels.push_back(ch);
    }
    m.down.push_back(std::move(stage));
  }

  m.mid1.emplace(p, "mid.0", ch, ch, temb, rng);
  m.mid_attention.emplace(p, "mid.attn", ch, rng);
  m.mid2.emplace(p, "mid.1", ch, ch, temb, rng);

  for (int l = levels - 1; l >= 0; --l) {
    Stage<Scalar> stage;
    const int out = base * config.channel_mults[l];
    for (int b = 0; b <= config.num_res_blocks; ++b) {
      const std::string name = "up." + std::to_string(l) + "." + std::to_string(b);
      const int skip = skip_channels.back();
      skip_channels.pop_back();
      stage.blocks.emplace_back(p, name, ch + skip, out, temb, rng);
      ch = out;
      if (has_attention(l))
        stage.attention.emplace_back(std::in_place, p, name + ".attn", ch, rng);
      else
        stage.attention.emplace_back(std::nullopt);
    }
    if (l > 0) stage.resample.emplace(p, "up." + std::to_string(l) + ".upsample", ch, ch, 3, 1, rng);
    m.up.push_back(std::move(stage));
  }

  m.out_norm = GroupNorm<Scalar>(p, "out.norm", ch, norm_groups(ch));
  m.output = Conv2d<Scalar>(p, "out.conv", ch, config.latent_channels, 3, 1, rng,
                            config.output_init_gain);
}

template <typename Scalar>
UNetGenerator<Scalar>::~UNetGenerator() = default;
template <typename Scalar>
UNetGenerator<Scalar>::UNetGenerator(UNetGenerator&&) noexcept = default;
template <typename Scalar>
UNetGenerator<Scalar>& UNetGenerator<Scalar>::operator=(UNetGenerator&&) noexcept = default;

template <typename Scalar>
int UNetGenerator<Scalar>::spatial_multiple() const {
  return 1 << (int(config_.channel_mults.size()) - 1);
}

template <typename Scalar>
Var<Scalar> UNetGenerator<Scalar>::operator()(const Var<Scalar>& z_t, const std::vector<int>& t,
                                              const Var<Scalar>& z_low) const {
  const Shape s = z_t.shape();
  if (s != z_low.shape())
    throw std::invalid_argument("generator: z_t " + s.str() + " and z_low " +
                                z_low.shape().str() + " must match");
  if (s.c != config_.latent_channels)
    throw std::invalid_argument("generator: expected " + std::to_string(config_.latent_channels) +
                                " latent channels, got " + std::to_string(s.c));
  const int mult = spatial_multiple();
  if (s.h % mult != 0 || s.w % mult != 0)
    throw std::invalid_argument("generator: spatial size " + s.str() + " not divisible by " +
                                std::to_string(mult));
  if (t.size() != std::size_t(s.n))
    throw std::invalid_argument("generator: need one timestep per batch element");
  for (int ti : t)
    if (ti < 1 || ti > max_timestep_)
      throw std::invalid_argument("generator: timestep " + std::to_string(ti) + " outside [1, " +
                                  std::to_string(max_timestep_) + "]");

  const auto& m = *impl_;
  auto temb = m.time2(silu(m.time1(constant(time_embedding<Scalar>(t, m.sinusoid_dim)))));
  temb = silu(temb);

  auto h = m.input(concat_channels(z_t, z_low));
  std::vector<Var<Scalar>> skips{h};
  for (const auto& stage : m.down) {
    for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
      h = stage.blocks[b](h, temb);
      if (stage.attention[b]) h = (*stage.attention[b])(h);
      skips.push_back(h);
    }
    if (stage.resample) {
      h = (*stage.resample)(h);
      skips.push_back(h);
    }
  }
  h = (*m.mid1)(h, temb);
  h = (*m.mid_attention)(h);
  h = (*m.mid2)(h, temb);
  for (const auto& stage : m.up) {
    for (std::size_t b = 0; b < stage.blocks.size(); ++b) {
      h = stage.blocks[b](concat_channels(h, skips.back()), temb);
      skips.pop_back();
      if (stage.attention[b]) h = (*stage.attention[b])(h);
    }
    if (stage.resample) h = (*stage.resample)(upsample_nearest2(h));
  }
  auto out = m.output(silu(m.out_norm(h)));
  return config_.residual_from_condition ? add(out, z_low) : out;
}

template <typename Scalar>
Tensor<Scalar> UNetGenerator<Scalar>::predict(const Tensor<Scalar>& z_t, const std::vector<int>& t,
                                              const Tensor<Scalar>& z_low) const {
  NoGradGuard guard;
  return (*this)(constant(z_t), t, constant(z_low)).value();
}

template <typename Scalar>
Discriminator<Scalar>::Discriminator(const DiscriminatorConfig& config, std::uint64_t seed)
    : config_(config) {
  if (config.stages < 1 || config.base_width < 1 || config.image_channels < 1)
    throw std::invalid_argument("discriminator config must be positive");
  Rng rng = Rng::derive(seed, {0xd15c});
  int ch = 2 * config.image_channels;
  for (int s = 0; s < config.stages; ++s) {
    const int out = config.base_width << std::min(s, 3);
    stages_.emplace_back(params_, "stage." + std::to_string(s), ch, out, 3, 2, rng);
    ch = out;
  }
  head_ = Linear<Scalar>(params_, "head", ch, 1, rng);
}

template <typename Scalar>
Var<Scalar> Discriminator<Scalar>::operator()(const Var<Scalar>& pair) const {
  if (pair.shape().c != 2 * config_.image_channels)
    throw std::invalid_argument("discriminator expects " +
                                std::to_string(2 * config_.image_channels) +
                                " channels, got " + std::to_string(pair.shape().c));
  auto h = pair;
  for (const auto& conv : stages_) h = leaky_relu(conv(h), config_.leaky_slope);
  return sigmoid(head_(global_avg_pool(h)));
}

template <typename Scalar>
Tensor<Scalar> Discriminator<Scalar>::predict(const Tensor<Scalar>& pair) const {
  NoGradGuard guard;
  return (*this)(constant(pair)).value();
}

template Tensor<float> time_embedding<float>(const std::vector<int>&, int);
template Tensor<double> time_embedding<double>(const std::vector<int>&, int);
template class UNetGenerator<float>;
template class UNetGenerator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace dgsr
