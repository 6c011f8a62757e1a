#include "dgsr/trainer.hpp"

#include "dgsr/checkpoint.hpp"
#include "dgsr/diffusion.hpp"
#include "dgsr/log.hpp"
#include "dgsr/random.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace dgsr {

namespace {

constexpr std::uint64_t kTrainStream = 0x7431;
// Codec pre-training batches come from far beyond any training step.
constexpr std::int64_t kCodecStepOffset = std::int64_t(1) << 40;

enum Purpose : std::uint64_t { timesteps = 1, diffusion_noise, corruption, order };

std::uint64_t step_seed(const TrainConfig& config, std::int64_t step, Purpose p) {
  return Rng::derive(config.seed, {kTrainStream, std::uint64_t(step), p}).engine()();
}

AdamOptions adam_options(const TrainConfig& c, bool discriminator) {
  AdamOptions o;
  o.learning_rate = discriminator && c.discriminator_learning_rate
                        ? *c.discriminator_learning_rate
                        : c.learning_rate;
  o.beta1 = c.adam_beta1;
  o.beta2 = c.adam_beta2;
  return o;
}

DiscriminatorConfig discriminator_config(const TrainConfig& c) {
  DiscriminatorConfig d = c.discriminator;
  d.image_channels = c.autoencoder.image_channels;
  return d;
}

std::string loss_components(std::int64_t step, double l_mse, double l_d, double l_g) {
  std::ostringstream out;
  out << std::setprecision(9) << "non-finite loss at step " << step << ": l_mse=" << l_mse
      << " l_d=" << l_d << " l_g=" << l_g;
  return out.str();
}

// Restores requires_grad on the discriminator even if the generator step throws.
template <typename Scalar>
struct FrozenScope {
  ParameterSet<Scalar>& params;
  explicit FrozenScope(ParameterSet<Scalar>& p) : params(p) { params.set_requires_grad(false); }
  ~FrozenScope() { params.set_requires_grad(true); }
};

}  // namespace

template <typename Scalar>
Models<Scalar>::Models(const TrainConfig& config)
    : schedule(NoiseSchedule::from_spec(config.schedule)),
      generator(effective_generator(config), config.schedule.T,
                Rng::derive(config.seed, {0x6e4, 1}).engine()()),
      discriminator(discriminator_config(config), Rng::derive(config.seed, {0x6e4, 2}).engine()()),
      codec(make_autoencoder<Scalar>(config.autoencoder,
                                     Rng::derive(config.seed, {0x6e4, 3}).engine()())),
      g_opt(generator.parameters(), adam_options(config, false)),
      d_opt(discriminator.parameters(), adam_options(config, true)) {
  codec->parameters().set_requires_grad(false);
}

template <typename Scalar>
std::pair<LossReport, AdaptiveCorruptionState> train_step(
    const PairBatch<Scalar>& batch, Models<Scalar>& m, const AdaptiveCorruptionState& state,
    const TrainConfig& config, std::int64_t step, const StepHooks<Scalar>* hooks) {
  require_same_shape(batch.x0, batch.x_low, "train_step");
  auto symbol = [hooks](const char* name, const Shape& s) {
    if (hooks && hooks->on_symbol) hooks->on_symbol(name, s);
  };
  const int T = m.schedule.T();
  const int N = batch.x0.shape().n;

  // (1) latents of both images through the frozen codec
  Tensor<Scalar> z0, z_low;
  {
    NoGradGuard no_grad;
    z0 = m.codec->encode(batch.x0);
    z_low = m.codec->encode(batch.x_low);
  }

  // (2) per-element t ~ U{1..T}, z_t = q(z_t | z0)
  std::vector<int> t(N);
  Rng t_rng(step_seed(config, step, timesteps));
  for (auto& v : t) v = t_rng.uniform_int(1, T);
  Rng noise_rng(step_seed(config, step, diffusion_noise));
  const Tensor<Scalar> z_t =
      forward_diffuse(z0, t, m.schedule, noise_rng.normal_like<Scalar>(z0.shape()));
  symbol("t", Shape{N, 1, 1, 1});
  symbol("z_t", z_t.shape());

  // (3) clean-latent prediction
  m.g_opt.zero_grad();
  const Var<Scalar> z0_hat = m.generator(constant(z_t), t, constant(z_low));
  symbol("z0_hat", z0_hat.shape());
  const Var<Scalar> l_mse = mse_loss(z0_hat, constant(z0));

  LossReport r;
  AdaptiveCorruptionState next = state;
  if (!config.adversarial) {
    r = generator_loss(z0, z0_hat.value(), 0.0, config.lambda_adv);
    r.step = step;
    if (!std::isfinite(r.l_mse)) throw TrainingError(loss_components(step, r.l_mse, 0, r.l_g));
    backward(l_mse);
    m.g_opt.step();
    if (hooks && hooks->after_generator_update) hooks->after_generator_update(m);
    return {r, next};
  }

  // (4) both latents corrupted to the same s, then decoded
  const int s = config.adaptive_corruption ? corruption_timestep(state) : 0;
  symbol("s", Shape{1, 1, 1, 1});
  auto [z_s, z_s_hat] =
      corrupt_pair(z0, z0_hat, s, m.schedule, step_seed(config, step, corruption));
  symbol("z_s", z_s.shape());
  symbol("z_s_hat", z_s_hat.shape());
  Tensor<Scalar> x_s;
  {
    NoGradGuard no_grad;
    x_s = m.codec->decode(z_s.value());
  }
  const Var<Scalar> x_s_hat = m.codec->decode(z_s_hat);
  symbol("x_s", x_s.shape());
  symbol("x_s_hat", x_s_hat.shape());

  // (5) discriminator update on the detached generator branch
  const std::vector<std::uint8_t> y = random_order(N, step_seed(config, step, order));
  m.d_opt.zero_grad();
  const Var<Scalar> pred_d =
      m.discriminator(ordered_concat(constant(x_s), detach(x_s_hat), y));
  const Var<Scalar> l_d_disc = bce_loss(pred_d, y);
  const double acc = batch_accuracy(to_doubles(pred_d.value()), y);
  const double l_d_disc_value = double(l_d_disc.value().item());
  if (!std::isfinite(l_d_disc_value))
    throw TrainingError(loss_components(step, double(l_mse.value().item()), l_d_disc_value, NAN));
  backward(l_d_disc);
  m.d_opt.step();
  if (hooks && hooks->after_discriminator_update) hooks->after_discriminator_update(m);

  // (6) generator update; the discriminator is re-run on the live branch
  if (config.lambda_adv > 0) {
    FrozenScope<Scalar> frozen(m.discriminator.parameters());
    const Var<Scalar> pred_g = m.discriminator(ordered_concat(constant(x_s), x_s_hat, y));
    const Var<Scalar> l_d = bce_loss(pred_g, y);
    r = generator_loss(z0, z0_hat.value(), double(l_d.value().item()), config.lambda_adv);
    if (!std::isfinite(r.l_g) || !std::isfinite(r.l_d))
      throw TrainingError(loss_components(step, r.l_mse, r.l_d, r.l_g));
    backward(axpby(1.0, l_mse, -config.lambda_adv, l_d));
  } else {
    double l_d = 0;
    {
      NoGradGuard no_grad;
      const Tensor<Scalar> pred =
          m.discriminator.predict(concat_with_order(x_s, x_s_hat.value(), y).pair);
      l_d = discriminator_loss(to_doubles(pred), y);
    }
    r = generator_loss(z0, z0_hat.value(), l_d, config.lambda_adv);
    if (!std::isfinite(r.l_mse)) throw TrainingError(loss_components(step, r.l_mse, l_d, r.l_g));
    backward(l_mse);
  }
  m.g_opt.step();
  if (hooks && hooks->after_generator_update) hooks->after_generator_update(m);

  // (7) accuracy EMA
  next = update_ema(state, acc);
  r.acc_batch = acc;
  r.s_used = s;
  r.l_d_disc = l_d_disc_value;
  r.step = step;
  return {r, next};
}

void write_loss_header(std::ostream& out) {
  out << "step,l_mse,l_d,l_adv,l_g,acc_batch,s_used,acc_ema,l_d_disc\n";
}

void write_loss_row(std::ostream& out, const LossReport& r, double acc_ema) {
  const auto precision = out.precision(17);
  out << r.step << ',' << r.l_mse << ',' << r.l_d << ',' << r.l_adv << ',' << r.l_g << ','
      << r.acc_batch << ',' << r.s_used << ',' << acc_ema << ',' << r.l_d_disc << '\n';
  out.precision(precision);
}

template <typename Scalar>
TrainingSession<Scalar>::TrainingSession(const TrainConfig& config)
    : config_(config), models_(std::make_unique<Models<Scalar>>(config)) {
  validate(config_);
  state_.acc_ema = config_.ema_init;
  state_.lambda_ema = config_.lambda_ema;
  state_.T = config_.schedule.T;
}

template <typename Scalar>
std::unique_ptr<TrainingSession<Scalar>> TrainingSession<Scalar>::create(
    const TrainConfig& config, const PairStream& data) {
  std::unique_ptr<TrainingSession> session(new TrainingSession(config));
  if (auto* vae = dynamic_cast<ConvVae<Scalar>*>(session->models_->codec.get())) {
    VaeTrainOptions opts = config.vae_pretrain;
    opts.seed = Rng::derive(config.seed, {0x7ae, 0}).engine()();
    const int batch = opts.batch_size;
    log_info("pre-training autoencoder for " + std::to_string(opts.steps) + " steps");
    const auto report = pretrain_vae<Scalar>(
        *vae, [&data, batch](int s) { return data.batch<Scalar>(kCodecStepOffset + s, batch).x0; },
        opts);
    log_info("autoencoder loss " + std::to_string(report.first_loss) + " -> " +
             std::to_string(report.last_loss));
  }
  session->models_->codec->parameters().set_requires_grad(false);
  return session;
}

template <typename Scalar>
LossReport TrainingSession<Scalar>::step(const PairStream& data, const StepHooks<Scalar>* hooks) {
  const auto batch = data.batch<Scalar>(step_, config_.batch_size);
  auto [report, next] = train_step(batch, *models_, state_, config_, step_, hooks);
  state_ = next;
  ++step_;
  return report;
}

namespace {

template <typename Scalar>
void put_params(Archive<Scalar>& a, const std::string& prefix, const ParameterSet<Scalar>& p) {
  for (const auto& [name, v] : p.entries()) a.tensors.emplace_back(prefix + name, v.value());
}

template <typename Scalar>
void put_moments(Archive<Scalar>& a, const std::string& prefix, const ParameterSet<Scalar>& p,
                 Adam<Scalar>& opt) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    a.tensors.emplace_back(prefix + "m/" + p.entries()[i].first, opt.first_moments()[i]);
    a.tensors.emplace_back(prefix + "v/" + p.entries()[i].first, opt.second_moments()[i]);
  }
}

template <typename Scalar>
void take(Tensor<Scalar>& dst, const Archive<Scalar>& a, const std::string& name) {
  const Tensor<Scalar>& src = a.at(name);
  if (src.shape() != dst.shape())
    throw CheckpointError("tensor '" + name + "' has shape " + src.shape().str() + ", model expects " +
                          dst.shape().str());
  dst = src;
}

template <typename Scalar>
void get_params(const Archive<Scalar>& a, const std::string& prefix, ParameterSet<Scalar>& p) {
  for (auto& [name, v] : p.entries()) take(v.mutable_value(), a, prefix + name);
}

template <typename Scalar>
void get_moments(const Archive<Scalar>& a, const std::string& prefix, ParameterSet<Scalar>& p,
                 Adam<Scalar>& opt) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    take(opt.first_moments()[i], a, prefix + "m/" + p.entries()[i].first);
    take(opt.second_moments()[i], a, prefix + "v/" + p.entries()[i].first);
  }
}

}  // namespace

template <typename Scalar>
void TrainingSession<Scalar>::save(const std::filesystem::path& path) const {
  Archive<Scalar> a;
  auto& m = *models_;
  a.meta = {{"kind", "training-session"},
            {"step", step_},
            {"config", train_config_to_json(config_)},
            {"config_hash", hex64(config_hash(config_))},
            {"state",
             {{"acc_ema", state_.acc_ema}, {"lambda_ema", state_.lambda_ema}, {"T", state_.T}}},
            {"g_adam_steps", m.g_opt.step_count()},
            {"d_adam_steps", m.d_opt.step_count()}};
  put_params(a, "generator/", m.generator.parameters());
  put_params(a, "discriminator/", m.discriminator.parameters());
  put_params(a, "codec/", m.codec->parameters());
  put_moments(a, "generator.adam/", m.generator.parameters(), m.g_opt);
  put_moments(a, "discriminator.adam/", m.discriminator.parameters(), m.d_opt);
  save_archive(path, a);
}

template <typename Scalar>
std::unique_ptr<TrainingSession<Scalar>> TrainingSession<Scalar>::load(
    const std::filesystem::path& checkpoint) {
  const Archive<Scalar> a = load_archive<Scalar>(checkpoint);
  const std::string where = checkpoint.string() + ": ";
  try {
    if (a.meta.at("kind") != "training-session")
      throw CheckpointError(where + "not a training checkpoint");
    TrainConfig config;
    try {
      config = train_config_from_json(a.meta.at("config"));
    } catch (const ConfigError& e) {
      throw CheckpointError(where + "embedded config rejected: " + e.what());
    }
    if (a.meta.at("config_hash").template get<std::string>() != hex64(config_hash(config)))
      throw CheckpointError(where + "config hash mismatch (written by an incompatible version?)");
    std::unique_ptr<TrainingSession> s(new TrainingSession(config));
    auto& m = *s->models_;
    get_params(a, "generator/", m.generator.parameters());
    get_params(a, "discriminator/", m.discriminator.parameters());
    get_params(a, "codec/", m.codec->parameters());
    get_moments(a, "generator.adam/", m.generator.parameters(), m.g_opt);
    get_moments(a, "discriminator.adam/", m.discriminator.parameters(), m.d_opt);
    m.g_opt.set_step_count(a.meta.at("g_adam_steps").template get<std::int64_t>());
    m.d_opt.set_step_count(a.meta.at("d_adam_steps").template get<std::int64_t>());
    s->step_ = a.meta.at("step").template get<std::int64_t>();
    const auto& st = a.meta.at("state");
    s->state_.acc_ema = st.at("acc_ema").template get<double>();
    s->state_.lambda_ema = st.at("lambda_ema").template get<double>();
    s->state_.T = st.at("T").template get<int>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(where + "missing or malformed metadata: " + e.what());
  }
}

template <typename Scalar>
void run_training(TrainingSession<Scalar>& session, const PairStream& data,
                  const TrainOutputs& outputs) {
  const TrainConfig& config = session.config();
  if (data.patch() != config.data.patch || data.scale() != config.data.scale)
    throw ConfigError("dataset patch/scale (" + std::to_string(data.patch()) + "/" +
                      std::to_string(data.scale()) + ") differ from the config (" +
                      std::to_string(config.data.patch) + "/" + std::to_string(config.data.scale) + ")");
  {
    // Shape check before step 0.
    const auto probe = data.batch<Scalar>(0, 1);
    const auto latent = session.models().codec->latent_shape(probe.x0.shape());
    if (latent.h % session.models().generator.spatial_multiple() != 0)
      throw ConfigError("latent size " + std::to_string(latent.h) +
                        " is not a multiple of the generator's " +
                        std::to_string(session.models().generator.spatial_multiple()));
  }
  if (outputs.loss_stream && session.step_index() == 0) write_loss_header(*outputs.loss_stream);
  if (!outputs.checkpoint_dir.empty()) std::filesystem::create_directories(outputs.checkpoint_dir);

  while (session.step_index() < config.total_steps) {
    const LossReport r = session.step(data);
    if (outputs.loss_stream) write_loss_row(*outputs.loss_stream, r, session.state().acc_ema);
    if (outputs.on_step) outputs.on_step(r, session.state());
    if (config.log_every > 0 && (r.step + 1) % config.log_every == 0) {
      std::ostringstream msg;
      msg << std::setprecision(5) << "step " << r.step + 1 << "/" << config.total_steps
          << " l_mse=" << r.l_mse << " l_d=" << r.l_d << " acc_ema=" << session.state().acc_ema
          << " s=" << r.s_used;
      log_info(msg.str());
    }
    const std::int64_t done = session.step_index();
    if (!outputs.checkpoint_dir.empty() && config.checkpoint_every > 0 &&
        done % config.checkpoint_every == 0)
      session.save(outputs.checkpoint_dir / ("ckpt_" + std::to_string(done) + ".dgsr"));
  }
  if (outputs.loss_stream) outputs.loss_stream->flush();
  if (!outputs.checkpoint_dir.empty()) session.save(outputs.checkpoint_dir / "final.dgsr");
}

template <typename Scalar>
std::unique_ptr<TrainingSession<Scalar>> train(const PairStream& data, const TrainConfig& config,
                                               const TrainOutputs& outputs) {
  auto session = TrainingSession<Scalar>::create(config, data);
  run_training(*session, data, outputs);
  return session;
}

#define DGSR_INSTANTIATE_TRAINER(S)                                                             \
  template struct Models<S>;                                                                    \
  template class TrainingSession<S>;                                                            \
  template std::pair<LossReport, AdaptiveCorruptionState> train_step<S>(                        \
      const PairBatch<S>&, Models<S>&, const AdaptiveCorruptionState&, const TrainConfig&,      \
      std::int64_t, const StepHooks<S>*);                                                       \
  template void run_training<S>(TrainingSession<S>&, const PairStream&, const TrainOutputs&);   \
  template std::unique_ptr<TrainingSession<S>> train<S>(const PairStream&, const TrainConfig&,  \
                                                        const TrainOutputs&);

DGSR_INSTANTIATE_TRAINER(float)
DGSR_INSTANTIATE_TRAINER(double)

}  // namespace dgsr
