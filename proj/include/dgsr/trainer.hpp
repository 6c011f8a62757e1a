#ifndef DGSR_TRAINER_HPP
#define DGSR_TRAINER_HPP

#include "dgsr/adversarial.hpp"
#include "dgsr/autoencoder.hpp"
#include "dgsr/config.hpp"
#include "dgsr/data.hpp"
#include "dgsr/networks.hpp"
#include "dgsr/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>

namespace dgsr {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Generator, discriminator, frozen codec and both optimizers. The
/// optimizers point into the parameter sets, so this is pinned in memory.
template <typename Scalar>
struct Models {
  explicit Models(const TrainConfig& config);
  Models(const Models&) = delete;
  Models& operator=(const Models&) = delete;

  NoiseSchedule schedule;
  UNetGenerator<Scalar> generator;
  Discriminator<Scalar> discriminator;
  std::unique_ptr<Autoencoder<Scalar>> codec;
  Adam<Scalar> g_opt;
  Adam<Scalar> d_opt;
};

/// Optional instrumentation of a training step.
template <typename Scalar>
struct StepHooks {
  /// Called once per symbol: t, z_t, z0_hat, s, z_s, z_s_hat, x_s, x_s_hat.
  std::function<void(const std::string& symbol, const Shape& shape)> on_symbol;
  std::function<void(const Models<Scalar>&)> after_discriminator_update;
  std::function<void(const Models<Scalar>&)> after_generator_update;
};

/// One alternating update: discriminator on the detached generator branch,
/// then generator on MSE + lambda_adv * L_adv, then the accuracy EMA.
/// All randomness is keyed by (config.seed, step).
template <typename Scalar>
std::pair<LossReport, AdaptiveCorruptionState> train_step(
    const PairBatch<Scalar>& batch, Models<Scalar>& models, const AdaptiveCorruptionState& state,
    const TrainConfig& config, std::int64_t step, const StepHooks<Scalar>* hooks = nullptr);

void write_loss_header(std::ostream& out);
void write_loss_row(std::ostream& out, const LossReport& report, double acc_ema);

template <typename Scalar>
class TrainingSession {
 public:
  /// Fresh models; a conv VAE codec is pre-trained on `data` and frozen.
  static std::unique_ptr<TrainingSession> create(const TrainConfig& config,
                                                 const PairStream& data);
  /// Restores every tensor and counter written by save().
  static std::unique_ptr<TrainingSession> load(const std::filesystem::path& checkpoint);

  TrainingSession(const TrainingSession&) = delete;
  TrainingSession& operator=(const TrainingSession&) = delete;

  /// Trains on data.batch(step_index()).
  LossReport step(const PairStream& data, const StepHooks<Scalar>* hooks = nullptr);

  void save(const std::filesystem::path& path) const;

  Models<Scalar>& models() { return *models_; }
  const Models<Scalar>& models() const { return *models_; }
  const TrainConfig& config() const { return config_; }
  void set_total_steps(std::int64_t n) { config_.total_steps = n; }
  const AdaptiveCorruptionState& state() const { return state_; }
  std::int64_t step_index() const { return step_; }

 private:
  explicit TrainingSession(const TrainConfig& config);

  TrainConfig config_;
  std::unique_ptr<Models<Scalar>> models_;
  AdaptiveCorruptionState state_;
  std::int64_t step_ = 0;
};

struct TrainOutputs {
  std::filesystem::path checkpoint_dir;  // empty: no files written
  std::ostream* loss_stream = nullptr;   // CSV with header
  std::function<void(const LossReport&, const AdaptiveCorruptionState&)> on_step;
};

/// Checks the dataset against the config, then runs the session up to
/// config().total_steps, writing ckpt_<step>.dgsr every checkpoint_every
/// steps and final.dgsr at the end.
template <typename Scalar>
void run_training(TrainingSession<Scalar>& session, const PairStream& data,
                  const TrainOutputs& outputs);

/// create() followed by run_training().
template <typename Scalar>
std::unique_ptr<TrainingSession<Scalar>> train(const PairStream& data, const TrainConfig& config,
                                               const TrainOutputs& outputs = {});

extern template struct Models<float>;
extern template struct Models<double>;
extern template class TrainingSession<float>;
extern template class TrainingSession<double>;

}  // namespace dgsr

#endif  // DGSR_TRAINER_HPP
