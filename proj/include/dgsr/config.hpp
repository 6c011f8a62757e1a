#ifndef DGSR_CONFIG_HPP
#define DGSR_CONFIG_HPP

#include "dgsr/autoencoder.hpp"
#include "dgsr/data.hpp"
#include "dgsr/diffusion.hpp"
#include "dgsr/networks.hpp"
#include "dgsr/schedule.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgsr {

inline constexpr int kConfigFormatVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Precision { float32, float64 };
std::string to_string(Precision p);
Precision precision_from_string(const std::string& name);

struct TrainConfig {
  double learning_rate = 1e-4;
  /// Discriminator learning rate; unset means learning_rate.
  std::optional<double> discriminator_learning_rate;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int batch_size = 8;
  std::int64_t total_steps = 2000;
  double lambda_adv = 1e-3;
  double lambda_ema = 0.05;
  double ema_init = 0.5;  // initial discriminator-accuracy EMA
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0: final checkpoint only
  std::int64_t log_every = 100;
  bool adversarial = true;          // off: no discriminator at all
  bool adaptive_corruption = true;  // off: s = 0 every step
  Precision precision = Precision::float32;

  AutoencoderSpec autoencoder;
  VaeTrainOptions vae_pretrain;
  ScheduleSpec schedule;
  UNetConfig generator;
  DiscriminatorConfig discriminator;
  DatasetSpec data;
};

struct EvalSettings {
  std::vector<int> steps{1, 3, 5, 10, 25, 50};
  std::vector<SamplerMethod> methods{SamplerMethod::ancestral, SamplerMethod::deterministic};
  std::size_t max_images = 64;
  int batch_size = 8;
  bool perceptual = true;  // built-in pyramid fallback
};

struct RunConfig {
  int format_version = kConfigFormatVersion;
  TrainConfig train;
  SamplerConfig sampler;
  EvalSettings eval;
  std::filesystem::path run_root = "runs";
  std::filesystem::path test_directory;  // folder datasets: held-out images
};

/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Range checks for every field; throws ConfigError.
void validate(const TrainConfig& config);
void validate(const RunConfig& config);

/// FNV-1a of the canonical JSON of the fields that define the model and its
/// training trajectory (run length and logging cadence excluded).
std::uint64_t config_hash(const TrainConfig& config);
std::string hex64(std::uint64_t v);

/// Generator config with latent channels taken from the autoencoder.
UNetConfig effective_generator(const TrainConfig& config);

}  // namespace dgsr

#endif  // DGSR_CONFIG_HPP
