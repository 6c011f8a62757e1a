// dgsr: train, upscale, evaluate and sweep-steps entry points.
#include "dgsr/checkpoint.hpp"
#include "dgsr/config.hpp"
#include "dgsr/eval.hpp"
#include "dgsr/image_io.hpp"
#include "dgsr/log.hpp"
#include "dgsr/trainer.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace dgsr;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Flags shared by the subcommands; each maps onto a config-file key.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> autoencoder;        // autoencoder.kind
  std::optional<std::string> data_dir;           // data.directory
  bool synthetic = false;                        // data.synthetic
  std::optional<int> patch;                      // data.patch
  std::optional<int> scale;                      // data.scale
  std::optional<int> steps;                      // sampler.steps
  std::optional<std::string> method;             // sampler.method
  std::optional<double> eta;                     // sampler.eta
  std::optional<std::uint64_t> seed;             // train.seed
  std::optional<std::string> report_dir;
  std::optional<std::string> run_root;           // output.run_root
  // train
  std::optional<std::int64_t> total_steps;       // train.total_steps
  std::optional<double> learning_rate;           // train.learning_rate
  std::optional<double> lambda_adv;              // train.lambda_adv
  std::optional<int> batch_size;                 // train.batch_size
  std::optional<std::int64_t> checkpoint_every;  // train.checkpoint_every
  std::optional<std::string> precision;          // train.precision
  std::optional<std::string> resume;
  // inference
  std::optional<std::string> checkpoint;
  std::vector<std::string> inputs;
  std::optional<std::string> output_dir;
  bool upsample = false;
  std::optional<std::size_t> max_images;         // eval.max_images
  std::vector<int> steps_list;                   // eval.steps
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run config");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--report-dir", f.report_dir, "Directory for all outputs of this command");
  cmd->add_option("--run-root", f.run_root, "Parent of timestamped run directories");
}

void add_data(CLI::App* cmd, Flags& f) {
  cmd->add_option("--data-dir", f.data_dir, "Folder of PNG/JPEG images");
  cmd->add_flag("--synthetic", f.synthetic, "Use the built-in synthetic corpus");
  cmd->add_option("--patch", f.patch, "Patch size in pixels");
  cmd->add_option("--scale", f.scale, "Degradation factor");
}

void add_sampler(CLI::App* cmd, Flags& f) {
  cmd->add_option("--steps", f.steps, "Sampling steps");
  cmd->add_option("--method", f.method, "ddpm or ddim");
  cmd->add_option("--eta", f.eta, "DDIM stochasticity");
}

// Applies flags over a config. Flags always win.
void apply(const Flags& f, RunConfig& c) {
  if (f.autoencoder) {
    const auto kind = autoencoder_kind_from_string(*f.autoencoder);
    if (kind != c.train.autoencoder.kind)
      c.train.autoencoder = kind == AutoencoderKind::identity ? AutoencoderSpec::identity()
                                                              : AutoencoderSpec::conv_vae();
  }
  if (f.data_dir) {
    c.train.data.directory = *f.data_dir;
    c.train.data.synthetic = false;
  }
  if (f.synthetic) c.train.data.synthetic = true;
  if (f.patch) c.train.data.patch = *f.patch;
  if (f.scale) c.train.data.scale = *f.scale;
  if (f.steps) c.sampler.num_steps = *f.steps;
  if (f.method) c.sampler.method = sampler_method_from_string(*f.method);
  if (f.eta) c.sampler.eta = *f.eta;
  if (f.seed) c.train.seed = *f.seed;
  if (f.run_root) c.run_root = *f.run_root;
  if (f.total_steps) c.train.total_steps = *f.total_steps;
  if (f.learning_rate) c.train.learning_rate = *f.learning_rate;
  if (f.lambda_adv) c.train.lambda_adv = *f.lambda_adv;
  if (f.batch_size) c.train.batch_size = *f.batch_size;
  if (f.checkpoint_every) c.train.checkpoint_every = *f.checkpoint_every;
  if (f.precision) c.train.precision = precision_from_string(*f.precision);
  if (f.max_images) c.eval.max_images = *f.max_images;
  if (!f.steps_list.empty()) c.eval.steps = f.steps_list;
}

RunConfig base_config(const Flags& f) {
  RunConfig c = f.config ? load_run_config(*f.config) : RunConfig{};
  try {
    apply(f, c);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  validate(c);
  return c;
}

fs::path make_run_dir(const Flags& f, const RunConfig& c, const std::string& command) {
  fs::path dir;
  if (f.report_dir) {
    dir = *f.report_dir;
  } else {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream name;
    name << std::put_time(&tm, "%Y%m%d-%H%M%S") << '-' << command << '-'
         << hex64(config_hash(c.train)).substr(0, 8);
    dir = c.run_root / name.str();
  }
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << to_json(c).dump(2) << '\n';
  return dir;
}

void check_device() {
  if (const char* device = std::getenv("DGSR_DEVICE"))
    if (std::string(device) != "cpu")
      throw ConfigError(std::string("DGSR_DEVICE=") + device + " is not available; only 'cpu' is supported");
}

DatasetSpec eval_data_spec(const RunConfig& c) {
  DatasetSpec spec = c.train.data;
  if (!spec.synthetic && !c.test_directory.empty()) spec.directory = c.test_directory;
  return spec;
}

template <typename Scalar>
int train_command(const Flags& f, RunConfig config) {
  std::unique_ptr<TrainingSession<Scalar>> session;
  if (f.resume) {
    session = TrainingSession<Scalar>::load(*f.resume);
    if (config_hash(session->config()) != config_hash(config.train))
      log_warning("resuming with the checkpoint's embedded config; model-defining flags are ignored");
    session->set_total_steps(config.train.total_steps);
    config.train = session->config();
  }
  const auto source = make_source(config.train.data, Split::train, config.train.seed);
  const PairStream data(source, config.train.data.patch, config.train.data.scale, config.train.seed);
  const fs::path run_dir = make_run_dir(f, config, "train");
  log_info("run directory " + run_dir.string());
  if (!session) session = TrainingSession<Scalar>::create(config.train, data);

  std::ofstream losses(run_dir / "losses.csv", f.resume ? std::ios::app : std::ios::trunc);
  TrainOutputs out;
  out.checkpoint_dir = run_dir / "checkpoints";
  out.loss_stream = &losses;
  if (f.resume) losses.seekp(0, std::ios::end);
  if (f.resume && losses.tellp() == 0) write_loss_header(losses);
  const auto start = std::chrono::steady_clock::now();
  run_training(*session, data, out);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  log_info("trained to step " + std::to_string(session->step_index()) + " in " +
           std::to_string(seconds) + " s; final checkpoint " +
           (out.checkpoint_dir / "final.dgsr").string());
  return kExitOk;
}

std::string sampler_label(const SamplerConfig& s) {
  std::ostringstream out;
  out << to_string(s.method) << ", " << s.num_steps << " steps";
  if (s.method == SamplerMethod::deterministic) out << ", eta " << s.eta;
  return out.str();
}

template <typename Scalar>
int upscale_command(const Flags& f, const RunConfig& config) {
  auto session = TrainingSession<Scalar>::load(*f.checkpoint);
  const auto& m = session->models();
  const TrainConfig& tc = session->config();
  const int multiple = m.codec->spec().spatial_factor * m.generator.spatial_multiple();
  if (config.sampler.num_steps > m.schedule.T())
    throw ConfigError("--steps " + std::to_string(config.sampler.num_steps) + " exceeds T = " +
                      std::to_string(m.schedule.T()));
  const fs::path out_dir = f.output_dir ? fs::path(*f.output_dir) : fs::path(".");
  fs::create_directories(out_dir);
  log_info("sampler: " + sampler_label(config.sampler));
  for (std::size_t i = 0; i < f.inputs.size(); ++i) {
    const fs::path input = f.inputs[i];
    Tensor<Scalar> image = read_image(input).template cast<Scalar>();
    if (f.upsample)
      image = bicubic_resize(image, image.shape().h * tc.data.scale, image.shape().w * tc.data.scale);
    const Shape s = image.shape();
    if (s.h % multiple != 0 || s.w % multiple != 0)
      throw std::invalid_argument(input.string() + ": size " + std::to_string(s.h) + "x" +
                                  std::to_string(s.w) + " must be divisible by " +
                                  std::to_string(multiple) + " (autoencoder factor " +
                                  std::to_string(m.codec->spec().spatial_factor) +
                                  " x generator multiple " +
                                  std::to_string(m.generator.spatial_multiple()) + ")");
    const auto start = std::chrono::steady_clock::now();
    const Tensor<Scalar> out = super_resolve(m.generator, *m.codec, m.schedule, image,
                                             config.sampler, mix_seed(tc.seed ^ mix_seed(i)));
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const fs::path target = out_dir / (input.stem().string() + "_sr.png");
    write_png(target, out);
    std::ostringstream msg;
    msg << input.string() << " -> " << target.string() << " (" << s.h << "x" << s.w << ") "
        << std::fixed << std::setprecision(3) << seconds << " s";
    log_info(msg.str());
  }
  return kExitOk;
}

template <typename Scalar>
int evaluate_command(const Flags& f, RunConfig config, bool sweep) {
  auto session = TrainingSession<Scalar>::load(*f.checkpoint);
  const auto& m = session->models();
  const int T = m.schedule.T();
  // The model and its data geometry come from the checkpoint; flags may pick another dataset.
  RunConfig eval_config = config;
  eval_config.train = session->config();
  if (f.data_dir) {
    eval_config.train.data.directory = *f.data_dir;
    eval_config.train.data.synthetic = false;
    eval_config.test_directory.clear();
  }
  if (f.synthetic) eval_config.train.data.synthetic = true;
  if (config.sampler.num_steps > T)
    throw ConfigError("--steps " + std::to_string(config.sampler.num_steps) + " exceeds T = " +
                      std::to_string(T));
  for (int s : config.eval.steps)
    if (s < 1 || s > T)
      throw ConfigError("sweep step count " + std::to_string(s) + " outside [1, " + std::to_string(T) + "]");

  const fs::path run_dir = make_run_dir(f, eval_config, sweep ? "sweep" : "evaluate");
  const DatasetSpec spec = eval_data_spec(eval_config);
  const auto source = make_source(spec, Split::test, eval_config.train.seed);
  const PairStream data(source, spec.patch, spec.scale, eval_config.train.seed);

  Upscaler<Scalar> upscaler = [&m](const Tensor<Scalar>& x_low, const SamplerConfig& s,
                                   std::uint64_t seed) {
    return super_resolve(m.generator, *m.codec, m.schedule, x_low, s, seed);
  };
  PyramidMse pyramid;
  BenchmarkOptions opts;
  opts.max_images = config.eval.max_images;
  opts.batch_size = config.eval.batch_size;
  opts.seed = f.seed ? *f.seed : eval_config.train.seed;
  opts.model_id = fs::path(*f.checkpoint).stem().string();
  opts.dataset_id = spec.synthetic ? "synthetic-test" : spec.directory.filename().string();
  opts.perceptual = config.eval.perceptual ? &pyramid : nullptr;

  const auto rows = sweep ? step_sweep(upscaler, data, config.eval.steps, config.eval.methods, T, opts)
                          : benchmark(upscaler, data, {config.sampler}, opts);
  const std::string stem = sweep ? "sweep" : "metrics";
  write_metrics_csv(run_dir / (stem + ".csv"), rows);
  write_metrics_json(run_dir / (stem + ".json"), rows);
  for (const auto& r : rows) {
    std::ostringstream msg;
    msg << std::fixed << std::setprecision(4) << r.method << " steps=" << r.steps
        << " psnr=" << r.psnr << " ssim=" << r.ssim << " mse=" << r.mse;
    if (r.perceptual) msg << " perceptual=" << *r.perceptual;
    msg << " time/batch=" << r.time_per_batch << "s";
    log_info(msg.str());
  }
  log_info("wrote " + (run_dir / (stem + ".csv")).string());
  return kExitOk;
}

bool checkpoint_is_double(const std::string& path) {
  return inspect_archive(path).scalar_bytes == sizeof(double);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent diffusion super-resolution with an adaptively corrupted discriminator"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "Train generator and discriminator");
  add_common(train, f);
  add_data(train, f);
  train->add_option("--autoencoder", f.autoencoder, "identity or conv_vae");
  train->add_option("--total-steps", f.total_steps, "Training steps");
  train->add_option("--lr", f.learning_rate, "Learning rate");
  train->add_option("--lambda-adv", f.lambda_adv, "Adversarial loss weight (0 disables its gradient)");
  train->add_option("--batch-size", f.batch_size, "Batch size");
  train->add_option("--checkpoint-every", f.checkpoint_every, "Checkpoint interval in steps");
  train->add_option("--precision", f.precision, "float32 or float64");
  train->add_option("--resume", f.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  auto* upscale = app.add_subcommand("upscale", "Super-resolve images with a trained checkpoint");
  add_common(upscale, f);
  add_sampler(upscale, f);
  upscale->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  upscale->add_option("--output", f.output_dir, "Output directory");
  upscale->add_flag("--upsample", f.upsample, "Inputs are low-resolution; bicubic-upsample first");
  upscale->add_option("inputs", f.inputs, "Input images (already on the high-resolution canvas)")
      ->required();

  auto* evaluate = app.add_subcommand("evaluate", "Metrics table with a bicubic baseline row");
  auto* sweep = app.add_subcommand("sweep-steps", "Metrics over sampling methods x step counts");
  for (auto* cmd : {evaluate, sweep}) {
    add_common(cmd, f);
    add_data(cmd, f);
    cmd->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
    cmd->add_option("--max-images", f.max_images, "Limit on evaluated images");
  }
  add_sampler(evaluate, f);
  sweep->add_option("--steps-list", f.steps_list, "Step counts, e.g. 1,3,5,10,25,50")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    check_device();
    RunConfig config = base_config(f);
    if (*train) {
      return config.train.precision == Precision::float64 ? train_command<double>(f, config)
                                                          : train_command<float>(f, config);
    }
    const bool wide = checkpoint_is_double(*f.checkpoint);
    if (*upscale) return wide ? upscale_command<double>(f, config) : upscale_command<float>(f, config);
    const bool is_sweep = bool(*sweep);
    return wide ? evaluate_command<double>(f, config, is_sweep)
                : evaluate_command<float>(f, config, is_sweep);
  } catch (const ConfigError& e) {
    log(LogLevel::error, e.what());
    return kExitConfig;
  } catch (const DatasetError& e) {
    log(LogLevel::error, e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    log(LogLevel::error, e.what());
    return kExitRuntime;
  }
}
