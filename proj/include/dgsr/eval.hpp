#ifndef DGSR_EVAL_HPP
#define DGSR_EVAL_HPP

#include "dgsr/autoencoder.hpp"
#include "dgsr/data.hpp"
#include "dgsr/diffusion.hpp"
#include "dgsr/networks.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dgsr {

// Metric inputs are images in [-1, 1]. They are mapped to [0, 1] and clamped
// before any comparison.

inline constexpr double kPsnrCap = 100.0;

template <typename Scalar>
double mse(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// -10 log10(mse) for peak 1; mse = 0 gives the cap.
double psnr_from_mse(double mse);

template <typename Scalar>
double psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Gaussian-window SSIM on ITU-R 601 luma (single-channel inputs are used
/// as is), averaged over the valid region and the batch.
template <typename Scalar>
double ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

/// Pluggable perceptual distance. Implementations must return 0 for
/// identical inputs and a non-negative value otherwise.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string name() const = 0;
  virtual double distance(const Tensor<double>& a, const Tensor<double>& b) const = 0;
};

/// Mean of MSE over `levels` scales of a 2x2 average-pooling pyramid.
class PyramidMse : public PerceptualMetric {
 public:
  explicit PyramidMse(int levels = 3) : levels_(levels) {}
  std::string name() const override { return "pyramid_mse" + std::to_string(levels_); }
  double distance(const Tensor<double>& a, const Tensor<double>& b) const override;

 private:
  int levels_;
};

/// Absent when there is no plugin, or when it throws or returns an invalid
/// value (a warning is logged in that case).
template <typename Scalar>
std::optional<double> perceptual_distance(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                                          const PerceptualMetric* plugin);

struct MetricsReport {
  std::string model_id;
  std::string dataset_id;
  std::string method;  // "ddpm", "ddim" or "bicubic"
  int steps = 0;
  double eta = 0;
  double psnr = 0;
  double ssim = 0;
  double mse = 0;
  std::optional<double> perceptual;
  double time_per_batch = 0;  // seconds
  int images = 0;
};

/// x_low -> super-resolved image for one sampler configuration.
template <typename Scalar>
using Upscaler = std::function<Tensor<Scalar>(const Tensor<Scalar>& x_low,
                                              const SamplerConfig& config, std::uint64_t seed)>;

/// encode -> sample -> decode with the given networks.
template <typename Scalar>
Tensor<Scalar> super_resolve(const UNetGenerator<Scalar>& generator,
                             const Autoencoder<Scalar>& codec, const NoiseSchedule& schedule,
                             const Tensor<Scalar>& x_low, const SamplerConfig& config,
                             std::uint64_t seed);

struct BenchmarkOptions {
  std::size_t max_images = 0;  // 0: whole dataset
  int batch_size = 8;
  std::uint64_t seed = 0;
  bool bicubic_row = true;
  std::string model_id = "model";
  std::string dataset_id = "dataset";
  const PerceptualMetric* perceptual = nullptr;
};

/// Runs each sampler configuration over the dataset in order. Timing covers
/// the upscaler call only; the first batch is a warm-up and is not timed
/// unless it is the only one.
template <typename Scalar>
std::vector<MetricsReport> benchmark(const Upscaler<Scalar>& upscaler, const PairStream& data,
                                     const std::vector<SamplerConfig>& configs,
                                     const BenchmarkOptions& options);

/// Grid over methods x steps. Every step count must lie in [1, T].
template <typename Scalar>
std::vector<MetricsReport> step_sweep(const Upscaler<Scalar>& upscaler, const PairStream& data,
                                      const std::vector<int>& steps,
                                      const std::vector<SamplerMethod>& methods, int T,
                                      BenchmarkOptions options);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& rows);
void write_metrics_json(const std::filesystem::path& path,
                        const std::vector<MetricsReport>& rows);

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

/// Ordinary least squares y ~ slope * x + intercept.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace dgsr

#endif  // DGSR_EVAL_HPP
