#include "dgsr/eval.hpp"

#include "dgsr/log.hpp"
#include "dgsr/random.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace dgsr {

namespace {

// [-1, 1] -> [0, 1], clamped, in double precision.
template <typename Scalar>
Eigen::ArrayXd unit(const Tensor<Scalar>& x) {
  return ((x.data().template cast<double>() + 1.0) * 0.5).max(0.0).min(1.0);
}

template <typename Scalar>
Tensor<double> unit_tensor(const Tensor<Scalar>& x) {
  return Tensor<double>(x.shape(), unit(x));
}

// Luma planes of every batch element, row-major (H, W) each.
std::vector<Eigen::ArrayXXd> luma(const Tensor<double>& x) {
  const Shape s = x.shape();
  std::vector<Eigen::ArrayXXd> out;
  for (int n = 0; n < s.n; ++n) {
    Eigen::ArrayXXd y(s.h, s.w);
    for (int i = 0; i < s.h; ++i)
      for (int j = 0; j < s.w; ++j)
        y(i, j) = s.c == 3 ? 0.299 * x(n, 0, i, j) + 0.587 * x(n, 1, i, j) + 0.114 * x(n, 2, i, j)
                           : x(n, 0, i, j);
    out.push_back(std::move(y));
  }
  return out;
}

Eigen::ArrayXd gaussian_window(int size, double sigma) {
  Eigen::ArrayXd g(size);
  const double c = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) g(i) = std::exp(-0.5 * (i - c) * (i - c) / (sigma * sigma));
  return g / g.sum();
}

// Valid-mode separable filtering.
Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& x, const Eigen::ArrayXd& g) {
  const int k = int(g.size());
  const int h = int(x.rows()) - k + 1, w = int(x.cols()) - k + 1;
  Eigen::ArrayXXd rows = Eigen::ArrayXXd::Zero(h, x.cols());
  for (int i = 0; i < k; ++i) rows += g(i) * x.middleRows(i, h);
  Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(h, w);
  for (int j = 0; j < k; ++j) out += g(j) * rows.middleCols(j, w);
  return out;
}

double ssim_plane(const Eigen::ArrayXXd& a, const Eigen::ArrayXXd& b) {
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Eigen::ArrayXd g = gaussian_window(11, 1.5);
  const Eigen::ArrayXXd mu_a = filter_valid(a, g), mu_b = filter_valid(b, g);
  const Eigen::ArrayXXd var_a = filter_valid(a * a, g) - mu_a * mu_a;
  const Eigen::ArrayXXd var_b = filter_valid(b * b, g) - mu_b * mu_b;
  const Eigen::ArrayXXd cov = filter_valid(a * b, g) - mu_a * mu_b;
  const Eigen::ArrayXXd map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                              ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
  return map.mean();
}

Tensor<double> avg_pool(const Tensor<double>& x) {
  const Shape s = x.shape();
  Tensor<double> out({s.n, s.c, s.h / 2, s.w / 2});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < s.h / 2; ++i)
        for (int j = 0; j < s.w / 2; ++j)
          out(n, c, i, j) = 0.25 * (x(n, c, 2 * i, 2 * j) + x(n, c, 2 * i + 1, 2 * j) +
                                    x(n, c, 2 * i, 2 * j + 1) + x(n, c, 2 * i + 1, 2 * j + 1));
  return out;
}

}  // namespace

template <typename Scalar>
double mse(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw std::invalid_argument("mse: empty images");
  return (unit(a) - unit(b)).square().mean();
}

double psnr_from_mse(double m) {
  if (m < 0 || !std::isfinite(m)) throw std::invalid_argument("psnr: invalid mse");
  return m == 0.0 ? kPsnrCap : -10.0 * std::log10(m);
}

template <typename Scalar>
double psnr(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  return psnr_from_mse(mse(a, b));
}

template <typename Scalar>
double ssim(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  require_same_shape(a, b, "ssim");
  const Shape s = a.shape();
  if (s.c != 1 && s.c != 3) throw std::invalid_argument("ssim: expected 1 or 3 channels");
  if (std::min(s.h, s.w) < 11)
    throw std::invalid_argument("ssim: images must be at least 11x11, got " + std::to_string(s.h) +
                                "x" + std::to_string(s.w));
  const auto ya = luma(unit_tensor(a)), yb = luma(unit_tensor(b));
  double total = 0;
  for (std::size_t n = 0; n < ya.size(); ++n) total += ssim_plane(ya[n], yb[n]);
  return total / double(ya.size());
}

double PyramidMse::distance(const Tensor<double>& a, const Tensor<double>& b) const {
  require_same_shape(a, b, "perceptual distance");
  Tensor<double> pa = unit_tensor(a), pb = unit_tensor(b);
  double total = 0;
  int used = 0;
  for (int level = 0; level < levels_; ++level) {
    if (pa.shape().h < 1 || pa.shape().w < 1) break;
    total += (pa.data() - pb.data()).square().mean();
    ++used;
    if (level + 1 < levels_) {
      pa = avg_pool(pa);
      pb = avg_pool(pb);
    }
  }
  return total / used;
}

template <typename Scalar>
std::optional<double> perceptual_distance(const Tensor<Scalar>& a, const Tensor<Scalar>& b,
                                          const PerceptualMetric* plugin) {
  if (!plugin) return std::nullopt;
  require_same_shape(a, b, "perceptual_distance");
  try {
    const double d = plugin->distance(a.template cast<double>(), b.template cast<double>());
    if (!std::isfinite(d) || d < 0) {
      log_warning("perceptual metric " + plugin->name() + " returned invalid value");
      return std::nullopt;
    }
    return d;
  } catch (const std::exception& e) {
    log_warning("perceptual metric " + plugin->name() + " failed: " + e.what());
    return std::nullopt;
  }
}

template <typename Scalar>
Tensor<Scalar> super_resolve(const UNetGenerator<Scalar>& generator,
                             const Autoencoder<Scalar>& codec, const NoiseSchedule& schedule,
                             const Tensor<Scalar>& x_low, const SamplerConfig& config,
                             std::uint64_t seed) {
  const Tensor<Scalar> z_low = codec.encode(x_low);
  Denoiser<Scalar> g = [&generator](const Tensor<Scalar>& z_t, const std::vector<int>& t,
                                    const Tensor<Scalar>& cond) {
    return generator.predict(z_t, t, cond);
  };
  return codec.decode(sample(g, z_low, schedule, config, seed));
}

namespace {

struct Accumulator {
  double psnr = 0, ssim = 0, mse = 0, perceptual = 0;
  int images = 0;
  bool perceptual_ok = true;

  template <typename Scalar>
  void add(const Tensor<Scalar>& out, const Tensor<Scalar>& ref, const PerceptualMetric* plugin) {
    for (int n = 0; n < ref.shape().n; ++n) {
      const Tensor<Scalar> a = out.batch_slice(n, 1), b = ref.batch_slice(n, 1);
      const double m = dgsr::mse(a, b);
      mse += m;
      psnr += psnr_from_mse(m);
      ssim += dgsr::ssim(a, b);
      const auto p = perceptual_distance(a, b, plugin);
      if (p) perceptual += *p;
      else perceptual_ok = false;
      ++images;
    }
  }

  void finish(MetricsReport& r, bool have_plugin) const {
    r.images = images;
    r.psnr = psnr / images;
    r.ssim = ssim / images;
    r.mse = mse / images;
    if (have_plugin && perceptual_ok) r.perceptual = perceptual / images;
  }
};

std::size_t image_count(const PairStream& data, const BenchmarkOptions& o) {
  if (data.size() == 0) throw DatasetError("benchmark: empty dataset");
  if (o.batch_size < 1) throw std::invalid_argument("benchmark: batch size must be >= 1");
  return o.max_images == 0 ? data.size() : std::min(o.max_images, data.size());
}

}  // namespace

template <typename Scalar>
std::vector<MetricsReport> benchmark(const Upscaler<Scalar>& upscaler, const PairStream& data,
                                     const std::vector<SamplerConfig>& configs,
                                     const BenchmarkOptions& options) {
  using Clock = std::chrono::steady_clock;
  const std::size_t total = image_count(data, options);
  std::vector<PairBatch<Scalar>> batches;
  for (std::size_t first = 0; first < total; first += std::size_t(options.batch_size))
    batches.push_back(
        data.ordered<Scalar>(first, int(std::min<std::size_t>(options.batch_size, total - first))));

  std::vector<MetricsReport> rows;
  if (options.bicubic_row) {
    Accumulator acc;
    for (const auto& b : batches) acc.add(b.x_low, b.x0, options.perceptual);
    MetricsReport r;
    r.model_id = options.model_id;
    r.dataset_id = options.dataset_id;
    r.method = "bicubic";
    acc.finish(r, options.perceptual != nullptr);
    rows.push_back(r);
  }
  for (const auto& config : configs) {
    Accumulator acc;
    double timed = 0;
    int timed_batches = 0;
    for (std::size_t i = 0; i < batches.size(); ++i) {
      const auto start = Clock::now();
      const Tensor<Scalar> out =
          upscaler(batches[i].x_low, config, mix_seed(options.seed ^ mix_seed(i)));
      const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
      if (i > 0 || batches.size() == 1) {
        timed += seconds;
        ++timed_batches;
      }
      acc.add(out, batches[i].x0, options.perceptual);
    }
    MetricsReport r;
    r.model_id = options.model_id;
    r.dataset_id = options.dataset_id;
    r.method = to_string(config.method);
    r.steps = config.num_steps;
    r.eta = config.eta;
    acc.finish(r, options.perceptual != nullptr);
    r.time_per_batch = timed / timed_batches;
    rows.push_back(r);
  }
  return rows;
}

template <typename Scalar>
std::vector<MetricsReport> step_sweep(const Upscaler<Scalar>& upscaler, const PairStream& data,
                                      const std::vector<int>& steps,
                                      const std::vector<SamplerMethod>& methods, int T,
                                      BenchmarkOptions options) {
  std::vector<SamplerConfig> configs;
  for (auto method : methods)
    for (int n : steps) {
      if (n < 1 || n > T)
        throw std::invalid_argument("step count " + std::to_string(n) + " outside [1, " +
                                    std::to_string(T) + "]");
      SamplerConfig c;
      c.method = method;
      c.num_steps = n;
      configs.push_back(c);
    }
  options.bicubic_row = false;
  return benchmark(upscaler, data, configs, options);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsReport>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "model,dataset,method,steps,eta,psnr,ssim,mse,perceptual,time_per_batch,images\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.model_id << ',' << r.dataset_id << ',' << r.method << ',' << r.steps << ','
        << r.eta << ',' << r.psnr << ',' << r.ssim << ',' << r.mse << ',';
    if (r.perceptual) out << *r.perceptual;
    out << ',' << r.time_per_batch << ',' << r.images << '\n';
  }
}

void write_metrics_json(const std::filesystem::path& path,
                        const std::vector<MetricsReport>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    j.push_back({{"model", r.model_id},
                 {"dataset", r.dataset_id},
                 {"method", r.method},
                 {"steps", r.steps},
                 {"eta", r.eta},
                 {"psnr", r.psnr},
                 {"ssim", r.ssim},
                 {"mse", r.mse},
                 {"perceptual", r.perceptual ? nlohmann::json(*r.perceptual) : nlohmann::json()},
                 {"time_per_batch", r.time_per_batch},
                 {"images", r.images}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("fit_line: need at least two paired points");
  const Eigen::Map<const Eigen::ArrayXd> xs(x.data(), Eigen::Index(x.size()));
  const Eigen::Map<const Eigen::ArrayXd> ys(y.data(), Eigen::Index(y.size()));
  const double mx = xs.mean(), my = ys.mean();
  const double sxx = (xs - mx).square().sum();
  const double sxy = ((xs - mx) * (ys - my)).sum();
  const double syy = (ys - my).square().sum();
  if (sxx == 0) throw std::invalid_argument("fit_line: x values are all equal");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  const double ss_res = (ys - (f.slope * xs + f.intercept)).square().sum();
  f.r2 = syy == 0 ? 1.0 : 1.0 - ss_res / syy;
  return f;
}

#define DGSR_INSTANTIATE_EVAL(S)                                                               \
  template double mse<S>(const Tensor<S>&, const Tensor<S>&);                                  \
  template double psnr<S>(const Tensor<S>&, const Tensor<S>&);                                 \
  template double ssim<S>(const Tensor<S>&, const Tensor<S>&);                                 \
  template std::optional<double> perceptual_distance<S>(const Tensor<S>&, const Tensor<S>&,    \
                                                        const PerceptualMetric*);              \
  template Tensor<S> super_resolve<S>(const UNetGenerator<S>&, const Autoencoder<S>&,          \
                                      const NoiseSchedule&, const Tensor<S>&,                  \
                                      const SamplerConfig&, std::uint64_t);                    \
  template std::vector<MetricsReport> benchmark<S>(const Upscaler<S>&, const PairStream&,      \
                                                   const std::vector<SamplerConfig>&,          \
                                                   const BenchmarkOptions&);                   \
  template std::vector<MetricsReport> step_sweep<S>(                                           \
      const Upscaler<S>&, const PairStream&, const std::vector<int>&,                          \
      const std::vector<SamplerMethod>&, int, BenchmarkOptions);

DGSR_INSTANTIATE_EVAL(float)
DGSR_INSTANTIATE_EVAL(double)

}  // namespace dgsr
