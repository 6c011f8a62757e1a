#include "dgsr/data.hpp"

#include "dgsr/image_io.hpp"
#include "dgsr/log.hpp"
#include "dgsr/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>

namespace dgsr {

double cubic_kernel(double x, double a) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

namespace {

// Sparse rows of the 1-D resampling matrix.
struct Taps {
  std::vector<int> first;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<int>> index;
};

Taps resample_taps(int in, int out, bool antialias) {
  const double ratio = double(in) / double(out);
  const double support_scale = antialias ? std::max(ratio, 1.0) : 1.0;
  const double radius = 2.0 * support_scale;
  Taps taps;
  taps.weights.resize(out);
  taps.index.resize(out);
  for (int o = 0; o < out; ++o) {
    const double center = (o + 0.5) * ratio - 0.5;
    const int lo = int(std::floor(center - radius)) + 1;
    const int hi = int(std::floor(center + radius));
    double total = 0;
    for (int i = lo; i <= hi; ++i) {
      const double wgt = cubic_kernel((center - i) / support_scale);
      if (wgt == 0.0) continue;
      taps.weights[o].push_back(wgt);
      taps.index[o].push_back(std::clamp(i, 0, in - 1));
      total += wgt;
    }
    for (auto& wgt : taps.weights[o]) wgt /= total;
  }
  return taps;
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> bicubic_resize(const Tensor<Scalar>& image, int out_h, int out_w, bool antialias) {
  if (out_h < 1 || out_w < 1)
    throw std::invalid_argument("bicubic_resize: output size must be positive, got " +
                                std::to_string(out_h) + "x" + std::to_string(out_w));
  const Shape s = image.shape();
  if (s.h < 1 || s.w < 1) throw std::invalid_argument("bicubic_resize: empty input");
  const Taps th = resample_taps(s.h, out_h, antialias);
  const Taps tw = resample_taps(s.w, out_w, antialias);

  Tensor<Scalar> out({s.n, s.c, out_h, out_w});
  std::vector<double> rows(std::size_t(s.h) * out_w);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const Scalar* src = image.ptr() + image.index(n, c, 0, 0);
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < out_w; ++x) {
          double acc = 0;
          for (std::size_t k = 0; k < tw.weights[x].size(); ++k)
            acc += tw.weights[x][k] * double(src[std::size_t(y) * s.w + tw.index[x][k]]);
          rows[std::size_t(y) * out_w + x] = acc;
        }
      Scalar* dst = out.ptr() + out.index(n, c, 0, 0);
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
          double acc = 0;
          for (std::size_t k = 0; k < th.weights[y].size(); ++k)
            acc += th.weights[y][k] * rows[std::size_t(th.index[y][k]) * out_w + x];
          dst[std::size_t(y) * out_w + x] = Scalar(acc);
        }
    }
  return out;
}

template <typename Scalar>
Tensor<Scalar> degrade(const Tensor<Scalar>& x0, int scale) {
  const Shape s = x0.shape();
  if (scale < 1) throw std::invalid_argument("degrade: scale must be >= 1");
  if (s.h % scale != 0 || s.w % scale != 0)
    throw std::invalid_argument("degrade: image " + std::to_string(s.h) + "x" +
                                std::to_string(s.w) + " not divisible by scale " +
                                std::to_string(scale));
  Tensor<Scalar> low = bicubic_resize(x0, s.h / scale, s.w / scale);
  Tensor<Scalar> up = bicubic_resize(low, s.h, s.w);
  up.data() = up.data().max(Scalar(-1)).min(Scalar(1));
  return up;
}

Tensor<float> synthetic_image(int size, std::uint64_t seed, std::uint64_t index) {
  if (size < 1) throw std::invalid_argument("synthetic_image: size must be positive");
  Rng rng = Rng::derive(seed, {0x5e7, index});
  auto color = [&rng](double lo, double hi) {
    return std::array<double, 3>{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
  };

  // Background: linear gradient between two colours along a random direction.
  const auto c0 = color(-0.8, 0.8), c1 = color(-0.8, 0.8);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double dx = std::cos(theta), dy = std::sin(theta);
  Tensor<float> img({1, 3, size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = 0.5 + ((x + 0.5) / size - 0.5) * dx + ((y + 0.5) / size - 0.5) * dy;
      for (int c = 0; c < 3; ++c) img(0, c, y, x) = float(c0[c] + (c1[c] - c0[c]) * u);
    }

  const int kind = rng.uniform_int(0, 2);
  if (kind == 0 || kind == 1) {
    // Checkerboard (axis-aligned) or stripes (any angle), blended over the gradient.
    const auto ca = color(-1.0, 1.0), cb = color(-1.0, 1.0);
    const double period = rng.uniform(6.0, 20.0);
    const double phase_x = rng.uniform(0.0, period), phase_y = rng.uniform(0.0, period);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double alpha = rng.uniform(0.5, 0.9);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        bool on;
        if (kind == 0) {
          const int ix = int(std::floor((x + phase_x) / (0.5 * period)));
          const int iy = int(std::floor((y + phase_y) / (0.5 * period)));
          on = ((ix + iy) & 1) != 0;
        } else {
          const double v = x * std::cos(angle) + y * std::sin(angle) + phase_x;
          on = std::fmod(v / period + 1e6, 1.0) < 0.5;
        }
        const auto& p = on ? ca : cb;
        for (int c = 0; c < 3; ++c)
          img(0, c, y, x) = float((1.0 - alpha) * img(0, c, y, x) + alpha * p[c]);
      }
  } else {
    const int blobs = rng.uniform_int(3, 7);
    for (int b = 0; b < blobs; ++b) {
      const double cx = rng.uniform(0.0, size), cy = rng.uniform(0.0, size);
      const double sigma = rng.uniform(0.04, 0.16) * size;
      const auto amp = color(-1.2, 1.2);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double r2 = (x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy);
          const double g = std::exp(-0.5 * r2 / (sigma * sigma));
          for (int c = 0; c < 3; ++c) img(0, c, y, x) += float(amp[c] * g);
        }
    }
  }
  img.data() = img.data().max(-1.0f).min(1.0f);
  return img;
}

SyntheticSource::SyntheticSource(std::size_t count, int size, std::uint64_t seed)
    : count_(count), size_(size), seed_(seed) {
  if (size < 1) throw std::invalid_argument("SyntheticSource: size must be positive");
}

Tensor<float> SyntheticSource::image(std::size_t index) const {
  if (index >= count_) throw std::out_of_range("SyntheticSource: index out of range");
  return synthetic_image(size_, seed_, index);
}

std::string SyntheticSource::id(std::size_t index) const {
  return "synthetic/" + std::to_string(index);
}

FolderSource::FolderSource(const std::filesystem::path& directory, int min_size) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory))
    throw DatasetError("data directory not found: " + directory.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory))
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    try {
      Tensor<float> img = read_image(file);
      if (img.shape().h < min_size || img.shape().w < min_size) {
        log_warning("skipping " + file.string() + ": smaller than patch size " +
                    std::to_string(min_size));
        continue;
      }
      images_.push_back(std::move(img));
      names_.push_back(file.filename().string());
    } catch (const ImageIoError& e) {
      log_warning(std::string("skipping unreadable image ") + e.what());
    }
  }
  if (images_.empty())
    throw DatasetError("no usable images in data directory " + directory.string());
}

std::shared_ptr<const ImageSource> make_source(const DatasetSpec& spec, Split split,
                                               std::uint64_t seed) {
  if (spec.patch < 1 || spec.scale < 1 || spec.patch % spec.scale != 0)
    throw DatasetError("patch " + std::to_string(spec.patch) + " must be a positive multiple of scale " +
                       std::to_string(spec.scale));
  if (spec.synthetic) {
    const int size = spec.synthetic_size > 0 ? spec.synthetic_size : spec.patch;
    if (size < spec.patch) throw DatasetError("synthetic_size smaller than patch");
    if (spec.synthetic_count == 0) throw DatasetError("synthetic corpus is empty");
    const std::uint64_t split_seed = mix_seed(seed ^ (split == Split::train ? 0x7a11ULL : 0x7e57ULL));
    return std::make_shared<SyntheticSource>(spec.synthetic_count, size, split_seed);
  }
  return std::make_shared<FolderSource>(spec.directory, spec.patch);
}

PairStream::PairStream(std::shared_ptr<const ImageSource> source, int patch, int scale,
                       std::uint64_t seed)
    : source_(std::move(source)), patch_(patch), scale_(scale), seed_(seed) {
  if (!source_ || source_->size() == 0) throw DatasetError("empty dataset");
  if (patch < 1 || scale < 1 || patch % scale != 0)
    throw DatasetError("patch " + std::to_string(patch) + " must be a positive multiple of scale " +
                       std::to_string(scale));
}

template <typename Scalar>
void PairStream::append(PairBatch<Scalar>& out, int slot, std::size_t image,
                        std::uint64_t crop_key) const {
  const Tensor<float> full = source_->image(image);
  const Shape s = full.shape();
  if (s.c != 3 || s.h < patch_ || s.w < patch_)
    throw DatasetError("image " + source_->id(image) + " has shape " + s.str() +
                       ", expected 3 channels and at least " + std::to_string(patch_) + " pixels");
  Rng rng = Rng::derive(seed_, {0xc409, crop_key});
  const int oy = rng.uniform_int(0, s.h - patch_);
  const int ox = rng.uniform_int(0, s.w - patch_);
  Tensor<Scalar> crop({1, 3, patch_, patch_});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < patch_; ++y)
      for (int x = 0; x < patch_; ++x) crop(0, c, y, x) = Scalar(full(0, c, oy + y, ox + x));
  const Tensor<Scalar> low = degrade(crop, scale_);
  const auto n = std::ptrdiff_t(slot) * crop.size();
  out.x0.data().segment(n, crop.size()) = crop.data();
  out.x_low.data().segment(n, crop.size()) = low.data();
  out.sources.push_back(source_->id(image));
}

template <typename Scalar>
PairBatch<Scalar> PairStream::batch(std::int64_t step, int batch_size) const {
  if (step < 0 || batch_size < 1) throw std::invalid_argument("PairStream::batch: bad arguments");
  const std::size_t n = source_->size();
  PairBatch<Scalar> out{Tensor<Scalar>({batch_size, 3, patch_, patch_}),
                        Tensor<Scalar>({batch_size, 3, patch_, patch_}),
                        {}};
  std::vector<std::size_t> order(n);
  std::int64_t cached_epoch = -1;
  for (int b = 0; b < batch_size; ++b) {
    const auto global = std::uint64_t(step) * std::uint64_t(batch_size) + std::uint64_t(b);
    const auto epoch = std::int64_t(global / n);
    if (epoch != cached_epoch) {
      std::iota(order.begin(), order.end(), std::size_t(0));
      Rng rng = Rng::derive(seed_, {0xe90c, std::uint64_t(epoch)});
      std::shuffle(order.begin(), order.end(), rng.engine());
      cached_epoch = epoch;
    }
    append(out, b, order[global % n], global);
  }
  return out;
}

template <typename Scalar>
PairBatch<Scalar> PairStream::ordered(std::size_t first, int count) const {
  if (count < 1 || first + std::size_t(count) > source_->size())
    throw std::out_of_range("PairStream::ordered: range outside dataset");
  PairBatch<Scalar> out{Tensor<Scalar>({count, 3, patch_, patch_}),
                        Tensor<Scalar>({count, 3, patch_, patch_}),
                        {}};
  for (int b = 0; b < count; ++b)
    append(out, b, first + std::size_t(b), ~std::uint64_t(first + std::size_t(b)));
  return out;
}

#define DGSR_INSTANTIATE_DATA(S)                                                          \
  template Tensor<S> bicubic_resize<S>(const Tensor<S>&, int, int, bool);                 \
  template Tensor<S> degrade<S>(const Tensor<S>&, int);                                   \
  template PairBatch<S> PairStream::batch<S>(std::int64_t, int) const;                    \
  template PairBatch<S> PairStream::ordered<S>(std::size_t, int) const;

DGSR_INSTANTIATE_DATA(float)
DGSR_INSTANTIATE_DATA(double)

}  // namespace dgsr
