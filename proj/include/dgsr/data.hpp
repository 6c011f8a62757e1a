#ifndef DGSR_DATA_HPP
#define DGSR_DATA_HPP

#include "dgsr/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dgsr {

/// Keys cubic convolution kernel; a = -0.5 is Catmull-Rom.
double cubic_kernel(double x, double a = -0.5);

/// Separable bicubic resize with edge clamping and half-pixel centres.
/// When shrinking with `antialias`, the kernel is widened by the scale factor
/// so it acts as a low-pass prefilter.
template <typename Scalar>
Tensor<Scalar> bicubic_resize(const Tensor<Scalar>& image, int out_h, int out_w,
                              bool antialias = true);

/// Bicubic down by `scale`, back up to the original size, clamped to [-1, 1].
template <typename Scalar>
Tensor<Scalar> degrade(const Tensor<Scalar>& x0, int scale = 4);

/// Source of full-size RGB images in [-1, 1], each (1, 3, H, W).
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::size_t size() const = 0;
  virtual Tensor<float> image(std::size_t index) const = 0;
  virtual std::string id(std::size_t index) const = 0;
};

/// Procedural textures: linear gradients under checkerboards, stripes or
/// Gaussian blobs. Image i depends only on (seed, i).
class SyntheticSource : public ImageSource {
 public:
  SyntheticSource(std::size_t count, int size, std::uint64_t seed);
  std::size_t size() const override { return count_; }
  Tensor<float> image(std::size_t index) const override;
  std::string id(std::size_t index) const override;

 private:
  std::size_t count_;
  int size_;
  std::uint64_t seed_;
};

Tensor<float> synthetic_image(int size, std::uint64_t seed, std::uint64_t index);

/// PNG/JPEG files of a directory (sorted by name), decoded up front.
/// Unreadable or too-small files are skipped with a warning.
class FolderSource : public ImageSource {
 public:
  FolderSource(const std::filesystem::path& directory, int min_size);
  std::size_t size() const override { return images_.size(); }
  Tensor<float> image(std::size_t index) const override { return images_.at(index); }
  std::string id(std::size_t index) const override { return names_.at(index); }

 private:
  std::vector<Tensor<float>> images_;
  std::vector<std::string> names_;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split { train, test };

struct DatasetSpec {
  bool synthetic = true;
  std::filesystem::path directory;
  std::size_t synthetic_count = 512;
  int synthetic_size = 0;  // 0: same as the patch size
  int patch = 64;
  int scale = 4;
};

/// Builds the source for a split. The synthetic test split uses a stream
/// disjoint from the training one.
std::shared_ptr<const ImageSource> make_source(const DatasetSpec& spec, Split split,
                                               std::uint64_t seed);

template <typename Scalar>
struct PairBatch {
  Tensor<Scalar> x0;     // (N, 3, patch, patch)
  Tensor<Scalar> x_low;  // degraded and pre-upsampled, same shape
  std::vector<std::string> sources;
};

/// Seeded patch crops with their degraded counterparts. Every batch is a
/// pure function of (seed, step): epochs are reshuffled with a permutation
/// keyed by the epoch index and crops are keyed by the global sample index.
class PairStream {
 public:
  PairStream(std::shared_ptr<const ImageSource> source, int patch, int scale,
             std::uint64_t seed);

  std::size_t size() const { return source_->size(); }
  int patch() const { return patch_; }
  int scale() const { return scale_; }

  template <typename Scalar>
  PairBatch<Scalar> batch(std::int64_t step, int batch_size) const;

  /// Images [first, first + count) in source order, for evaluation.
  template <typename Scalar>
  PairBatch<Scalar> ordered(std::size_t first, int count) const;

 private:
  template <typename Scalar>
  void append(PairBatch<Scalar>& out, int slot, std::size_t image, std::uint64_t crop_key) const;

  std::shared_ptr<const ImageSource> source_;
  int patch_;
  int scale_;
  std::uint64_t seed_;
};

}  // namespace dgsr

#endif  // DGSR_DATA_HPP
