#ifndef DGSR_TENSOR_HPP
#define DGSR_TENSOR_HPP

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dgsr {

/// Shape of a rank-4 (batch, channels, height, width) array, stored NCHW.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::ptrdiff_t size() const {
    return std::ptrdiff_t(n) * c * h * w;
  }
  std::ptrdiff_t image_size() const { return std::ptrdiff_t(c) * h * w; }
  std::ptrdiff_t plane() const { return std::ptrdiff_t(h) * w; }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) +
           ", " + std::to_string(w) + ")";
  }
};

/// Dense rank-4 array. Storage is a flat Eigen array so element-wise math
/// composes as ordinary Eigen expressions on data().
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(shape), data_(Array::Zero(shape.size())) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
      throw std::invalid_argument("negative tensor dimension " + shape.str());
  }
  Tensor(Shape shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size())
      throw std::invalid_argument("tensor data size does not match shape " + shape_.str());
  }

  static Tensor zeros(Shape shape) { return Tensor(shape); }
  static Tensor constant(Shape shape, Scalar value) {
    return Tensor(shape, Array::Constant(shape.size(), value));
  }
  static Tensor scalar(Scalar value) { return constant({1, 1, 1, 1}, value); }

  const Shape& shape() const { return shape_; }
  std::ptrdiff_t size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Array& data() { return data_; }
  const Array& data() const { return data_; }
  Scalar* ptr() { return data_.data(); }
  const Scalar* ptr() const { return data_.data(); }

  Scalar& operator()(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  Scalar operator()(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }
  Scalar item() const {
    if (size() != 1) throw std::logic_error("item() on tensor of shape " + shape_.str());
    return data_[0];
  }

  std::ptrdiff_t index(int n, int c, int h, int w) const {
    return ((std::ptrdiff_t(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  /// Pointer to the (C, H, W) block of batch element n.
  Scalar* image(int n) { return ptr() + std::ptrdiff_t(n) * shape_.image_size(); }
  const Scalar* image(int n) const { return ptr() + std::ptrdiff_t(n) * shape_.image_size(); }

  /// Batch element n viewed as a (H*W) x C column-major matrix: column c is channel c.
  MatrixMap pixels(int n) { return MatrixMap(image(n), shape_.plane(), shape_.c); }
  ConstMatrixMap pixels(int n) const {
    return ConstMatrixMap(image(n), shape_.plane(), shape_.c);
  }

  Tensor reshaped(Shape shape) const {
    if (shape.size() != size())
      throw std::invalid_argument("cannot reshape " + shape_.str() + " to " + shape.str());
    return Tensor(shape, data_);
  }

  /// Copy of batch elements [first, first + count).
  Tensor batch_slice(int first, int count) const {
    if (first < 0 || count < 0 || first + count > shape_.n)
      throw std::out_of_range("batch slice out of range");
    Shape s = shape_;
    s.n = count;
    return Tensor(s, data_.segment(std::ptrdiff_t(first) * shape_.image_size(), s.size()));
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  Shape shape_;
  Array data_;
};

template <typename Scalar>
void require_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape().str() +
                                " vs " + b.shape().str());
}

/// Concatenate along the batch axis.
template <typename Scalar>
Tensor<Scalar> concat_batch(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.empty()) return b;
  Shape sa = a.shape(), sb = b.shape();
  if (sa.c != sb.c || sa.h != sb.h || sa.w != sb.w)
    throw std::invalid_argument("concat_batch: incompatible " + sa.str() + " and " + sb.str());
  Shape out = sa;
  out.n += sb.n;
  typename Tensor<Scalar>::Array data(out.size());
  data << a.data(), b.data();
  return Tensor<Scalar>(out, std::move(data));
}

}  // namespace dgsr

#endif  // DGSR_TENSOR_HPP
