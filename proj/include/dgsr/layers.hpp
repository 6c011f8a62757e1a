#ifndef DGSR_LAYERS_HPP
#define DGSR_LAYERS_HPP

#include "dgsr/autograd.hpp"
#include "dgsr/random.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace dgsr {

/// Ordered, named collection of trainable leaves. Order is registration order
/// and is what the checkpoint format and the optimizer state rely on.
template <typename Scalar>
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Var<Scalar>>;

  Var<Scalar> add(std::string name, Tensor<Scalar> init);

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::ptrdiff_t scalar_count() const;

  void zero_grad();
  void set_requires_grad(bool on);

  /// FNV-1a over names, shapes and the raw bytes of every value.
  std::uint64_t hash() const;

  /// Copy values from another set with identical names and shapes.
  void assign(const ParameterSet& other);

 private:
  std::vector<Entry> entries_;
};

/// Weights drawn U(-b, b) with b = gain / sqrt(fan_in).
template <typename Scalar>
Tensor<Scalar> uniform_init(Shape shape, int fan_in, Rng& rng, double gain = 1.0);

template <typename Scalar>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParameterSet<Scalar>& params, const std::string& name, int in_channels,
         int out_channels, int kernel, int stride, Rng& rng, double init_gain = 1.0);

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return conv2d(x, weight_, bias_, stride_, padding_);
  }
  int out_channels() const { return weight_.shape().n; }

 private:
  Var<Scalar> weight_;
  Var<Scalar> bias_;
  int stride_ = 1;
  int padding_ = 0;
};

/// Fully connected layer on (N, D, 1, 1) tensors.
template <typename Scalar>
class Linear {
 public:
  Linear() = default;
  Linear(ParameterSet<Scalar>& params, const std::string& name, int in_features,
         int out_features, Rng& rng, double init_gain = 1.0)
      : conv_(params, name, in_features, out_features, 1, 1, rng, init_gain) {}

  Var<Scalar> operator()(const Var<Scalar>& x) const { return conv_(x); }

 private:
  Conv2d<Scalar> conv_;
};

template <typename Scalar>
class GroupNorm {
 public:
  GroupNorm() = default;
  GroupNorm(ParameterSet<Scalar>& params, const std::string& name, int channels, int groups);

  Var<Scalar> operator()(const Var<Scalar>& x) const {
    return group_norm(x, gamma_, beta_, groups_);
  }

 private:
  Var<Scalar> gamma_;
  Var<Scalar> beta_;
  int groups_ = 1;
};

/// Largest group count <= preferred that divides channels.
int norm_groups(int channels, int preferred = 8);

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class GroupNorm<float>;
extern template class GroupNorm<double>;

}  // namespace dgsr

#endif  // DGSR_LAYERS_HPP
