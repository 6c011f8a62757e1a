#include "dgsr/layers.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace dgsr {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv(std::uint64_t& h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
}

}  // namespace

template <typename Scalar>
Var<Scalar> ParameterSet<Scalar>::add(std::string name, Tensor<Scalar> init) {
  for (const auto& e : entries_)
    if (e.first == name) throw std::logic_error("duplicate parameter name " + name);
  Var<Scalar> v(std::move(init), true);
  entries_.emplace_back(std::move(name), v);
  return v;
}

template <typename Scalar>
std::ptrdiff_t ParameterSet<Scalar>::scalar_count() const {
  std::ptrdiff_t n = 0;
  for (const auto& e : entries_) n += e.second.value().size();
  return n;
}

template <typename Scalar>
void ParameterSet<Scalar>::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

template <typename Scalar>
void ParameterSet<Scalar>::set_requires_grad(bool on) {
  for (auto& e : entries_) e.second.set_requires_grad(on);
}

template <typename Scalar>
std::uint64_t ParameterSet<Scalar>::hash() const {
  std::uint64_t h = kFnvOffset;
  for (const auto& [name, v] : entries_) {
    fnv(h, name.data(), name.size());
    const Shape s = v.shape();
    fnv(h, &s, sizeof(s));
    fnv(h, v.value().ptr(), sizeof(Scalar) * std::size_t(v.value().size()));
  }
  return h;
}

template <typename Scalar>
void ParameterSet<Scalar>::assign(const ParameterSet& other) {
  if (other.size() != size()) throw std::invalid_argument("parameter sets differ in size");
  for (std::size_t i = 0; i < size(); ++i) {
    auto& [name, v] = entries_[i];
    const auto& [oname, ov] = other.entries_[i];
    if (name != oname || v.shape() != ov.shape())
      throw std::invalid_argument("parameter mismatch at " + name);
    v.mutable_value() = ov.value();
  }
}

template <typename Scalar>
Tensor<Scalar> uniform_init(Shape shape, int fan_in, Rng& rng, double gain) {
  const double bound = gain / std::sqrt(double(fan_in));
  Tensor<Scalar> t(shape);
  for (auto& v : t.data()) v = Scalar(rng.uniform(-bound, bound));
  return t;
}

template <typename Scalar>
Conv2d<Scalar>::Conv2d(ParameterSet<Scalar>& params, const std::string& name, int in_channels,
                       int out_channels, int kernel, int stride, Rng& rng, double init_gain)
    : stride_(stride), padding_(kernel / 2) {
  const int fan_in = in_channels * kernel * kernel;
  weight_ = params.add(name + ".weight",
                       uniform_init<Scalar>({out_channels, in_channels, kernel, kernel}, fan_in,
                                            rng, init_gain));
  bias_ = params.add(name + ".bias",
                     uniform_init<Scalar>({1, out_channels, 1, 1}, fan_in, rng, init_gain));
}

template <typename Scalar>
GroupNorm<Scalar>::GroupNorm(ParameterSet<Scalar>& params, const std::string& name,
                             int channels, int groups)
    : groups_(groups) {
  gamma_ = params.add(name + ".gamma", Tensor<Scalar>::constant({1, channels, 1, 1}, 1));
  beta_ = params.add(name + ".beta", Tensor<Scalar>::zeros({1, channels, 1, 1}));
}

int norm_groups(int channels, int preferred) {
  for (int g = std::min(preferred, channels); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class GroupNorm<float>;
template class GroupNorm<double>;
template Tensor<float> uniform_init<float>(Shape, int, Rng&, double);
template Tensor<double> uniform_init<double>(Shape, int, Rng&, double);

}  // namespace dgsr
