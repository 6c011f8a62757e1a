#ifndef DGSR_RANDOM_HPP
#define DGSR_RANDOM_HPP

#include "dgsr/tensor.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dgsr {

/// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded random stream. All randomness in the library is drawn from an Rng
/// passed in explicitly; there is no global generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(mix_seed(seed)) {}

  /// Stream keyed by (seed, k0, k1, ...). Same keys, same stream.
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t s = mix_seed(seed);
    for (auto k : keys) s = mix_seed(s ^ mix_seed(k + 0x632be59bd9b4e019ULL));
    return Rng(s);
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  /// Integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  bool bernoulli(double p) { return uniform() < p; }

  template <typename Scalar>
  void fill_normal(Tensor<Scalar>& t) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : t.data()) v = Scalar(dist(engine_));
  }

  template <typename Scalar>
  Tensor<Scalar> normal_like(Shape shape) {
    Tensor<Scalar> t(shape);
    fill_normal(t);
    return t;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dgsr

#endif  // DGSR_RANDOM_HPP
