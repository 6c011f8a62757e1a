#include "doctest.h"

#include "dgsr/diffusion.hpp"
#include "dgsr/random.hpp"

#include <cmath>
#include <cstring>

using namespace dgsr;

namespace {

Tensor<double> filled(Shape s, double v) { return Tensor<double>::constant(s, v); }

}  // namespace

TEST_CASE("forward_diffuse at t = 0 is the identity") {
  auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
  Rng rng(1);
  auto z0 = rng.normal_like<double>({2, 3, 4, 4});
  auto noise = rng.normal_like<double>({2, 3, 4, 4});
  auto z = forward_diffuse(z0, 0, s, noise);
  CHECK((z.data() == z0.data()).all());
}

TEST_CASE("forward marginal mean and variance by Monte-Carlo") {
  Rng pick(7);
  for (int trial = 0; trial < 3; ++trial) {
    const int T = pick.uniform_int(10, 1000);
    auto s = NoiseSchedule::linear(T, 1e-4, pick.uniform(0.01, 0.05));
    const int t = pick.uniform_int(1, T);
    const double z0_value = pick.uniform(-1.0, 1.0);
    const Shape shape{1, 1, 1, 100000};
    Rng rng(100 + trial);
    auto z = forward_diffuse(filled(shape, z0_value), t, s, rng.normal_like<double>(shape));
    const double mean = z.data().mean();
    const double var = (z.data() - mean).square().mean();
    const double ab = s.alpha_bar(t);
    CHECK(std::abs(mean - std::sqrt(ab) * z0_value) <= 0.05 * std::max(std::abs(z0_value), 0.1));
    CHECK(var == doctest::Approx(1.0 - ab).epsilon(0.05));
  }
}

TEST_CASE("per-element timesteps match the scalar variant") {
  auto s = NoiseSchedule::linear(50, 1e-4, 0.02);
  Rng rng(2);
  auto z0 = rng.normal_like<double>({3, 2, 3, 3});
  auto noise = rng.normal_like<double>({3, 2, 3, 3});
  auto z = forward_diffuse(z0, {0, 7, 50}, s, noise);
  for (int n = 0; n < 3; ++n) {
    const int t = std::vector<int>{0, 7, 50}[n];
    auto ref = forward_diffuse(z0.batch_slice(n, 1), t, s, noise.batch_slice(n, 1));
    CHECK((z.batch_slice(n, 1).data() - ref.data()).abs().maxCoeff() <= 1e-15);
  }
  CHECK_THROWS(forward_diffuse(z0, {1, 2}, s, noise));
}

TEST_CASE("ddpm step by hand for T = 2, beta = 0.5") {
  auto s = NoiseSchedule::from_betas({0.5, 0.5});
  const Shape one{1, 1, 1, 1};
  auto z = ddpm_step(filled(one, 1.0), 2, filled(one, 1.0), s, filled(one, 0.0));
  CHECK(z.item() == doctest::Approx(0.9428090).epsilon(1e-6));
}

TEST_CASE("ddpm step at t = 1 returns the clean estimate") {
  auto s = NoiseSchedule::linear(10, 1e-4, 0.02);
  Rng rng(5);
  auto z_t = rng.normal_like<double>({1, 2, 3, 3});
  auto z0_hat = rng.normal_like<double>({1, 2, 3, 3});
  auto noise = rng.normal_like<double>({1, 2, 3, 3});
  auto z = ddpm_step(z_t, 1, z0_hat, s, noise);
  CHECK((z.data() == z0_hat.data()).all());
}

TEST_CASE("both samplers keep an on-trajectory point on the trajectory") {
  auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  Rng rng(9);
  auto z0 = rng.normal_like<double>({1, 3, 4, 4});
  auto zero = Tensor<double>({1, 3, 4, 4});
  for (auto [t, t_prev] : std::vector<std::pair<int, int>>{{1000, 999}, {500, 250}, {10, 0}}) {
    auto z_t = forward_diffuse(z0, t, s, zero);
    auto expect = forward_diffuse(z0, t_prev, s, zero);
    auto a = ddpm_step(z_t, t, z0, s, zero, t_prev);
    auto b = ddim_step(z_t, t, t_prev, z0, s, 0.0, zero);
    CHECK((a.data() - expect.data()).abs().maxCoeff() <= 1e-12);
    CHECK((b.data() - expect.data()).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("ddim with eta = 1 equals the ddpm posterior") {
  auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  Rng rng(4);
  auto z_t = rng.normal_like<double>({2, 3, 4, 4});
  auto z0_hat = rng.normal_like<double>({2, 3, 4, 4});
  auto noise = rng.normal_like<double>({2, 3, 4, 4});
  for (auto [t, t_prev] : std::vector<std::pair<int, int>>{{1000, 999}, {800, 600}, {100, 1}}) {
    auto a = ddpm_step(z_t, t, z0_hat, s, noise, t_prev);
    auto b = ddim_step(z_t, t, t_prev, z0_hat, s, 1.0, noise);
    CHECK((a.data() - b.data()).abs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("ddim to t_prev = 0 returns the clean estimate") {
  auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  Rng rng(6);
  auto z_t = rng.normal_like<double>({1, 3, 4, 4});
  auto z0_hat = rng.normal_like<double>({1, 3, 4, 4});
  auto noise = rng.normal_like<double>({1, 3, 4, 4});
  for (double eta : {0.0, 0.5, 1.0}) {
    auto z = ddim_step(z_t, 100, 0, z0_hat, s, eta, noise);
    CHECK((z.data() - z0_hat.data()).abs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS(ddim_step(z_t, 100, 100, z0_hat, s, 0.0, noise));
  CHECK_THROWS(ddim_step(z_t, 100, 10, z0_hat, s, 1.5, noise));
}

TEST_CASE("uniform timestep spacing") {
  CHECK(timestep_spacing(10, 5) == std::vector<int>{10, 8, 6, 4, 2});
  CHECK(timestep_spacing(1000, 1) == std::vector<int>{1000});
  CHECK(timestep_spacing(1000, 3) == std::vector<int>{1000, 667, 334});
  CHECK(timestep_spacing(7, 7) == std::vector<int>{7, 6, 5, 4, 3, 2, 1});
  CHECK_THROWS(timestep_spacing(10, 0));
  CHECK_THROWS(timestep_spacing(10, 11));
  auto pairs = timestep_pairs(10, 5);
  CHECK(pairs.size() == 5);
  CHECK(pairs.back() == std::pair<int, int>{2, 0});
  CHECK(pairs.front() == std::pair<int, int>{10, 8});
}

TEST_CASE("sampling with a constant generator returns the constant") {
  auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  Denoiser<double> g = [](const Tensor<double>& z, const std::vector<int>&, const Tensor<double>&) {
    return Tensor<double>::constant(z.shape(), 0.25);
  };
  const Tensor<double> z_low({2, 3, 4, 4});
  for (auto m : {SamplerMethod::ancestral, SamplerMethod::deterministic})
    for (int n : {1, 3, 10}) {
      SamplerConfig c;
      c.method = m;
      c.num_steps = n;
      auto out = sample(g, z_low, s, c, 3);
      CHECK((out.data() == 0.25).all());
    }
}

TEST_CASE("sampler visits the spaced timesteps in order") {
  auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
  std::vector<int> seen;
  Denoiser<double> g = [&](const Tensor<double>& z, const std::vector<int>& t,
                           const Tensor<double>&) {
    seen.push_back(t.at(0));
    return z;
  };
  SamplerConfig c;
  c.num_steps = 4;
  sample(g, Tensor<double>({1, 1, 2, 2}), s, c, 0);
  CHECK(seen == timestep_spacing(100, 4));
}

TEST_CASE("deterministic sampling is bit-identical for a fixed seed") {
  auto s = NoiseSchedule::linear(1000, 1e-4, 0.02);
  Denoiser<float> g = [](const Tensor<float>& z, const std::vector<int>& t,
                         const Tensor<float>& low) {
    return Tensor<float>(z.shape(), 0.5f * z.data() + low.data() * float(t[0]) / 1000.0f);
  };
  Rng rng(8);
  auto low = rng.normal_like<float>({2, 3, 8, 8});
  SamplerConfig c;
  c.method = SamplerMethod::deterministic;
  c.num_steps = 20;
  auto a = sample(g, low, s, c, 42);
  auto b = sample(g, low, s, c, 42);
  CHECK(std::memcmp(a.ptr(), b.ptr(), sizeof(float) * a.size()) == 0);
  auto other = sample(g, low, s, c, 43);
  CHECK((other.data() != a.data()).any());
}

TEST_CASE("sampler argument checks") {
  auto s = NoiseSchedule::linear(10, 1e-4, 0.02);
  Denoiser<double> g = [](const Tensor<double>& z, const std::vector<int>&,
                          const Tensor<double>&) { return z; };
  SamplerConfig c;
  c.num_steps = 11;
  CHECK_THROWS(sample(g, Tensor<double>({1, 1, 2, 2}), s, c, 0));
  c.num_steps = 2;
  c.method = SamplerMethod::deterministic;
  c.eta = -0.1;
  CHECK_THROWS(sample(g, Tensor<double>({1, 1, 2, 2}), s, c, 0));
  CHECK(sampler_method_from_string("ddim") == SamplerMethod::deterministic);
  CHECK(sampler_method_from_string("ddpm") == SamplerMethod::ancestral);
  CHECK_THROWS(sampler_method_from_string("euler"));
}
