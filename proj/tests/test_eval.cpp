#include "doctest.h"

#include "golden.hpp"

#include "dgsr/eval.hpp"
#include "dgsr/random.hpp"

#include "json.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

using namespace dgsr;
namespace fs = std::filesystem;

namespace {

Tensor<double> checkerboard(int size, double lo, double hi) {
  Tensor<double> x({1, 1, size, size});
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) x(0, 0, i, j) = (i + j) % 2 ? hi : lo;
  return x;
}

class Throwing : public PerceptualMetric {
 public:
  std::string name() const override { return "throwing"; }
  double distance(const Tensor<double>&, const Tensor<double>&) const override {
    throw std::runtime_error("backbone missing");
  }
};

class Negative : public PerceptualMetric {
 public:
  std::string name() const override { return "negative"; }
  double distance(const Tensor<double>&, const Tensor<double>&) const override { return -1; }
};

}  // namespace

TEST_CASE("mse hand cases") {
  auto zeros = Tensor<double>::constant({1, 3, 4, 4}, -1.0);
  auto ones = Tensor<double>::constant({1, 3, 4, 4}, 1.0);
  CHECK(mse(zeros, zeros) == 0.0);
  CHECK(mse(zeros, ones) == 1.0);
  Tensor<double> a({1, 1, 1, 2}), b({1, 1, 1, 2});
  a.data() << -1.0, 0.0;
  b.data() << 0.0, 0.0;
  CHECK(std::abs(mse(a, b) - 0.125) <= 1e-15);
  CHECK_THROWS(mse(a, zeros));
}

TEST_CASE("psnr values") {
  CHECK(std::abs(psnr_from_mse(0.01) - 20.0) <= 1e-9);
  CHECK(psnr_from_mse(1.0) == 0.0);
  CHECK(psnr_from_mse(0.0) == kPsnrCap);
  auto x = Tensor<double>::constant({1, 3, 4, 4}, 0.2);
  CHECK(psnr(x, x) == kPsnrCap);
  CHECK_THROWS(psnr_from_mse(-1.0));
}

TEST_CASE("metric goldens") {
  auto [a, b] = golden::wave_pair();
  CHECK(std::abs(mse(a, b) - golden::kWaveMse) <= 1e-12);
  CHECK(std::abs(psnr(a, b) - golden::kWavePsnr) <= 1e-9);
  CHECK(std::abs(ssim(a, b) - golden::kWaveSsim) <= 1e-9);
  CHECK(std::abs(PyramidMse(3).distance(a, b) - golden::kWavePyramid3) <= 1e-12);
  auto [c, d] = golden::wave_pair_rgb();
  CHECK(std::abs(ssim(c, d) - golden::kWaveRgbSsim) <= 1e-9);
  CHECK(std::abs(mse(c, d) - golden::kWaveRgbMse) <= 1e-12);
}

TEST_CASE("psnr and mse duality") {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor<double> a({1, 3, 8, 8}), b({1, 3, 8, 8});
    for (auto& v : a.data()) v = rng.uniform(-1, 1);
    for (auto& v : b.data()) v = rng.uniform(-1, 1);
    CHECK(std::abs(psnr(a, b) + 10 * std::log10(mse(a, b))) <= 1e-9);
  }
}

TEST_CASE("ssim identities") {
  auto [a, b] = golden::wave_pair();
  CHECK(std::abs(ssim(a, a) - 1.0) <= 1e-9);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) <= 1e-9);
  auto c = Tensor<double>::constant({1, 1, 16, 16}, 0.1);
  auto e = Tensor<double>::constant({1, 1, 16, 16}, 0.6);
  CHECK(std::abs(ssim(c, c) - 1.0) <= 1e-12);
  CHECK(ssim(c, e) < 1.0);
  CHECK(ssim(checkerboard(16, -1, 1), checkerboard(16, 1, -1)) < 0.0);
  CHECK_THROWS(ssim(Tensor<double>({1, 1, 10, 16}), Tensor<double>({1, 1, 10, 16})));
}

TEST_CASE("shifting both images leaves mse unchanged") {
  auto [a, b] = golden::wave_pair();
  // both stay inside [-1, 1] after a shift of 0.05
  Tensor<double> sa(a.shape(), a.data() * 0.9 + 0.05), sb(b.shape(), b.data() * 0.9 + 0.05);
  Tensor<double> ta(a.shape(), sa.data() - 0.05), tb(b.shape(), sb.data() - 0.05);
  CHECK(std::abs(mse(sa, sb) - mse(ta, tb)) <= 1e-12);
}

TEST_CASE("perceptual plugin contract") {
  auto [a, b] = golden::wave_pair_rgb();
  PyramidMse pyramid;
  CHECK(perceptual_distance(a, a, &pyramid).value() == 0.0);
  CHECK(perceptual_distance(a, b, &pyramid).value() > 0.0);
  CHECK_FALSE(perceptual_distance(a, b, nullptr).has_value());
  Throwing throwing;
  CHECK_FALSE(perceptual_distance(a, b, &throwing).has_value());
  Negative negative;
  CHECK_FALSE(perceptual_distance(a, b, &negative).has_value());
  Rng rng(2);
  Tensor<double> x({1, 3, 32, 32});
  for (auto& v : x.data()) v = rng.uniform(-1, 1);
  CHECK(perceptual_distance(x, degrade(x), &pyramid).value() > 0.0);
}

TEST_CASE("line fit") {
  auto exact = fit_line({1, 2, 3}, {4, 7, 10});
  CHECK(exact.slope == doctest::Approx(3.0));
  CHECK(exact.intercept == doctest::Approx(1.0));
  CHECK(exact.r2 == doctest::Approx(1.0));
  auto noisy = fit_line({1, 2, 3, 4, 5}, {2.1, 3.9, 6.2, 7.8, 10.1});
  CHECK(noisy.slope == doctest::Approx(1.99).epsilon(1e-12));
  CHECK(noisy.intercept == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(noisy.r2 == doctest::Approx(0.9973053289009771).epsilon(1e-12));
}

TEST_CASE("benchmark with a stub upscaler") {
  DatasetSpec spec;
  spec.synthetic_count = 5;
  spec.patch = 32;
  auto src = make_source(spec, Split::test, 3);
  PairStream data(src, 32, 4, 3);
  Upscaler<float> identity = [](const Tensor<float>& x, const SamplerConfig&, std::uint64_t) {
    return x;
  };
  SamplerConfig c;
  c.num_steps = 3;
  BenchmarkOptions o;
  o.batch_size = 2;
  PyramidMse pyramid;
  o.perceptual = &pyramid;
  auto rows = benchmark(identity, data, {c}, o);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].method == "bicubic");
  CHECK(rows[1].method == "ddpm");
  CHECK(rows[1].steps == 3);
  CHECK(rows[0].images == 5);
  // the stub returns the bicubic input, so both rows agree
  CHECK(rows[0].psnr == doctest::Approx(rows[1].psnr).epsilon(1e-12));
  CHECK(rows[0].ssim == doctest::Approx(rows[1].ssim).epsilon(1e-12));
  CHECK(rows[1].perceptual.has_value());
  CHECK(rows[1].time_per_batch >= 0.0);

  auto again = benchmark(identity, data, {c}, o);
  CHECK(again[1].psnr == rows[1].psnr);
  CHECK(again[1].mse == rows[1].mse);

  CHECK_THROWS(step_sweep(identity, data, {3, 1001}, {SamplerMethod::ancestral}, 1000, o));
  auto sweep = step_sweep(identity, data, {1, 3},
                          {SamplerMethod::ancestral, SamplerMethod::deterministic}, 1000, o);
  CHECK(sweep.size() == 4);  // no bicubic row in a sweep

  const fs::path dir = fs::temp_directory_path() / "dgsr_test_eval";
  fs::create_directories(dir);
  write_metrics_csv(dir / "m.csv", sweep);
  write_metrics_json(dir / "m.json", sweep);
  std::ifstream csv(dir / "m.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "model,dataset,method,steps,eta,psnr,ssim,mse,perceptual,time_per_batch,images");
  auto j = nlohmann::json::parse(std::ifstream(dir / "m.json"));
  CHECK(j.size() == 4);
  fs::remove_all(dir);
}
