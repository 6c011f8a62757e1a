#include "doctest.h"

#include "dgsr/data.hpp"
#include "dgsr/eval.hpp"
#include "dgsr/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

using namespace dgsr;
namespace fs = std::filesystem;

TEST_CASE("cubic kernel values") {
  CHECK(cubic_kernel(0.0) == 1.0);
  CHECK(cubic_kernel(0.5) == doctest::Approx(0.5625).epsilon(1e-15));
  CHECK(cubic_kernel(-0.5) == doctest::Approx(0.5625).epsilon(1e-15));
  CHECK(cubic_kernel(1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cubic_kernel(1.5) == doctest::Approx(-0.0625).epsilon(1e-15));
  CHECK(cubic_kernel(2.0) == 0.0);
  CHECK(cubic_kernel(3.0) == 0.0);
  // partition of unity at any phase
  for (double f : {0.0, 0.1, 0.37, 0.5, 0.9}) {
    double sum = 0;
    for (int k = -2; k <= 2; ++k) sum += cubic_kernel(f + k);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("bicubic keeps constants at any size") {
  auto c = Tensor<double>::constant({1, 3, 12, 12}, 0.3);
  for (auto [h, w] : std::vector<std::pair<int, int>>{{3, 3}, {12, 12}, {30, 17}}) {
    auto r = bicubic_resize(c, h, w);
    CHECK(r.shape() == Shape{1, 3, h, w});
    CHECK((r.data() - 0.3).abs().maxCoeff() <= 1e-12);
    auto plain = bicubic_resize(c, h, w, false);
    CHECK((plain.data() - 0.3).abs().maxCoeff() <= 1e-12);
  }
  CHECK_THROWS(bicubic_resize(c, 0, 4));
  CHECK((degrade(c).data() - 0.3).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("identity resize is exact") {
  Tensor<double> x({1, 1, 5, 5});
  for (int i = 0; i < 25; ++i) x.data()[i] = std::sin(i);
  auto r = bicubic_resize(x, 5, 5);
  CHECK((r.data() - x.data()).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("degradation removes a fine checkerboard") {
  Tensor<double> x({1, 3, 32, 32});
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) x(0, c, i, j) = (i + j) % 2 ? 0.8 : -0.8;
  auto d = degrade(x, 4);
  CHECK(d.shape() == x.shape());
  CHECK(d.data().abs().maxCoeff() < 0.1);
  CHECK_THROWS(degrade(Tensor<double>({1, 3, 30, 32}), 4));
}

TEST_CASE("degradation is nearly idempotent") {
  SyntheticSource src(16, 64, 3);
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto x = src.image(i);
    auto d = degrade(x);
    auto dd = degrade(d);
    CHECK(psnr(dd, d) > psnr(d, x));
    CHECK(d.data().abs().maxCoeff() <= 1.0f);
  }
}

TEST_CASE("synthetic corpus is deterministic and in range") {
  SyntheticSource a(8, 32, 5), b(8, 32, 5), c(8, 32, 6);
  for (std::size_t i = 0; i < 8; ++i) {
    auto x = a.image(i);
    CHECK(x.shape() == Shape{1, 3, 32, 32});
    CHECK(x.data().abs().maxCoeff() <= 1.0f);
    CHECK((x.data() == b.image(i).data()).all());
    CHECK((x.data() != c.image(i).data()).any());
  }
  CHECK(a.id(3) != a.id(4));
}

TEST_CASE("pair stream batches") {
  DatasetSpec spec;
  spec.synthetic_count = 20;
  spec.synthetic_size = 80;
  auto src = make_source(spec, Split::train, 1);
  PairStream s(src, 64, 4, 1);
  auto a = s.batch<float>(0, 8), b = s.batch<float>(0, 8);
  CHECK(a.x0.shape() == Shape{8, 3, 64, 64});
  CHECK(a.x_low.shape() == Shape{8, 3, 64, 64});
  CHECK(a.sources.size() == 8);
  CHECK((a.x0.data() == b.x0.data()).all());
  CHECK((a.x_low.data() == b.x_low.data()).all());
  CHECK(a.x0.data().abs().maxCoeff() <= 1.0f);
  CHECK(a.x_low.data().abs().maxCoeff() <= 1.0f);
  auto next = s.batch<float>(1, 8);
  CHECK((next.x0.data() != a.x0.data()).any());
  // every low-resolution input is the degraded high-resolution patch
  CHECK((degrade(a.x0).data() - a.x_low.data()).abs().maxCoeff() <= 1e-6f);

  auto test_src = make_source(spec, Split::test, 1);
  CHECK((test_src->image(0).data() != src->image(0).data()).any());

  auto ord = s.ordered<double>(2, 3);
  CHECK(ord.x0.shape() == Shape{3, 3, 64, 64});
  CHECK(ord.sources.front() == src->id(2));
}

TEST_CASE("one epoch visits every image once") {
  DatasetSpec spec;
  spec.synthetic_count = 12;
  auto src = make_source(spec, Split::train, 2);
  PairStream s(src, 64, 4, 2);
  std::vector<std::string> seen;
  for (int step = 0; step < 3; ++step) {
    auto b = s.batch<float>(step, 4);
    seen.insert(seen.end(), b.sources.begin(), b.sources.end());
  }
  std::sort(seen.begin(), seen.end());
  CHECK(std::unique(seen.begin(), seen.end()) == seen.end());
  CHECK(seen.size() == 12);
}

TEST_CASE("stream argument checks") {
  DatasetSpec spec;
  spec.synthetic_count = 4;
  auto src = make_source(spec, Split::train, 0);
  CHECK_THROWS(PairStream(src, 62, 4, 0));
  CHECK_THROWS(PairStream(src, 128, 4, 0).batch<float>(0, 1));
}

TEST_CASE("folder source skips bad files and rejects empty folders") {
  const fs::path dir = fs::temp_directory_path() / "dgsr_test_folder";
  fs::remove_all(dir);
  fs::create_directories(dir);
  CHECK_THROWS_AS(FolderSource(dir, 16), DatasetError);
  CHECK_THROWS_AS(FolderSource(dir / "missing", 16), DatasetError);

  write_png(dir / "a.png", synthetic_image(32, 1, 0), 0);
  write_png(dir / "b.png", synthetic_image(8, 1, 1), 0);
  std::ofstream(dir / "c.png") << "not an image";
  std::ofstream(dir / "notes.txt") << "ignored";
  FolderSource f(dir, 16);
  CHECK(f.size() == 1);
  CHECK(f.id(0) == "a.png");
  auto img = f.image(0);
  CHECK(img.shape() == Shape{1, 3, 32, 32});
  // 8-bit quantization bounds the round-trip error
  CHECK((img.data() - synthetic_image(32, 1, 0).data()).abs().maxCoeff() <= 1.0f / 127.5f);
  fs::remove_all(dir);
}

TEST_CASE("byte mapping") {
  CHECK(from_byte(0) == -1.0f);
  CHECK(from_byte(255) == 1.0f);
  CHECK(to_byte(-1.0) == 0);
  CHECK(to_byte(1.0) == 255);
  CHECK(to_byte(3.0) == 255);
  CHECK(to_byte(from_byte(128)) == 128);
}
