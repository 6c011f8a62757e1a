#include "doctest.h"

#include "dgsr/autoencoder.hpp"
#include "dgsr/data.hpp"
#include "dgsr/eval.hpp"
#include "dgsr/random.hpp"

#include <cstring>
#include <functional>

using namespace dgsr;

TEST_CASE("identity codec is bit-exact both ways") {
  IdentityCodec<float> codec;
  Rng rng(1);
  Tensor<float> x = rng.normal_like<float>({2, 3, 8, 8});
  x.data() = x.data().max(-1.0f).min(1.0f);
  auto z = codec.encode(x);
  CHECK(std::memcmp(z.ptr(), x.ptr(), sizeof(float) * x.size()) == 0);
  auto back = codec.decode(z);
  CHECK(std::memcmp(back.ptr(), x.ptr(), sizeof(float) * x.size()) == 0);
  CHECK(codec.parameters().size() == 0);
  CHECK(codec.latent_shape({2, 3, 8, 8}) == Shape{2, 3, 8, 8});
}

TEST_CASE("identity decode clamps to the image range") {
  IdentityCodec<double> codec;
  auto z = Tensor<double>::constant({1, 3, 2, 2}, 1.5);
  CHECK((codec.decode(z).data() == 1.0).all());
}

TEST_CASE("conv vae shapes") {
  ConvVae<float> vae(AutoencoderSpec::conv_vae(4, 8), 2);
  Tensor<float> x({1, 3, 64, 64});
  auto z = vae.encode(x);
  CHECK(z.shape() == Shape{1, 4, 16, 16});
  auto y = vae.decode(z);
  CHECK(y.shape() == Shape{1, 3, 64, 64});
  CHECK(y.data().abs().maxCoeff() <= 1.0f);
  CHECK(vae.latent_shape({2, 3, 32, 48}) == Shape{2, 4, 8, 12});
  CHECK(vae.image_shape({2, 4, 8, 12}) == Shape{2, 3, 32, 48});
}

TEST_CASE("encoding is deterministic") {
  ConvVae<double> vae(AutoencoderSpec::conv_vae(4, 8), 3);
  Rng rng(4);
  auto x = rng.normal_like<double>({1, 3, 16, 16});
  CHECK((vae.encode(x).data() == vae.encode(x).data()).all());
}

TEST_CASE("codec argument checks") {
  ConvVae<double> vae(AutoencoderSpec::conv_vae(4, 8), 5);
  CHECK_THROWS(vae.encode(Tensor<double>({1, 3, 18, 16})));
  CHECK_THROWS(vae.encode(Tensor<double>({1, 1, 16, 16})));
  CHECK_THROWS(vae.decode(Tensor<double>({1, 3, 4, 4})));
  IdentityCodec<double> id;
  CHECK_THROWS(id.encode(Tensor<double>({1, 4, 4, 4})));
  AutoencoderSpec bad = AutoencoderSpec::identity();
  bad.latent_channels = 4;
  CHECK_THROWS(make_autoencoder<double>(bad, 0));
  CHECK(autoencoder_kind_from_string("conv_vae") == AutoencoderKind::conv_vae);
  CHECK_THROWS(autoencoder_kind_from_string("sd-vae"));
}

TEST_CASE("pre-trained conv vae round trip on held-out images") {
  const int size = 32;
  SyntheticSource train_images(256, size, 21), test_images(8, size, 22);
  ConvVae<float> vae(AutoencoderSpec::conv_vae(4, 16), 6);
  VaeTrainOptions opt;
  opt.steps = 1000;
  opt.batch_size = 8;
  opt.learning_rate = 2e-3;
  opt.seed = 7;
  std::function<Tensor<float>(int)> next = [&](int step) {
    Tensor<float> batch;
    for (int i = 0; i < opt.batch_size; ++i)
      batch = concat_batch(batch, train_images.image((step * opt.batch_size + i) % 256));
    return batch;
  };
  auto report = pretrain_vae(vae, next, opt);
  CHECK(report.last_loss < report.first_loss);
  CHECK_FALSE(vae.parameters().entries().front().second.requires_grad());
  // Mean of per-image PSNR, as in the benchmark tables.
  double db = 0;
  for (std::size_t i = 0; i < test_images.size(); ++i) {
    const auto image = test_images.image(i);
    db += psnr(vae.decode(vae.encode(image)), image) / double(test_images.size());
  }
  MESSAGE("vae round trip psnr " << db);
  CHECK(db >= 25.0);
}
