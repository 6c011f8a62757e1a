// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any selected criterion fails.
#include "dgsr/adversarial.hpp"
#include "dgsr/config.hpp"
#include "dgsr/diffusion.hpp"
#include "dgsr/eval.hpp"
#include "dgsr/log.hpp"
#include "dgsr/random.hpp"
#include "dgsr/trainer.hpp"

#include "golden.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

using namespace dgsr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

bool report(int id, const std::string& title, Outcome& o) {
  std::cout << "criterion " << std::setw(2) << id << ' ' << (o.pass ? "PASS" : "FAIL") << "  "
            << title << ':' << o.detail.str() << std::endl;
  return o.pass;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

// 1 -------------------------------------------------------------------------

bool schedule_oracle() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0;
  int posterior_bad = 0;
  for (int i = 0; i < 100; ++i) {
    const int T = rng.uniform_int(1, 64);
    NoiseSchedule s = [&] {
      switch (i % 3) {
        case 0: {
          std::vector<double> betas(T);
          for (auto& b : betas) b = rng.uniform(1e-6, 0.5);
          return NoiseSchedule::from_betas(betas);
        }
        case 1: {
          const double lo = rng.uniform(1e-5, 1e-3);
          return NoiseSchedule::linear(T, lo, rng.uniform(lo, 0.3));
        }
        default:
          return NoiseSchedule::cosine(T, rng.uniform(0.001, 0.02));
      }
    }();
    for (int t = 0; t <= T; ++t) {
      long double product = 1.0L;
      for (int k = 1; k <= t; ++k) product *= 1.0L - (long double)s.beta(k);
      worst = std::max(worst, double(std::fabs((long double)s.alpha_bar(t) - product)));
    }
    const auto p = posterior_coefficients(s, 1);
    if (!(p.coef_xt == 0.0 && p.coef_x0 == 1.0 && p.variance == 0.0)) ++posterior_bad;
  }
  const double elapsed = seconds_since(t0);
  o.detail << " max |alpha_bar - product| = " << fmt(worst) << ", posterior(t=1) mismatches = "
           << posterior_bad << ", " << fmt(elapsed, 3) << " s";
  o.require(worst <= 1e-12, "alpha_bar within 1e-12");
  o.require(posterior_bad == 0, "posterior at t=1 is (0, 1, 0)");
  o.require(elapsed < 5.0, "runtime < 5 s");
  return report(1, "schedule oracle", o);
}

// 2 -------------------------------------------------------------------------

bool forward_marginal() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(202);
  constexpr int n = 100000;
  const double z0_value = 1.5;
  double worst_mean = 0, worst_var = 0;
  for (int i = 0; i < 5; ++i) {
    const int T = rng.uniform_int(50, 1000);
    const double lo = rng.uniform(1e-5, 1e-3);
    const auto s = i % 2 ? NoiseSchedule::cosine(T) : NoiseSchedule::linear(T, lo, rng.uniform(0.005, 0.03));
    const int t = rng.uniform_int(1, T);
    const Shape shape{1, 1, 100, n / 100};
    const auto z0 = Tensor<double>::constant(shape, z0_value);
    const auto noise = rng.normal_like<double>(shape);
    const auto x = forward_diffuse(z0, t, s, noise);
    const double mean = x.data().mean();
    const double var = (x.data() - mean).square().sum() / (n - 1);
    const double ab = s.alpha_bar(t);
    const double mu = std::sqrt(ab) * z0_value, sigma2 = 1.0 - ab;
    // Relative to the marginal's own scale so that near-zero means are not
    // judged against themselves.
    const double mean_err = std::fabs(mean - mu) / std::max(std::fabs(mu), std::sqrt(sigma2));
    const double var_err = std::fabs(var - sigma2) / sigma2;
    worst_mean = std::max(worst_mean, mean_err);
    worst_var = std::max(worst_var, var_err);
    o.detail << " (T=" << T << ", t=" << t << ": mean " << fmt(mean) << " vs " << fmt(mu)
             << ", var " << fmt(var) << " vs " << fmt(sigma2) << ")";
  }
  const double elapsed = seconds_since(t0);
  o.detail << "; worst relative error mean " << fmt(worst_mean, 3) << ", var "
           << fmt(worst_var, 3) << ", " << fmt(elapsed, 3) << " s";
  o.require(worst_mean <= 0.05 && worst_var <= 0.05, "within 5%");
  o.require(elapsed < 30.0, "runtime < 30 s");
  return report(2, "forward-process marginal", o);
}

// 3 -------------------------------------------------------------------------

bool controller() {
  Outcome o;
  AdaptiveCorruptionState st;
  st.T = 1000;
  const std::pair<double, int> cases[] = {{0.5, 0}, {0.6, 200}, {1.0, 1000}};
  for (auto [acc, expected] : cases) {
    st.acc_ema = acc;
    const int s = corruption_timestep(st);
    o.detail << " s(" << acc << ") = " << s << ';';
    o.require(s == expected, "s(" + fmt(acc) + ") == " + std::to_string(expected));
  }
  double worst = 0;
  for (double c : {0.0, 0.3, 0.6, 0.9, 1.0}) {
    AdaptiveCorruptionState e;
    e.lambda_ema = 0.05;
    for (int i = 0; i < 100; ++i) e = update_ema(e, c);
    worst = std::max(worst, std::fabs(e.acc_ema - c));
  }
  o.detail << " EMA distance after 100 updates <= " << fmt(worst);
  o.require(worst <= 0.01, "EMA within 0.01");
  return report(3, "controller formulas", o);
}

// 4 -------------------------------------------------------------------------

TrainConfig small_double_config() {
  TrainConfig c;
  c.seed = 44;
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  c.generator.base_width = 8;
  c.generator.channel_mults = {1, 2};
  c.generator.num_res_blocks = 1;
  c.generator.attention_levels = {1};
  c.discriminator.base_width = 8;
  c.discriminator.stages = 2;
  c.data.patch = 8;
  c.data.scale = 2;
  c.data.synthetic_count = 8;
  c.precision = Precision::float64;
  return c;
}

bool loss_identities() {
  Outcome o;
  Rng rng(404);
  // Identities on arbitrary inputs and on real training steps.
  int identity_bad = 0;
  for (int i = 0; i < 50; ++i) {
    auto z0 = rng.normal_like<double>({2, 3, 4, 4});
    auto z0_hat = rng.normal_like<double>({2, 3, 4, 4});
    std::vector<double> pred(6);
    std::vector<std::uint8_t> y(6);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      pred[k] = rng.uniform(0.01, 0.99);
      y[k] = rng.bernoulli(0.5);
    }
    const auto r = generator_loss(z0, z0_hat, discriminator_loss(pred, y), 1e-3);
    if (!(r.l_adv == -r.l_d && r.l_g == r.l_mse + 1e-3 * r.l_adv)) ++identity_bad;
  }
  const auto config = small_double_config();
  const PairStream data(make_source(config.data, Split::train, config.seed), config.data.patch,
                        config.data.scale, config.seed);
  auto session = TrainingSession<double>::create(config, data);
  for (int i = 0; i < 10; ++i) {
    const auto r = session->step(data);
    if (!(r.l_adv == -r.l_d && r.l_g == r.l_mse + 1e-3 * r.l_adv)) ++identity_bad;
  }
  o.detail << " identity mismatches = " << identity_bad << ';';
  o.require(identity_bad == 0, "l_adv = -l_d and l_g = l_mse + 1e-3 l_adv");

  const std::vector<double> half{0.5, 0.5};
  const std::vector<std::uint8_t> labels{1, 0};
  const double bce = discriminator_loss(half, labels);
  const double bce_graph =
      bce_loss(constant(Tensor<double>::constant({2, 1, 1, 1}, 0.5)), labels).value().item();
  const double bce_err = std::max(std::fabs(bce - std::log(2.0)), std::fabs(bce_graph - std::log(2.0)));
  o.detail << " |BCE(0.5) - ln 2| = " << fmt(bce_err) << ';';
  o.require(bce_err <= 1e-9, "BCE at 0.5 equals ln 2");

  // MSE path: d l_mse / d theta_G through the generator, against central differences.
  UNetConfig gc = effective_generator(config);
  UNetGenerator<double> g(gc, 100, 7);
  const auto z0 = rng.normal_like<double>({2, 3, 8, 8});
  const auto z_t = rng.normal_like<double>({2, 3, 8, 8});
  const auto z_low = rng.normal_like<double>({2, 3, 8, 8});
  const std::vector<int> t{17, 63};
  auto loss_value = [&] {
    NoGradGuard guard;
    return mse_loss(g(constant(z_t), t, constant(z_low)), constant(z0)).value().item();
  };
  g.parameters().zero_grad();
  backward(mse_loss(g(constant(z_t), t, constant(z_low)), constant(z0)));
  double worst = 0;
  int checked = 0;
  for (auto& [name, p] : g.parameters().entries()) {
    const auto grad = p.grad();
    auto& values = p.mutable_value().data();
    for (int k = 0; k < 3; ++k) {
      const auto idx = std::ptrdiff_t(rng.uniform_int(0, int(values.size()) - 1));
      // Five-point stencil: O(h^4) truncation keeps both error sources near 1e-12.
      const double keep = values[idx], h = 1e-3;
      auto at = [&](double dx) {
        values[idx] = keep + dx;
        return loss_value();
      };
      const double numeric = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
      values[idx] = keep;
      const double analytic = grad.data()[idx];
      const double scale = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
      worst = std::max(worst, std::fabs(numeric - analytic) / scale);
      ++checked;
    }
  }
  o.detail << " FD over " << checked << " generator weights, worst relative error "
           << fmt(worst, 3);
  o.require(worst <= 1e-5, "FD gradient within 1e-5 relative");
  return report(4, "loss identities", o);
}

// 5, 6, 7, 8 (toy model) ----------------------------------------------------

struct ToyModels {
  std::unique_ptr<TrainingSession<float>> full;
  std::unique_ptr<TrainingSession<float>> ablation;
  double train_seconds = 0;
  bool train_time_unrecorded = false;  // reused checkpoints without a timing file
};

std::unique_ptr<TrainingSession<float>> train_or_reuse(const TrainConfig& config,
                                                       const fs::path& dir, bool fresh,
                                                       double& seconds, bool& unrecorded) {
  const fs::path final_path = dir / "checkpoints" / "final.dgsr";
  if (!fresh && fs::exists(final_path)) {
    auto s = TrainingSession<float>::load(final_path);
    if (config_hash(s->config()) == config_hash(config) &&
        s->step_index() == config.total_steps) {
      std::cout << "reusing " << final_path << std::endl;
      std::ifstream recorded(dir / "train_seconds.txt");
      double t = 0;
      if (recorded >> t) {
        seconds += t;
      } else {
        unrecorded = true;
      }
      return s;
    }
  }
  fs::create_directories(dir);
  const PairStream data(make_source(config.data, Split::train, config.seed), config.data.patch,
                        config.data.scale, config.seed);
  std::ofstream losses(dir / "losses.csv");
  TrainOutputs out;
  out.checkpoint_dir = dir / "checkpoints";
  out.loss_stream = &losses;
  const auto t0 = Clock::now();
  auto session = TrainingSession<float>::create(config, data);
  run_training(*session, data, out);
  const double took = seconds_since(t0);
  std::ofstream(dir / "train_seconds.txt") << took << '\n';
  seconds += took;
  std::cout << "trained " << dir << " for " << config.total_steps << " steps" << std::endl;
  return session;
}

Upscaler<float> upscaler_for(const TrainingSession<float>& s) {
  const auto& m = s.models();
  return [&m](const Tensor<float>& x_low, const SamplerConfig& c, std::uint64_t seed) {
    return super_resolve(m.generator, *m.codec, m.schedule, x_low, c, seed);
  };
}

PairStream held_out(const RunConfig& rc) {
  const auto& spec = rc.train.data;
  return PairStream(make_source(spec, Split::test, rc.train.seed), spec.patch, spec.scale,
                    rc.train.seed);
}

BenchmarkOptions eval_options(const RunConfig& rc, const PerceptualMetric* perceptual,
                              const std::string& id) {
  BenchmarkOptions opts;
  opts.max_images = rc.eval.max_images;
  opts.batch_size = rc.eval.batch_size;
  opts.seed = rc.train.seed;
  opts.model_id = id;
  opts.dataset_id = "synthetic-test";
  opts.perceptual = perceptual;
  return opts;
}

bool toy_end_to_end(const RunConfig& rc, ToyModels& toy, const fs::path& work, bool fresh) {
  Outcome o;
  TrainConfig full = rc.train;
  TrainConfig ablation = rc.train;
  ablation.lambda_adv = 0.0;
  toy.full = train_or_reuse(full, work / "full", fresh, toy.train_seconds,
                            toy.train_time_unrecorded);
  toy.ablation = train_or_reuse(ablation, work / "ablation", fresh, toy.train_seconds,
                                toy.train_time_unrecorded);

  const auto t0 = Clock::now();
  PyramidMse pyramid;
  const PairStream data = held_out(rc);
  SamplerConfig sampler;
  sampler.method = SamplerMethod::ancestral;
  sampler.num_steps = 10;
  auto rows = benchmark(upscaler_for(*toy.full), data, {sampler}, eval_options(rc, &pyramid, "full"));
  auto opts = eval_options(rc, &pyramid, "ablation");
  opts.bicubic_row = false;
  const auto ablation_rows = benchmark(upscaler_for(*toy.ablation), data, {sampler}, opts);
  rows.insert(rows.end(), ablation_rows.begin(), ablation_rows.end());
  write_metrics_csv(work / "toy_metrics.csv", rows);
  const auto& bicubic = rows.at(0);
  const auto& f = rows.at(1);
  const auto& a = rows.at(2);
  // Training time comes from the timing files when checkpoints are reused.
  const double elapsed = toy.train_seconds + seconds_since(t0);
  o.detail << " " << full.total_steps << " steps, " << rows.at(0).images
           << " held-out images; PSNR bicubic " << fmt(bicubic.psnr, 5) << ", full "
           << fmt(f.psnr, 5) << " (" << (f.psnr >= bicubic.psnr ? "+" : "")
           << fmt(f.psnr - bicubic.psnr, 3) << " dB), ablation " << fmt(a.psnr, 5) << "; perceptual full "
           << fmt(*f.perceptual, 5) << ", ablation " << fmt(*a.perceptual, 5) << "; "
           << fmt(elapsed / 3600.0, 3) << " h train + eval";
  if (toy.train_time_unrecorded) o.detail << " (reused checkpoints lack a timing file)";
  o.require(f.psnr >= bicubic.psnr + 0.5, "10-step PSNR >= bicubic + 0.5 dB");
  o.require(*f.perceptual < *a.perceptual, "full model perceptual < lambda_adv = 0 ablation");
  o.require(full.total_steps <= 20000, "<= 20k steps");
  o.require(!toy.train_time_unrecorded && elapsed <= 6 * 3600.0, "<= 6 h CPU");
  return report(5, "toy end-to-end", o);
}

bool few_step_robustness(const RunConfig& rc, const ToyModels& toy, const fs::path& work) {
  Outcome o;
  const PairStream data = held_out(rc);
  const auto rows = step_sweep(upscaler_for(*toy.full), data, {3, 50},
                               {SamplerMethod::ancestral, SamplerMethod::deterministic},
                               toy.full->models().schedule.T(), eval_options(rc, nullptr, "full"));
  write_metrics_csv(work / "toy_sweep.csv", rows);
  auto mse_of = [&](const std::string& method, int steps) {
    for (const auto& r : rows)
      if (r.method == method && r.steps == steps) return r.mse;
    throw std::logic_error("missing sweep row " + method);
  };
  for (const char* method : {"ddpm", "ddim"}) {
    const double m3 = mse_of(method, 3), m50 = mse_of(method, 50);
    const double rel = std::fabs(m3 - m50) / m50;
    o.detail << ' ' << method << " MSE 3 steps " << fmt(m3) << ", 50 steps " << fmt(m50)
             << " (" << fmt(100 * rel, 3) << "%);";
    o.require(rel <= 0.25, std::string(method) + " 3-step MSE within 25% of 50-step");
  }
  const double gap3 = std::fabs(mse_of("ddpm", 3) - mse_of("ddim", 3));
  const double gap50 = std::fabs(mse_of("ddpm", 50) - mse_of("ddim", 50));
  o.detail << " DDPM/DDIM MSE gap at 3 steps " << fmt(gap3) << ", at 50 steps " << fmt(gap50);
  o.require(gap50 <= gap3, "gap at 50 steps <= gap at 3 steps");
  return report(6, "few-step robustness", o);
}

bool cost_linearity(const RunConfig& rc, const ToyModels& toy) {
  Outcome o;
  const PairStream data = held_out(rc);
  const auto batch = data.ordered<float>(0, rc.eval.batch_size);
  const auto upscale = upscaler_for(*toy.full);
  std::vector<double> steps, times;
  for (int n : {1, 5, 10, 50, 100}) {
    SamplerConfig c;
    c.num_steps = n;
    double best = 1e300;
    for (int rep = 0; rep < 2; ++rep) {
      const auto t0 = Clock::now();
      upscale(batch.x_low, c, 9);
      best = std::min(best, seconds_since(t0));
    }
    steps.push_back(n);
    times.push_back(best);
    o.detail << " t(" << n << ")=" << fmt(best, 3) << "s";
  }
  const auto fit = fit_line(steps, times);
  o.detail << "; R^2 = " << fmt(fit.r2, 6) << ", t(5)/t(100) = " << fmt(times[1] / times[4], 3);
  o.require(fit.r2 >= 0.99, "R^2 >= 0.99");
  o.require(times[1] <= times[4] / 15.0, "t(5) <= t(100) / 15");
  return report(7, "inference cost linearity", o);
}

bool determinism(const RunConfig& rc, const ToyModels& toy, const fs::path& work) {
  Outcome o;
  const PairStream test = held_out(rc);
  const auto batch = test.ordered<float>(0, rc.eval.batch_size);
  const auto upscale = upscaler_for(*toy.full);
  SamplerConfig c;
  c.method = SamplerMethod::deterministic;
  c.eta = 0.0;
  c.num_steps = 10;
  const auto a = upscale(batch.x_low, c, 31);
  const auto b = upscale(batch.x_low, c, 31);
  const bool same = a.shape() == b.shape() &&
                    std::memcmp(a.ptr(), b.ptr(), sizeof(float) * std::size_t(a.size())) == 0;
  o.detail << " DDIM eta=0 outputs " << (same ? "bit-identical" : "differ") << ';';
  o.require(same, "DDIM bit-identical");

  TrainConfig config = rc.train;
  const PairStream data(make_source(config.data, Split::train, config.seed), config.data.patch,
                        config.data.scale, config.seed);
  auto rows = [](TrainingSession<float>& s, const PairStream& d, int n) {
    std::ostringstream out;
    for (int i = 0; i < n; ++i) write_loss_row(out, s.step(d), s.state().acc_ema);
    return out.str();
  };
  auto straight = TrainingSession<float>::create(config, data);
  const std::string expected = rows(*straight, data, 100);
  auto first = TrainingSession<float>::create(config, data);
  std::string resumed = rows(*first, data, 50);
  const fs::path ckpt = work / "resume_50.dgsr";
  first->save(ckpt);
  first.reset();
  auto second = TrainingSession<float>::load(ckpt);
  resumed += rows(*second, data, 50);
  const bool stream_equal = resumed == expected;
  const bool params_equal = second->models().generator.parameters().hash() ==
                                straight->models().generator.parameters().hash() &&
                            second->models().discriminator.parameters().hash() ==
                                straight->models().discriminator.parameters().hash() &&
                            second->state() == straight->state();
  o.detail << " 100-step loss stream after resume at 50 " << (stream_equal ? "identical" : "differs")
           << ", final weights " << (params_equal ? "identical" : "differ");
  o.require(stream_equal && params_equal, "resume reproduces the uninterrupted run");
  return report(8, "determinism", o);
}

// 9 -------------------------------------------------------------------------

bool isolation() {
  Outcome o;
  const auto t0 = Clock::now();
  TrainConfig c;
  c.seed = 9;
  c.batch_size = 4;
  c.learning_rate = 5e-4;
  c.autoencoder = AutoencoderSpec::conv_vae(4, 8);
  c.vae_pretrain.steps = 50;
  c.vae_pretrain.batch_size = 4;
  c.generator.base_width = 8;
  c.generator.channel_mults = {1, 2};
  c.generator.num_res_blocks = 1;
  c.generator.attention_levels = {};
  c.discriminator.base_width = 8;
  c.discriminator.stages = 2;
  c.data.patch = 32;
  c.data.scale = 4;
  c.data.synthetic_count = 64;
  const PairStream data(make_source(c.data, Split::train, c.seed), c.data.patch, c.data.scale, c.seed);
  auto session = TrainingSession<float>::create(c, data);
  auto& m = session->models();
  const auto codec_hash = m.codec->parameters().hash();
  std::uint64_t g_before = 0, d_before = 0, d_after = 0;
  int g_touched_by_d = 0, d_touched_by_g = 0, d_static = 0, g_static = 0, codec_changed = 0;
  StepHooks<float> hooks;
  hooks.after_discriminator_update = [&](const Models<float>& mm) {
    if (mm.generator.parameters().hash() != g_before) ++g_touched_by_d;
    d_after = mm.discriminator.parameters().hash();
    if (d_after == d_before) ++d_static;
  };
  hooks.after_generator_update = [&](const Models<float>& mm) {
    if (mm.discriminator.parameters().hash() != d_after) ++d_touched_by_g;
    if (mm.generator.parameters().hash() == g_before) ++g_static;
  };
  for (int i = 0; i < 500; ++i) {
    g_before = m.generator.parameters().hash();
    d_before = m.discriminator.parameters().hash();
    session->step(data, &hooks);
    if (m.codec->parameters().hash() != codec_hash) ++codec_changed;
  }
  o.detail << " 500 steps with a conv_vae codec: codec changes " << codec_changed
           << ", G changed by D update " << g_touched_by_d << ", D changed by G update "
           << d_touched_by_g << ", D/G updates without effect " << d_static << '/' << g_static
           << ", " << fmt(seconds_since(t0), 3) << " s";
  o.require(codec_changed == 0, "codec frozen");
  o.require(g_touched_by_d == 0 && d_touched_by_g == 0, "updates isolated");
  o.require(d_static == 0 && g_static == 0, "each update moves its own network");
  return report(9, "frozen codec and alternation isolation", o);
}

// 10 ------------------------------------------------------------------------

bool metric_goldens() {
  Outcome o;
  double worst = 0;
  auto check = [&](const std::string& what, double got, double want) {
    const double err = std::fabs(got - want);
    worst = std::max(worst, err);
    if (err > 1e-9) o.require(false, what + " = " + fmt(got, 17) + ", expected " + fmt(want, 17));
  };
  check("psnr(mse=0.01)", psnr_from_mse(0.01), 20.0);
  // Inputs live in [-1, 1] and are compared on [0, 1].
  Tensor<double> a({1, 1, 2, 2}), b({1, 1, 2, 2});
  a.data() << -1, -1, 1, 1;
  b.data() << -1, 0, 1, 0;
  check("mse hand case", mse(a, b), 0.125);
  check("mse black/white", mse(Tensor<double>::constant({1, 3, 4, 4}, -1.0),
                               Tensor<double>::constant({1, 3, 4, 4}, 1.0)), 1.0);
  check("psnr hand case", psnr(a, b), -10 * std::log10(0.125));
  const auto [wa, wb] = golden::wave_pair();
  const auto [ra, rb] = golden::wave_pair_rgb();
  check("ssim(x, x)", ssim(wa, wa), 1.0);
  check("ssim(x, x) rgb", ssim(ra, ra), 1.0);
  check("ssim wave", ssim(wa, wb), golden::kWaveSsim);
  check("mse wave", mse(wa, wb), golden::kWaveMse);
  check("psnr wave", psnr(wa, wb), golden::kWavePsnr);
  check("ssim wave rgb", ssim(ra, rb), golden::kWaveRgbSsim);
  check("mse wave rgb", mse(ra, rb), golden::kWaveRgbMse);
  check("pyramid wave", PyramidMse(3).distance(wa, wb), golden::kWavePyramid3);
  o.detail << " 12 values, worst absolute error " << fmt(worst, 3);
  return report(10, "metric golden values", o);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-10"};
  std::string config_path = std::string(DGSR_SOURCE_DIR) + "/configs/toy.json";
  std::string work = "acceptance_work";
  std::optional<std::int64_t> toy_steps;
  std::vector<int> only;
  bool fresh = false;
  app.add_option("--config", config_path, "toy run config")->check(CLI::ExistingFile);
  app.add_option("--work-dir", work, "checkpoints and metric tables");
  app.add_option("--toy-steps", toy_steps, "override train.total_steps of the toy run");
  app.add_option("--only", only, "criteria to run (default: all)")->check(CLI::Range(1, 10));
  app.add_flag("--fresh", fresh, "retrain the toy models even if checkpoints exist");
  CLI11_PARSE(app, argc, argv);

  set_log_sink([](LogLevel level, const std::string& m) {
    if (level >= LogLevel::warning) std::cerr << "warning: " << m << '\n';
  });
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  RunConfig rc = load_run_config(config_path);
  if (toy_steps) rc.train.total_steps = *toy_steps;
  fs::create_directories(work);

  int failed = 0, ran = 0;
  auto run = [&](int id, auto&& fn) {
    if (!wanted(id)) return;
    ++ran;
    try {
      if (!fn()) ++failed;
    } catch (const std::exception& e) {
      std::cout << "criterion " << std::setw(2) << id << " FAIL  exception: " << e.what()
                << std::endl;
      ++failed;
    }
  };
  run(1, schedule_oracle);
  run(2, forward_marginal);
  run(3, controller);
  run(4, loss_identities);
  ToyModels toy;
  const bool need_toy = wanted(5) || wanted(6) || wanted(7) || wanted(8);
  if (need_toy) {
    if (wanted(5)) {
      run(5, [&] { return toy_end_to_end(rc, toy, work, fresh); });
    }
    if (!toy.full) {
      try {
        toy.full = train_or_reuse(rc.train, fs::path(work) / "full", fresh, toy.train_seconds,
                                  toy.train_time_unrecorded);
      } catch (const std::exception& e) {
        std::cerr << "toy model unavailable: " << e.what() << '\n';
      }
    }
    const bool have = bool(toy.full);
    auto missing = [] { throw std::runtime_error("no toy model"); return false; };
    run(6, [&] { return have ? few_step_robustness(rc, toy, work) : missing(); });
    run(7, [&] { return have ? cost_linearity(rc, toy) : missing(); });
    run(8, [&] { return have ? determinism(rc, toy, work) : missing(); });
  }
  run(9, isolation);
  run(10, metric_goldens);
  std::cout << (ran - failed) << '/' << ran << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
