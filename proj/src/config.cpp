#include "dgsr/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace dgsr {

using nlohmann::json;

std::string to_string(Precision p) { return p == Precision::float32 ? "float32" : "float64"; }

Precision precision_from_string(const std::string& name) {
  if (name == "float32") return Precision::float32;
  if (name == "float64") return Precision::float64;
  throw ConfigError("unknown precision '" + name + "' (expected float32 or float64)");
}

namespace {

// Reads known keys of one section and rejects anything else.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("section '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& field) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      field = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigError("bad value for '" + name_ + "." + key + "': " + it->dump());
    }
  }

  template <typename T>
  void get_optional(const std::string& key, std::optional<T>& field) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      field.reset();
      return;
    }
    T v{};
    get(key, v);
    field = v;
  }

  template <typename T, typename Parse>
  void get_enum(const std::string& key, T& field, Parse parse) {
    std::string s;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    get(key, s);
    try {
      field = parse(s);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("bad value for '" + name_ + "." + key + "': " + e.what());
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw ConfigError("unknown key '" + it.key() + "' in section '" + name_ + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

template <typename Fn>
void read_section(Section& outer, const std::string& key, Fn fn) {
  if (const json* j = outer.child(key)) {
    Section s(*j, key);
    fn(s);
    s.finish();
  }
}

void read_train_fields(Section& s, TrainConfig& c) {
  s.get("learning_rate", c.learning_rate);
  s.get_optional("discriminator_learning_rate", c.discriminator_learning_rate);
  s.get("adam_beta1", c.adam_beta1);
  s.get("adam_beta2", c.adam_beta2);
  s.get("batch_size", c.batch_size);
  s.get("total_steps", c.total_steps);
  s.get("lambda_adv", c.lambda_adv);
  s.get("lambda_ema", c.lambda_ema);
  s.get("ema_init", c.ema_init);
  s.get("seed", c.seed);
  s.get("checkpoint_every", c.checkpoint_every);
  s.get("log_every", c.log_every);
  s.get("adversarial", c.adversarial);
  s.get("adaptive_corruption", c.adaptive_corruption);
  s.get_enum("precision", c.precision, precision_from_string);
}

void read_model_sections(Section& top, TrainConfig& c) {
  read_section(top, "autoencoder", [&](Section& s) {
    std::string kind = to_string(c.autoencoder.kind);
    s.get("kind", kind);
    AutoencoderKind k;
    try {
      k = autoencoder_kind_from_string(kind);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("bad value for 'autoencoder.kind': ") + e.what());
    }
    if (k != c.autoencoder.kind)
      c.autoencoder =
          k == AutoencoderKind::identity ? AutoencoderSpec::identity() : AutoencoderSpec::conv_vae();
    s.get("latent_channels", c.autoencoder.latent_channels);
    s.get("width", c.autoencoder.width);
    read_section(s, "pretrain", [&](Section& p) {
      p.get("steps", c.vae_pretrain.steps);
      p.get("batch_size", c.vae_pretrain.batch_size);
      p.get("learning_rate", c.vae_pretrain.learning_rate);
      p.get("kl_weight", c.vae_pretrain.kl_weight);
    });
  });
  read_section(top, "schedule", [&](Section& s) {
    s.get_enum("family", c.schedule.family, schedule_family_from_string);
    s.get("T", c.schedule.T);
    s.get("beta_start", c.schedule.beta_start);
    s.get("beta_end", c.schedule.beta_end);
    s.get("cosine_offset", c.schedule.cosine_offset);
  });
  read_section(top, "generator", [&](Section& s) {
    s.get("base_width", c.generator.base_width);
    s.get("channel_mults", c.generator.channel_mults);
    s.get("num_res_blocks", c.generator.num_res_blocks);
    s.get("attention_levels", c.generator.attention_levels);
    s.get("time_embed_dim", c.generator.time_embed_dim);
    s.get("residual_from_condition", c.generator.residual_from_condition);
    s.get("output_init_gain", c.generator.output_init_gain);
  });
  read_section(top, "discriminator", [&](Section& s) {
    s.get("base_width", c.discriminator.base_width);
    s.get("stages", c.discriminator.stages);
    s.get("leaky_slope", c.discriminator.leaky_slope);
  });
  read_section(top, "data", [&](Section& s) {
    s.get("synthetic", c.data.synthetic);
    std::string dir = c.data.directory.string();
    s.get("directory", dir);
    c.data.directory = dir;
    s.get("synthetic_count", c.data.synthetic_count);
    s.get("synthetic_size", c.data.synthetic_size);
    s.get("patch", c.data.patch);
    s.get("scale", c.data.scale);
  });
}

json model_sections_to_json(const TrainConfig& c) {
  json j;
  j["autoencoder"] = {{"kind", to_string(c.autoencoder.kind)},
                      {"latent_channels", c.autoencoder.latent_channels},
                      {"width", c.autoencoder.width},
                      {"pretrain",
                       {{"steps", c.vae_pretrain.steps},
                        {"batch_size", c.vae_pretrain.batch_size},
                        {"learning_rate", c.vae_pretrain.learning_rate},
                        {"kl_weight", c.vae_pretrain.kl_weight}}}};
  j["schedule"] = {{"family", to_string(c.schedule.family)},
                   {"T", c.schedule.T},
                   {"beta_start", c.schedule.beta_start},
                   {"beta_end", c.schedule.beta_end},
                   {"cosine_offset", c.schedule.cosine_offset}};
  j["generator"] = {{"base_width", c.generator.base_width},
                    {"channel_mults", c.generator.channel_mults},
                    {"num_res_blocks", c.generator.num_res_blocks},
                    {"attention_levels", c.generator.attention_levels},
                    {"time_embed_dim", c.generator.time_embed_dim},
                    {"residual_from_condition", c.generator.residual_from_condition},
                    {"output_init_gain", c.generator.output_init_gain}};
  j["discriminator"] = {{"base_width", c.discriminator.base_width},
                        {"stages", c.discriminator.stages},
                        {"leaky_slope", c.discriminator.leaky_slope}};
  j["data"] = {{"synthetic", c.data.synthetic},
               {"directory", c.data.directory.string()},
               {"synthetic_count", c.data.synthetic_count},
               {"synthetic_size", c.data.synthetic_size},
               {"patch", c.data.patch},
               {"scale", c.data.scale}};
  return j;
}

json train_fields_to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"discriminator_learning_rate",
           c.discriminator_learning_rate ? json(*c.discriminator_learning_rate) : json()},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"batch_size", c.batch_size},
          {"total_steps", c.total_steps},
          {"lambda_adv", c.lambda_adv},
          {"lambda_ema", c.lambda_ema},
          {"ema_init", c.ema_init},
          {"seed", c.seed},
          {"checkpoint_every", c.checkpoint_every},
          {"log_every", c.log_every},
          {"adversarial", c.adversarial},
          {"adaptive_corruption", c.adaptive_corruption},
          {"precision", to_string(c.precision)}};
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

nlohmann::json train_config_to_json(const TrainConfig& config) {
  json j = model_sections_to_json(config);
  j["train"] = train_fields_to_json(config);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  Section top(j, "config");
  read_section(top, "train", [&](Section& s) { read_train_fields(s, c); });
  read_model_sections(top, c);
  top.finish();
  validate(c);
  return c;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  Section top(j, "config");
  top.get("format_version", c.format_version);
  if (c.format_version != kConfigFormatVersion)
    throw ConfigError("unsupported config format_version " + std::to_string(c.format_version) +
                      " (this build reads version " + std::to_string(kConfigFormatVersion) + ")");
  read_section(top, "train", [&](Section& s) { read_train_fields(s, c.train); });
  read_model_sections(top, c.train);
  read_section(top, "sampler", [&](Section& s) {
    s.get_enum("method", c.sampler.method, sampler_method_from_string);
    s.get("steps", c.sampler.num_steps);
    s.get("eta", c.sampler.eta);
    s.get_optional("clamp_prediction", c.sampler.clamp_prediction);
  });
  read_section(top, "eval", [&](Section& s) {
    s.get("steps", c.eval.steps);
    std::vector<std::string> methods;
    for (auto m : c.eval.methods) methods.push_back(to_string(m));
    s.get("methods", methods);
    c.eval.methods.clear();
    for (const auto& m : methods) {
      try {
        c.eval.methods.push_back(sampler_method_from_string(m));
      } catch (const std::exception& e) {
        throw ConfigError(std::string("bad value in 'eval.methods': ") + e.what());
      }
    }
    s.get("max_images", c.eval.max_images);
    s.get("batch_size", c.eval.batch_size);
    s.get("perceptual", c.eval.perceptual);
  });
  read_section(top, "output", [&](Section& s) {
    std::string root = c.run_root.string();
    s.get("run_root", root);
    c.run_root = root;
  });
  std::string test_dir = c.test_directory.string();
  top.get("test_directory", test_dir);
  c.test_directory = test_dir;
  top.finish();
  validate(c);
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  json j = train_config_to_json(c.train);
  j["format_version"] = c.format_version;
  j["sampler"] = {{"method", to_string(c.sampler.method)},
                  {"steps", c.sampler.num_steps},
                  {"eta", c.sampler.eta},
                  {"clamp_prediction",
                   c.sampler.clamp_prediction ? json(*c.sampler.clamp_prediction) : json()}};
  std::vector<std::string> methods;
  for (auto m : c.eval.methods) methods.push_back(to_string(m));
  j["eval"] = {{"steps", c.eval.steps},
               {"methods", methods},
               {"max_images", c.eval.max_images},
               {"batch_size", c.eval.batch_size},
               {"perceptual", c.eval.perceptual}};
  j["output"] = {{"run_root", c.run_root.string()}};
  j["test_directory"] = c.test_directory.string();
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

void validate(const TrainConfig& c) {
  require(c.learning_rate > 0, "train.learning_rate must be > 0");
  require(!c.discriminator_learning_rate || *c.discriminator_learning_rate >= 0,
          "train.discriminator_learning_rate must be >= 0");
  require(c.adam_beta1 >= 0 && c.adam_beta1 < 1, "train.adam_beta1 must be in [0, 1)");
  require(c.adam_beta2 >= 0 && c.adam_beta2 < 1, "train.adam_beta2 must be in [0, 1)");
  require(c.batch_size >= 1, "train.batch_size must be >= 1");
  require(c.total_steps >= 0, "train.total_steps must be >= 0");
  require(c.lambda_adv >= 0, "train.lambda_adv must be >= 0");
  require(c.lambda_ema > 0 && c.lambda_ema <= 1, "train.lambda_ema must be in (0, 1]");
  require(c.ema_init >= 0 && c.ema_init <= 1, "train.ema_init must be in [0, 1]");
  require(c.checkpoint_every >= 0, "train.checkpoint_every must be >= 0");
  require(c.log_every >= 0, "train.log_every must be >= 0");
  require(c.schedule.T >= 1, "schedule.T must be >= 1");
  if (c.schedule.family == ScheduleFamily::linear)
    require(c.schedule.beta_start > 0 && c.schedule.beta_start <= c.schedule.beta_end &&
                c.schedule.beta_end < 1,
            "schedule betas must satisfy 0 < beta_start <= beta_end < 1");
  require(c.generator.base_width >= 1 && !c.generator.channel_mults.empty() &&
              c.generator.num_res_blocks >= 1,
          "generator: base_width, channel_mults and num_res_blocks must be positive");
  for (int l : c.generator.attention_levels)
    require(l >= 0 && l < int(c.generator.channel_mults.size()),
            "generator.attention_levels entries must index channel_mults");
  require(c.discriminator.base_width >= 1 && c.discriminator.stages >= 1,
          "discriminator: base_width and stages must be positive");
  require(c.data.patch >= 1 && c.data.scale >= 1 && c.data.patch % c.data.scale == 0,
          "data.patch must be a positive multiple of data.scale");
  require(c.data.synthetic || !c.data.directory.empty(),
          "data: set synthetic = true or give a directory");
  const int factor = c.autoencoder.spatial_factor;
  require(c.data.patch % factor == 0,
          "data.patch " + std::to_string(c.data.patch) + " must be divisible by the autoencoder factor " +
              std::to_string(factor));
  const int multiple = 1 << (int(c.generator.channel_mults.size()) - 1);
  require((c.data.patch / factor) % multiple == 0,
          "latent size " + std::to_string(c.data.patch / factor) +
              " must be divisible by the generator multiple " + std::to_string(multiple));
  if (c.autoencoder.kind == AutoencoderKind::identity)
    require(c.autoencoder.latent_channels == c.autoencoder.image_channels,
            "autoencoder: identity codec needs latent_channels = image channels");
  else
    require(c.autoencoder.latent_channels >= 1 && c.autoencoder.width >= 1 &&
                c.autoencoder.spatial_factor == 4,
            "autoencoder: conv_vae needs positive latent_channels and width");
  if (c.autoencoder.kind == AutoencoderKind::conv_vae)
    require(c.vae_pretrain.steps >= 0 && c.vae_pretrain.batch_size >= 1 &&
                c.vae_pretrain.learning_rate > 0,
            "autoencoder.pretrain settings out of range");
}

void validate(const RunConfig& c) {
  validate(c.train);
  require(c.sampler.num_steps >= 1 && c.sampler.num_steps <= c.train.schedule.T,
          "sampler.steps must be in [1, T]");
  require(c.sampler.eta >= 0, "sampler.eta must be >= 0");
  for (int s : c.eval.steps)
    require(s >= 1 && s <= c.train.schedule.T,
            "eval.steps entry " + std::to_string(s) + " outside [1, " +
                std::to_string(c.train.schedule.T) + "]");
  require(c.eval.batch_size >= 1, "eval.batch_size must be >= 1");
  require(!c.eval.methods.empty(), "eval.methods must not be empty");
}

std::uint64_t config_hash(const TrainConfig& config) {
  json j = train_config_to_json(config);
  j["train"].erase("total_steps");
  j["train"].erase("checkpoint_every");
  j["train"].erase("log_every");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << v;
  return out.str();
}

UNetConfig effective_generator(const TrainConfig& config) {
  UNetConfig g = config.generator;
  g.latent_channels = config.autoencoder.latent_channels;
  return g;
}

}  // namespace dgsr
