#include "dicomo/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "dicomo/common.hpp"

namespace dicomo {

void LatentPartition::validate() const {
  require(dim_tr >= 1 && dim_ti >= 1 && dim_dyn >= 1,
          "latent partition dims must all be >= 1");
}

void SolverConfig::validate() const {
  require(rtol > 0.0 && atol > 0.0, "ode tolerances must be positive");
  require(max_steps >= 1, "ode.max_steps must be >= 1");
}

namespace {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<OdeMethod> {
  static constexpr std::pair<OdeMethod, const char*> table[] = {{OdeMethod::dopri5, "dopri5"},
                                                                {OdeMethod::rk4, "rk4"}};
};
template <>
struct EnumNames<NormStatsMode> {
  static constexpr std::pair<NormStatsMode, const char*> table[] = {
      {NormStatsMode::batch, "batch"}, {NormStatsMode::instance, "instance"}};
};
template <>
struct EnumNames<GanLoss> {
  static constexpr std::pair<GanLoss, const char*> table[] = {{GanLoss::lsgan, "lsgan"},
                                                              {GanLoss::hinge, "hinge"}};
};
template <>
struct EnumNames<ReconLikelihood> {
  static constexpr std::pair<ReconLikelihood, const char*> table[] = {
      {ReconLikelihood::bernoulli, "bernoulli"}, {ReconLikelihood::gaussian, "gaussian"}};
};
template <>
struct EnumNames<StaticKl> {
  static constexpr std::pair<StaticKl, const char*> table[] = {{StaticKl::per_frame, "per_frame"},
                                                               {StaticKl::pooled, "pooled"}};
};
template <>
struct EnumNames<PerceptualKind> {
  static constexpr std::pair<PerceptualKind, const char*> table[] = {
      {PerceptualKind::random_conv, "random_conv"},
      {PerceptualKind::vgg_adapter, "vgg_adapter"},
      {PerceptualKind::identity, "identity"}};
};
template <>
struct EnumNames<TextEncoderKind> {
  static constexpr std::pair<TextEncoderKind, const char*> table[] = {
      {TextEncoderKind::template_words, "template"}, {TextEncoderKind::clip_adapter, "clip_adapter"}};
};
template <>
struct EnumNames<WarmupMode> {
  static constexpr std::pair<WarmupMode, const char*> table[] = {{WarmupMode::gradient, "gradient"},
                                                                 {WarmupMode::lr, "lr"}};
};

template <typename T>
T decode_value(const YAML::Node& node, const std::string& key) {
  try {
    if constexpr (std::is_enum_v<T>) {
      const auto name = node.as<std::string>();
      for (const auto& [value, text] : EnumNames<T>::table)
        if (name == text) return value;
      std::string allowed;
      for (const auto& [value, text] : EnumNames<T>::table) allowed += std::string(" ") + text;
      throw ValidationError(key + ": unknown value '" + name + "' (allowed:" + allowed + ")");
    } else {
      return node.as<T>();
    }
  } catch (const YAML::Exception& e) {
    throw ValidationError(key + ": " + e.what());
  }
}

template <typename T>
YAML::Node encode_value(const T& v) {
  if constexpr (std::is_enum_v<T>) {
    for (const auto& [value, text] : EnumNames<T>::table)
      if (value == v) return YAML::Node(std::string(text));
    return YAML::Node("?");
  } else if constexpr (std::is_same_v<T, std::vector<int>>) {
    YAML::Node n(YAML::NodeType::Sequence);
    for (int x : v) n.push_back(x);
    n.SetStyle(YAML::EmitterStyle::Flow);
    return n;
  } else {
    return YAML::Node(v);
  }
}

struct Field {
  std::string key;
  std::function<void(Config&, const YAML::Node&)> set;
  std::function<YAML::Node(const Config&)> get;
};

template <typename Accessor>
Field make_field(std::string key, Accessor access) {
  using T = std::remove_reference_t<decltype(access(std::declval<Config&>()))>;
  return Field{key,
               [key, access](Config& c, const YAML::Node& n) { access(c) = decode_value<T>(n, key); },
               [access](const Config& c) { return encode_value(access(const_cast<Config&>(c))); }};
}

#define DICOMO_FIELD(key, expr) make_field(key, [](Config& c) -> auto& { return c.expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      DICOMO_FIELD("seed", seed),
      DICOMO_FIELD("data.root", data.root),
      DICOMO_FIELD("data.resolution", data.resolution),
      DICOMO_FIELD("data.n_train", data.n_train),
      DICOMO_FIELD("data.n_test", data.n_test),
      DICOMO_FIELD("data.k_random", data.k_random),
      DICOMO_FIELD("latent.dim_tr", latent.dim_tr),
      DICOMO_FIELD("latent.dim_ti", latent.dim_ti),
      DICOMO_FIELD("latent.dim_dyn", latent.dim_dyn),
      DICOMO_FIELD("hidden.width", repnet.hidden),
      DICOMO_FIELD("hidden.split", repnet.split),
      DICOMO_FIELD("repnet.encoder_channels", repnet.encoder_channels),
      DICOMO_FIELD("repnet.decoder_channels", repnet.decoder_channels),
      DICOMO_FIELD("repnet.gru_width", repnet.gru_width),
      DICOMO_FIELD("repnet.ode_hidden", repnet.ode_hidden),
      DICOMO_FIELD("repnet.text_projection", repnet.text_projection),
      DICOMO_FIELD("ode.method", ode.method),
      DICOMO_FIELD("ode.rtol", ode.rtol),
      DICOMO_FIELD("ode.atol", ode.atol),
      DICOMO_FIELD("ode.max_steps", ode.max_steps),
      DICOMO_FIELD("ode.initial_step", ode.initial_step),
      DICOMO_FIELD("ode.eval_method", ode_eval.method),
      DICOMO_FIELD("ode.eval_rtol", ode_eval.rtol),
      DICOMO_FIELD("ode.eval_atol", ode_eval.atol),
      DICOMO_FIELD("ode.eval_max_steps", ode_eval.max_steps),
      DICOMO_FIELD("tranet.channels", tranet.channels),
      DICOMO_FIELD("tranet.w_desc_dim", tranet.w_desc_dim),
      DICOMO_FIELD("tranet.w_cont_dim", tranet.w_cont_dim),
      DICOMO_FIELD("tranet.mapping_layers", tranet.mapping_layers),
      DICOMO_FIELD("mfmod.blocks", tranet.mfmod_blocks),
      DICOMO_FIELD("mfmod.stats", tranet.stats),
      DICOMO_FIELD("mfmod.eps", tranet.eps),
      DICOMO_FIELD("gan.loss", gan.loss),
      DICOMO_FIELD("gan.scales", gan.scales),
      DICOMO_FIELD("gan.channels", gan.channels),
      DICOMO_FIELD("loss.beta", loss.beta),
      DICOMO_FIELD("loss.lambda_l1", loss.lambda_l1),
      DICOMO_FIELD("loss.lambda_u", loss.lambda_u),
      DICOMO_FIELD("loss.lambda_t", loss.lambda_t),
      DICOMO_FIELD("loss.recon", loss.recon),
      DICOMO_FIELD("loss.unsup_into_encoder", loss.unsup_into_encoder),
      DICOMO_FIELD("kl.static", loss.kl_static),
      DICOMO_FIELD("optim.repnet_lr", optim.repnet_lr),
      DICOMO_FIELD("optim.repnet_beta1", optim.repnet_beta1),
      DICOMO_FIELD("optim.repnet_beta2", optim.repnet_beta2),
      DICOMO_FIELD("optim.tranet_lr", optim.tranet_lr),
      DICOMO_FIELD("optim.tranet_beta1", optim.tranet_beta1),
      DICOMO_FIELD("optim.tranet_beta2", optim.tranet_beta2),
      DICOMO_FIELD("optim.disc_lr", optim.disc_lr),
      DICOMO_FIELD("optim.disc_beta1", optim.disc_beta1),
      DICOMO_FIELD("optim.disc_beta2", optim.disc_beta2),
      DICOMO_FIELD("optim.mapping_lr_scale", optim.mapping_lr_scale),
      DICOMO_FIELD("optim.warmup_iters", optim.warmup_iters),
      DICOMO_FIELD("optim.warmup_mode", optim.warmup_mode),
      DICOMO_FIELD("optim.d_steps", optim.d_steps),
      DICOMO_FIELD("train.epochs", train.epochs),
      DICOMO_FIELD("train.batch_size", train.batch_size),
      DICOMO_FIELD("train.out_dir", train.out_dir),
      DICOMO_FIELD("train.checkpoint_every", train.checkpoint_every),
      DICOMO_FIELD("train.threads", train.threads),
      DICOMO_FIELD("perceptual", perceptual),
      DICOMO_FIELD("perceptual_model_path", perceptual_model_path),
      DICOMO_FIELD("text_encoder", text_encoder),
      DICOMO_FIELD("clip_model_path", clip_model_path),
  };
  return table;
}

#undef DICOMO_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return f;
  throw ValidationError("unknown config key '" + key + "'");
}

void apply_node(Config& cfg, const YAML::Node& node, const std::string& prefix) {
  if (!node.IsMap()) throw ValidationError("config: expected a mapping at '" + prefix + "'");
  for (const auto& kv : node) {
    const auto name = kv.first.as<std::string>();
    const auto key = prefix.empty() ? name : prefix + "." + name;
    if (kv.second.IsMap()) {
      apply_node(cfg, kv.second, key);
    } else {
      find_field(key).set(cfg, kv.second);
    }
  }
}

bool positive_list(const std::vector<int>& v) {
  if (v.empty()) return false;
  for (int x : v)
    if (x < 1) return false;
  return true;
}

}  // namespace

void Config::validate() const {
  latent.validate();
  ode.validate();
  ode_eval.validate();
  require(data.resolution >= 8 && (data.resolution & (data.resolution - 1)) == 0,
          "data.resolution must be a power of two >= 8");
  require(data.n_train >= 1 && data.n_test >= 1, "data counts must be >= 1");
  require(data.k_random >= 0 && data.k_random <= 14, "data.k_random must be in [0, 14]");
  require(repnet.hidden >= 2 && repnet.split >= 1 && repnet.split < repnet.hidden,
          "hidden.split must lie strictly inside hidden.width");
  require(positive_list(repnet.encoder_channels), "repnet.encoder_channels must be positive");
  require(positive_list(repnet.decoder_channels) && repnet.decoder_channels.back() == 3,
          "repnet.decoder_channels must be positive and end with 3");
  require(repnet.decoder_channels.size() == repnet.encoder_channels.size(),
          "repnet encoder/decoder depth mismatch");
  require(repnet.gru_width >= 1 && repnet.ode_hidden >= 1, "repnet widths must be positive");
  require(positive_list(repnet.text_projection), "repnet.text_projection must be positive");
  require(positive_list(tranet.channels) && tranet.channels.size() >= 2,
          "tranet.channels needs at least two entries");
  require(tranet.mfmod_blocks >= 1, "mfmod.blocks must be >= 1");
  require(tranet.eps > 0.0, "mfmod.eps must be positive");
  require(tranet.mapping_layers >= 1, "tranet.mapping_layers must be >= 1");
  require(gan.scales >= 1, "gan.scales must be >= 1");
  require(positive_list(gan.channels), "gan.channels must be positive");
  {
    const int depth = static_cast<int>(tranet.channels.size()) - 1;
    require(data.resolution % (1 << depth) == 0, "data.resolution too small for tranet.channels");
    const int coarsest = data.resolution >> (gan.scales - 1);
    const int stride = 1 << gan.channels.size();
    require(coarsest >= stride && coarsest % stride == 0,
            "gan.scales: the coarsest discriminator input must be a multiple of 2^len(gan.channels)");
  }
  require(loss.beta >= 0 && loss.lambda_l1 >= 0 && loss.lambda_u >= 0 && loss.lambda_t >= 0,
          "loss weights must be non-negative");
  require(train.batch_size >= 1 && train.epochs >= 0, "train.batch_size/epochs invalid");
  require(optim.d_steps >= 1, "optim.d_steps must be >= 1");
  require(train.threads >= 1, "train.threads must be >= 1");
}

Config parse_config(const std::string& yaml_text) {
  Config cfg;
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (root && !root.IsNull()) apply_node(cfg, root, "");
  cfg.validate();
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(Config& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  require(eq != std::string::npos && eq > 0, "override must look like key=value: '" + assignment + "'");
  const auto key = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ValidationError(key + ": " + e.what());
  }
  find_field(key).set(cfg, value);
}

std::string dump_config(const Config& cfg) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  for (const auto& f : fields()) out << YAML::Key << f.key << YAML::Value << f.get(cfg);
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string config_hash(const Config& cfg) { return hex64(fnv1a64(dump_config(cfg))); }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

Config toy_config() {
  Config c;
  c.data.resolution = 8;
  c.data.k_random = 1;
  c.repnet.encoder_channels = {3, 4, 4};
  c.repnet.decoder_channels = {4, 3, 3};
  c.repnet.hidden = 8;
  c.repnet.split = 4;
  c.repnet.gru_width = 5;
  c.repnet.ode_hidden = 4;
  c.repnet.text_projection = {6, 5};
  c.tranet.channels = {2, 3, 3};
  c.tranet.mfmod_blocks = 1;
  c.tranet.w_desc_dim = 512;
  c.tranet.w_cont_dim = 6;
  c.gan.scales = 1;
  c.gan.channels = {2, 3};
  c.train.batch_size = 2;
  return c;
}

Config smoke_config() {
  Config c;
  c.data.n_train = 2000;
  c.data.n_test = 500;
  c.tranet.channels = {16, 32, 64, 128};
  c.gan.channels = {16, 32, 64, 128};
  c.gan.scales = 2;
  return c;
}

}  // namespace dicomo
