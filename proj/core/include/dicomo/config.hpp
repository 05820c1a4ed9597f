#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dicomo {

struct LatentPartition {
  int dim_tr = 3;
  int dim_ti = 2;
  int dim_dyn = 1;

  int dim_static() const { return dim_tr + dim_ti; }
  int total() const { return dim_static() + dim_dyn; }
  int dim_content() const { return dim_ti + dim_dyn; }
  void validate() const;
};

enum class OdeMethod { dopri5, rk4 };

struct SolverConfig {
  OdeMethod method = OdeMethod::dopri5;
  double rtol = 1e-7;
  double atol = 1e-9;
  int max_steps = 10000;
  /// <= 0 selects the starting step automatically.
  double initial_step = 0.0;

  void validate() const;
};

struct DataConfig {
  std::string root = "data";
  int resolution = 32;
  int n_train = 2000;
  int n_test = 500;
  int k_random = 3;
};

struct RepNetConfig {
  std::vector<int> encoder_channels{32, 32, 64, 128, 128};
  std::vector<int> decoder_channels{128, 64, 32, 32, 3};
  int hidden = 256;
  int split = 128;
  int gru_width = 256;
  int ode_hidden = 64;
  std::vector<int> text_projection{256, 128, 64};
};

enum class NormStatsMode { batch, instance };

struct TraNetConfig {
  std::vector<int> channels{64, 128, 256, 512};
  int mfmod_blocks = 5;
  NormStatsMode stats = NormStatsMode::batch;
  double eps = 1e-5;
  int w_desc_dim = 512;
  int w_cont_dim = 256;
  int mapping_layers = 4;
};

enum class GanLoss { lsgan, hinge };

struct GanConfig {
  GanLoss loss = GanLoss::lsgan;
  /// Three scales need 64x64 frames with the default four-conv stack.
  int scales = 2;
  std::vector<int> channels{64, 128, 256, 512};
};

enum class ReconLikelihood { bernoulli, gaussian };
enum class StaticKl { per_frame, pooled };
enum class PerceptualKind { random_conv, vgg_adapter, identity };
enum class TextEncoderKind { template_words, clip_adapter };

struct LossConfig {
  double beta = 32.0;
  double lambda_l1 = 1.0;
  double lambda_u = 0.5;
  double lambda_t = 1.0;
  ReconLikelihood recon = ReconLikelihood::bernoulli;
  StaticKl kl_static = StaticKl::per_frame;
  bool unsup_into_encoder = false;
};

enum class WarmupMode { gradient, lr };

struct OptimConfig {
  double repnet_lr = 1e-3;
  double repnet_beta1 = 0.9;
  double repnet_beta2 = 0.999;
  double tranet_lr = 2e-4;
  double tranet_beta1 = 0.5;
  double tranet_beta2 = 0.999;
  double disc_lr = 2e-4;
  double disc_beta1 = 0.5;
  double disc_beta2 = 0.999;
  double mapping_lr_scale = 0.01;
  /// < 0 means 10% of the first epoch's iterations.
  int warmup_iters = -1;
  WarmupMode warmup_mode = WarmupMode::gradient;
  int d_steps = 1;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  std::string out_dir = "runs/default";
  int checkpoint_every = 0;
  int threads = 1;
};

/// Whole-run configuration. Every field is reachable from the YAML file by its
/// dotted key (see `config_keys()`).
struct Config {
  std::uint64_t seed = 0;
  DataConfig data;
  LatentPartition latent;
  RepNetConfig repnet;
  SolverConfig ode{OdeMethod::rk4, 1e-7, 1e-9, 20, 0.0};
  SolverConfig ode_eval{OdeMethod::dopri5, 1e-7, 1e-9, 10000, 0.0};
  TraNetConfig tranet;
  GanConfig gan;
  LossConfig loss;
  OptimConfig optim;
  TrainConfig train;
  PerceptualKind perceptual = PerceptualKind::random_conv;
  std::string perceptual_model_path;
  TextEncoderKind text_encoder = TextEncoderKind::template_words;
  std::string clip_model_path;

  /// Throws ValidationError on any inconsistent field.
  void validate() const;
};

/// Loads a YAML config file on top of the defaults. Unknown keys and type
/// errors are validation errors.
Config load_config(const std::string& path);
Config parse_config(const std::string& yaml_text);

/// Applies `key=value` overrides; the value is parsed as YAML.
void apply_override(Config& cfg, const std::string& assignment);

/// Canonical YAML dump, stable across runs; input for `config_hash`.
std::string dump_config(const Config& cfg);
std::string config_hash(const Config& cfg);

std::vector<std::string> config_keys();

/// Tiny configuration used by gradient checks and fast tests: 8x8 frames,
/// narrow channel stacks, one discriminator scale.
Config toy_config();

/// Reduced-width configuration for CPU smoke runs at 32x32.
Config smoke_config();

}  // namespace dicomo
