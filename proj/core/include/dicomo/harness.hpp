#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>
#include <torch/torch.h>

#include "dicomo/adversary.hpp"
#include "dicomo/config.hpp"
#include "dicomo/metrics.hpp"
#include "dicomo/objectives.hpp"
#include "dicomo/repnet.hpp"
#include "dicomo/scenes.hpp"
#include "dicomo/textenc.hpp"
#include "dicomo/tranet.hpp"

namespace dicomo::harness {

/// min(step / warmup_iters, 1); 1 when warmup is disabled (warmup_iters <= 0).
double warmup_scale(int64_t step, int64_t warmup_iters);

/// Resolves `optim.warmup_iters = -1` to 10% of one epoch (at least 1).
int64_t resolve_warmup(const Config& cfg, int64_t iters_per_epoch);

/// A training batch of B clips with K observations each.
struct Batch {
  torch::Tensor frames;  // B x K x 3 x H x W
  std::vector<std::vector<double>> times;
  torch::Tensor w_desc;  // B x 512
  std::vector<std::string> descriptions;
};

/// Samples observations and one description per clip.
Batch make_batch(const std::vector<const scenes::VideoClip*>& clips, int k_random, Rng& rng,
                 const textenc::TextEncoder& encoder);

struct StepLog {
  int64_t step = 0;
  double rec = 0, rec_prime = 0, kl_st = 0, kl_dyn = 0;
  double cgan_d = 0, cgan_g = 0, l1 = 0, unsup = 0;
  double loss_repnet = 0, loss_tranet = 0, total = 0;
  double lr_repnet = 0, lr_encoder = 0, lr_tranet = 0, lr_mapping = 0, lr_disc = 0;
  double warmup = 0;

  nlohmann::json to_json() const;
  bool finite() const;
};

/// Networks, optimizers and random state of one training run.
class Trainer {
 public:
  Trainer(const Config& cfg, int64_t iters_per_epoch = 0, torch::Dtype dtype = torch::kFloat32);

  /// One discriminator update (optim.d_steps times) then one RepNet+TraNet update.
  StepLog train_step(const Batch& batch);

  /// Components of the full objective on `batch` without updating anything
  /// (the discriminator scores enter only through the generator term).
  objectives::LossTotals evaluate_loss(const Batch& batch, objectives::LossComponents* out = nullptr);

  void save(const std::string& path) const;
  /// Restores networks, optimizers, random state and step. The stored config
  /// hash must match this trainer's config.
  void load(const std::string& path);

  const Config& config() const { return cfg_; }
  int64_t step() const { return step_; }
  int64_t warmup_iters() const { return warmup_iters_; }
  Rng& rng() { return rng_; }
  at::Generator& generator() { return gen_; }

  repnet::RepNet rep{nullptr};
  tranet::TraNet tra{nullptr};
  adversary::Discriminator disc{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_repnet, opt_tranet, opt_disc;
  std::unique_ptr<objectives::PerceptualExtractor> extractor;

 private:
  struct Forward;
  Forward forward(const Batch& batch, double warmup, bool sample);

  Config cfg_;
  torch::Dtype dtype_;
  int64_t step_ = 0;
  int64_t warmup_iters_ = 0;
  Rng rng_;
  at::Generator gen_;
};

/// Loads a checkpoint written by `Trainer::save` into a fresh trainer built
/// from the config stored inside it.
std::unique_ptr<Trainer> load_trainer(const std::string& path);

struct TrainResult {
  std::string checkpoint;
  std::string log_path;
  std::vector<StepLog> log;
};

/// Full run over `train` clips: epochs of shuffled batches, JSONL log at
/// `<out_dir>/log.jsonl`, checkpoints `<out_dir>/ckpt_<step>.pt`. `max_steps`
/// > 0 stops early.
TrainResult train(const Config& cfg, const std::vector<scenes::VideoClip>& clips, int64_t max_steps = 0);
/// Same, loading the train split from `cfg.data.root`.
TrainResult train(const Config& cfg);

/// Edits `clip` with `text` using a trained model.
scenes::VideoClip edit_clip(Trainer& trainer, const scenes::VideoClip& clip, const std::string& text,
                            std::uint64_t seed);

struct MetricReport {
  double mig = 0, aam = 0, mp = 0;
  double frechet_frame = 0, frechet_video = 0, inception_score = 0;
  double probe_accuracy = 0;
  std::string config_hash;
  std::uint64_t seed = 0;
  int64_t n_samples = 0;
  int bins = 20;

  nlohmann::json to_json() const;
};

struct EvalOptions {
  std::uint64_t seed = 0;
  int max_clips = 0;
  int probe_steps = 300;
  int bins = 20;
};

/// Disentanglement metrics on `test` plus editing metrics: each test clip is
/// edited with the description of another (deranged) test clip.
MetricReport evaluate(Trainer& trainer, const std::vector<scenes::VideoClip>& train_clips,
                      const std::vector<scenes::VideoClip>& test_clips, const EvalOptions& opts);

/// Fraction of clips whose edited frames are closer (probe similarity) to the
/// target description than the unedited frames are.
double editing_gain_fraction(Trainer& trainer, metrics::AttributeProbe& probe,
                             const std::vector<scenes::VideoClip>& clips, std::uint64_t seed);

}  // namespace dicomo::harness
