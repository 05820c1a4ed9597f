#pragma once

#include <memory>
#include <vector>

#include <torch/torch.h>

#include "dicomo/config.hpp"
#include "dicomo/repnet.hpp"

namespace dicomo::objectives {

constexpr double kPixelClamp = 1e-6;

/// 0.5 * sum_d (mu^2 + exp(lv) - lv - 1) over the last axis; leading axes kept.
torch::Tensor kl_gaussian(const repnet::GaussianLatent& posterior);

/// Mean over frames (and clips) of the per-frame static posterior KL.
torch::Tensor kl_static(const repnet::GaussianLatent& per_frame);
/// Mean over clips of the t0 dynamic posterior KL.
torch::Tensor kl_dynamic(const repnet::GaussianLatent& posterior);

/// Per-frame NLL summed over pixels, averaged over all leading axes. Bernoulli
/// clamps probabilities to [1e-6, 1-1e-6]; gaussian is 0.5 * squared error.
torch::Tensor reconstruction_nll(const torch::Tensor& x, const torch::Tensor& decoded,
                                 ReconLikelihood kind = ReconLikelihood::bernoulli);

/// B x K x total codes [z_tr z_ti z_dyn_t] from an encoding; `z_tr_override`
/// (B x dim_tr) replaces z_tr when given.
torch::Tensor frame_codes(const repnet::Encoding& enc, int dim_tr,
                          const std::optional<torch::Tensor>& z_tr_override = std::nullopt);

struct TwinReconstruction {
  torch::Tensor rec;
  torch::Tensor rec_prime;
};

/// x: B x K x 3 x H x W. rec decodes [z_tr z_ti z_dyn_t]; rec_prime decodes
/// [z_desc z_ti z_dyn_t].
TwinReconstruction twin_reconstruction(const torch::Tensor& x, const repnet::Encoding& enc,
                                       const torch::Tensor& z_desc, repnet::RepNet& rep,
                                       ReconLikelihood kind = ReconLikelihood::bernoulli);

/// Frozen feature pyramid for the perceptual loss.
class PerceptualExtractor {
 public:
  virtual ~PerceptualExtractor() = default;
  /// images: N x 3 x H x W in [0,1].
  virtual std::vector<torch::Tensor> features(const torch::Tensor& images) = 0;
  virtual std::string name() const = 0;
  bool frozen() const { return true; }
  /// Moves weights to `dtype` (gradient checks run in float64).
  virtual void to(torch::Dtype dtype) {}
};

class IdentityExtractor final : public PerceptualExtractor {
 public:
  std::vector<torch::Tensor> features(const torch::Tensor& images) override { return {images}; }
  std::string name() const override { return "identity"; }
};

/// Seeded random conv pyramid: `channels.size()` stages of conv3 s2 + ReLU.
class RandomConvExtractor final : public PerceptualExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 11, std::vector<int> channels = {8, 16, 32});
  std::vector<torch::Tensor> features(const torch::Tensor& images) override;
  std::string name() const override { return "random_conv"; }
  void to(torch::Dtype dtype) override;

 private:
  std::vector<torch::Tensor> weights_;
  std::vector<torch::Tensor> biases_;
};

/// TorchScript module returning a tensor or a list/tuple of feature tensors.
class ScriptedExtractor final : public PerceptualExtractor {
 public:
  explicit ScriptedExtractor(const std::string& path);
  ~ScriptedExtractor() override;
  std::vector<torch::Tensor> features(const torch::Tensor& images) override;
  std::string name() const override { return "vgg_adapter"; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::unique_ptr<PerceptualExtractor> make_extractor(const Config& cfg);

/// sum over layers of mean |phi_l(x) - phi_l(y)|.
torch::Tensor perceptual_l1(const torch::Tensor& x, const torch::Tensor& y, PerceptualExtractor& extractor);

/// Mean over rows of the L2 distance between posterior-mean vectors.
torch::Tensor latent_consistency(const torch::Tensor& mean_x, const torch::Tensor& mean_y);

struct LossComponents {
  torch::Tensor rec, rec_prime, kl_st, kl_dyn;
  torch::Tensor cgan_g, l1, unsup;
};

struct LossTotals {
  torch::Tensor repnet;  // (rec + rec')/2 + beta*(kl_st + kl_dyn)
  torch::Tensor tranet;  // cgan_g + lambda_l1*l1 + lambda_u*unsup
  torch::Tensor total;   // repnet + lambda_t*tranet
};

LossTotals total_loss(const LossComponents& c, const LossConfig& w);

}  // namespace dicomo::objectives
