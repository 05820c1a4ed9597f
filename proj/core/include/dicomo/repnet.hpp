#pragma once

#include <optional>
#include <vector>

#include <torch/torch.h>

#include "dicomo/config.hpp"
#include "dicomo/odeint.hpp"
#include "dicomo/scenes.hpp"
#include "dicomo/textenc.hpp"

namespace dicomo::repnet {

/// Diagonal Gaussian posterior; sampling is mean + exp(0.5 * log_variance) * eps.
struct GaussianLatent {
  torch::Tensor mean;
  torch::Tensor log_variance;

  torch::Tensor sample(const std::optional<at::Generator>& gen) const;
};

/// Splits a (..., 2d) head output into (mean, log_variance).
GaussianLatent split_head(const torch::Tensor& head);

/// Autonomous 3-layer ELU MLP used as the latent vector field.
class OdeMlpImpl : public torch::nn::Module, public odeint::OdeFunction {
 public:
  OdeMlpImpl(int dim, int hidden);

  torch::Tensor forward(const torch::Tensor& z);
  torch::Tensor eval(const torch::Tensor& z, double) override { return forward(z); }
  bool autonomous() const override { return true; }
  std::vector<torch::Tensor> ode_parameters() override { return parameters(); }

  torch::nn::Linear fc1{nullptr}, fc2{nullptr}, fc3{nullptr};
};
TORCH_MODULE(OdeMlp);

/// Everything one forward pass produces for a batch of B clips with K
/// observations each.
struct Encoding {
  GaussianLatent static_posterior;          // B x dim_ST (pooled)
  GaussianLatent static_per_frame;          // B x K x dim_ST (head on each frame)
  GaussianLatent dynamic_posterior;         // B x dim_dyn, at t0
  torch::Tensor z_static;                   // B x dim_ST, sampled or mean
  torch::Tensor z_dyn0;                     // B x dim_dyn, sampled or mean
  torch::Tensor z_dyn;                      // B x K x dim_dyn, trajectory at the observation times
  torch::Tensor hidden;                     // B x K x hidden

  torch::Tensor z_tr(int dim_tr) const { return z_static.narrow(-1, 0, dim_tr); }
  torch::Tensor z_ti(int dim_tr) const {
    return z_static.narrow(-1, dim_tr, z_static.size(-1) - dim_tr);
  }
};

/// Single-clip view of an encoding.
struct LatentCode {
  torch::Tensor z_tr;                    // dim_tr
  torch::Tensor z_ti;                    // dim_ti
  torch::Tensor z_dyn;                   // K x dim_dyn
  std::vector<double> times;
  std::optional<torch::Tensor> z_desc;   // dim_tr
  GaussianLatent static_posterior;
  GaussianLatent dynamic_posterior;

  /// K x total latent, [z_tr z_ti z_dyn_t] per observation time.
  torch::Tensor frame_codes() const;
};

/// Representation network: per-frame CNN, max-pooled static branch,
/// reverse-time GRU + latent ODE dynamic branch, image decoder and the
/// w_desc -> z_desc projection.
class RepNetImpl : public torch::nn::Module {
 public:
  RepNetImpl(const Config& cfg, int resolution);

  /// frames: M x 3 x H x W -> M x hidden (ReLU features).
  torch::Tensor encode_frames(const torch::Tensor& frames);
  /// hidden: B x K x hidden -> pooled posterior over z_ST (B x dim_ST).
  GaussianLatent pool_static(const torch::Tensor& hidden);
  /// The static head applied to each frame's static features (B x K x dim_ST).
  GaussianLatent static_per_frame(const torch::Tensor& hidden);
  /// hidden: B x K x hidden, times: B lists of K strictly increasing times.
  GaussianLatent encode_dynamics(const torch::Tensor& hidden,
                                 const std::vector<std::vector<double>>& times);
  /// One batched integrate call over the union of the clips' times; returns
  /// B x len(times[b]) x dim_dyn. Every clip must start at the same time.
  torch::Tensor roll_dynamics(const torch::Tensor& z_dyn0,
                              const std::vector<std::vector<double>>& times,
                              const SolverConfig& solver);
  /// Single clip trajectory on `times`.
  odeint::TrajectorySolution roll_dynamics(const torch::Tensor& z_dyn0, const std::vector<double>& times,
                                           const SolverConfig& solver);
  /// z: M x total -> M x 3 x H x W in [0,1].
  torch::Tensor decode(const torch::Tensor& z);

  /// frames: B x K x 3 x H x W. `sample` draws reparameterized codes from
  /// `gen`, otherwise posterior means are used.
  Encoding encode(const torch::Tensor& frames, const std::vector<std::vector<double>>& times,
                  bool sample, const std::optional<at::Generator>& gen, const SolverConfig& solver);

  LatentCode encode_clip(const scenes::ObservationSet& obs, bool sample,
                         const std::optional<at::Generator>& gen, const SolverConfig& solver);

  /// Full posterior-mean vector [z_ST | z_dyn_t0] per clip (B x total).
  torch::Tensor posterior_means(const Encoding& enc) const;

  torch::Tensor project_text(const torch::Tensor& w_desc) { return text_projection->forward(w_desc); }

  const LatentPartition& partition() const { return partition_; }
  int resolution() const { return resolution_; }
  int hidden_width() const { return hidden_; }
  int split() const { return split_; }

  /// Encoder-side parameters (CNN, heads, GRU, ODE) excluding decoder and text projection.
  std::vector<torch::Tensor> encoder_parameters();

  torch::nn::Sequential conv{nullptr};
  torch::nn::Linear feature{nullptr};
  torch::nn::Linear static_head{nullptr};
  torch::nn::GRUCell gru{nullptr};
  torch::nn::Linear dynamic_head{nullptr};
  OdeMlp ode{nullptr};
  torch::nn::Linear dec_fc1{nullptr}, dec_fc2{nullptr};
  torch::nn::Sequential deconv{nullptr};
  textenc::TextProjection text_projection{nullptr};

 private:
  LatentPartition partition_;
  int resolution_;
  int hidden_;
  int split_;
  int dec_channels0_;
  int dec_base_;
};
TORCH_MODULE(RepNet);

}  // namespace dicomo::repnet
