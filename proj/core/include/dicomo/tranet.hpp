#pragma once

#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dicomo/config.hpp"
#include "dicomo/repnet.hpp"
#include "dicomo/scenes.hpp"
#include "dicomo/textenc.hpp"

namespace dicomo::tranet {

/// Per-channel mean and guarded standard deviation, shaped for broadcasting
/// against the feature map (1xCx1x1 in batch mode, NxCx1x1 in instance mode).
struct NormStats {
  torch::Tensor mean;
  torch::Tensor stddev;
};

NormStats norm_stats(const torch::Tensor& x, NormStatsMode mode, double eps);

/// Conditional normalization blending a text-driven and a content-driven
/// affine transform:
///   out = (a*gamma(w_desc) + (1-a)*psi(w_cont)) * (x - mean)/std
///       + b*rho(w_desc) + (1-b)*eta(w_cont)
/// with a = sigmoid(blend_scale), b = sigmoid(blend_shift).
class MfmodImpl : public torch::nn::Module {
 public:
  MfmodImpl(int channels, int w_desc_dim, int w_cont_dim, NormStatsMode mode, double eps);

  /// x: N x C x H x W; w_desc: N x w_desc_dim; w_cont: N x w_cont_dim.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& w_desc, const torch::Tensor& w_cont);
  /// Same transform with externally supplied statistics.
  torch::Tensor modulate(const torch::Tensor& x, const NormStats& stats, const torch::Tensor& w_desc,
                         const torch::Tensor& w_cont);

  /// Blended per-sample scale and shift, N x C x 1 x 1 each.
  std::pair<torch::Tensor, torch::Tensor> scale_shift(const torch::Tensor& w_desc, const torch::Tensor& w_cont);

  torch::Tensor alpha() const { return torch::sigmoid(blend_scale); }
  torch::Tensor beta() const { return torch::sigmoid(blend_shift); }
  int channels() const { return channels_; }
  NormStatsMode mode() const { return mode_; }
  double eps() const { return eps_; }

  torch::nn::Linear text_scale{nullptr}, text_shift{nullptr};
  torch::nn::Linear content_scale{nullptr}, content_shift{nullptr};
  torch::Tensor blend_scale, blend_shift;

 private:
  int channels_;
  NormStatsMode mode_;
  double eps_;
};
TORCH_MODULE(Mfmod);

/// in + conv3(mfmod(relu(in))).
class ModulatedResBlockImpl : public torch::nn::Module {
 public:
  ModulatedResBlockImpl(int channels, const TraNetConfig& cfg);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& w_desc, const torch::Tensor& w_cont);

  Mfmod mfmod{nullptr};
  torch::nn::Conv2d conv{nullptr};
};
TORCH_MODULE(ModulatedResBlock);

/// z_cont = [z_ti z_dyn] -> w_cont through Linear + LeakyReLU(0.2) layers.
class MappingNetworkImpl : public torch::nn::Module {
 public:
  MappingNetworkImpl(int in_dim, int width, int layers);
  torch::Tensor forward(const torch::Tensor& z_cont);

  torch::nn::ModuleList layers{nullptr};

 private:
  int in_dim_;
};
TORCH_MODULE(MappingNetwork);

/// Generator: downsampling encoder, modulated residual blocks and the
/// upsampling decoder. Images cross the interface in [0,1].
class TraNetImpl : public torch::nn::Module {
 public:
  TraNetImpl(const Config& cfg);

  torch::Tensor map_content(const torch::Tensor& z_cont) { return mapping->forward(z_cont); }
  /// frames: N x 3 x H x W in [0,1]; w_desc: N x 512; w_cont: N x 256.
  torch::Tensor generate(const torch::Tensor& frames, const torch::Tensor& w_desc, const torch::Tensor& w_cont);

  /// Parameters excluding the mapping network (trained at a reduced rate).
  std::vector<torch::Tensor> generator_parameters();

  torch::nn::Sequential encoder{nullptr};
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::Sequential decoder{nullptr};
  MappingNetwork mapping{nullptr};

 private:
  int downsampling_;
};
TORCH_MODULE(TraNet);

/// Encodes `clip` from an observation set (posterior means), rolls z_dyn over
/// every frame time, and regenerates each frame under `text`.
scenes::VideoClip manipulate_clip(const scenes::VideoClip& clip, const std::string& text,
                                  repnet::RepNet& rep, TraNet& tra, const textenc::TextEncoder& encoder,
                                  int k_random, Rng& rng, const SolverConfig& solver);

}  // namespace dicomo::tranet
