#include "dicomo/tranet.hpp"

namespace dicomo::tranet {

namespace nn = torch::nn;

NormStats norm_stats(const torch::Tensor& x, NormStatsMode mode, double eps) {
  require(x.dim() == 4, "norm_stats expects N x C x H x W");
  const std::vector<int64_t> dims =
      mode == NormStatsMode::batch ? std::vector<int64_t>{0, 2, 3} : std::vector<int64_t>{2, 3};
  auto mean = x.mean(dims, /*keepdim=*/true);
  auto var = (x - mean).pow(2).mean(dims, true);
  auto stddev = torch::sqrt(torch::clamp_min(var, eps * eps));
  return {mean, stddev};
}

MfmodImpl::MfmodImpl(int channels, int w_desc_dim, int w_cont_dim, NormStatsMode mode, double eps)
    : channels_(channels), mode_(mode), eps_(eps) {
  text_scale = register_module("text_scale", nn::Linear(w_desc_dim, channels));
  text_shift = register_module("text_shift", nn::Linear(w_desc_dim, channels));
  content_scale = register_module("content_scale", nn::Linear(w_cont_dim, channels));
  content_shift = register_module("content_shift", nn::Linear(w_cont_dim, channels));
  blend_scale = register_parameter("blend_scale", torch::zeros({1}));
  blend_shift = register_parameter("blend_shift", torch::zeros({1}));
  torch::NoGradGuard guard;
  text_scale->bias.fill_(1.0);
  content_scale->bias.fill_(1.0);
}

std::pair<torch::Tensor, torch::Tensor> MfmodImpl::scale_shift(const torch::Tensor& w_desc,
                                                               const torch::Tensor& w_cont) {
  const auto a = alpha();
  const auto b = beta();
  auto scale = a * text_scale->forward(w_desc) + (1 - a) * content_scale->forward(w_cont);
  auto shift = b * text_shift->forward(w_desc) + (1 - b) * content_shift->forward(w_cont);
  return {scale.unsqueeze(-1).unsqueeze(-1), shift.unsqueeze(-1).unsqueeze(-1)};
}

torch::Tensor MfmodImpl::modulate(const torch::Tensor& x, const NormStats& stats, const torch::Tensor& w_desc,
                                  const torch::Tensor& w_cont) {
  require(x.dim() == 4 && x.size(1) == channels_, "mfmod: channel mismatch");
  require(w_desc.size(0) == x.size(0) && w_cont.size(0) == x.size(0), "mfmod: condition batch mismatch");
  auto [scale, shift] = scale_shift(w_desc, w_cont);
  return scale * ((x - stats.mean) / stats.stddev) + shift;
}

torch::Tensor MfmodImpl::forward(const torch::Tensor& x, const torch::Tensor& w_desc,
                                 const torch::Tensor& w_cont) {
  require(x.dim() == 4 && x.size(1) == channels_, "mfmod: channel mismatch");
  return modulate(x, norm_stats(x, mode_, eps_), w_desc, w_cont);
}

ModulatedResBlockImpl::ModulatedResBlockImpl(int channels, const TraNetConfig& cfg) {
  mfmod = register_module("mfmod", Mfmod(channels, cfg.w_desc_dim, cfg.w_cont_dim, cfg.stats, cfg.eps));
  conv = register_module("conv", nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)
                                                .padding_mode(torch::kReflect)));
}

torch::Tensor ModulatedResBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& w_desc,
                                             const torch::Tensor& w_cont) {
  return x + conv->forward(mfmod->forward(torch::relu(x), w_desc, w_cont));
}

MappingNetworkImpl::MappingNetworkImpl(int in_dim, int width, int n_layers) : in_dim_(in_dim) {
  layers = register_module("layers", nn::ModuleList());
  int prev = in_dim;
  for (int i = 0; i < n_layers; ++i) {
    layers->push_back(nn::Linear(prev, width));
    prev = width;
  }
}

torch::Tensor MappingNetworkImpl::forward(const torch::Tensor& z_cont) {
  require(z_cont.size(-1) == in_dim_, "map_content: z_cont dimension mismatch");
  auto x = z_cont;
  for (const auto& layer : *layers) x = torch::leaky_relu(layer->as<nn::Linear>()->forward(x), 0.2);
  return x;
}

TraNetImpl::TraNetImpl(const Config& cfg) {
  const auto& tc = cfg.tranet;
  const auto& ch = tc.channels;
  downsampling_ = 1 << (ch.size() - 1);

  encoder = nn::Sequential();
  encoder->push_back(nn::ReflectionPad2d(3));
  encoder->push_back(nn::Conv2d(nn::Conv2dOptions(3, ch[0], 7)));
  encoder->push_back(nn::InstanceNorm2d(ch[0]));
  encoder->push_back(nn::ReLU());
  for (std::size_t i = 1; i < ch.size(); ++i) {
    encoder->push_back(nn::Conv2d(nn::Conv2dOptions(ch[i - 1], ch[i], 3).stride(2).padding(1)));
    encoder->push_back(nn::InstanceNorm2d(ch[i]));
    encoder->push_back(nn::ReLU());
  }
  register_module("encoder", encoder);

  blocks = register_module("blocks", nn::ModuleList());
  for (int i = 0; i < tc.mfmod_blocks; ++i) blocks->push_back(ModulatedResBlock(ch.back(), tc));

  decoder = nn::Sequential();
  for (std::size_t i = ch.size() - 1; i >= 1; --i) {
    decoder->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(ch[i], ch[i - 1], 3).stride(2).padding(1).output_padding(1)));
    decoder->push_back(nn::InstanceNorm2d(ch[i - 1]));
    decoder->push_back(nn::ReLU());
  }
  decoder->push_back(nn::ReflectionPad2d(3));
  decoder->push_back(nn::Conv2d(nn::Conv2dOptions(ch[0], 3, 7)));
  register_module("decoder", decoder);

  mapping = register_module("mapping",
                            MappingNetwork(cfg.latent.dim_content(), tc.w_cont_dim, tc.mapping_layers));
}

torch::Tensor TraNetImpl::generate(const torch::Tensor& frames, const torch::Tensor& w_desc,
                                   const torch::Tensor& w_cont) {
  require(frames.dim() == 4 && frames.size(1) == 3, "generate expects N x 3 x H x W");
  require(frames.size(2) % downsampling_ == 0 && frames.size(3) % downsampling_ == 0,
          "generate: frame size must be divisible by " + std::to_string(downsampling_));
  auto x = encoder->forward(frames * 2 - 1);
  for (const auto& block : *blocks) x = block->as<ModulatedResBlock>()->forward(x, w_desc, w_cont);
  return (torch::tanh(decoder->forward(x)) + 1) * 0.5;
}

std::vector<torch::Tensor> TraNetImpl::generator_parameters() {
  std::vector<torch::Tensor> out;
  for (auto* m : std::initializer_list<nn::Module*>{encoder.ptr().get(), blocks.ptr().get(), decoder.ptr().get()})
    for (auto& p : m->parameters()) out.push_back(p);
  return out;
}

scenes::VideoClip manipulate_clip(const scenes::VideoClip& clip, const std::string& text,
                                  repnet::RepNet& rep, TraNet& tra, const textenc::TextEncoder& encoder,
                                  int k_random, Rng& rng, const SolverConfig& solver) {
  torch::NoGradGuard no_grad;
  const auto options = rep->parameters().front().options();
  const auto obs = scenes::sample_observations(clip, k_random, rng);
  const auto code = rep->encode_clip(obs, /*sample=*/false, std::nullopt, solver);
  const auto traj = rep->roll_dynamics(code.dynamic_posterior.mean, clip.timestamps, solver);

  const auto n = static_cast<int64_t>(clip.timestamps.size());
  auto z_cont = torch::cat({code.z_ti.unsqueeze(0).expand({n, code.z_ti.size(0)}), traj.states}, 1);
  auto w_cont = tra->map_content(z_cont);
  auto w_desc = encoder.encode_batch({text}).to(options).expand({n, -1});

  scenes::VideoClip out = clip;
  out.frames = tra->generate(clip.frames.to(options), w_desc, w_cont).to(clip.frames.dtype());
  out.descriptions = {text};
  return out;
}

}  // namespace dicomo::tranet
