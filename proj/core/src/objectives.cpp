#include "dicomo/objectives.hpp"

#include <torch/script.h>

#include "dicomo/textenc.hpp"

namespace dicomo::objectives {

torch::Tensor kl_gaussian(const repnet::GaussianLatent& p) {
  const auto& mu = p.mean;
  const auto& lv = p.log_variance;
  return 0.5 * (mu.pow(2) + torch::exp(lv) - lv - 1).sum(-1);
}

torch::Tensor kl_static(const repnet::GaussianLatent& per_frame) { return kl_gaussian(per_frame).mean(); }

torch::Tensor kl_dynamic(const repnet::GaussianLatent& posterior) { return kl_gaussian(posterior).mean(); }

torch::Tensor reconstruction_nll(const torch::Tensor& x, const torch::Tensor& decoded, ReconLikelihood kind) {
  require(x.sizes() == decoded.sizes() && x.dim() >= 3, "reconstruction_nll: shape mismatch");
  torch::Tensor per_pixel;
  if (kind == ReconLikelihood::bernoulli) {
    auto p = decoded.clamp(kPixelClamp, 1.0 - kPixelClamp);
    per_pixel = -(x * torch::log(p) + (1 - x) * torch::log(1 - p));
  } else {
    per_pixel = 0.5 * (x - decoded).pow(2);
  }
  return per_pixel.flatten(-3).sum(-1).mean();
}

torch::Tensor frame_codes(const repnet::Encoding& enc, int dim_tr, const std::optional<torch::Tensor>& z_tr_override) {
  const auto b = enc.z_dyn.size(0);
  const auto k = enc.z_dyn.size(1);
  auto z_tr = z_tr_override ? *z_tr_override : enc.z_tr(dim_tr);
  auto z_ti = enc.z_ti(dim_tr);
  require(z_tr.size(-1) == dim_tr, "frame_codes: z_desc width must equal dim_tr");
  return torch::cat({z_tr.unsqueeze(1).expand({b, k, z_tr.size(-1)}),
                     z_ti.unsqueeze(1).expand({b, k, z_ti.size(-1)}), enc.z_dyn},
                    -1);
}

TwinReconstruction twin_reconstruction(const torch::Tensor& x, const repnet::Encoding& enc,
                                       const torch::Tensor& z_desc, repnet::RepNet& rep, ReconLikelihood kind) {
  const int dim_tr = rep->partition().dim_tr;
  auto z = frame_codes(enc, dim_tr);
  auto z_prime = frame_codes(enc, dim_tr, z_desc);
  auto decoded = rep->decode(z.flatten(0, 1));
  auto decoded_prime = rep->decode(z_prime.flatten(0, 1));
  auto frames = x.flatten(0, 1);
  return {reconstruction_nll(frames, decoded, kind), reconstruction_nll(frames, decoded_prime, kind)};
}

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed, std::vector<int> channels) {
  auto gen = at::detail::createCPUGenerator(seed);
  int prev = 3;
  for (int c : channels) {
    const double scale = std::sqrt(2.0 / (prev * 9));
    weights_.push_back(torch::randn({c, prev, 3, 3}, gen, torch::kFloat32) * scale);
    biases_.push_back(torch::zeros({c}));
    prev = c;
  }
}

void RandomConvExtractor::to(torch::Dtype dtype) {
  for (auto& w : weights_) w = w.to(dtype);
  for (auto& b : biases_) b = b.to(dtype);
}

std::vector<torch::Tensor> RandomConvExtractor::features(const torch::Tensor& images) {
  std::vector<torch::Tensor> out;
  auto x = images;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    x = torch::relu(torch::conv2d(x, weights_[i].to(x.dtype()), biases_[i].to(x.dtype()), 2, 1));
    out.push_back(x);
  }
  return out;
}

struct ScriptedExtractor::Impl {
  torch::jit::script::Module module;
};

ScriptedExtractor::ScriptedExtractor(const std::string& path) : impl_(std::make_unique<Impl>()) {
  if (path.empty()) throw textenc::AdapterUnavailable("vgg_adapter: perceptual_model_path is not set");
  try {
    impl_->module = torch::jit::load(path);
  } catch (const c10::Error& e) {
    throw textenc::AdapterUnavailable("vgg_adapter: cannot load '" + path + "'");
  }
  impl_->module.eval();
  for (auto p : impl_->module.parameters()) p.set_requires_grad(false);
}

ScriptedExtractor::~ScriptedExtractor() = default;

std::vector<torch::Tensor> ScriptedExtractor::features(const torch::Tensor& images) {
  auto result = impl_->module.forward({images});
  std::vector<torch::Tensor> out;
  if (result.isTensor()) {
    out.push_back(result.toTensor());
  } else if (result.isTuple()) {
    for (const auto& v : result.toTupleRef().elements()) out.push_back(v.toTensor());
  } else if (result.isList()) {
    for (const auto& v : result.toListRef()) out.push_back(v.toTensor());
  } else {
    throw RuntimeFailure("vgg_adapter: module must return tensors");
  }
  return out;
}

std::unique_ptr<PerceptualExtractor> make_extractor(const Config& cfg) {
  switch (cfg.perceptual) {
    case PerceptualKind::identity: return std::make_unique<IdentityExtractor>();
    case PerceptualKind::vgg_adapter: return std::make_unique<ScriptedExtractor>(cfg.perceptual_model_path);
    case PerceptualKind::random_conv: break;
  }
  return std::make_unique<RandomConvExtractor>(derive_seed(cfg.seed, 0x9e7c));
}

torch::Tensor perceptual_l1(const torch::Tensor& x, const torch::Tensor& y, PerceptualExtractor& extractor) {
  require(x.sizes() == y.sizes(), "perceptual_l1: shape mismatch");
  const auto fx = extractor.features(x);
  const auto fy = extractor.features(y);
  auto total = torch::zeros({}, x.options());
  for (std::size_t l = 0; l < fx.size(); ++l) total = total + (fx[l] - fy[l]).abs().mean();
  return total;
}

torch::Tensor latent_consistency(const torch::Tensor& mean_x, const torch::Tensor& mean_y) {
  require(mean_x.sizes() == mean_y.sizes(), "latent_consistency: shape mismatch");
  return torch::linalg_vector_norm(mean_x - mean_y, 2, {-1}).mean();
}

LossTotals total_loss(const LossComponents& c, const LossConfig& w) {
  LossTotals t;
  t.repnet = (c.rec + c.rec_prime) / 2 + w.beta * (c.kl_st + c.kl_dyn);
  t.tranet = c.cgan_g + w.lambda_l1 * c.l1 + w.lambda_u * c.unsup;
  t.total = t.repnet + w.lambda_t * t.tranet;
  return t;
}

}  // namespace dicomo::objectives
