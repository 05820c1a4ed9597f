#include "dicomo/repnet.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace dicomo::repnet {

namespace nn = torch::nn;

torch::Tensor GaussianLatent::sample(const std::optional<at::Generator>& gen) const {
  auto eps = torch::randn(mean.sizes(), gen, mean.options());
  return mean + torch::exp(0.5 * log_variance) * eps;
}

GaussianLatent split_head(const torch::Tensor& head) {
  const auto d = head.size(-1) / 2;
  return {head.narrow(-1, 0, d), head.narrow(-1, d, d)};
}

OdeMlpImpl::OdeMlpImpl(int dim, int hidden) {
  fc1 = register_module("fc1", nn::Linear(dim, hidden));
  fc2 = register_module("fc2", nn::Linear(hidden, hidden));
  fc3 = register_module("fc3", nn::Linear(hidden, dim));
}

torch::Tensor OdeMlpImpl::forward(const torch::Tensor& z) {
  auto x = torch::elu(fc1->forward(z));
  x = torch::elu(fc2->forward(x));
  return fc3->forward(x);
}

torch::Tensor LatentCode::frame_codes() const {
  const auto k = z_dyn.size(0);
  return torch::cat({z_tr.unsqueeze(0).expand({k, z_tr.size(0)}),
                     z_ti.unsqueeze(0).expand({k, z_ti.size(0)}), z_dyn},
                    1);
}

RepNetImpl::RepNetImpl(const Config& cfg, int resolution)
    : partition_(cfg.latent),
      resolution_(resolution),
      hidden_(cfg.repnet.hidden),
      split_(cfg.repnet.split) {
  cfg.latent.validate();
  const auto& enc = cfg.repnet.encoder_channels;
  const int depth = static_cast<int>(enc.size());
  require(resolution % (1 << depth) == 0,
          "repnet: frame size must be divisible by 2^" + std::to_string(depth));
  const int base = resolution >> depth;

  conv = nn::Sequential();
  int in_ch = 3;
  for (int c : enc) {
    conv->push_back(nn::Conv2d(nn::Conv2dOptions(in_ch, c, 4).stride(2).padding(1)));
    conv->push_back(nn::ReLU());
    in_ch = c;
  }
  register_module("conv", conv);
  feature = register_module("feature", nn::Linear(in_ch * base * base, hidden_));
  static_head = register_module("static_head", nn::Linear(split_, 2 * partition_.dim_static()));
  gru = register_module("gru", nn::GRUCell(hidden_ - split_ + 1, cfg.repnet.gru_width));
  dynamic_head = register_module("dynamic_head", nn::Linear(cfg.repnet.gru_width, 2 * partition_.dim_dyn));
  ode = register_module("ode", OdeMlp(partition_.dim_dyn, cfg.repnet.ode_hidden));

  const auto& dec = cfg.repnet.decoder_channels;
  dec_base_ = resolution >> static_cast<int>(dec.size());
  require(dec_base_ >= 1 && (dec_base_ << dec.size()) == resolution,
          "repnet: decoder depth does not reach the frame size");
  dec_channels0_ = dec.front();
  dec_fc1 = register_module("dec_fc1", nn::Linear(partition_.total(), hidden_));
  dec_fc2 = register_module("dec_fc2", nn::Linear(hidden_, dec_channels0_ * dec_base_ * dec_base_));
  deconv = nn::Sequential();
  in_ch = dec_channels0_;
  for (std::size_t i = 0; i < dec.size(); ++i) {
    deconv->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in_ch, dec[i], 4).stride(2).padding(1)));
    if (i + 1 < dec.size()) deconv->push_back(nn::ReLU());
    in_ch = dec[i];
  }
  register_module("deconv", deconv);
  text_projection = register_module(
      "text_projection",
      textenc::TextProjection(cfg.tranet.w_desc_dim, cfg.repnet.text_projection, partition_.dim_tr));
}

torch::Tensor RepNetImpl::encode_frames(const torch::Tensor& frames) {
  require(frames.dim() == 4 && frames.size(1) == 3, "encode_frames expects M x 3 x H x W");
  require(frames.size(2) == resolution_ && frames.size(3) == resolution_,
          "encode_frames: frame size does not match the network");
  auto x = conv->forward(frames);
  return torch::relu(feature->forward(x.flatten(1)));
}

GaussianLatent RepNetImpl::pool_static(const torch::Tensor& hidden) {
  require(hidden.dim() == 3 && hidden.size(1) >= 1, "pool_static: need at least one frame");
  auto pooled = std::get<0>(hidden.narrow(-1, 0, split_).max(1));
  return split_head(static_head->forward(pooled));
}

GaussianLatent RepNetImpl::static_per_frame(const torch::Tensor& hidden) {
  return split_head(static_head->forward(hidden.narrow(-1, 0, split_)));
}

GaussianLatent RepNetImpl::encode_dynamics(const torch::Tensor& hidden,
                                           const std::vector<std::vector<double>>& times) {
  require(hidden.dim() == 3, "encode_dynamics expects B x K x hidden");
  const auto batch = hidden.size(0);
  const auto k = hidden.size(1);
  require(static_cast<int64_t>(times.size()) == batch, "encode_dynamics: one time list per clip");
  for (const auto& ts : times) {
    require(static_cast<int64_t>(ts.size()) == k, "encode_dynamics: time list length mismatch");
    for (std::size_t i = 1; i < ts.size(); ++i)
      require(ts[i] > ts[i - 1], "encode_dynamics: times must be strictly increasing");
  }
  auto dyn_features = hidden.narrow(-1, split_, hidden_ - split_);
  auto h = torch::zeros({batch, gru->options.hidden_size()}, hidden.options());
  // Reverse time: the last observation sees gap 0, frame i sees t_{i+1} - t_i.
  for (int64_t i = k - 1; i >= 0; --i) {
    std::vector<double> gaps(batch);
    for (int64_t b = 0; b < batch; ++b) gaps[b] = i + 1 < k ? times[b][i + 1] - times[b][i] : 0.0;
    auto dt = torch::tensor(gaps, torch::kFloat64).to(hidden.options()).unsqueeze(1);
    h = gru->forward(torch::cat({dyn_features.select(1, i), dt}, 1), h);
  }
  return split_head(dynamic_head->forward(h));
}

odeint::TrajectorySolution RepNetImpl::roll_dynamics(const torch::Tensor& z_dyn0,
                                                     const std::vector<double>& times,
                                                     const SolverConfig& solver) {
  return odeint::integrate(*ode, z_dyn0, times, solver);
}

torch::Tensor RepNetImpl::roll_dynamics(const torch::Tensor& z_dyn0,
                                        const std::vector<std::vector<double>>& times,
                                        const SolverConfig& solver) {
  require(!times.empty(), "roll_dynamics: empty batch");
  const double t0 = times.front().front();
  std::set<double> all;
  for (const auto& ts : times) {
    require(!ts.empty() && ts.front() == t0, "roll_dynamics: clips must share the start time");
    all.insert(ts.begin(), ts.end());
  }
  std::vector<double> grid(all.begin(), all.end());
  std::map<double, int64_t> position;
  for (std::size_t i = 0; i < grid.size(); ++i) position[grid[i]] = static_cast<int64_t>(i);

  auto sol = odeint::integrate(*ode, z_dyn0, grid, solver);  // T x B x d
  std::vector<torch::Tensor> rows;
  for (std::size_t b = 0; b < times.size(); ++b) {
    std::vector<int64_t> idx;
    for (double t : times[b]) idx.push_back(position[t]);
    auto index = torch::tensor(idx, torch::kLong);
    rows.push_back(sol.states.index_select(0, index).select(1, static_cast<int64_t>(b)));
  }
  return torch::stack(rows);
}

torch::Tensor RepNetImpl::decode(const torch::Tensor& z) {
  require(z.dim() == 2 && z.size(1) == partition_.total(), "decode: latent dimension mismatch");
  auto x = torch::relu(dec_fc1->forward(z));
  x = torch::relu(dec_fc2->forward(x));
  x = x.view({z.size(0), dec_channels0_, dec_base_, dec_base_});
  return torch::sigmoid(deconv->forward(x));
}

Encoding RepNetImpl::encode(const torch::Tensor& frames, const std::vector<std::vector<double>>& times,
                            bool sample, const std::optional<at::Generator>& gen,
                            const SolverConfig& solver) {
  require(frames.dim() == 5, "encode expects B x K x 3 x H x W");
  const auto batch = frames.size(0);
  const auto k = frames.size(1);
  Encoding out;
  out.hidden = encode_frames(frames.flatten(0, 1)).view({batch, k, hidden_});
  out.static_posterior = pool_static(out.hidden);
  out.static_per_frame = static_per_frame(out.hidden);
  out.dynamic_posterior = encode_dynamics(out.hidden, times);
  out.z_static = sample ? out.static_posterior.sample(gen) : out.static_posterior.mean;
  out.z_dyn0 = sample ? out.dynamic_posterior.sample(gen) : out.dynamic_posterior.mean;
  out.z_dyn = roll_dynamics(out.z_dyn0, times, solver);
  return out;
}

LatentCode RepNetImpl::encode_clip(const scenes::ObservationSet& obs, bool sample,
                                   const std::optional<at::Generator>& gen, const SolverConfig& solver) {
  require(obs.size() >= 1, "encode_clip: empty observation set");
  auto enc = encode(obs.frames.unsqueeze(0).to(parameters().front().options()), {obs.times}, sample,
                    gen, solver);
  LatentCode code;
  code.z_tr = enc.z_tr(partition_.dim_tr).squeeze(0);
  code.z_ti = enc.z_ti(partition_.dim_tr).squeeze(0);
  code.z_dyn = enc.z_dyn.squeeze(0);
  code.times = obs.times;
  code.static_posterior = {enc.static_posterior.mean.squeeze(0), enc.static_posterior.log_variance.squeeze(0)};
  code.dynamic_posterior = {enc.dynamic_posterior.mean.squeeze(0),
                            enc.dynamic_posterior.log_variance.squeeze(0)};
  return code;
}

torch::Tensor RepNetImpl::posterior_means(const Encoding& enc) const {
  return torch::cat({enc.static_posterior.mean, enc.dynamic_posterior.mean}, -1);
}

std::vector<torch::Tensor> RepNetImpl::encoder_parameters() {
  std::vector<torch::Tensor> out;
  for (auto* m : std::initializer_list<nn::Module*>{conv.ptr().get(), feature.ptr().get(),
                                                    static_head.ptr().get(), gru.ptr().get(),
                                                    dynamic_head.ptr().get(), ode.ptr().get()})
    for (auto& p : m->parameters()) out.push_back(p);
  return out;
}

}  // namespace dicomo::repnet
