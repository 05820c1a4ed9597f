#include "dicomo/adversary.hpp"

#include <numeric>

#include "dicomo/log.hpp"

namespace dicomo::adversary {

namespace nn = torch::nn;

DiscriminatorScaleImpl::DiscriminatorScaleImpl(const Config& cfg) {
  const auto& ch = cfg.gan.channels;
  convs = register_module("convs", nn::ModuleList());
  norms = register_module("norms", nn::ModuleList());
  int prev = 3;
  for (std::size_t i = 0; i < ch.size(); ++i) {
    convs->push_back(nn::Conv2d(nn::Conv2dOptions(prev, ch[i], 4).stride(2).padding(1)));
    if (i > 0) norms->push_back(nn::InstanceNorm2d(ch[i]));
    prev = ch[i];
  }
  mfmod = register_module("mfmod", tranet::Mfmod(prev, cfg.tranet.w_desc_dim, cfg.tranet.w_cont_dim,
                                                 cfg.tranet.stats, cfg.tranet.eps));
  head = register_module("head", nn::Conv2d(nn::Conv2dOptions(prev, 1, 4)));
}

torch::Tensor DiscriminatorScaleImpl::forward(const torch::Tensor& image, const torch::Tensor& w_desc,
                                              const torch::Tensor& w_cont) {
  auto x = image * 2 - 1;
  for (std::size_t i = 0; i < convs->size(); ++i) {
    x = convs[i]->as<nn::Conv2d>()->forward(x);
    if (i > 0) x = norms[i - 1]->as<nn::InstanceNorm2d>()->forward(x);
    x = torch::leaky_relu(x, 0.2);
  }
  x = torch::leaky_relu(mfmod->forward(x, w_desc, w_cont), 0.2);
  return head->forward(torch::constant_pad_nd(x, {1, 2, 1, 2}));
}

DiscriminatorImpl::DiscriminatorImpl(const Config& cfg) {
  scales = register_module("scales", nn::ModuleList());
  for (int s = 0; s < cfg.gan.scales; ++s) scales->push_back(DiscriminatorScale(cfg));
  min_size_ = (1 << cfg.gan.channels.size()) << (cfg.gan.scales - 1);
}

std::vector<torch::Tensor> DiscriminatorImpl::forward(const torch::Tensor& image, const torch::Tensor& w_desc,
                                                      const torch::Tensor& w_cont) {
  require(image.dim() == 4 && image.size(1) == 3, "discriminate expects N x 3 x H x W");
  require(image.size(2) % min_size_ == 0 && image.size(3) % min_size_ == 0,
          "discriminate: image size must be a multiple of " + std::to_string(min_size_));
  std::vector<torch::Tensor> out;
  auto x = image;
  for (std::size_t s = 0; s < scales->size(); ++s) {
    if (s > 0) x = torch::avg_pool2d(x, 2);
    out.push_back(scales[s]->as<DiscriminatorScale>()->forward(x, w_desc, w_cont));
  }
  return out;
}

std::vector<int64_t> derangement(int64_t n, Rng& rng) {
  require(n >= 2, "derangement needs at least two elements");
  std::vector<int64_t> p(n);
  for (;;) {
    std::iota(p.begin(), p.end(), 0);
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(p[i], p[uniform_index(rng, static_cast<std::size_t>(i + 1))]);
    bool fixed = false;
    for (int64_t i = 0; i < n && !fixed; ++i) fixed = p[i] == i;
    if (!fixed) return p;
  }
}

torch::Tensor foreign_rows(const std::vector<int64_t>& perm, const std::vector<int64_t>& group_of_item,
                           const std::vector<int64_t>& first_item_of_group) {
  std::vector<int64_t> rows(group_of_item.size());
  for (std::size_t i = 0; i < group_of_item.size(); ++i) rows[i] = first_item_of_group[perm[group_of_item[i]]];
  return torch::tensor(rows, torch::kLong);
}

PairBatch build_pairs(const torch::Tensor& real, const torch::Tensor& generated, const torch::Tensor& w_desc,
                      const torch::Tensor& target_w_desc, const torch::Tensor& w_cont,
                      const std::vector<int64_t>& group_of_item, const std::vector<int64_t>& perm) {
  const auto n = real.size(0);
  require(w_desc.size(0) == n && target_w_desc.size(0) == n && w_cont.size(0) == n &&
              generated.size(0) == n && static_cast<int64_t>(group_of_item.size()) == n,
          "build_pairs: batch size mismatch");
  PairBatch out;
  out.matched = {PairKind::matched, true, real, w_desc, w_cont};
  out.relevant = {PairKind::relevant, false, generated, target_w_desc, w_cont};
  if (perm.empty()) {
    log::warn("build_pairs: single-clip batch, skipping unmatched pairs");
    return out;
  }
  std::vector<int64_t> first(perm.size(), -1);
  for (int64_t i = 0; i < n; ++i) {
    auto& f = first[group_of_item[i]];
    if (f < 0) f = i;
  }
  for (std::size_t g = 0; g < perm.size(); ++g) require(perm[g] != static_cast<int64_t>(g), "build_pairs: not a derangement");
  out.derangement = perm;
  auto rows = foreign_rows(perm, group_of_item, first).to(w_desc.device());
  out.unmatched = PairSet{PairKind::unmatched, false, real, w_desc.index_select(0, rows), w_cont};
  return out;
}

namespace {

torch::Tensor average(const std::vector<torch::Tensor>& terms) {
  auto total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = total + terms[i];
  return total / static_cast<double>(terms.size());
}

}  // namespace

torch::Tensor gan_fake_term(const std::vector<torch::Tensor>& scores_fake, GanLoss kind) {
  require(!scores_fake.empty(), "gan_loss: no score maps");
  std::vector<torch::Tensor> terms;
  for (const auto& s : scores_fake)
    terms.push_back(kind == GanLoss::lsgan ? s.pow(2).mean() : torch::relu(1 + s).mean());
  return average(terms);
}

torch::Tensor gan_loss(const std::vector<torch::Tensor>& scores_real, const std::vector<torch::Tensor>& scores_fake,
                       Side side, GanLoss kind) {
  require(!scores_fake.empty(), "gan_loss: no score maps");
  std::vector<torch::Tensor> terms;
  if (side == Side::generator) {
    for (const auto& s : scores_fake)
      terms.push_back(kind == GanLoss::lsgan ? (s - 1).pow(2).mean() : -s.mean());
    return average(terms);
  }
  require(scores_real.size() == scores_fake.size(), "gan_loss: scale count mismatch");
  for (const auto& s : scores_real)
    terms.push_back(kind == GanLoss::lsgan ? (s - 1).pow(2).mean() : torch::relu(1 - s).mean());
  return average(terms) + gan_fake_term(scores_fake, kind);
}

}  // namespace dicomo::adversary
