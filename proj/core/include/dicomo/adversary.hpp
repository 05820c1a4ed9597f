#pragma once

#include <vector>

#include <torch/torch.h>

#include "dicomo/common.hpp"
#include "dicomo/config.hpp"
#include "dicomo/tranet.hpp"

namespace dicomo::adversary {

/// One patch discriminator: strided LeakyReLU conv stack (no normalization on
/// the input layer), an MFMOD block on the last features, and a stride-1
/// 1-channel conv whose padding keeps the patch map size.
class DiscriminatorScaleImpl : public torch::nn::Module {
 public:
  DiscriminatorScaleImpl(const Config& cfg);
  torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& w_desc, const torch::Tensor& w_cont);

  torch::nn::ModuleList convs{nullptr};
  torch::nn::ModuleList norms{nullptr};
  tranet::Mfmod mfmod{nullptr};
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(DiscriminatorScale);

class DiscriminatorImpl : public torch::nn::Module {
 public:
  DiscriminatorImpl(const Config& cfg);

  /// image: N x 3 x H x W in [0,1]. One score map per scale, finest first;
  /// each coarser input is the 2x average-pooled previous one.
  std::vector<torch::Tensor> forward(const torch::Tensor& image, const torch::Tensor& w_desc,
                                     const torch::Tensor& w_cont);

  int num_scales() const { return static_cast<int>(scales->size()); }

  torch::nn::ModuleList scales{nullptr};

 private:
  int min_size_;
};
TORCH_MODULE(Discriminator);

enum class PairKind { matched, unmatched, relevant };

struct PairSet {
  PairKind kind;
  /// Discriminator-side label: real for matched, fake otherwise.
  bool real;
  torch::Tensor images;
  torch::Tensor w_desc;
  torch::Tensor w_cont;
};

struct PairBatch {
  PairSet matched;
  std::optional<PairSet> unmatched;
  PairSet relevant;
  /// Foreign group per group; empty when the batch has a single group.
  std::vector<int64_t> derangement;
};

/// Uniform random derangement of 0..n-1 by rejection sampling; n >= 2.
std::vector<int64_t> derangement(int64_t n, Rng& rng);

/// Expands a group permutation to items: row i of the result is the item-level
/// index of the foreign text for item i.
torch::Tensor foreign_rows(const std::vector<int64_t>& perm, const std::vector<int64_t>& group_of_item,
                           const std::vector<int64_t>& first_item_of_group);

/// matched = (real, own text); unmatched = (real, text of the deranged group);
/// relevant = (generated, its target text). `target_w_desc` is the text the
/// generated images were produced with. w_cont is always the item's own.
/// `group_of_item` maps each item (frame) to its clip; items of one clip share
/// a description.
PairBatch build_pairs(const torch::Tensor& real, const torch::Tensor& generated, const torch::Tensor& w_desc,
                      const torch::Tensor& target_w_desc, const torch::Tensor& w_cont,
                      const std::vector<int64_t>& group_of_item, const std::vector<int64_t>& perm);

enum class Side { discriminator, generator };

/// Averaged over scales and patches. LSGAN: D = mean((s_real-1)^2) + mean(s_fake^2),
/// G = mean((s_fake-1)^2). Hinge: D = mean(relu(1-s_real)) + mean(relu(1+s_fake)),
/// G = -mean(s_fake). `scores_real` is ignored on the generator side.
torch::Tensor gan_loss(const std::vector<torch::Tensor>& scores_real, const std::vector<torch::Tensor>& scores_fake,
                       Side side, GanLoss kind = GanLoss::lsgan);

/// The discriminator's fake-label term alone (used for unmatched pairs).
torch::Tensor gan_fake_term(const std::vector<torch::Tensor>& scores_fake, GanLoss kind = GanLoss::lsgan);

}  // namespace dicomo::adversary
