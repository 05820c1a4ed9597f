#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dicomo/common.hpp"
#include "dicomo/config.hpp"

namespace dicomo::textenc {

inline constexpr int kEmbeddingDim = 512;

/// Unit-norm 512-dim text embedding (float64 storage).
using TextEmbedding = std::vector<double>;

class AdapterUnavailable : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

/// Frozen text encoder. `encode` must be a pure function of the text.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual TextEmbedding encode(const std::string& text) const = 0;
  virtual std::string name() const = 0;
  virtual bool deterministic() const { return true; }

  /// Stacks embeddings of `texts` into an (n x 512) float tensor.
  torch::Tensor encode_batch(const std::vector<std::string>& texts) const;
};

/// Lowercases, strips punctuation and splits on whitespace.
std::vector<std::string> tokenize(const std::string& text);

/// Attribute slots parsed from a sentence; missing slots stay empty.
struct AttributeSlots {
  std::optional<int> color;
  std::optional<int> size;
  std::optional<int> shape;

  bool any() const { return color || size || shape; }
};

AttributeSlots parse_attributes(const std::string& text);

/// Slot vector layout: color one-hot (10) | size one-hot (3) | shape one-hot (4).
inline constexpr int kSlotDim = 17;

/// Attribute-slot encoder: the slot indicator vector is pushed through a fixed
/// seeded map with orthonormal columns (512 x 17) and unit-normalized. Text
/// without any attribute word falls back to a hashed bag of words.
class TemplateEncoder final : public TextEncoder {
 public:
  explicit TemplateEncoder(std::uint64_t seed = 7);

  TextEmbedding encode(const std::string& text) const override;
  std::string name() const override { return "template"; }

  /// Embeds an arbitrary (possibly soft) slot vector through the same map.
  TextEmbedding embed_slots(const std::vector<double>& slots) const;
  /// 512 x 17 matrix with orthonormal columns.
  const std::vector<std::vector<double>>& basis() const { return basis_; }

 private:
  TextEmbedding hashed_bag_of_words(const std::vector<std::string>& tokens) const;

  std::uint64_t seed_;
  std::vector<std::vector<double>> basis_;  // kSlotDim columns of length 512
};

/// Loads embeddings produced offline by an external CLIP text tower. The file
/// is JSON lines of {"text": ..., "embedding": [512 floats]}. Unknown text and
/// a missing file raise AdapterUnavailable.
class ClipAdapter final : public TextEncoder {
 public:
  explicit ClipAdapter(const std::string& path);

  TextEmbedding encode(const std::string& text) const override;
  std::string name() const override { return "clip_adapter"; }

 private:
  std::map<std::string, TextEmbedding> table_;
};

std::unique_ptr<TextEncoder> make_encoder(const Config& cfg);

/// Writes `text,e0,...,e511` rows.
void write_embeddings_csv(const std::string& path, const TextEncoder& enc,
                          const std::vector<std::string>& texts);

/// w_desc -> z_desc: Linear/LeakyReLU chain whose final width is dim_tr.
class TextProjectionImpl : public torch::nn::Module {
 public:
  TextProjectionImpl(int in_dim, const std::vector<int>& hidden, int dim_tr);

  torch::Tensor forward(const torch::Tensor& w_desc);

  int out_dim() const { return out_dim_; }
  torch::nn::Linear last() { return layers_.back(); }
  const std::vector<torch::nn::Linear>& layers() const { return layers_; }

 private:
  std::vector<torch::nn::Linear> layers_;
  int in_dim_;
  int out_dim_;
};
TORCH_MODULE(TextProjection);

}  // namespace dicomo::textenc
