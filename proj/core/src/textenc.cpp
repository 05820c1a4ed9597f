#include "dicomo/textenc.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>

#include <nlohmann/json.hpp>

#include "dicomo/scenes.hpp"

namespace dicomo::textenc {

torch::Tensor TextEncoder::encode_batch(const std::vector<std::string>& texts) const {
  auto out = torch::empty({static_cast<long>(texts.size()), kEmbeddingDim}, torch::kFloat64);
  auto acc = out.accessor<double, 2>();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto e = encode(texts[i]);
    for (int d = 0; d < kEmbeddingDim; ++d) acc[i][d] = e[d];
  }
  return out.to(torch::kFloat32);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

AttributeSlots parse_attributes(const std::string& text) {
  AttributeSlots slots;
  for (const auto& tok : tokenize(text)) {
    for (int i = 0; i < scenes::kNumHues; ++i)
      if (tok == scenes::color_words()[i]) slots.color = i;
    for (int i = 0; i < scenes::kNumSizeGroups; ++i)
      if (tok == scenes::size_words()[i]) slots.size = i;
    for (int i = 0; i < scenes::kNumShapes; ++i)
      if (tok == scenes::shape_words()[i]) slots.shape = i;
  }
  return slots;
}

namespace {

void normalize(TextEmbedding& v) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n > 0)
    for (double& x : v) x /= n;
}

std::vector<double> gaussian_vector(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(kEmbeddingDim);
  for (double& x : v) x = standard_normal(rng);
  return v;
}

}  // namespace

TemplateEncoder::TemplateEncoder(std::uint64_t seed) : seed_(seed) {
  // Modified Gram-Schmidt on seeded Gaussian columns.
  for (int k = 0; k < kSlotDim; ++k) {
    auto col = gaussian_vector(derive_seed(seed, 1000 + k));
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : basis_) {
        double dot = 0;
        for (int d = 0; d < kEmbeddingDim; ++d) dot += q[d] * col[d];
        for (int d = 0; d < kEmbeddingDim; ++d) col[d] -= dot * q[d];
      }
    }
    normalize(col);
    basis_.push_back(std::move(col));
  }
}

TextEmbedding TemplateEncoder::embed_slots(const std::vector<double>& slots) const {
  require(static_cast<int>(slots.size()) == kSlotDim, "slot vector must have 17 entries");
  TextEmbedding out(kEmbeddingDim, 0.0);
  for (int k = 0; k < kSlotDim; ++k) {
    if (slots[k] == 0.0) continue;
    for (int d = 0; d < kEmbeddingDim; ++d) out[d] += slots[k] * basis_[k][d];
  }
  normalize(out);
  return out;
}

TextEmbedding TemplateEncoder::hashed_bag_of_words(const std::vector<std::string>& tokens) const {
  TextEmbedding out(kEmbeddingDim, 0.0);
  const std::vector<std::string> fallback{"<empty>"};
  for (const auto& tok : tokens.empty() ? fallback : tokens) {
    const auto v = gaussian_vector(derive_seed(seed_, fnv1a64(tok)));
    for (int d = 0; d < kEmbeddingDim; ++d) out[d] += v[d];
  }
  normalize(out);
  return out;
}

TextEmbedding TemplateEncoder::encode(const std::string& text) const {
  const auto slots = parse_attributes(text);
  if (!slots.any()) return hashed_bag_of_words(tokenize(text));
  std::vector<double> s(kSlotDim, 0.0);
  if (slots.color) s[*slots.color] = 1.0;
  if (slots.size) s[scenes::kNumHues + *slots.size] = 1.0;
  if (slots.shape) s[scenes::kNumHues + scenes::kNumSizeGroups + *slots.shape] = 1.0;
  return embed_slots(s);
}

ClipAdapter::ClipAdapter(const std::string& path) {
  if (path.empty()) throw AdapterUnavailable("clip_adapter: clip_model_path is not set");
  std::ifstream in(path);
  if (!in) throw AdapterUnavailable("clip_adapter: cannot open '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      auto e = j.at("embedding").get<std::vector<double>>();
      if (static_cast<int>(e.size()) != kEmbeddingDim)
        throw AdapterUnavailable("clip_adapter: embedding with wrong dimension");
      normalize(e);
      table_.emplace(j.at("text").get<std::string>(), std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw AdapterUnavailable(std::string("clip_adapter: malformed line: ") + ex.what());
    }
  }
}

TextEmbedding ClipAdapter::encode(const std::string& text) const {
  const auto it = table_.find(text);
  if (it == table_.end()) throw AdapterUnavailable("clip_adapter: no embedding for '" + text + "'");
  return it->second;
}

std::unique_ptr<TextEncoder> make_encoder(const Config& cfg) {
  if (cfg.text_encoder == TextEncoderKind::clip_adapter)
    return std::make_unique<ClipAdapter>(cfg.clip_model_path);
  return std::make_unique<TemplateEncoder>();
}

void write_embeddings_csv(const std::string& path, const TextEncoder& enc,
                          const std::vector<std::string>& texts) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  out << "text";
  for (int d = 0; d < kEmbeddingDim; ++d) out << ",e" << d;
  out << '\n' << std::setprecision(17);
  for (const auto& t : texts) {
    out << std::quoted(t, '"', '"');
    for (double x : enc.encode(t)) out << ',' << x;
    out << '\n';
  }
}

TextProjectionImpl::TextProjectionImpl(int in_dim, const std::vector<int>& hidden, int dim_tr)
    : in_dim_(in_dim), out_dim_(dim_tr) {
  require(dim_tr >= 1, "text projection output width must be >= 1");
  int prev = in_dim;
  std::vector<int> widths = hidden;
  widths.push_back(dim_tr);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    layers_.push_back(register_module("fc" + std::to_string(i), torch::nn::Linear(prev, widths[i])));
    prev = widths[i];
  }
}

torch::Tensor TextProjectionImpl::forward(const torch::Tensor& w_desc) {
  require(w_desc.size(-1) == in_dim_, "text projection: input dimension mismatch");
  auto x = w_desc;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i]->forward(x);
    if (i + 1 < layers_.size()) x = torch::leaky_relu(x, 0.2);
  }
  return x;
}

}  // namespace dicomo::textenc
