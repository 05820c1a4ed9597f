#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "dicomo/common.hpp"
#include "dicomo/config.hpp"
#include "dicomo/image.hpp"
#include "dicomo/repnet.hpp"
#include "dicomo/scenes.hpp"
#include "dicomo/textenc.hpp"
#include "dicomo/tranet.hpp"

namespace dicomo::metrics {

/// Covariance that is not positive semi-definite beyond round-off.
class NumericalError : public RuntimeFailure {
 public:
  using RuntimeFailure::RuntimeFailure;
};

/// Rows are samples. codes: posterior means; factors: discrete indices.
struct CodeFactorTable {
  Eigen::MatrixXd codes;
  Eigen::MatrixXi factors;
};

/// CSV with columns z_0..z_{d-1}, then one column per factor name.
void write_codes_csv(const std::string& path, const CodeFactorTable& table,
                     const std::vector<std::string>& factor_names);

/// Equal-frequency bin index per value; equal values share a bin. Columns
/// with at most `bins` distinct values get one bin per distinct value.
std::vector<int> discretize(const std::vector<double>& values, int bins);

double entropy(const std::vector<int>& labels);
/// Plug-in MI (nats) between two discrete columns; symmetric.
double mutual_information_discrete(const std::vector<int>& a, const std::vector<int>& b);
/// MI between a continuous code column (binned) and a discrete factor; a
/// constant code column gives 0.
double mutual_information(const std::vector<double>& code, const std::vector<int>& factor, int bins = 20);

/// n_codes x n_factors matrix of MI values.
Eigen::MatrixXd mi_matrix(const CodeFactorTable& table, int bins = 20);

/// Mean over factors with nonzero entropy of (top1 - top2) / H(v_k).
double mig(const CodeFactorTable& table, int bins = 20);

enum class AamMode { subtract_others, subtract_second };
/// Mean over factors of max(top1 - others, 0) / top1.
double aam(const CodeFactorTable& table, int bins = 20, AamMode mode = AamMode::subtract_others);

/// (1 - mean|y - x|) * sim for one frame; images in [0,1].
double mp_frame(const torch::Tensor& y, const torch::Tensor& x, double similarity);

struct FrechetOptions {
  double negative_tolerance = 1e-8;
  double ridge = 1e-6;
  double max_condition = 1e12;
};

/// |mu_a - mu_b|^2 + tr(S_a) + tr(S_b) - 2 tr((S_a^1/2 S_b S_a^1/2)^1/2).
double frechet_from_moments(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mu_b,
                            const Eigen::MatrixXd& cov_b, const FrechetOptions& opts = {});
/// Rows are samples; unbiased covariances.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const FrechetOptions& opts = {});

/// Symmetric PSD square root by eigendecomposition (negative eigenvalues
/// above -tolerance*max(1,|lambda_max|) are clamped to 0, others raise).
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double negative_tolerance = 1e-8);

/// exp(mean_x KL(p(y|x) || p(y))); rows must sum to 1.
double inception_score(const Eigen::MatrixXd& probabilities);

Eigen::MatrixXd to_eigen(const torch::Tensor& t);

/// Frozen image / clip feature extractors for Fréchet distances.
class Embedder {
 public:
  virtual ~Embedder() = default;
  /// N x 3 x H x W (frames) or N x T x 3 x H x W (clips) -> N x D.
  virtual torch::Tensor embed(const torch::Tensor& x) = 0;
  virtual std::string name() const = 0;
};

/// Seeded random conv pyramid; features are the spatially averaged stage
/// activations, concatenated.
class RandomFrameEmbedder final : public Embedder {
 public:
  explicit RandomFrameEmbedder(std::uint64_t seed = 21, std::vector<int> channels = {8, 16, 32});
  torch::Tensor embed(const torch::Tensor& frames) override;
  std::string name() const override { return "random_frame"; }

 private:
  std::vector<torch::Tensor> weights_;
};

/// Seeded random spatio-temporal (3-D) conv pyramid over whole clips.
class RandomVideoEmbedder final : public Embedder {
 public:
  explicit RandomVideoEmbedder(std::uint64_t seed = 22, std::vector<int> channels = {8, 16, 32});
  torch::Tensor embed(const torch::Tensor& clips) override;
  std::string name() const override { return "random_video"; }

 private:
  std::vector<torch::Tensor> weights_;
};

/// Small CNN predicting object color, size group and shape from a frame. It
/// stands in for a pretrained image tower: its class probabilities feed the
/// Inception Score and its soft attribute slots, embedded like text, give the
/// image-text similarity used by MP.
class AttributeProbeImpl : public torch::nn::Module {
 public:
  AttributeProbeImpl(int resolution, std::vector<int> channels = {16, 32, 64});

  struct Output {
    torch::Tensor color, size, shape;  // logits
  };
  Output forward(const torch::Tensor& frames);
  /// N x 17 softmax slots (color | size | shape).
  torch::Tensor slots(const torch::Tensor& frames);
  /// N x 40 joint shape-color probabilities (shape-major).
  torch::Tensor class_probabilities(const torch::Tensor& frames);

  torch::nn::Sequential conv{nullptr};
  torch::nn::Linear fc{nullptr}, color_head{nullptr}, size_head{nullptr}, shape_head{nullptr};
};
TORCH_MODULE(AttributeProbe);

struct ProbeTraining {
  int steps = 300;
  int batch = 64;
  double lr = 2e-3;
  std::uint64_t seed = 0;
};

/// Trains the probe on individual frames; returns held-out accuracy (all
/// three heads correct) on `eval_clips`.
double train_probe(AttributeProbe& probe, const std::vector<scenes::VideoClip>& train_clips,
                   const std::vector<scenes::VideoClip>& eval_clips, const ProbeTraining& opts);

/// Cosine similarity between frames (N x 3 x H x W) and one text embedding.
std::vector<double> image_text_similarity(AttributeProbe& probe, const textenc::TemplateEncoder& slots_basis,
                                          const torch::Tensor& frames, const textenc::TextEmbedding& w_desc);

/// Frame-averaged MP of an edited clip against its source.
double mp_score(const torch::Tensor& edited, const torch::Tensor& source, const std::vector<double>& similarity);

/// Per-frame table over clips: codes are [static means, z_dyn(t_i)] from the
/// posterior means rolled over all frame times; factors are the six labels
/// with orientation advancing per frame.
CodeFactorTable collect_codes(repnet::RepNet& rep, const std::vector<scenes::VideoClip>& clips, int k_random,
                              std::uint64_t seed, const SolverConfig& solver);

/// Grid image: row r varies latent dim `dims[r]` over `values` on the
/// clip's first frame code, decoding with the repnet decoder, or regenerating
/// through `tra` with the clip's own description when given.
Image8 traversal_grid(repnet::RepNet& rep, const scenes::VideoClip& clip, const std::vector<int>& dims,
                      const std::vector<double>& values, const SolverConfig& solver, tranet::TraNet* tra = nullptr,
                      const textenc::TextEncoder* encoder = nullptr);

struct TrajectoryReport {
  std::vector<double> times;
  Eigen::MatrixXd z;           // T x dim_dyn
  Eigen::MatrixXd normalized;  // each column scaled to [-1, 1]
  std::vector<double> orientation;  // ground-truth orientation index (interpolated)
  /// R^2 of a linear fit per dim over the final 80% of the interval.
  std::vector<double> r2_tail;

  void write_csv(const std::string& path) const;
  /// Line plot of the normalized trajectories plus the normalized orientation.
  Image8 plot(int width = 320, int height = 200) const;
};

/// Linear-fit R^2 of y on x.
double linear_r2(const std::vector<double>& x, const std::vector<double>& y);

TrajectoryReport dyn_trajectory_report(repnet::RepNet& rep, const scenes::VideoClip& clip,
                                       const std::vector<double>& dense_times, int k_random, std::uint64_t seed,
                                       const SolverConfig& solver);

}  // namespace dicomo::metrics
