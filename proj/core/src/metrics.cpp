#include "dicomo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>

#include "dicomo/log.hpp"

namespace dicomo::metrics {

void write_codes_csv(const std::string& path, const CodeFactorTable& t, const std::vector<std::string>& names) {
  require(t.codes.rows() == t.factors.rows(), "code/factor tables must be row-aligned");
  require(static_cast<Eigen::Index>(names.size()) == t.factors.cols(), "one name per factor column");
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  for (Eigen::Index j = 0; j < t.codes.cols(); ++j) out << (j ? "," : "") << "z_" << j;
  for (const auto& n : names) out << ',' << n;
  out << '\n' << std::setprecision(17);
  for (Eigen::Index i = 0; i < t.codes.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.codes.cols(); ++j) out << (j ? "," : "") << t.codes(i, j);
    for (Eigen::Index k = 0; k < t.factors.cols(); ++k) out << ',' << t.factors(i, k);
    out << '\n';
  }
}

std::vector<int> discretize(const std::vector<double>& values, int bins) {
  require(bins >= 2, "discretize: bins must be >= 2");
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::size_t distinct = 0;
  for (std::size_t r = 0; r < n; ++r)
    if (r == 0 || values[order[r]] != values[order[r - 1]]) ++distinct;

  std::vector<int> out(n);
  int label = -1;
  for (std::size_t r = 0; r < n; ++r) {
    if (r == 0 || values[order[r]] != values[order[r - 1]]) {
      label = distinct <= static_cast<std::size_t>(bins) ? label + 1
                                                         : static_cast<int>(r * static_cast<std::size_t>(bins) / n);
    }
    out[order[r]] = label;
  }
  return out;
}

double entropy(const std::vector<int>& labels) {
  std::map<int, std::size_t> counts;
  for (int v : labels) ++counts[v];
  const double n = static_cast<double>(labels.size());
  double h = 0.0;
  for (const auto& [v, c] : counts) {
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double mutual_information_discrete(const std::vector<int>& a, const std::vector<int>& b) {
  require(a.size() == b.size() && !a.empty(), "mutual_information: columns must be aligned and non-empty");
  std::map<int, std::size_t> ca, cb;
  std::map<std::pair<int, int>, std::size_t> cab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++ca[a[i]];
    ++cb[b[i]];
    ++cab[{a[i], b[i]}];
  }
  const double n = static_cast<double>(a.size());
  double mi = 0.0;
  for (const auto& [key, c] : cab) {
    const double pab = static_cast<double>(c) / n;
    const double pa = static_cast<double>(ca[key.first]) / n;
    const double pb = static_cast<double>(cb[key.second]) / n;
    mi += pab * std::log(pab / (pa * pb));
  }
  return std::max(mi, 0.0);
}

double mutual_information(const std::vector<double>& code, const std::vector<int>& factor, int bins) {
  require(code.size() == factor.size() && !code.empty(), "mutual_information: columns must be aligned");
  if (std::all_of(code.begin(), code.end(), [&](double v) { return v == code.front(); })) return 0.0;
  return mutual_information_discrete(discretize(code, bins), factor);
}

namespace {

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

std::vector<int> column(const Eigen::MatrixXi& m, Eigen::Index j) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

}  // namespace

Eigen::MatrixXd mi_matrix(const CodeFactorTable& t, int bins) {
  require(t.codes.rows() == t.factors.rows() && t.codes.rows() > 0, "code/factor tables must be row-aligned");
  Eigen::MatrixXd mi(t.codes.cols(), t.factors.cols());
  std::vector<std::vector<int>> binned;
  for (Eigen::Index j = 0; j < t.codes.cols(); ++j) {
    auto c = column(t.codes, j);
    const bool constant = std::all_of(c.begin(), c.end(), [&](double v) { return v == c.front(); });
    binned.push_back(constant ? std::vector<int>(c.size(), 0) : discretize(c, bins));
  }
  for (Eigen::Index k = 0; k < t.factors.cols(); ++k) {
    const auto v = column(t.factors, k);
    for (Eigen::Index j = 0; j < t.codes.cols(); ++j)
      mi(j, k) = mutual_information_discrete(binned[static_cast<std::size_t>(j)], v);
  }
  return mi;
}

double mig(const CodeFactorTable& t, int bins) {
  const auto mi = mi_matrix(t, bins);
  double total = 0.0;
  int used = 0;
  for (Eigen::Index k = 0; k < mi.cols(); ++k) {
    const double h = entropy(column(t.factors, k));
    if (h <= 0.0) continue;
    std::vector<double> col = column(mi, k);
    std::sort(col.rbegin(), col.rend());
    const double second = col.size() > 1 ? col[1] : 0.0;
    total += (col[0] - second) / h;
    ++used;
  }
  require(used > 0, "mig: every factor is constant");
  return total / used;
}

double aam(const CodeFactorTable& t, int bins, AamMode mode) {
  const auto mi = mi_matrix(t, bins);
  double total = 0.0;
  int used = 0;
  for (Eigen::Index k = 0; k < mi.cols(); ++k) {
    if (entropy(column(t.factors, k)) <= 0.0) continue;
    std::vector<double> col = column(mi, k);
    std::sort(col.rbegin(), col.rend());
    ++used;
    if (col[0] <= 0.0) continue;
    double others = 0.0;
    if (mode == AamMode::subtract_second)
      others = col.size() > 1 ? col[1] : 0.0;
    else
      for (std::size_t j = 1; j < col.size(); ++j) others += col[j];
    total += std::max(col[0] - others, 0.0) / col[0];
  }
  require(used > 0, "aam: every factor is constant");
  return total / used;
}

double mp_frame(const torch::Tensor& y, const torch::Tensor& x, double similarity) {
  require(x.sizes() == y.sizes(), "mp: shape mismatch");
  const double diff = (y.to(torch::kFloat64) - x.to(torch::kFloat64)).abs().mean().item<double>();
  return (1.0 - diff) * similarity;
}

double mp_score(const torch::Tensor& edited, const torch::Tensor& source, const std::vector<double>& similarity) {
  require(edited.size(0) == static_cast<int64_t>(similarity.size()), "mp: one similarity per frame");
  double total = 0.0;
  for (int64_t i = 0; i < edited.size(0); ++i) total += mp_frame(edited[i], source[i], similarity[i]);
  return total / static_cast<double>(similarity.size());
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double negative_tolerance) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw NumericalError("frechet: eigendecomposition failed");
  Eigen::VectorXd values = eig.eigenvalues();
  const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i) < -negative_tolerance * scale)
      throw NumericalError("frechet: matrix is not positive semi-definite (eigenvalue " +
                           std::to_string(values(i)) + ")");
    values(i) = std::sqrt(std::max(values(i), 0.0));
  }
  return eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
}

namespace {

Eigen::MatrixXd regularize(const Eigen::MatrixXd& cov, const FrechetOptions& opts, bool force) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  const auto& v = eig.eigenvalues();
  const double hi = v.maxCoeff();
  const double lo = v.minCoeff();
  if (force || lo <= 0.0 || hi / lo > opts.max_condition) {
    log::warn("frechet: ill-conditioned covariance, adding " + std::to_string(opts.ridge) + " * I");
    return cov + opts.ridge * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
  }
  return cov;
}

}  // namespace

double frechet_from_moments(const Eigen::VectorXd& mu_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mu_b,
                            const Eigen::MatrixXd& cov_b, const FrechetOptions& opts) {
  require(mu_a.size() == mu_b.size() && cov_a.rows() == mu_a.size() && cov_b.rows() == mu_b.size(),
          "frechet: dimension mismatch");
  const Eigen::MatrixXd root_a = psd_sqrt(cov_a, opts.negative_tolerance);
  const Eigen::MatrixXd inner = root_a * cov_b * root_a;
  const Eigen::MatrixXd cross = psd_sqrt(inner, opts.negative_tolerance);
  const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
  return std::max(d, 0.0);
}

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const FrechetOptions& opts) {
  require(a.cols() == b.cols() && a.rows() >= 2 && b.rows() >= 2, "frechet: need >= 2 samples of equal width");
  auto moments = [&](const Eigen::MatrixXd& x) {
    Eigen::VectorXd mu = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
    Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(x.rows() - 1);
    const bool few = x.rows() < x.cols() + 1;
    return std::make_pair(mu, regularize(cov, opts, few));
  };
  const auto [mu_a, cov_a] = moments(a);
  const auto [mu_b, cov_b] = moments(b);
  return frechet_from_moments(mu_a, cov_a, mu_b, cov_b, opts);
}

double inception_score(const Eigen::MatrixXd& p) {
  require(p.rows() >= 1 && p.cols() >= 1, "inception_score: empty input");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    require(std::abs(p.row(i).sum() - 1.0) <= 1e-6 && p.row(i).minCoeff() >= 0.0,
            "inception_score: rows must be probability vectors");
  }
  const Eigen::VectorXd marginal = p.colwise().mean();
  double kl_sum = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) {
      const double q = p(i, c);
      if (q > 0.0) kl_sum += q * std::log(q / marginal(c));
    }
  }
  return std::exp(kl_sum / static_cast<double>(p.rows()));
}

Eigen::MatrixXd to_eigen(const torch::Tensor& t) {
  auto x = t.detach().to(torch::kCPU, torch::kFloat64).contiguous();
  require(x.dim() == 2, "to_eigen expects a matrix");
  Eigen::MatrixXd out(x.size(0), x.size(1));
  auto acc = x.accessor<double, 2>();
  for (int64_t i = 0; i < x.size(0); ++i)
    for (int64_t j = 0; j < x.size(1); ++j) out(i, j) = acc[i][j];
  return out;
}

namespace {

std::vector<torch::Tensor> random_kernels(std::uint64_t seed, const std::vector<int>& channels,
                                          const std::vector<int64_t>& kernel) {
  auto gen = at::detail::createCPUGenerator(seed);
  std::vector<torch::Tensor> out;
  int64_t prev = 3;
  for (int c : channels) {
    std::vector<int64_t> shape{c, prev};
    int64_t fan_in = prev;
    for (auto k : kernel) {
      shape.push_back(k);
      fan_in *= k;
    }
    out.push_back(torch::randn(shape, gen, torch::kFloat32) * std::sqrt(2.0 / static_cast<double>(fan_in)));
    prev = c;
  }
  return out;
}

}  // namespace

RandomFrameEmbedder::RandomFrameEmbedder(std::uint64_t seed, std::vector<int> channels)
    : weights_(random_kernels(seed, channels, {3, 3})) {}

torch::Tensor RandomFrameEmbedder::embed(const torch::Tensor& frames) {
  torch::NoGradGuard guard;
  require(frames.dim() == 4, "frame embedder expects N x 3 x H x W");
  auto x = frames.to(torch::kFloat32) * 2 - 1;
  std::vector<torch::Tensor> feats;
  for (const auto& w : weights_) {
    x = torch::relu(torch::conv2d(x, w, {}, 2, 1));
    feats.push_back(x.mean({2, 3}));
  }
  return torch::cat(feats, 1);
}

RandomVideoEmbedder::RandomVideoEmbedder(std::uint64_t seed, std::vector<int> channels)
    : weights_(random_kernels(seed, channels, {3, 3, 3})) {}

torch::Tensor RandomVideoEmbedder::embed(const torch::Tensor& clips) {
  torch::NoGradGuard guard;
  require(clips.dim() == 5, "video embedder expects N x T x 3 x H x W");
  auto x = clips.to(torch::kFloat32).permute({0, 2, 1, 3, 4}) * 2 - 1;  // N x 3 x T x H x W
  std::vector<torch::Tensor> feats;
  for (const auto& w : weights_) {
    x = torch::relu(torch::conv3d(x, w, {}, {1, 2, 2}, 1));
    feats.push_back(x.mean({2, 3, 4}));
  }
  return torch::cat(feats, 1);
}

AttributeProbeImpl::AttributeProbeImpl(int resolution, std::vector<int> channels) {
  namespace nn = torch::nn;
  conv = nn::Sequential();
  int prev = 3;
  for (int c : channels) {
    conv->push_back(nn::Conv2d(nn::Conv2dOptions(prev, c, 4).stride(2).padding(1)));
    conv->push_back(nn::ReLU());
    prev = c;
  }
  register_module("conv", conv);
  const int side = resolution >> channels.size();
  require(side >= 1, "attribute probe: frames too small");
  fc = register_module("fc", nn::Linear(prev * side * side, 128));
  color_head = register_module("color_head", nn::Linear(128, scenes::kNumHues));
  size_head = register_module("size_head", nn::Linear(128, scenes::kNumSizeGroups));
  shape_head = register_module("shape_head", nn::Linear(128, scenes::kNumShapes));
}

AttributeProbeImpl::Output AttributeProbeImpl::forward(const torch::Tensor& frames) {
  auto h = torch::relu(fc->forward(conv->forward(frames * 2 - 1).flatten(1)));
  return {color_head->forward(h), size_head->forward(h), shape_head->forward(h)};
}

torch::Tensor AttributeProbeImpl::slots(const torch::Tensor& frames) {
  auto out = forward(frames);
  return torch::cat({torch::softmax(out.color, 1), torch::softmax(out.size, 1), torch::softmax(out.shape, 1)}, 1);
}

torch::Tensor AttributeProbeImpl::class_probabilities(const torch::Tensor& frames) {
  auto out = forward(frames);
  auto color = torch::softmax(out.color.to(torch::kFloat64), 1);
  auto shape = torch::softmax(out.shape.to(torch::kFloat64), 1);
  return (shape.unsqueeze(2) * color.unsqueeze(1)).flatten(1);
}

double train_probe(AttributeProbe& probe, const std::vector<scenes::VideoClip>& train_clips,
                   const std::vector<scenes::VideoClip>& eval_clips, const ProbeTraining& opts) {
  require(!train_clips.empty(), "train_probe: no training clips");
  std::vector<torch::Tensor> frames;
  std::vector<int64_t> color, size, shape;
  for (const auto& c : train_clips) {
    frames.push_back(c.frames);
    for (int i = 0; i < c.num_frames(); ++i) {
      color.push_back(c.factors.object_color);
      size.push_back(c.factors.size_group());
      shape.push_back(c.factors.shape);
    }
  }
  auto x = torch::cat(frames);
  auto yc = torch::tensor(color), ys = torch::tensor(size), yh = torch::tensor(shape);
  const auto n = x.size(0);

  torch::optim::Adam opt(probe->parameters(), torch::optim::AdamOptions(opts.lr));
  Rng rng(derive_seed(opts.seed, 0x9b0be));
  probe->train();
  for (int step = 0; step < opts.steps; ++step) {
    std::vector<int64_t> idx(static_cast<std::size_t>(std::min<int64_t>(opts.batch, n)));
    for (auto& i : idx) i = static_cast<int64_t>(uniform_index(rng, static_cast<std::size_t>(n)));
    auto index = torch::tensor(idx);
    auto out = probe->forward(x.index_select(0, index));
    auto loss = torch::cross_entropy_loss(out.color, yc.index_select(0, index)) +
                torch::cross_entropy_loss(out.size, ys.index_select(0, index)) +
                torch::cross_entropy_loss(out.shape, yh.index_select(0, index));
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  probe->eval();

  torch::NoGradGuard guard;
  int64_t correct = 0, total = 0;
  for (const auto& c : eval_clips) {
    auto out = probe->forward(c.frames);
    auto ok = out.color.argmax(1).eq(c.factors.object_color) & out.size.argmax(1).eq(c.factors.size_group()) &
              out.shape.argmax(1).eq(c.factors.shape);
    correct += ok.sum().item<int64_t>();
    total += c.frames.size(0);
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

std::vector<double> image_text_similarity(AttributeProbe& probe, const textenc::TemplateEncoder& basis,
                                          const torch::Tensor& frames, const textenc::TextEmbedding& w_desc) {
  torch::NoGradGuard guard;
  auto slots = probe->slots(frames.to(torch::kFloat32)).to(torch::kFloat64).contiguous();
  auto acc = slots.accessor<double, 2>();
  std::vector<double> out;
  for (int64_t i = 0; i < slots.size(0); ++i) {
    std::vector<double> s(textenc::kSlotDim);
    for (int k = 0; k < textenc::kSlotDim; ++k) s[k] = acc[i][k];
    const auto e = basis.embed_slots(s);
    double dot = 0.0;
    for (int d = 0; d < textenc::kEmbeddingDim; ++d) dot += e[d] * w_desc[d];
    out.push_back(dot);
  }
  return out;
}

CodeFactorTable collect_codes(repnet::RepNet& rep, const std::vector<scenes::VideoClip>& clips, int k_random,
                              std::uint64_t seed, const SolverConfig& solver) {
  torch::NoGradGuard guard;
  require(!clips.empty(), "collect_codes: no clips");
  const int n_frames = clips.front().num_frames();
  const int d_st = rep->partition().dim_static();
  const int d_dyn = rep->partition().dim_dyn;
  CodeFactorTable table;
  table.codes.resize(static_cast<Eigen::Index>(clips.size()) * n_frames, d_st + d_dyn);
  table.factors.resize(table.codes.rows(), scenes::kNumFactors);

  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < clips.size(); start += kChunk) {
    const std::size_t end = std::min(clips.size(), start + kChunk);
    std::vector<torch::Tensor> frames;
    std::vector<std::vector<double>> times;
    for (std::size_t c = start; c < end; ++c) {
      require(clips[c].num_frames() == n_frames, "collect_codes: clips must share a frame count");
      Rng rng(derive_seed(seed, c));
      auto obs = scenes::sample_observations(clips[c], k_random, rng);
      frames.push_back(obs.frames);
      times.push_back(obs.times);
    }
    auto options = rep->parameters().front().options();
    auto enc = rep->encode(torch::stack(frames).to(options), times, false, std::nullopt, solver);
    std::vector<std::vector<double>> dense(end - start, clips[start].timestamps);
    auto traj = rep->roll_dynamics(enc.dynamic_posterior.mean, dense, solver);  // B x N x d
    auto st = to_eigen(enc.static_posterior.mean);
    for (std::size_t c = start; c < end; ++c) {
      const auto b = static_cast<int64_t>(c - start);
      auto z = to_eigen(traj[b]);
      const auto labels = clips[c].frame_factors();
      for (int i = 0; i < n_frames; ++i) {
        const auto row = static_cast<Eigen::Index>(c) * n_frames + i;
        table.codes.block(row, 0, 1, d_st) = st.row(b);
        table.codes.block(row, d_st, 1, d_dyn) = z.row(i);
        for (int k = 0; k < scenes::kNumFactors; ++k) table.factors(row, k) = labels[i][k];
      }
    }
  }
  return table;
}

Image8 traversal_grid(repnet::RepNet& rep, const scenes::VideoClip& clip, const std::vector<int>& dims,
                      const std::vector<double>& values, const SolverConfig& solver, tranet::TraNet* tra,
                      const textenc::TextEncoder* encoder) {
  torch::NoGradGuard guard;
  const auto total = rep->partition().total();
  for (int d : dims) require(d >= 0 && d < total, "traversal_grid: latent dim out of range");
  require(!values.empty(), "traversal_grid: no values");
  require(!tra || encoder, "traversal_grid: regeneration needs a text encoder");
  const auto options = rep->parameters().front().options();
  const auto code = rep->encode_clip(scenes::all_frames(clip), false, std::nullopt, solver);
  auto base = code.frame_codes()[0];

  std::vector<std::vector<torch::Tensor>> rows;
  for (int d : dims) {
    auto batch = base.unsqueeze(0).repeat({static_cast<int64_t>(values.size()), 1});
    for (std::size_t v = 0; v < values.size(); ++v) batch.index_put_({static_cast<int64_t>(v), d}, values[v]);
    torch::Tensor images;
    if (tra) {
      const int dim_tr = rep->partition().dim_tr;
      auto w_cont = (*tra)->map_content(batch.narrow(1, dim_tr, total - dim_tr));
      auto w_desc = encoder->encode_batch({clip.descriptions.front()}).to(options).expand({batch.size(0), -1});
      auto frame = clip.frames[0].unsqueeze(0).to(options).expand({batch.size(0), -1, -1, -1});
      images = (*tra)->generate(frame, w_desc, w_cont);
    } else {
      images = rep->decode(batch);
    }
    std::vector<torch::Tensor> row;
    for (int64_t v = 0; v < images.size(0); ++v) row.push_back(images[v]);
    rows.push_back(std::move(row));
  }
  return tile_grid(rows);
}

double linear_r2(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, "linear_r2: need >= 2 aligned points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (syy == 0.0) return 1.0;
  if (sxx == 0.0) return 0.0;
  return sxy * sxy / (sxx * syy);
}

TrajectoryReport dyn_trajectory_report(repnet::RepNet& rep, const scenes::VideoClip& clip,
                                       const std::vector<double>& dense_times, int k_random, std::uint64_t seed,
                                       const SolverConfig& solver) {
  torch::NoGradGuard guard;
  require(dense_times.size() >= 2, "trajectory report needs >= 2 query times");
  require(dense_times.front() == clip.timestamps.front(), "trajectory report must start at the first frame time");
  Rng rng(seed);
  const auto obs = scenes::sample_observations(clip, k_random, rng);
  const auto code = rep->encode_clip(obs, false, std::nullopt, solver);
  const auto sol = rep->roll_dynamics(code.dynamic_posterior.mean, dense_times, solver);

  TrajectoryReport r;
  r.times = dense_times;
  r.z = to_eigen(sol.states);
  r.normalized = r.z;
  for (Eigen::Index j = 0; j < r.z.cols(); ++j) {
    const double lo = r.z.col(j).minCoeff();
    const double hi = r.z.col(j).maxCoeff();
    for (Eigen::Index i = 0; i < r.z.rows(); ++i)
      r.normalized(i, j) = hi > lo ? 2.0 * (r.z(i, j) - lo) / (hi - lo) - 1.0 : 0.0;
  }
  const double t0 = clip.timestamps.front();
  const double span = clip.timestamps.back() - t0;
  const int steps = clip.num_frames() - 1;
  for (double t : dense_times) r.orientation.push_back(clip.factors.orientation + (t - t0) / span * steps);

  const double tail_start = t0 + 0.2 * span;
  for (Eigen::Index j = 0; j < r.z.cols(); ++j) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < dense_times.size(); ++i) {
      if (dense_times[i] + 1e-12 < tail_start) continue;
      xs.push_back(dense_times[i]);
      ys.push_back(r.z(static_cast<Eigen::Index>(i), j));
    }
    r.r2_tail.push_back(xs.size() >= 2 ? linear_r2(xs, ys) : 0.0);
  }
  return r;
}

void TrajectoryReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  out << "t";
  for (Eigen::Index j = 0; j < z.cols(); ++j) out << ",z_" << j;
  for (Eigen::Index j = 0; j < z.cols(); ++j) out << ",z_norm_" << j;
  out << ",orientation\n" << std::setprecision(12);
  for (std::size_t i = 0; i < times.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    out << times[i];
    for (Eigen::Index j = 0; j < z.cols(); ++j) out << ',' << z(row, j);
    for (Eigen::Index j = 0; j < z.cols(); ++j) out << ',' << normalized(row, j);
    out << ',' << orientation[i] << '\n';
  }
}

namespace {

void put(Image8& img, int x, int y, const scenes::Rgb& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  auto* p = &img.pixels[(static_cast<std::size_t>(y) * img.width + x) * 3];
  p[0] = c.r;
  p[1] = c.g;
  p[2] = c.b;
}

void line(Image8& img, int x0, int y0, int x1, int y1, const scenes::Rgb& c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    put(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

}  // namespace

Image8 TrajectoryReport::plot(int width, int height) const {
  Image8 img(width, height);
  std::fill(img.pixels.begin(), img.pixels.end(), 255);
  const int margin = 10;
  const double t0 = times.front(), t1 = times.back();
  auto px = [&](double t) { return margin + static_cast<int>(std::lround((t - t0) / (t1 - t0) * (width - 2 * margin))); };
  auto py = [&](double v) { return margin + static_cast<int>(std::lround((1.0 - (v + 1.0) / 2.0) * (height - 2 * margin))); };
  const scenes::Rgb axis{160, 160, 160};
  line(img, margin, py(0.0), width - margin, py(0.0), axis);
  line(img, margin, margin, margin, height - margin, axis);

  const double o_lo = *std::min_element(orientation.begin(), orientation.end());
  const double o_hi = *std::max_element(orientation.begin(), orientation.end());
  const scenes::Rgb truth{40, 40, 40};
  for (std::size_t i = 1; i < times.size(); ++i) {
    auto norm = [&](double o) { return o_hi > o_lo ? 2.0 * (o - o_lo) / (o_hi - o_lo) - 1.0 : 0.0; };
    line(img, px(times[i - 1]), py(norm(orientation[i - 1])), px(times[i]), py(norm(orientation[i])), truth);
  }
  for (Eigen::Index j = 0; j < normalized.cols(); ++j) {
    const auto color = scenes::palette_color(static_cast<int>((6 + 3 * j) % scenes::kNumHues));
    for (std::size_t i = 1; i < times.size(); ++i) {
      const auto a = static_cast<Eigen::Index>(i - 1), b = static_cast<Eigen::Index>(i);
      line(img, px(times[i - 1]), py(normalized(a, j)), px(times[i]), py(normalized(b, j)), color);
    }
  }
  return img;
}

}  // namespace dicomo::metrics
