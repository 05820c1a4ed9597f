#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <unistd.h>

#include <torch/torch.h>

namespace dicomo::test {

/// Fresh scratch directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(std::filesystem::temp_directory_path() / ("dicomo_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& leaf = "") const { return leaf.empty() ? path_.string() : (path_ / leaf).string(); }

 private:
  std::filesystem::path path_;
};

struct GradCheck {
  double max_rel = 0.0;
  double max_abs = 0.0;
  int checked = 0;
};

/// Ridders' polynomial extrapolation of central differences (step shrinking
/// by 1.4 per level); returns the estimate with the smallest error bound.
inline double ridders_derivative(const std::function<double(double)>& f, double h, int levels = 10) {
  constexpr double con = 1.4, con2 = con * con, safe = 2.0;
  std::vector<std::vector<double>> a(levels, std::vector<double>(levels));
  a[0][0] = (f(h) - f(-h)) / (2 * h);
  double best = a[0][0], err = std::numeric_limits<double>::infinity();
  for (int i = 1; i < levels; ++i) {
    h /= con;
    a[0][i] = (f(h) - f(-h)) / (2 * h);
    double fac = con2;
    for (int j = 1; j <= i; ++j) {
      a[j][i] = (a[j - 1][i] * fac - a[j - 1][i - 1]) / (fac - 1);
      fac *= con2;
      const double e = std::max(std::abs(a[j][i] - a[j - 1][i]), std::abs(a[j][i] - a[j - 1][i - 1]));
      if (e <= err) {
        err = e;
        best = a[j][i];
      }
    }
    if (std::abs(a[i][i] - a[i - 1][i - 1]) >= safe * err) break;
  }
  return best;
}

/// Central differences of a scalar float64 loss against reverse mode, on up
/// to `per_tensor` evenly spaced elements of every tensor in `wrt`.
/// Relative error per element is |a - n| / max(|a|, |n|, floor). With
/// `ridders` the numeric derivative is Ridders' extrapolation of central
/// differences starting at step h (for losses of large magnitude, where a
/// single small step drowns in cancellation).
inline GradCheck compare_gradients(const std::function<torch::Tensor()>& loss, const std::vector<torch::Tensor>& wrt,
                                   int per_tensor = 8, double h = 1e-6, double floor = 1e-6, bool ridders = false) {
  for (const auto& p : wrt)
    if (p.grad().defined()) p.mutable_grad() = torch::Tensor();
  auto value = loss();
  auto analytic = torch::autograd::grad({value}, wrt, {}, false, false, true);

  GradCheck out;
  torch::NoGradGuard guard;
  for (std::size_t t = 0; t < wrt.size(); ++t) {
    auto flat = wrt[t].view({-1});
    const int64_t n = flat.numel();
    const int64_t count = std::min<int64_t>(n, per_tensor);
    for (int64_t j = 0; j < count; ++j) {
      const int64_t i = count == 1 ? 0 : j * (n - 1) / (count - 1);
      const double saved = flat[i].item<double>();
      auto at = [&](double offset) {
        flat[i].fill_(saved + offset);
        return loss().item<double>();
      };
      const double numeric = ridders ? ridders_derivative(at, h) : (at(h) - at(-h)) / (2 * h);
      flat[i].fill_(saved);
      const double a = analytic[t].defined() ? analytic[t].reshape({-1})[i].item<double>() : 0.0;
      const double diff = std::abs(a - numeric);
      out.max_abs = std::max(out.max_abs, diff);
      out.max_rel = std::max(out.max_rel, diff / std::max({std::abs(a), std::abs(numeric), floor}));
      ++out.checked;
    }
  }
  return out;
}

}  // namespace dicomo::test
