#include "dicomo/odeint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace dicomo::odeint {

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// b - b_hat (fifth minus embedded fourth order weights)
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;
constexpr double kPiBeta = 0.04;
constexpr double kPiAlpha = 0.2 - 0.75 * kPiBeta;

void check_times(const std::vector<double>& times) {
  require(!times.empty(), "integrate: empty time list");
  for (std::size_t i = 1; i < times.size(); ++i)
    require(times[i] > times[i - 1], "integrate: times must be strictly increasing");
}

torch::Tensor eval_checked(OdeFunction& f, const torch::Tensor& z, double t) {
  auto dz = f.eval(z, t);
  require(dz.sizes() == z.sizes(), "ode function output shape differs from state shape");
  bool finite;
  {
    torch::NoGradGuard ng;
    finite = torch::isfinite(dz).all().item<bool>();
  }
  if (!finite) throw SolverError("non-finite derivative", t);
  return dz;
}

struct Dopri5Step {
  torch::Tensor y_new;
  torch::Tensor k7;  // f(t+h, y_new), reused as the next first stage
  torch::Tensor err;
};

Dopri5Step dopri5_step(OdeFunction& f, const torch::Tensor& y, const torch::Tensor& k1, double t,
                       double h) {
  auto k2 = eval_checked(f, y + h * (a21 * k1), t + c2 * h);
  auto k3 = eval_checked(f, y + h * (a31 * k1 + a32 * k2), t + c3 * h);
  auto k4 = eval_checked(f, y + h * (a41 * k1 + a42 * k2 + a43 * k3), t + c4 * h);
  auto k5 = eval_checked(f, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), t + c5 * h);
  auto k6 = eval_checked(f, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), t + h);
  auto y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
  auto k7 = eval_checked(f, y_new, t + h);
  torch::Tensor err;
  {
    torch::NoGradGuard ng;
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
  }
  return {y_new, k7, err};
}

torch::Tensor rk4_step(OdeFunction& f, const torch::Tensor& y, double t, double h) {
  auto k1 = eval_checked(f, y, t);
  auto k2 = eval_checked(f, y + (0.5 * h) * k1, t + 0.5 * h);
  auto k3 = eval_checked(f, y + (0.5 * h) * k2, t + 0.5 * h);
  auto k4 = eval_checked(f, y + h * k3, t + h);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

double rms_norm(const torch::Tensor& x) {
  return std::sqrt(x.to(torch::kFloat64).pow(2).mean().item<double>());
}

double error_ratio(const torch::Tensor& err, const torch::Tensor& y0, const torch::Tensor& y1,
                   const SolverConfig& cfg) {
  torch::NoGradGuard ng;
  auto scale = cfg.atol + cfg.rtol * torch::max(y0.detach().abs(), y1.detach().abs());
  return rms_norm(err / scale);
}

double initial_step(OdeFunction& f, const torch::Tensor& y0, const torch::Tensor& f0, double t0,
                    const SolverConfig& cfg) {
  torch::NoGradGuard ng;
  auto y = y0.detach();
  auto scale = cfg.atol + cfg.rtol * y.abs();
  const double d0 = rms_norm(y / scale);
  const double d1 = rms_norm(f0.detach() / scale);
  double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
  auto f1 = f.eval(y + h0 * f0.detach(), t0 + h0);
  const double d2 = rms_norm((f1 - f0.detach()) / scale) / h0;
  const double h1 = std::max(d1, d2) <= 1e-15 ? std::max(1e-6, h0 * 1e-3)
                                              : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
  return std::min(100.0 * h0, h1);
}

TrajectorySolution integrate_dopri5(OdeFunction& f, const torch::Tensor& z0,
                                    const std::vector<double>& times, const SolverConfig& cfg) {
  TrajectorySolution sol;
  sol.times = times;
  sol.step_grid.push_back(times.front());
  std::vector<torch::Tensor> out{z0};

  double t = times.front();
  auto y = z0;
  auto k1 = eval_checked(f, y, t);
  double h = cfg.initial_step > 0 ? cfg.initial_step : initial_step(f, y, k1, t, cfg);
  double err_prev = 1.0;
  bool rejected_last = false;

  for (std::size_t next = 1; next < times.size(); ++next) {
    const double target = times[next];
    while (t < target) {
      if (sol.steps_taken + sol.rejected_steps >= cfg.max_steps)
        throw SolverError("max_steps exceeded", t);
      const double min_h = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
      if (h < min_h) throw SolverError("step size underflow", t);

      const bool lands = t + h >= target;
      const double t_new = lands ? target : t + h;
      const double h_try = t_new - t;
      auto step = dopri5_step(f, y, k1, t, h_try);
      double err = error_ratio(step.err, y, step.y_new, cfg);
      if (!std::isfinite(err)) err = std::numeric_limits<double>::infinity();

      if (err <= 1.0) {
        double factor =
            err == 0.0 ? kMaxFactor : kSafety * std::pow(err, -kPiAlpha) * std::pow(err_prev, kPiBeta);
        factor = std::clamp(factor, kMinFactor, kMaxFactor);
        if (rejected_last) factor = std::min(factor, 1.0);
        err_prev = std::max(err, 1e-4);
        rejected_last = false;
        t = t_new;
        y = step.y_new;
        k1 = step.k7;
        ++sol.steps_taken;
        sol.step_grid.push_back(t);
        // A step shortened to land on an output time says little about the
        // attainable step, so the controller never shrinks below the proposal.
        h = (lands && h_try < h) ? std::max(h, h_try * factor) : h_try * factor;
      } else {
        const double factor =
            std::clamp(kSafety * std::pow(err, -kPiAlpha), kMinFactor, 1.0);
        h = h_try * factor;
        rejected_last = true;
        ++sol.rejected_steps;
      }
    }
    out.push_back(y);
  }
  sol.states = torch::stack(out);
  return sol;
}

TrajectorySolution integrate_rk4(OdeFunction& f, const torch::Tensor& z0,
                                 const std::vector<double>& times, const SolverConfig& cfg) {
  const double span = times.back() - times.front();
  const double nominal = span > 0 ? span / cfg.max_steps : 1.0;
  std::vector<double> grid{times.front()};
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double a = times[i - 1], b = times[i];
    const int n = std::max(1, static_cast<int>(std::ceil((b - a) / nominal - 1e-9)));
    for (int k = 1; k < n; ++k) grid.push_back(a + (b - a) * k / n);
    grid.push_back(b);
  }
  return integrate_on_grid(f, z0, times, grid, OdeMethod::rk4);
}

}  // namespace

TrajectorySolution integrate(OdeFunction& f, const torch::Tensor& z0, const std::vector<double>& times,
                             const SolverConfig& cfg) {
  cfg.validate();
  check_times(times);
  if (cfg.method == OdeMethod::rk4) return integrate_rk4(f, z0, times, cfg);
  return integrate_dopri5(f, z0, times, cfg);
}

TrajectorySolution integrate_on_grid(OdeFunction& f, const torch::Tensor& z0,
                                     const std::vector<double>& times,
                                     const std::vector<double>& grid, OdeMethod method) {
  check_times(times);
  check_times(grid);
  require(grid.front() == times.front(), "grid must start at times[0]");
  TrajectorySolution sol;
  sol.times = times;
  sol.step_grid = grid;
  std::vector<torch::Tensor> out{z0};
  auto y = z0;
  std::size_t next = 1;
  torch::Tensor k1;
  for (std::size_t g = 1; g < grid.size() && next < times.size(); ++g) {
    const double t = grid[g - 1];
    const double h = grid[g] - t;
    if (method == OdeMethod::rk4) {
      y = rk4_step(f, y, t, h);
    } else {
      if (!k1.defined()) k1 = eval_checked(f, y, t);
      auto step = dopri5_step(f, y, k1, t, h);
      y = step.y_new;
      k1 = step.k7;
    }
    ++sol.steps_taken;
    if (grid[g] == times[next]) {
      out.push_back(y);
      ++next;
    }
  }
  require(next == times.size(), "grid does not cover every requested time");
  sol.states = torch::stack(out);
  return sol;
}

namespace {

torch::Tensor final_state_loss(const torch::Tensor& z_final) {
  auto flat = z_final.reshape({-1});
  auto w = torch::arange(1, flat.numel() + 1, flat.options());
  return (w * flat).sum() + 0.5 * flat.pow(2).sum();
}

}  // namespace

GradientCheck check_gradient_through_solver(OdeFunction& f, const torch::Tensor& z0,
                                            const std::vector<double>& times, const SolverConfig& cfg,
                                            double h) {
  auto params = f.ode_parameters();
  auto z0_leaf = z0.detach().clone().set_requires_grad(true);

  auto nominal = integrate(f, z0_leaf, times, cfg);
  auto loss = final_state_loss(nominal.states[-1]);
  std::vector<torch::Tensor> inputs = params;
  inputs.push_back(z0_leaf);
  auto grads = torch::autograd::grad({loss}, inputs, {}, false, false, true);

  GradientCheck out;
  auto evaluate = [&](const torch::Tensor& start) {
    torch::NoGradGuard ng;
    auto sol = integrate_on_grid(f, start, times, nominal.step_grid, cfg.method);
    return final_state_loss(sol.states[-1]).item<double>();
  };

  for (std::size_t p = 0; p < inputs.size(); ++p) {
    const bool is_z0 = p + 1 == inputs.size();
    auto target = is_z0 ? z0_leaf : inputs[p];  // perturbed in place through `flat`
    auto g = grads[p].defined() ? grads[p].to(torch::kFloat64).reshape({-1})
                                : torch::zeros({target.numel()}, torch::kFloat64);
    auto flat = target.view({-1});
    for (int64_t i = 0; i < flat.numel(); ++i) {
      double plus, minus;
      {
        torch::NoGradGuard ng;
        const double orig = flat[i].item<double>();
        flat[i].fill_(orig + h);
        plus = evaluate(z0_leaf.detach());
        flat[i].fill_(orig - h);
        minus = evaluate(z0_leaf.detach());
        flat[i].fill_(orig);
      }
      out.numeric.push_back((plus - minus) / (2.0 * h));
      out.analytic.push_back(g[i].item<double>());
    }
  }

  double scale = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < out.numeric.size(); ++i) {
    scale = std::max(scale, std::abs(out.numeric[i]));
    worst = std::max(worst, std::abs(out.numeric[i] - out.analytic[i]));
  }
  out.max_relative_error = worst / std::max(scale, 1e-300);
  return out;
}

void write_trajectory_csv(const std::string& path, const TrajectorySolution& sol) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  auto states = sol.states.detach().to(torch::kFloat64).reshape({static_cast<long>(sol.times.size()), -1});
  const auto d = states.size(1);
  out << 't';
  for (int64_t j = 0; j < d; ++j) out << ",z_" << j;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < sol.times.size(); ++i) {
    out << sol.times[i];
    for (int64_t j = 0; j < d; ++j) out << ',' << states[i][j].item<double>();
    out << '\n';
  }
}

}  // namespace dicomo::odeint
