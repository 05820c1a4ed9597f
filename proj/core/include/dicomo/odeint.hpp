#pragma once

#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "dicomo/common.hpp"
#include "dicomo/config.hpp"

namespace dicomo::odeint {

/// Right-hand side dz/dt = f(z, t). Any leading batch shape is allowed; the
/// output must have the shape of `z`.
class OdeFunction {
 public:
  virtual ~OdeFunction() = default;
  virtual torch::Tensor eval(const torch::Tensor& z, double t) = 0;
  virtual bool autonomous() const { return false; }
  /// Trainable leaves; used by gradient checks.
  virtual std::vector<torch::Tensor> ode_parameters() { return {}; }
};

class LambdaOde final : public OdeFunction {
 public:
  using Fn = std::function<torch::Tensor(const torch::Tensor&, double)>;
  explicit LambdaOde(Fn fn, std::vector<torch::Tensor> params = {}, bool autonomous = false)
      : fn_(std::move(fn)), params_(std::move(params)), autonomous_(autonomous) {}

  torch::Tensor eval(const torch::Tensor& z, double t) override { return fn_(z, t); }
  bool autonomous() const override { return autonomous_; }
  std::vector<torch::Tensor> ode_parameters() override { return params_; }

 private:
  Fn fn_;
  std::vector<torch::Tensor> params_;
  bool autonomous_;
};

class SolverError : public RuntimeFailure {
 public:
  SolverError(const std::string& what, double time)
      : RuntimeFailure(what + " at t=" + std::to_string(time)), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

struct TrajectorySolution {
  std::vector<double> times;
  /// (len(times), *z0.shape); states[0] is z0.
  torch::Tensor states;
  int steps_taken = 0;
  int rejected_steps = 0;
  /// Accepted step endpoints, starting at times[0]; replaying them with
  /// `integrate_on_grid` reproduces `states` exactly.
  std::vector<double> step_grid;
};

/// Integrates from times[0] through every requested time. Steps land exactly
/// on requested times; gradients flow through the unrolled steps.
TrajectorySolution integrate(OdeFunction& f, const torch::Tensor& z0, const std::vector<double>& times,
                             const SolverConfig& cfg);

/// Fixed-grid replay with the accepted-step update of `method`.
TrajectorySolution integrate_on_grid(OdeFunction& f, const torch::Tensor& z0,
                                     const std::vector<double>& times,
                                     const std::vector<double>& grid, OdeMethod method);

struct GradientCheck {
  /// max |analytic - numeric| / max |numeric| over all checked components.
  double max_relative_error = 0.0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

/// Compares reverse-mode d(loss)/d(theta, z0) with central differences for
/// loss = sum_i (i+1) z_T[i] + 0.5 |z_T|^2 on the final state. Runs in the
/// dtype of z0 (use float64). Finite-difference evaluations replay the nominal
/// step grid so both sides differentiate the same discrete map.
GradientCheck check_gradient_through_solver(OdeFunction& f, const torch::Tensor& z0,
                                            const std::vector<double>& times, const SolverConfig& cfg,
                                            double h = 1e-5);

/// `t,z_0,...,z_{d-1}` CSV export of a trajectory with a 1-D state per time.
void write_trajectory_csv(const std::string& path, const TrajectorySolution& sol);

}  // namespace dicomo::odeint
