#include <chrono>
#include <filesystem>
#include <fstream>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "dicomo/odeint.hpp"

using namespace dicomo;
using namespace dicomo::odeint;

namespace {

SolverConfig dopri(double rtol = 1e-7, double atol = 1e-9) { return {OdeMethod::dopri5, rtol, atol, 100000, 0.0}; }

torch::Tensor f64(std::vector<double> v) { return torch::tensor(v, torch::kFloat64); }

LambdaOde exponential() {
  return LambdaOde([](const torch::Tensor& z, double) { return z; }, {}, true);
}
LambdaOde oscillator() {
  return LambdaOde([](const torch::Tensor& z, double) { return torch::stack({z[1], -z[0]}); }, {}, true);
}
LambdaOde ramp() {
  return LambdaOde([](const torch::Tensor& z, double t) { return torch::full_like(z, t); });
}

struct Case {
  const char* name;
  std::function<LambdaOde()> f;
  std::vector<double> z0;
  double t_end;
  std::vector<double> exact;
};

std::vector<Case> suite() {
  return {
      {"exponential", exponential, {1.0}, 1.0, {std::exp(1.0)}},
      {"oscillator", oscillator, {1.0, 0.0}, 2 * std::numbers::pi, {1.0, 0.0}},
      {"quadrature", ramp, {0.0}, 2.0, {2.0}},
      {"decay", [] { return LambdaOde([](const torch::Tensor& z, double) { return -2.0 * z; }, {}, true); },
       {3.0}, 1.5, {3.0 * std::exp(-3.0)}},
  };
}

double final_error(const Case& c, const SolverConfig& cfg) {
  auto f = c.f();
  const auto sol = integrate(f, f64(c.z0), {0.0, c.t_end}, cfg);
  return (sol.states[-1] - f64(c.exact)).abs().max().item<double>();
}

}  // namespace

TEST(Integrate, AnalyticSuiteAtEvalTolerances) {
  const auto start = std::chrono::steady_clock::now();
  for (const auto& c : suite()) EXPECT_LT(final_error(c, dopri()), 1e-6) << c.name;
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 5.0);
}

TEST(Integrate, QuadratureIsExact) {
  auto f = ramp();
  const auto sol = integrate(f, f64({0.0}), {0.0, 2.0}, dopri());
  EXPECT_NEAR(sol.states[-1][0].item<double>(), 2.0, 1e-9);
  const auto rk = integrate(f, f64({0.0}), {0.0, 2.0}, {OdeMethod::rk4, 1e-7, 1e-9, 3, 0.0});
  EXPECT_NEAR(rk.states[-1][0].item<double>(), 2.0, 1e-12);
}

TEST(Integrate, ZeroFieldKeepsStateExactly) {
  LambdaOde zero([](const torch::Tensor& z, double) { return torch::zeros_like(z); }, {}, true);
  const auto z0 = f64({0.3, -1.7, 12.5});
  for (auto method : {OdeMethod::dopri5, OdeMethod::rk4}) {
    const auto sol = integrate(zero, z0, {0.0, 0.2, 0.9, 4.0}, {method, 1e-7, 1e-9, 50, 0.0});
    for (int i = 0; i < 4; ++i) EXPECT_TRUE(torch::equal(sol.states[i], z0));
  }
}

TEST(Integrate, InitialStateAndRequestedTimesAreKept) {
  auto f = oscillator();
  const auto z0 = f64({0.25, 0.5});
  const std::vector<double> times{0.1, 0.35, 0.36, 1.0, 2.7};
  const auto sol = integrate(f, z0, times, dopri());
  EXPECT_EQ(sol.times, times);
  EXPECT_TRUE(torch::equal(sol.states[0], z0));
  EXPECT_EQ(sol.states.sizes(), (torch::IntArrayRef{5, 2}));
  for (double t : times)
    EXPECT_NE(std::find(sol.step_grid.begin(), sol.step_grid.end(), t), sol.step_grid.end()) << t;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double dt = times[i] - times[0];
    const double p = 0.25 * std::cos(dt) + 0.5 * std::sin(dt);
    EXPECT_NEAR(sol.states[i][0].item<double>(), p, 1e-6);
  }
}

TEST(Integrate, BatchedStatesIntegrateIndependently) {
  auto f = exponential();
  const auto batch = integrate(f, f64({1.0, 2.0, -0.5}).view({3, 1}), {0.0, 0.5, 1.0}, dopri());
  EXPECT_EQ(batch.states.sizes(), (torch::IntArrayRef{3, 3, 1}));
  EXPECT_NEAR(batch.states[2][1][0].item<double>(), 2.0 * std::exp(1.0), 1e-6);
  EXPECT_NEAR(batch.states[1][2][0].item<double>(), -0.5 * std::exp(0.5), 1e-6);
}

TEST(Integrate, Rk4UsesUniformSteps) {
  auto f = exponential();
  const auto sol = integrate(f, f64({1.0}), {0.0, 1.0}, {OdeMethod::rk4, 1e-7, 1e-9, 20, 0.0});
  EXPECT_EQ(sol.steps_taken, 20);
  EXPECT_EQ(sol.rejected_steps, 0);
  EXPECT_NEAR(sol.states[-1][0].item<double>(), std::exp(1.0), 1e-6);
  // (1 + h + h^2/2 + h^3/6 + h^4/24)^20 with h = 1/20
  const double h = 0.05;
  const double g = 1 + h + h * h / 2 + h * h * h / 6 + h * h * h * h / 24;
  EXPECT_NEAR(sol.states[-1][0].item<double>(), std::pow(g, 20), 1e-13);
}

TEST(Integrate, Errors) {
  auto f = exponential();
  EXPECT_THROW(integrate(f, f64({1.0}), {0.0, 0.0}, dopri()), ValidationError);
  EXPECT_THROW(integrate(f, f64({1.0}), {1.0, 0.5}, dopri()), ValidationError);
  EXPECT_THROW(integrate(f, f64({1.0}), {0.0, 10.0}, {OdeMethod::dopri5, 1e-7, 1e-9, 3, 0.0}), SolverError);
  LambdaOde nan([](const torch::Tensor& z, double t) { return t > 0.5 ? z * NAN : z; });
  try {
    integrate(nan, f64({1.0}), {0.0, 1.0}, dopri());
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_GT(e.time(), 0.0);
    EXPECT_LE(e.time(), 1.0);
  }
  LambdaOde blowup([](const torch::Tensor& z, double) { return z * z; }, {}, true);
  EXPECT_THROW(integrate(blowup, f64({1.0}), {0.0, 2.0}, dopri()), SolverError);
}

TEST(Integrate, TighterToleranceNeverHurts) {
  for (const auto& c : suite()) {
    double prev = INFINITY;
    for (double rtol = 1e-3; rtol >= 1e-9; rtol /= 2) {
      const double err = final_error(c, dopri(rtol, 1e-12));
      EXPECT_LE(err, prev) << c.name << " rtol " << rtol;
      prev = err;
    }
  }
}

TEST(Integrate, IntermediateTimesBarelyMatter) {
  const auto cfg = dopri();
  for (const auto& c : suite()) {
    auto f = c.f();
    const auto direct = integrate(f, f64(c.z0), {0.0, c.t_end}, cfg).states[-1];
    const auto via = integrate(f, f64(c.z0), {0.0, 0.37 * c.t_end, c.t_end}, cfg).states[-1];
    const double bound = 10 * (cfg.atol + cfg.rtol * direct.abs().max().item<double>());
    EXPECT_LE((direct - via).abs().max().item<double>(), bound) << c.name;
  }
}

TEST(Integrate, Deterministic) {
  auto f = oscillator();
  const auto a = integrate(f, f64({0.3, 0.1}), {0.0, 0.7, 3.0}, dopri());
  const auto b = integrate(f, f64({0.3, 0.1}), {0.0, 0.7, 3.0}, dopri());
  EXPECT_TRUE(torch::equal(a.states, b.states));
  EXPECT_EQ(a.step_grid, b.step_grid);
}

TEST(Integrate, GridReplayReproducesStates) {
  auto f = oscillator();
  const std::vector<double> times{0.0, 0.7, 3.0};
  const auto a = integrate(f, f64({0.3, 0.1}), times, dopri());
  const auto b = integrate_on_grid(f, f64({0.3, 0.1}), times, a.step_grid, OdeMethod::dopri5);
  EXPECT_TRUE(torch::equal(a.states, b.states));
}

TEST(Gradient, LinearSystem) {
  torch::manual_seed(1);
  auto A = (0.5 * torch::randn({2, 2}, torch::kFloat64)).requires_grad_();
  LambdaOde f([A](const torch::Tensor& z, double) { return torch::matmul(A, z); }, {A}, true);
  for (auto cfg : {dopri(), SolverConfig{OdeMethod::rk4, 1e-7, 1e-9, 20, 0.0}}) {
    const auto check = check_gradient_through_solver(f, f64({0.7, -0.2}), {0.0, 0.5, 1.0}, cfg);
    EXPECT_LT(check.max_relative_error, 1e-4);
    EXPECT_EQ(check.analytic.size(), 6u);
  }
}

TEST(Gradient, ExponentialSensitivity) {
  const double a = 0.8, T = 1.3;
  LambdaOde f([a](const torch::Tensor& z, double) { return a * z; }, {}, true);
  auto z0 = f64({0.4}).requires_grad_();
  const auto sol = integrate(f, z0, {0.0, T}, dopri());
  const auto g = torch::autograd::grad({sol.states[-1].sum()}, {z0})[0];
  EXPECT_NEAR(g.item<double>(), std::exp(a * T), 1e-5);
}

TEST(Gradient, UnusedParameterGetsExactZero) {
  auto used = f64({-0.3}).requires_grad_();
  auto unused = f64({2.0}).requires_grad_();
  LambdaOde f([used](const torch::Tensor& z, double) { return used * z; }, {used, unused}, true);
  const auto check = check_gradient_through_solver(f, f64({1.0}), {0.0, 1.0}, dopri());
  ASSERT_EQ(check.analytic.size(), 3u);
  EXPECT_EQ(check.analytic[1], 0.0);
  EXPECT_LT(check.max_relative_error, 1e-4);
}

TEST(Gradient, NonAutonomousField) {
  auto w = f64({0.5, -1.0}).requires_grad_();
  LambdaOde f([w](const torch::Tensor& z, double t) { return torch::tanh(w * z) + std::sin(3 * t); }, {w});
  const auto check = check_gradient_through_solver(f, f64({0.2, 0.9}), {0.0, 0.3, 1.1}, dopri());
  EXPECT_LT(check.max_relative_error, 1e-4);
}

TEST(Csv, Header) {
  auto f = exponential();
  const auto sol = integrate(f, f64({1.0, 2.0}), {0.0, 1.0}, dopri());
  const auto path = std::filesystem::temp_directory_path() / "dicomo_traj.csv";
  write_trajectory_csv(path.string(), sol);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "t,z_0,z_1");
  EXPECT_EQ(row.substr(0, 2), "0,");
  std::filesystem::remove(path);
}
