#include <cmath>

#include <gtest/gtest.h>

#include "dicomo/tranet.hpp"
#include "test_support.hpp"

using namespace dicomo;
using namespace dicomo::tranet;

namespace {

const SolverConfig kRk4{OdeMethod::rk4, 1e-7, 1e-9, 20, 0.0};

torch::Tensor f64(std::vector<double> v) { return torch::tensor(v, torch::kFloat64); }

void set_linear(torch::nn::Linear& l, double weight, double bias) {
  torch::NoGradGuard g;
  l->weight.fill_(weight);
  l->bias.fill_(bias);
}

Mfmod scalar_mfmod(NormStatsMode mode = NormStatsMode::batch) {
  Mfmod m(1, 1, 1, mode, 1e-5);
  m->to(torch::kFloat64);
  return m;
}

Config generator_config() {
  Config cfg = toy_config();
  cfg.tranet.channels = {2, 3, 3, 3};
  cfg.tranet.mfmod_blocks = 2;
  cfg.tranet.w_desc_dim = 5;
  cfg.tranet.w_cont_dim = 4;
  return cfg;
}

}  // namespace

TEST(Mfmod, WorkedExample) {
  auto m = scalar_mfmod();
  // alpha = beta = 0.5: scale (3 + 1)/2 = 2, shift (0.7 + 0.3)/2 = 0.5
  set_linear(m->text_scale, 0.0, 3.0);
  set_linear(m->content_scale, 0.0, 1.0);
  set_linear(m->text_shift, 0.0, 0.7);
  set_linear(m->content_shift, 0.0, 0.3);
  const auto x = f64({1, 3, 5, 7}).reshape({1, 1, 2, 2});
  const auto out = m->forward(x, f64({0.4}).reshape({1, 1}), f64({-1.2}).reshape({1, 1})).reshape({-1});
  const double expected[] = {-2.18328, -0.39443, 1.39443, 3.18328};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out[i].item<double>(), expected[i], 1e-5);

  const auto stats = norm_stats(x, NormStatsMode::batch, 1e-5);
  EXPECT_DOUBLE_EQ(stats.mean.item<double>(), 4.0);
  EXPECT_NEAR(stats.stddev.item<double>(), std::sqrt(5.0), 1e-12);
}

TEST(Mfmod, ConstantInputGivesPureShift) {
  torch::manual_seed(3);
  Mfmod m(4, 6, 5, NormStatsMode::batch, 1e-5);
  m->to(torch::kFloat64);
  {
    torch::NoGradGuard g;
    m->blend_shift.fill_(0.8);
  }
  const auto x = torch::full({2, 4, 3, 3}, 2.0, torch::kFloat64);
  const auto wd = torch::randn({2, 6}, torch::kFloat64), wc = torch::randn({2, 5}, torch::kFloat64);
  const auto out = m->forward(x, wd, wc);
  const double b = 1.0 / (1.0 + std::exp(-0.8));
  const auto expected = b * m->text_shift->forward(wd) + (1 - b) * m->content_shift->forward(wc);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 4; ++c)
      EXPECT_TRUE(torch::allclose(out[n][c], expected[n][c].expand({3, 3}), 0.0, 1e-15));
}

TEST(Mfmod, DegeneratesToPlainNormalization) {
  torch::manual_seed(4);
  Mfmod m(3, 4, 4, NormStatsMode::batch, 1e-5);
  m->to(torch::kFloat64);
  set_linear(m->text_scale, 0.0, 1.0);
  set_linear(m->text_shift, 0.0, 0.0);
  {
    torch::NoGradGuard g;
    m->blend_scale.fill_(50.0);
    m->blend_shift.fill_(50.0);
  }
  ASSERT_EQ(m->alpha().item<double>(), 1.0);
  const auto x = 3.0 * torch::randn({4, 3, 5, 5}, torch::kFloat64) + 1.5;
  const auto out = m->forward(x, torch::randn({4, 4}, torch::kFloat64), torch::randn({4, 4}, torch::kFloat64));
  const auto mean = out.mean({0, 2, 3});
  const auto var = out.pow(2).mean({0, 2, 3}) - mean.pow(2);
  EXPECT_LT(mean.abs().max().item<double>(), 1e-9);
  EXPECT_LT((var - 1).abs().max().item<double>(), 1e-6);
}

TEST(Mfmod, StatisticsMatchBruteForce) {
  torch::manual_seed(5);
  const auto x = torch::randn({3, 4, 5, 6}, torch::kFloat64) * 2 + 0.5;
  auto a = x.accessor<double, 4>();
  for (auto mode : {NormStatsMode::batch, NormStatsMode::instance}) {
    const auto s = norm_stats(x, mode, 1e-5);
    for (int n = 0; n < 3; ++n)
      for (int c = 0; c < 4; ++c) {
        double sum = 0, sq = 0;
        int count = 0;
        for (int m = 0; m < 3; ++m) {
          if (mode == NormStatsMode::instance && m != n) continue;
          for (int y = 0; y < 5; ++y)
            for (int xx = 0; xx < 6; ++xx) {
              sum += a[m][c][y][xx];
              sq += a[m][c][y][xx] * a[m][c][y][xx];
              ++count;
            }
        }
        const double mu = sum / count, sd = std::sqrt(sq / count - mu * mu);
        const int row = mode == NormStatsMode::batch ? 0 : n;
        EXPECT_NEAR(s.mean[row][c][0][0].item<double>(), mu, 1e-6);
        EXPECT_NEAR(s.stddev[row][c][0][0].item<double>(), sd, 1e-6);
      }
    EXPECT_EQ(s.mean.size(0), mode == NormStatsMode::batch ? 1 : 3);
  }
}

TEST(Mfmod, StdGuardHoldsEpsilon) {
  const auto s = norm_stats(torch::ones({2, 3, 4, 4}, torch::kFloat64), NormStatsMode::batch, 1e-5);
  EXPECT_DOUBLE_EQ(s.stddev.min().item<double>(), 1e-5);
}

TEST(Mfmod, AffineInPreactivationForFixedStatistics) {
  torch::manual_seed(6);
  Mfmod m(3, 4, 2, NormStatsMode::batch, 1e-5);
  m->to(torch::kFloat64);
  const NormStats stats{torch::randn({1, 3, 1, 1}, torch::kFloat64),
                        torch::rand({1, 3, 1, 1}, torch::kFloat64) + 0.5};
  const auto wd = torch::randn({2, 4}, torch::kFloat64), wc = torch::randn({2, 2}, torch::kFloat64);
  const auto x1 = torch::randn({2, 3, 4, 4}, torch::kFloat64), x2 = torch::randn({2, 3, 4, 4}, torch::kFloat64);
  auto f = [&](const torch::Tensor& x) { return m->modulate(x, stats, wd, wc); };
  const auto lhs = f(x1 + x2);
  const auto rhs = f(x1) + f(x2) - f(torch::zeros_like(x1));
  EXPECT_LT((lhs - rhs).abs().max().item<double>(), 1e-12);
  EXPECT_LT((f(2.5 * x1) - (2.5 * f(x1) - 1.5 * f(torch::zeros_like(x1)))).abs().max().item<double>(), 1e-12);
}

TEST(Mfmod, BlendWeightsStayInsideUnitInterval) {
  torch::manual_seed(7);
  Mfmod m(2, 3, 3, NormStatsMode::batch, 1e-5);
  EXPECT_FLOAT_EQ(m->alpha().item<float>(), 0.5f);
  EXPECT_FLOAT_EQ(m->beta().item<float>(), 0.5f);
  torch::optim::Adam opt(m->parameters(), torch::optim::AdamOptions(0.5));
  const auto x = torch::randn({4, 2, 3, 3}), wd = torch::randn({4, 3}), wc = torch::randn({4, 3});
  for (int step = 0; step < 200; ++step) {
    opt.zero_grad();
    const auto loss = -m->forward(x, wd, wc).pow(2).mean();
    loss.backward();
    opt.step();
    for (const auto& v : {m->alpha(), m->beta()}) {
      EXPECT_GT(v.item<float>(), 0.0f);
      EXPECT_LT(v.item<float>(), 1.0f);
    }
  }
}

TEST(Mfmod, ChannelMismatchThrows) {
  Mfmod m(3, 2, 2, NormStatsMode::batch, 1e-5);
  EXPECT_THROW(m->forward(torch::randn({1, 4, 2, 2}), torch::randn({1, 2}), torch::randn({1, 2})), ValidationError);
}

TEST(Mapping, ZeroWeightsGiveZeroVector) {
  MappingNetwork net(6, 8, 4);
  for (auto& p : net->parameters()) {
    torch::NoGradGuard g;
    p.zero_();
  }
  EXPECT_TRUE(torch::equal(net->forward(torch::randn({3, 6})), torch::zeros({3, 8})));
}

TEST(Mapping, MatchesDenseAlgebra) {
  torch::manual_seed(8);
  MappingNetwork net(3, 4, 3);
  net->to(torch::kFloat64);
  const auto z = torch::randn({2, 3}, torch::kFloat64);
  const auto out = net->forward(z);
  for (int r = 0; r < 2; ++r) {
    std::vector<double> h(3);
    for (int i = 0; i < 3; ++i) h[i] = z[r][i].item<double>();
    for (const auto& layer : *net->layers) {
      auto lin = layer->as<torch::nn::Linear>();
      std::vector<double> next(4);
      for (int o = 0; o < 4; ++o) {
        double s = lin->bias[o].item<double>();
        for (std::size_t i = 0; i < h.size(); ++i) s += lin->weight[o][i].item<double>() * h[i];
        next[o] = s > 0 ? s : 0.2 * s;
      }
      h = next;
    }
    for (int o = 0; o < 4; ++o) EXPECT_NEAR(out[r][o].item<double>(), h[o], 1e-6);
  }
}

TEST(Mapping, VaryingDynamicsVaryContent) {
  torch::manual_seed(9);
  MappingNetwork net(6, 8, 4);
  auto z = torch::randn({1, 6}).repeat({2, 1});
  z[1][5] += 0.7;
  const auto w = net->forward(z);
  EXPECT_FALSE(torch::equal(w[0], w[1]));
  EXPECT_THROW(net->forward(torch::randn({2, 5})), ValidationError);
}

TEST(Generator, PreservesResolution) {
  torch::manual_seed(10);
  TraNet net(generator_config());
  for (int res : {32, 64}) {
    const auto y = net->generate(torch::rand({2, 3, res, res}), torch::randn({2, 5}), torch::randn({2, 4}));
    EXPECT_EQ(y.sizes(), (std::vector<int64_t>{2, 3, res, res}));
    EXPECT_GE(y.min().item<float>(), 0.0f);
    EXPECT_LE(y.max().item<float>(), 1.0f);
  }
  EXPECT_THROW(net->generate(torch::rand({1, 3, 30, 30}), torch::randn({1, 5}), torch::randn({1, 4})),
               ValidationError);
}

TEST(Generator, Deterministic) {
  torch::manual_seed(11);
  TraNet net(generator_config());
  const auto x = torch::rand({2, 3, 32, 32});
  const auto wd = torch::randn({2, 5}), wc = torch::randn({2, 4});
  EXPECT_TRUE(torch::equal(net->generate(x, wd, wc), net->generate(x, wd, wc)));
}

TEST(Generator, ParameterPartition) {
  TraNet net(generator_config());
  const auto gen = net->generator_parameters();
  const auto all = net->parameters();
  EXPECT_EQ(gen.size() + net->mapping->parameters().size(), all.size());
  for (const auto& p : net->mapping->parameters())
    for (const auto& q : gen) EXPECT_FALSE(p.is_same(q));
}

TEST(Generator, ConditionsReachOutput) {
  torch::manual_seed(12);
  TraNet net(generator_config());
  net->to(torch::kFloat64);
  const auto x = torch::rand({2, 3, 16, 16}, torch::kFloat64);
  const auto probe = torch::randn({2, 3, 16, 16}, torch::kFloat64);
  auto wd = torch::randn({2, 5}, torch::kFloat64).requires_grad_();
  auto wc = torch::randn({2, 4}, torch::kFloat64).requires_grad_();
  auto loss = [&] { return (net->generate(x, wd, wc) * probe).sum(); };

  const auto grads = torch::autograd::grad({loss()}, {wd, wc});
  EXPECT_GT(grads[0].abs().max().item<double>(), 1e-8);
  EXPECT_GT(grads[1].abs().max().item<double>(), 1e-8);

  // finite-difference probe along one coordinate of each condition
  torch::NoGradGuard g;
  for (auto* t : {&wd, &wc}) {
    const double base = loss().item<double>();
    (*t)[0][0] += 1e-4;
    const double moved = loss().item<double>();
    (*t)[0][0] -= 1e-4;
    EXPECT_NE(base, moved);
  }
}

TEST(Generator, GradientsMatchFiniteDifferences) {
  torch::manual_seed(13);
  Config cfg = generator_config();
  cfg.tranet.channels = {2, 2, 2};
  cfg.tranet.mfmod_blocks = 1;
  TraNet net(cfg);
  net->to(torch::kFloat64);
  const auto x = torch::rand({2, 3, 8, 8}, torch::kFloat64);
  const auto probe = torch::randn({2, 3, 8, 8}, torch::kFloat64);
  auto wd = torch::randn({2, 5}, torch::kFloat64).requires_grad_();
  auto z = torch::randn({2, cfg.latent.dim_content()}, torch::kFloat64).requires_grad_();
  auto block = net->blocks[0]->as<ModulatedResBlock>();
  std::vector<torch::Tensor> wrt{wd, z, block->mfmod->blend_scale, block->mfmod->blend_shift,
                                 block->mfmod->text_scale->weight, block->conv->weight};
  const auto check = test::compare_gradients(
      [&] { return (net->generate(x, wd, net->map_content(z)) * probe).sum(); }, wrt, 6, 1e-6, 1e-6);
  EXPECT_LT(check.max_rel, 1e-4) << "max abs " << check.max_abs;
  EXPECT_EQ(check.checked, 4 * 6 + 2);
}

TEST(Manipulate, KeepsFrameCountAndText) {
  torch::manual_seed(14);
  Config cfg = toy_config();
  repnet::RepNet rep(cfg, cfg.data.resolution);
  TraNet tra(cfg);
  const auto encoder = textenc::make_encoder(cfg);
  scenes::VideoClip clip;
  clip.clip_id = "c0";
  clip.frames = torch::rand({15, 3, cfg.data.resolution, cfg.data.resolution});
  for (int i = 0; i < 15; ++i) clip.timestamps.push_back(i / 14.0);
  Rng rng(5);
  const auto out = manipulate_clip(clip, "a big blue cube", rep, tra, *encoder, 3, rng, kRk4);
  EXPECT_EQ(out.num_frames(), 15);
  EXPECT_EQ(out.frames.sizes(), clip.frames.sizes());
  EXPECT_EQ(out.descriptions, std::vector<std::string>{"a big blue cube"});
  // z_dyn changes over time, so frames differ even though the text is shared
  EXPECT_FALSE(torch::equal(out.frames[0], out.frames[14]));
}
