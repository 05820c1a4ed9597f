#include <gtest/gtest.h>

#include "dicomo/common.hpp"
#include "dicomo/config.hpp"

using namespace dicomo;

TEST(Config, DumpParsesBackToTheSameConfig) {
  for (const auto& cfg : {Config{}, toy_config(), smoke_config()}) {
    const auto text = dump_config(cfg);
    EXPECT_EQ(dump_config(parse_config(text)), text);
    EXPECT_EQ(config_hash(parse_config(text)), config_hash(cfg));
  }
}

TEST(Config, NestedAndFlatKeysAgree) {
  const auto nested = parse_config("loss:\n  beta: 4\noptim:\n  d_steps: 2\n");
  const auto flat = parse_config("loss.beta: 4\noptim.d_steps: 2\n");
  EXPECT_EQ(dump_config(nested), dump_config(flat));
  EXPECT_DOUBLE_EQ(nested.loss.beta, 4.0);
  EXPECT_EQ(nested.optim.d_steps, 2);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(parse_config("loss:\n  betta: 4\n"), ValidationError);
  Config cfg;
  EXPECT_THROW(apply_override(cfg, "nope=1"), ValidationError);
  EXPECT_THROW(apply_override(cfg, "loss.beta"), ValidationError);
}

TEST(Config, OverridesParseYamlValues) {
  Config cfg;
  apply_override(cfg, "tranet.channels=[8, 16]");
  apply_override(cfg, "loss.recon=gaussian");
  apply_override(cfg, "optim.warmup_mode=lr");
  EXPECT_EQ(cfg.tranet.channels, (std::vector<int>{8, 16}));
  EXPECT_EQ(cfg.loss.recon, ReconLikelihood::gaussian);
  EXPECT_EQ(cfg.optim.warmup_mode, WarmupMode::lr);
  EXPECT_THROW(apply_override(cfg, "loss.recon=poisson"), ValidationError);
  EXPECT_THROW(apply_override(cfg, "train.batch_size=many"), ValidationError);
}

TEST(Config, ValidationCatchesIncompatibleShapes) {
  Config cfg;
  cfg.gan.scales = 3;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg.data.resolution = 64;
  EXPECT_NO_THROW(cfg.validate());
  Config bad;
  bad.data.resolution = 24;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = Config{};
  bad.repnet.decoder_channels.back() = 1;
  EXPECT_THROW(bad.validate(), ValidationError);
  bad = Config{};
  bad.latent.dim_dyn = 0;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(Config, HashTracksEveryField) {
  Config a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.optim.mapping_lr_scale = 0.02;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, ShippedFilesMatchBuiltInProfiles) {
  const std::string root = DICOMO_SOURCE_DIR;
  EXPECT_EQ(dump_config(load_config(root + "/configs/default.yaml")), dump_config(Config{}));
  auto smoke = load_config(root + "/configs/smoke.yaml");
  smoke.train.out_dir = Config{}.train.out_dir;
  EXPECT_EQ(dump_config(smoke), dump_config(smoke_config()));
}

TEST(Config, ReferenceDefaults) {
  const Config cfg;
  EXPECT_EQ(cfg.latent.dim_tr, 3);
  EXPECT_EQ(cfg.latent.dim_ti, 2);
  EXPECT_EQ(cfg.latent.dim_dyn, 1);
  EXPECT_DOUBLE_EQ(cfg.loss.beta, 32.0);
  EXPECT_DOUBLE_EQ(cfg.loss.lambda_l1, 1.0);
  EXPECT_DOUBLE_EQ(cfg.loss.lambda_u, 0.5);
  EXPECT_DOUBLE_EQ(cfg.loss.lambda_t, 1.0);
  EXPECT_DOUBLE_EQ(cfg.optim.repnet_lr, 1e-3);
  EXPECT_DOUBLE_EQ(cfg.optim.tranet_lr, 2e-4);
  EXPECT_DOUBLE_EQ(cfg.optim.tranet_beta1, 0.5);
  EXPECT_DOUBLE_EQ(cfg.optim.tranet_lr * cfg.optim.mapping_lr_scale, 2e-6);
  EXPECT_DOUBLE_EQ(cfg.ode_eval.rtol, 1e-7);
  EXPECT_DOUBLE_EQ(cfg.ode_eval.atol, 1e-9);
  EXPECT_EQ(cfg.ode_eval.method, OdeMethod::dopri5);
  EXPECT_EQ(cfg.data.k_random, 3);
}
