#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dicomo/harness.hpp"
#include "dicomo/log.hpp"

namespace fs = std::filesystem;
using namespace dicomo;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string log_level = "info";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "YAML config file");
  cmd->add_option("-s,--set", c.overrides, "override, key=value (repeatable)");
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--log-level", c.log_level, "trace|debug|info|warn|error");
}

Config resolve(const Common& c) {
  Config cfg = c.config_path.empty() ? Config{} : load_config(c.config_path);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  log::set_level(c.log_level);
  return cfg;
}

const scenes::VideoClip& find_clip(const std::vector<scenes::VideoClip>& clips, const std::string& id) {
  for (const auto& clip : clips)
    if (clip.clip_id == id) return clip;
  throw ValidationError("no clip '" + id + "' in the dataset");
}

std::vector<torch::Tensor> frame_list(const torch::Tensor& frames) {
  std::vector<torch::Tensor> out;
  for (int64_t i = 0; i < frames.size(0); ++i) out.push_back(frames[i]);
  return out;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty()) return;
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

std::vector<double> linspace(double lo, double hi, int n) {
  require(n >= 2, "need at least two points");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

int run(int argc, char** argv) {
  CLI::App app{"Text-guided video editing with disentangled continuous-time latents"};
  app.require_subcommand(1);

  Common common;

  auto* gen = app.add_subcommand("gen-data", "render the synthetic shapes dataset");
  add_common(gen, common);
  std::string gen_out;
  bool overwrite = false;
  gen->add_option("-o,--out", gen_out, "dataset directory (default: data.root)");
  gen->add_flag("--overwrite", overwrite, "replace an existing dataset");

  auto* trn = app.add_subcommand("train", "train RepNet, TraNet and the discriminator");
  add_common(trn, common);
  int64_t max_steps = 0;
  trn->add_option("--max-steps", max_steps, "stop after this many steps");

  auto* edt = app.add_subcommand("edit", "edit a clip with a description");
  add_common(edt, common);
  std::string ckpt, clip_id, text, out_path;
  edt->add_option("clip", clip_id, "clip id")->required();
  edt->add_option("text", text, "target description")->required();
  edt->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  edt->add_option("-o,--out", out_path, "output directory")->required();

  auto* trv = app.add_subcommand("traverse", "latent traversal grid");
  add_common(trv, common);
  std::vector<int> dims;
  double span = 3.0;
  int steps = 7;
  bool through_tranet = false;
  trv->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  trv->add_option("--clip", clip_id, "clip id")->required();
  trv->add_option("--dims", dims, "latent dims (default: all)");
  trv->add_option("--span", span, "values run over [-span, span]");
  trv->add_option("--steps", steps, "values per row");
  trv->add_flag("--tranet", through_tranet, "render through the generator");
  trv->add_option("-o,--out", out_path, "PNG path")->required();

  auto* trj = app.add_subcommand("trajectory", "dense z_dyn trajectory of one clip");
  add_common(trj, common);
  int points = 200;
  trj->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  trj->add_option("--clip", clip_id, "clip id")->required();
  trj->add_option("--points", points, "dense time points");
  trj->add_option("-o,--out", out_path, "output prefix (.csv and .png)")->required();

  auto* evl = app.add_subcommand("eval", "disentanglement and editing metrics");
  add_common(evl, common);
  harness::EvalOptions eval_opts;
  evl->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  evl->add_option("--max-clips", eval_opts.max_clips, "limit test clips");
  evl->add_option("--probe-steps", eval_opts.probe_steps, "attribute probe training steps");
  evl->add_option("--bins", eval_opts.bins, "MI histogram bins");
  evl->add_option("-o,--out", out_path, "JSON report path");

  auto* met = app.add_subcommand("metrics", "MIG and AAM of a RepNet");
  add_common(met, common);
  bool random_init = false;
  int bins = 20;
  met->add_option("--checkpoint", ckpt, "trained checkpoint");
  met->add_flag("--random-init", random_init, "use an untrained RepNet built from the config");
  met->add_option("--bins", bins, "MI histogram bins");
  met->add_option("-o,--out", out_path, "JSON report path");
  std::string codes_csv;
  met->add_option("--codes-csv", codes_csv, "also dump the code/factor table as CSV");

  auto* shw = app.add_subcommand("show-config", "print the resolved config as YAML");
  add_common(shw, common);
  std::string preset;
  shw->add_option("--preset", preset, "start from a built-in profile")->check(CLI::IsMember({"default", "smoke", "toy"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*shw) {
    Config base = preset == "smoke" ? smoke_config() : preset == "toy" ? toy_config() : Config{};
    if (!common.config_path.empty()) base = load_config(common.config_path);
    for (const auto& o : common.overrides) apply_override(base, o);
    if (common.seed) base.seed = *common.seed;
    base.validate();
    std::cout << dump_config(base);
    return 0;
  }

  Config cfg = resolve(common);
  torch::set_num_threads(cfg.train.threads);

  if (*gen) {
    scenes::DatasetOptions opts;
    opts.seed = cfg.seed;
    opts.n_train = cfg.data.n_train;
    opts.n_test = cfg.data.n_test;
    opts.resolution = cfg.data.resolution;
    opts.out_dir = gen_out.empty() ? cfg.data.root : gen_out;
    opts.overwrite = overwrite;
    const auto records = scenes::generate_dataset(opts);
    log::info("wrote " + std::to_string(records.size()) + " clips to " + opts.out_dir);
    return 0;
  }

  if (*trn) {
    const auto result = harness::train(cfg, scenes::load_split(cfg.data.root, "train", cfg.data.n_train), max_steps);
    std::cout << nlohmann::json{{"checkpoint", result.checkpoint}, {"log", result.log_path}, {"steps", result.log.size()}}
                     .dump()
              << '\n';
    return 0;
  }

  if (*met) {
    require(random_init != !ckpt.empty(), "metrics: pass exactly one of --checkpoint and --random-init");
    std::unique_ptr<harness::Trainer> trainer =
        random_init ? std::make_unique<harness::Trainer>(cfg) : harness::load_trainer(ckpt);
    const auto& tc = trainer->config();
    const auto test = scenes::load_split(cfg.data.root, "test", cfg.data.n_test);
    torch::NoGradGuard guard;
    const auto table = metrics::collect_codes(trainer->rep, test, tc.data.k_random, cfg.seed, tc.ode_eval);
    const nlohmann::json report{{"mig", metrics::mig(table, bins)},
                                {"aam", metrics::aam(table, bins)},
                                {"n_samples", table.codes.rows()},
                                {"bins", bins},
                                {"config_hash", config_hash(tc)},
                                {"seed", cfg.seed}};
    write_json(out_path, report);
    if (!codes_csv.empty())
      metrics::write_codes_csv(codes_csv, table,
                               {"floor_color", "wall_color", "object_color", "scale", "shape", "orientation"});
    std::cout << report.dump(2) << '\n';
    return 0;
  }

  auto trainer = harness::load_trainer(ckpt);
  const auto& tc = trainer->config();
  torch::NoGradGuard guard;

  if (*edt) {
    const auto clips = scenes::load_split(cfg.data.root, "");
    const auto edited = harness::edit_clip(*trainer, find_clip(clips, clip_id), text, cfg.seed);
    fs::create_directories(out_path);
    for (int64_t i = 0; i < edited.frames.size(0); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%04lld.png", static_cast<long long>(i));
      write_png((fs::path(out_path) / name).string(), from_tensor(edited.frames[i]));
    }
    write_png((fs::path(out_path) / "strip.png").string(),
              tile_grid({frame_list(find_clip(clips, clip_id).frames), frame_list(edited.frames)}));
    log::info("edited " + clip_id + " -> " + out_path);
    return 0;
  }

  if (*trv) {
    const auto clips = scenes::load_split(cfg.data.root, "");
    if (dims.empty())
      for (int d = 0; d < tc.latent.total(); ++d) dims.push_back(d);
    auto encoder = textenc::make_encoder(tc);
    const auto grid = metrics::traversal_grid(trainer->rep, find_clip(clips, clip_id), dims, linspace(-span, span, steps),
                                              tc.ode_eval, through_tranet ? &trainer->tra : nullptr,
                                              through_tranet ? encoder.get() : nullptr);
    write_png(out_path, grid);
    return 0;
  }

  if (*trj) {
    const auto clips = scenes::load_split(cfg.data.root, "");
    const auto report = metrics::dyn_trajectory_report(trainer->rep, find_clip(clips, clip_id),
                                                       linspace(0.0, 1.0, points), tc.data.k_random, cfg.seed,
                                                       tc.ode_eval);
    report.write_csv(out_path + ".csv");
    write_png(out_path + ".png", report.plot());
    nlohmann::json r2 = report.r2_tail;
    std::cout << nlohmann::json{{"r2_tail", r2}}.dump() << '\n';
    return 0;
  }

  if (*evl) {
    eval_opts.seed = cfg.seed;
    const auto report = harness::evaluate(*trainer, scenes::load_split(cfg.data.root, "train", cfg.data.n_train),
                                          scenes::load_split(cfg.data.root, "test", cfg.data.n_test), eval_opts);
    write_json(out_path, report.to_json());
    std::cout << report.to_json().dump(2) << '\n';
    return 0;
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ValidationError& e) {
    log::error(e.what());
    return 2;
  } catch (const c10::Error& e) {
    log::error(e.what_without_backtrace());
    return 1;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 1;
  }
}
