#include "dicomo/harness.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dicomo/log.hpp"

namespace dicomo::harness {

namespace fs = std::filesystem;
using nlohmann::json;

double warmup_scale(int64_t step, int64_t warmup_iters) {
  if (warmup_iters <= 0) return 1.0;
  return std::min(static_cast<double>(step) / static_cast<double>(warmup_iters), 1.0);
}

int64_t resolve_warmup(const Config& cfg, int64_t iters_per_epoch) {
  if (cfg.optim.warmup_iters >= 0) return cfg.optim.warmup_iters;
  return std::max<int64_t>(1, std::llround(0.1 * static_cast<double>(iters_per_epoch)));
}

Batch make_batch(const std::vector<const scenes::VideoClip*>& clips, int k_random, Rng& rng,
                 const textenc::TextEncoder& encoder) {
  require(!clips.empty(), "make_batch: empty batch");
  Batch b;
  std::vector<torch::Tensor> frames;
  for (const auto* clip : clips) {
    const auto obs = scenes::sample_observations(*clip, k_random, rng);
    frames.push_back(obs.frames);
    b.times.push_back(obs.times);
    require(!clip->descriptions.empty(), "make_batch: clip without descriptions");
    b.descriptions.push_back(clip->descriptions[uniform_index(rng, clip->descriptions.size())]);
  }
  b.frames = torch::stack(frames);
  b.w_desc = encoder.encode_batch(b.descriptions);
  return b;
}

json StepLog::to_json() const {
  return json{{"step", step},         {"L_rec", rec},           {"L_rec_prime", rec_prime},
              {"kl_st", kl_st},       {"kl_dyn", kl_dyn},       {"L_cgan_d", cgan_d},
              {"L_cgan_g", cgan_g},   {"L_l1", l1},             {"L_unsup", unsup},
              {"L_repnet", loss_repnet}, {"L_tranet", loss_tranet}, {"L_total", total},
              {"lr_repnet", lr_repnet}, {"lr_encoder", lr_encoder}, {"lr_tranet", lr_tranet},
              {"lr_mapping", lr_mapping}, {"lr_disc", lr_disc},   {"warmup", warmup}};
}

bool StepLog::finite() const {
  for (double v : {rec, rec_prime, kl_st, kl_dyn, cgan_d, cgan_g, l1, unsup, total})
    if (!std::isfinite(v)) return false;
  return true;
}

namespace {

using ParamGroups = std::vector<torch::optim::OptimizerParamGroup>;

std::vector<torch::Tensor> minus(const std::vector<torch::Tensor>& all, const std::vector<torch::Tensor>& remove) {
  std::set<const void*> drop;
  for (const auto& p : remove) drop.insert(p.unsafeGetTensorImpl());
  std::vector<torch::Tensor> out;
  for (const auto& p : all)
    if (!drop.count(p.unsafeGetTensorImpl())) out.push_back(p);
  return out;
}

torch::optim::OptimizerParamGroup group(std::vector<torch::Tensor> params, double lr, double b1, double b2) {
  return torch::optim::OptimizerParamGroup(
      std::move(params), std::make_unique<torch::optim::AdamOptions>(torch::optim::AdamOptions(lr).betas({b1, b2})));
}

double group_lr(torch::optim::Optimizer& opt, std::size_t i) {
  return static_cast<torch::optim::AdamOptions&>(opt.param_groups()[i].options()).lr();
}

void set_requires_grad(torch::nn::Module& m, bool on) {
  for (auto& p : m.parameters()) p.set_requires_grad(on);
}

double value(const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; }

}  // namespace

Trainer::Trainer(const Config& cfg, int64_t iters_per_epoch, torch::Dtype dtype)
    : cfg_(cfg),
      dtype_(dtype),
      warmup_iters_(resolve_warmup(cfg, iters_per_epoch)),
      rng_(derive_seed(cfg.seed, 3)),
      gen_(at::detail::createCPUGenerator(derive_seed(cfg.seed, 2))) {
  cfg_.validate();
  torch::manual_seed(derive_seed(cfg.seed, 1));
  rep = repnet::RepNet(cfg_, cfg_.data.resolution);
  tra = tranet::TraNet(cfg_);
  disc = adversary::Discriminator(cfg_);
  rep->to(dtype);
  tra->to(dtype);
  disc->to(dtype);
  extractor = objectives::make_extractor(cfg_);
  extractor->to(dtype);

  const auto& o = cfg_.optim;
  auto encoder = rep->encoder_parameters();
  ParamGroups rep_groups;
  rep_groups.push_back(group(encoder, o.repnet_lr, o.repnet_beta1, o.repnet_beta2));
  rep_groups.push_back(group(minus(rep->parameters(), encoder), o.repnet_lr, o.repnet_beta1, o.repnet_beta2));
  opt_repnet = std::make_unique<torch::optim::Adam>(std::move(rep_groups),
                                                    torch::optim::AdamOptions(o.repnet_lr));

  ParamGroups tra_groups;
  tra_groups.push_back(group(tra->generator_parameters(), o.tranet_lr, o.tranet_beta1, o.tranet_beta2));
  tra_groups.push_back(group(tra->mapping->parameters(), o.tranet_lr * o.mapping_lr_scale, o.tranet_beta1,
                             o.tranet_beta2));
  opt_tranet = std::make_unique<torch::optim::Adam>(std::move(tra_groups),
                                                    torch::optim::AdamOptions(o.tranet_lr));

  opt_disc = std::make_unique<torch::optim::Adam>(
      disc->parameters(), torch::optim::AdamOptions(o.disc_lr).betas({o.disc_beta1, o.disc_beta2}));
}

struct Trainer::Forward {
  repnet::Encoding enc;
  objectives::TwinReconstruction twin;
  torch::Tensor kl_st, kl_dyn;
  torch::Tensor x, w_desc_items, target_items, foreign_items, w_cont, y;
  std::vector<int64_t> perm;
  int64_t clips = 0, per_clip = 0;
};

Trainer::Forward Trainer::forward(const Batch& batch, double gate, bool sample) {
  Forward f;
  const auto options = rep->parameters().front().options();
  auto frames = batch.frames.to(options);
  auto w_desc = batch.w_desc.to(options);
  f.clips = frames.size(0);
  f.per_clip = frames.size(1);
  const int dim_tr = cfg_.latent.dim_tr;

  f.enc = rep->encode(frames, batch.times, sample, gen_, cfg_.ode);
  auto z_desc = rep->project_text(w_desc);
  f.twin = objectives::twin_reconstruction(frames, f.enc, z_desc, rep, cfg_.loss.recon);
  f.kl_st = cfg_.loss.kl_static == StaticKl::per_frame ? objectives::kl_static(f.enc.static_per_frame)
                                                       : objectives::kl_gaussian(f.enc.static_posterior).mean();
  f.kl_dyn = objectives::kl_dynamic(f.enc.dynamic_posterior);

  auto z_ti = f.enc.z_ti(dim_tr);
  auto z_cont = torch::cat({z_ti.unsqueeze(1).expand({f.clips, f.per_clip, z_ti.size(-1)}), f.enc.z_dyn}, -1);
  if (cfg_.optim.warmup_mode == WarmupMode::gradient) z_cont = scale_gradient(z_cont, gate);
  f.w_cont = tra->map_content(z_cont.flatten(0, 1));

  std::vector<int64_t> group_of_item, target_of_item;
  if (f.clips >= 2) f.perm = adversary::derangement(f.clips, rng_);
  for (int64_t b = 0; b < f.clips; ++b)
    for (int64_t k = 0; k < f.per_clip; ++k) {
      group_of_item.push_back(b);
      target_of_item.push_back(f.perm.empty() ? b : f.perm[b]);
    }
  auto group_index = torch::tensor(group_of_item);
  f.w_desc_items = w_desc.index_select(0, group_index);
  f.target_items = w_desc.index_select(0, torch::tensor(target_of_item));
  f.foreign_items = f.target_items;
  f.x = frames.flatten(0, 1);
  f.y = tra->generate(f.x, f.target_items, f.w_cont);
  return f;
}

objectives::LossTotals Trainer::evaluate_loss(const Batch& batch, objectives::LossComponents* out) {
  auto f = forward(batch, 1.0, /*sample=*/false);
  objectives::LossComponents c;
  c.rec = f.twin.rec;
  c.rec_prime = f.twin.rec_prime;
  c.kl_st = f.kl_st;
  c.kl_dyn = f.kl_dyn;
  c.cgan_g = adversary::gan_loss({}, disc->forward(f.y, f.target_items, f.w_cont), adversary::Side::generator,
                                 cfg_.gan.loss);
  c.l1 = objectives::perceptual_l1(f.x, f.y, *extractor);
  auto enc_y = rep->encode(f.y.view(batch.frames.sizes()), batch.times, false, std::nullopt, cfg_.ode);
  c.unsup = objectives::latent_consistency(rep->posterior_means(f.enc), rep->posterior_means(enc_y));
  if (out) *out = c;
  return objectives::total_loss(c, cfg_.loss);
}

StepLog Trainer::train_step(const Batch& batch) {
  const double warm = warmup_scale(step_, warmup_iters_);
  const bool gate_gradient = cfg_.optim.warmup_mode == WarmupMode::gradient;
  auto& enc_opts = static_cast<torch::optim::AdamOptions&>(opt_repnet->param_groups()[0].options());
  enc_opts.lr(gate_gradient ? cfg_.optim.repnet_lr : cfg_.optim.repnet_lr * warm);

  auto f = forward(batch, gate_gradient ? warm : 1.0, /*sample=*/true);
  StepLog log;
  log.step = step_;
  log.warmup = warm;
  log.rec = value(f.twin.rec);
  log.rec_prime = value(f.twin.rec_prime);
  log.kl_st = value(f.kl_st);
  log.kl_dyn = value(f.kl_dyn);
  auto abort_if_nonfinite = [&] {
    if (log.finite()) return;
    set_requires_grad(*disc, true);
    throw RuntimeFailure("non-finite loss at step " + std::to_string(step_) + ": " + log.to_json().dump());
  };
  abort_if_nonfinite();

  // Discriminator phase.
  const auto kind = cfg_.gan.loss;
  for (int d = 0; d < cfg_.optim.d_steps; ++d) {
    auto w_cont = f.w_cont.detach();
    auto loss_d = adversary::gan_loss(disc->forward(f.x, f.w_desc_items, w_cont),
                                      disc->forward(f.y.detach(), f.target_items, w_cont),
                                      adversary::Side::discriminator, kind);
    if (!f.perm.empty())
      loss_d = loss_d + adversary::gan_fake_term(disc->forward(f.x, f.foreign_items, w_cont), kind);
    log.cgan_d = loss_d.item<double>();
    abort_if_nonfinite();
    opt_disc->zero_grad();
    loss_d.backward();
    opt_disc->step();
  }

  // Generator + representation phase.
  set_requires_grad(*disc, false);
  objectives::LossComponents c;
  c.rec = f.twin.rec;
  c.rec_prime = f.twin.rec_prime;
  c.kl_st = f.kl_st;
  c.kl_dyn = f.kl_dyn;
  c.cgan_g = adversary::gan_loss({}, disc->forward(f.y, f.target_items, f.w_cont), adversary::Side::generator, kind);
  c.l1 = objectives::perceptual_l1(f.x, f.y, *extractor);
  auto enc_y = rep->encode(f.y.view(batch.frames.sizes()), batch.times, false, std::nullopt, cfg_.ode);
  auto mean_x = rep->posterior_means(f.enc);
  if (!cfg_.loss.unsup_into_encoder) mean_x = mean_x.detach();
  c.unsup = objectives::latent_consistency(mean_x, rep->posterior_means(enc_y));
  const auto totals = objectives::total_loss(c, cfg_.loss);

  log.rec = value(c.rec);
  log.rec_prime = value(c.rec_prime);
  log.kl_st = value(c.kl_st);
  log.kl_dyn = value(c.kl_dyn);
  log.cgan_g = value(c.cgan_g);
  log.l1 = value(c.l1);
  log.unsup = value(c.unsup);
  log.loss_repnet = value(totals.repnet);
  log.loss_tranet = value(totals.tranet);
  log.total = value(totals.total);
  abort_if_nonfinite();

  // The consistency term reaches the generator (and optionally the encoder,
  // under the warmup gate) but never the rest of RepNet.
  const double unsup_weight = cfg_.loss.lambda_t * cfg_.loss.lambda_u;
  std::vector<torch::Tensor> unsup_targets = tra->parameters();
  const auto n_tra = unsup_targets.size();
  if (cfg_.loss.unsup_into_encoder)
    for (auto& p : rep->encoder_parameters()) unsup_targets.push_back(p);
  std::vector<torch::Tensor> unsup_grads;
  if (unsup_weight > 0.0) {
    unsup_grads = torch::autograd::grad({unsup_weight * c.unsup}, unsup_targets, {}, /*retain_graph=*/true,
                                        /*create_graph=*/false, /*allow_unused=*/true);
  }
  auto rest = c;
  rest.unsup = torch::zeros_like(c.unsup);
  auto backward_total = objectives::total_loss(rest, cfg_.loss).total;

  opt_repnet->zero_grad();
  opt_tranet->zero_grad();
  backward_total.backward();
  for (std::size_t i = 0; i < unsup_grads.size(); ++i) {
    if (!unsup_grads[i].defined()) continue;
    auto g = i < n_tra ? unsup_grads[i] : unsup_grads[i] * (gate_gradient ? warm : 1.0);
    auto& p = unsup_targets[i];
    if (p.grad().defined())
      p.mutable_grad() = p.grad() + g;
    else
      p.mutable_grad() = g.clone();
  }
  opt_repnet->step();
  opt_tranet->step();
  set_requires_grad(*disc, true);

  log.lr_encoder = group_lr(*opt_repnet, 0);
  log.lr_repnet = group_lr(*opt_repnet, 1);
  log.lr_tranet = group_lr(*opt_tranet, 0);
  log.lr_mapping = group_lr(*opt_tranet, 1);
  log.lr_disc = group_lr(*opt_disc, 0);
  ++step_;
  return log;
}

void Trainer::save(const std::string& path) const {
  torch::serialize::OutputArchive ar;
  auto section = [&](const std::string& key, auto&& fill) {
    torch::serialize::OutputArchive sub;
    fill(sub);
    ar.write(key, sub);
  };
  section("repnet", [&](auto& a) { rep->save(a); });
  section("tranet", [&](auto& a) { tra->save(a); });
  section("discriminator", [&](auto& a) { disc->save(a); });
  section("optim_repnet", [&](auto& a) { opt_repnet->save(a); });
  section("optim_tranet", [&](auto& a) { opt_tranet->save(a); });
  section("optim_discriminator", [&](auto& a) { opt_disc->save(a); });
  std::ostringstream rng_state;
  rng_state << rng_;
  ar.write("rng", c10::IValue(rng_state.str()));
  ar.write("generator", gen_.get_state());
  ar.write("config", c10::IValue(dump_config(cfg_)));
  ar.write("config_hash", c10::IValue(config_hash(cfg_)));
  ar.write("step", c10::IValue(step_));
  ar.write("warmup_iters", c10::IValue(warmup_iters_));
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  try {
    ar.save_to(path);
  } catch (const c10::Error& e) {
    throw RuntimeFailure("cannot write checkpoint '" + path + "'");
  }
}

namespace {

torch::serialize::InputArchive open_archive(const std::string& path) {
  if (!fs::exists(path)) throw RuntimeFailure("checkpoint not found: '" + path + "'");
  torch::serialize::InputArchive ar;
  try {
    ar.load_from(path);
  } catch (const c10::Error& e) {
    throw RuntimeFailure("cannot read checkpoint '" + path + "'");
  }
  return ar;
}

std::string read_string(torch::serialize::InputArchive& ar, const std::string& key) {
  c10::IValue v;
  ar.read(key, v);
  return v.toStringRef();
}

}  // namespace

void Trainer::load(const std::string& path) {
  auto ar = open_archive(path);
  const auto hash = read_string(ar, "config_hash");
  if (hash != config_hash(cfg_))
    throw ValidationError("checkpoint config hash " + hash + " does not match " + config_hash(cfg_));
  auto section = [&](const std::string& key, auto&& take) {
    torch::serialize::InputArchive sub;
    ar.read(key, sub);
    take(sub);
  };
  section("repnet", [&](auto& a) { rep->load(a); });
  section("tranet", [&](auto& a) { tra->load(a); });
  section("discriminator", [&](auto& a) { disc->load(a); });
  section("optim_repnet", [&](auto& a) { opt_repnet->load(a); });
  section("optim_tranet", [&](auto& a) { opt_tranet->load(a); });
  section("optim_discriminator", [&](auto& a) { opt_disc->load(a); });
  std::istringstream rng_state(read_string(ar, "rng"));
  rng_state >> rng_;
  torch::Tensor gen_state;
  ar.read("generator", gen_state);
  gen_.set_state(gen_state);
  c10::IValue v;
  ar.read("step", v);
  step_ = v.toInt();
  ar.read("warmup_iters", v);
  warmup_iters_ = v.toInt();
}

std::unique_ptr<Trainer> load_trainer(const std::string& path) {
  auto ar = open_archive(path);
  const auto cfg = parse_config(read_string(ar, "config"));
  auto trainer = std::make_unique<Trainer>(cfg);
  trainer->load(path);
  return trainer;
}

TrainResult train(const Config& cfg, const std::vector<scenes::VideoClip>& clips, int64_t max_steps) {
  cfg.validate();
  require(clips.size() >= 2, "train: need at least two clips");
  torch::set_num_threads(cfg.train.threads);
  const int64_t batch_size = std::min<int64_t>(cfg.train.batch_size, static_cast<int64_t>(clips.size()));
  const int64_t n = static_cast<int64_t>(clips.size());
  const int64_t iters_per_epoch = n / batch_size + (n % batch_size >= 2 ? 1 : 0);
  Trainer trainer(cfg, iters_per_epoch);
  auto encoder = textenc::make_encoder(cfg);

  fs::create_directories(cfg.train.out_dir);
  TrainResult result;
  result.log_path = (fs::path(cfg.train.out_dir) / "log.jsonl").string();
  std::ofstream log_file(result.log_path);
  if (!log_file) throw RuntimeFailure("cannot write '" + result.log_path + "'");
  log::info("train: " + std::to_string(n) + " clips, " + std::to_string(iters_per_epoch) + " iterations/epoch, warmup " +
            std::to_string(trainer.warmup_iters()) + ", config " + config_hash(cfg));

  auto checkpoint = [&] {
    const auto path = (fs::path(cfg.train.out_dir) / ("ckpt_" + std::to_string(trainer.step()) + ".pt")).string();
    trainer.save(path);
    return path;
  };

  std::vector<std::size_t> order(clips.size());
  bool done = false;
  for (int epoch = 0; epoch < cfg.train.epochs && !done; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[uniform_index(trainer.rng(), i + 1)]);
    for (int64_t start = 0; start < n && !done; start += batch_size) {
      const int64_t end = std::min(n, start + batch_size);
      if (end - start < 2) break;
      std::vector<const scenes::VideoClip*> members;
      for (int64_t i = start; i < end; ++i) members.push_back(&clips[order[static_cast<std::size_t>(i)]]);
      const auto batch = make_batch(members, cfg.data.k_random, trainer.rng(), *encoder);
      const auto entry = trainer.train_step(batch);
      log_file << entry.to_json().dump() << std::endl;
      result.log.push_back(entry);
      if (entry.step % 50 == 0)
        log::info("step " + std::to_string(entry.step) + " L_rec " + std::to_string(entry.rec) + " total " +
                  std::to_string(entry.total));
      if (cfg.train.checkpoint_every > 0 && trainer.step() % cfg.train.checkpoint_every == 0) checkpoint();
      done = max_steps > 0 && trainer.step() >= max_steps;
    }
  }
  log_file.flush();
  result.checkpoint = checkpoint();
  return result;
}

TrainResult train(const Config& cfg) {
  return train(cfg, scenes::load_split(cfg.data.root, "train", cfg.data.n_train));
}

scenes::VideoClip edit_clip(Trainer& trainer, const scenes::VideoClip& clip, const std::string& text,
                            std::uint64_t seed) {
  auto encoder = textenc::make_encoder(trainer.config());
  Rng rng(seed);
  return tranet::manipulate_clip(clip, text, trainer.rep, trainer.tra, *encoder, trainer.config().data.k_random, rng,
                                 trainer.config().ode_eval);
}

json MetricReport::to_json() const {
  return json{{"mig", mig},
              {"aam", aam},
              {"mp", mp},
              {"frechet_frame", frechet_frame},
              {"frechet_video", frechet_video},
              {"is", inception_score},
              {"probe_accuracy", probe_accuracy},
              {"config_hash", config_hash},
              {"seed", seed},
              {"n_samples", n_samples},
              {"bins", bins}};
}

namespace {

std::vector<scenes::VideoClip> head(const std::vector<scenes::VideoClip>& clips, int max_clips) {
  if (max_clips <= 0 || static_cast<std::size_t>(max_clips) >= clips.size()) return clips;
  return {clips.begin(), clips.begin() + max_clips};
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

MetricReport evaluate(Trainer& trainer, const std::vector<scenes::VideoClip>& train_clips,
                      const std::vector<scenes::VideoClip>& test_in, const EvalOptions& opts) {
  torch::NoGradGuard guard;
  const auto test = head(test_in, opts.max_clips);
  require(test.size() >= 2, "evaluate: need at least two test clips");
  const auto& cfg = trainer.config();
  MetricReport r;
  r.seed = opts.seed;
  r.config_hash = config_hash(cfg);
  r.bins = opts.bins;

  const auto table = metrics::collect_codes(trainer.rep, test, cfg.data.k_random, opts.seed, cfg.ode_eval);
  r.n_samples = table.codes.rows();
  r.mig = metrics::mig(table, opts.bins);
  r.aam = metrics::aam(table, opts.bins);

  metrics::AttributeProbe probe(cfg.data.resolution);
  {
    torch::manual_seed(derive_seed(opts.seed, 0x9b0));
    torch::AutoGradMode enable(true);
    metrics::ProbeTraining pt;
    pt.steps = opts.probe_steps;
    pt.seed = opts.seed;
    r.probe_accuracy = metrics::train_probe(probe, train_clips, test, pt);
  }

  textenc::TemplateEncoder basis;
  Rng rng(derive_seed(opts.seed, 0xed17));
  const auto perm = adversary::derangement(static_cast<int64_t>(test.size()), rng);
  std::vector<double> mp;
  std::vector<torch::Tensor> real_frames, edited_frames, real_clips, edited_clips;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& target = test[static_cast<std::size_t>(perm[i])].descriptions.front();
    const auto edited = edit_clip(trainer, test[i], target, derive_seed(opts.seed, i));
    const auto sim = metrics::image_text_similarity(probe, basis, edited.frames, basis.encode(target));
    mp.push_back(metrics::mp_score(edited.frames, test[i].frames, sim));
    real_frames.push_back(test[i].frames);
    edited_frames.push_back(edited.frames);
    real_clips.push_back(test[i].frames);
    edited_clips.push_back(edited.frames);
  }
  r.mp = mean_of(mp);

  metrics::RandomFrameEmbedder frame_embedder(derive_seed(cfg.seed, 21));
  metrics::RandomVideoEmbedder video_embedder(derive_seed(cfg.seed, 22));
  r.frechet_frame = metrics::frechet_distance(metrics::to_eigen(frame_embedder.embed(torch::cat(real_frames))),
                                              metrics::to_eigen(frame_embedder.embed(torch::cat(edited_frames))));
  r.frechet_video = metrics::frechet_distance(metrics::to_eigen(video_embedder.embed(torch::stack(real_clips))),
                                              metrics::to_eigen(video_embedder.embed(torch::stack(edited_clips))));
  r.inception_score =
      metrics::inception_score(metrics::to_eigen(probe->class_probabilities(torch::cat(edited_frames))));
  return r;
}

double editing_gain_fraction(Trainer& trainer, metrics::AttributeProbe& probe,
                             const std::vector<scenes::VideoClip>& clips, std::uint64_t seed) {
  torch::NoGradGuard guard;
  require(clips.size() >= 2, "editing_gain_fraction: need at least two clips");
  textenc::TemplateEncoder basis;
  Rng rng(derive_seed(seed, 0xed17));
  const auto perm = adversary::derangement(static_cast<int64_t>(clips.size()), rng);
  int wins = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& target = clips[static_cast<std::size_t>(perm[i])].descriptions.front();
    const auto w = basis.encode(target);
    const auto edited = edit_clip(trainer, clips[i], target, derive_seed(seed, i));
    const double after = mean_of(metrics::image_text_similarity(probe, basis, edited.frames, w));
    const double before = mean_of(metrics::image_text_similarity(probe, basis, clips[i].frames, w));
    if (after > before) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(clips.size());
}

}  // namespace dicomo::harness
