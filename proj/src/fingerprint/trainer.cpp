#include "advbiom/fingerprint/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "advbiom/advgen/losses.hpp"
#include "advbiom/advgen/trainer.hpp"
#include "advbiom/nn/batch.hpp"
#include "advbiom/nn/checkpoint.hpp"
#include "advbiom/nn/optim.hpp"

namespace advbiom::fingerprint {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tensor;
using nn::Var;

FpLossTerms fp_generator_loss(const Var& gan_term, const Var& h_target, const Var& h_pred, const Var& h_probe,
                              const Var& x, const Var& x_disp, const Var& x_adv, const FpLossWeights& w) {
  FpLossTerms t;
  t.gan = gan_term;
  t.mmap_sim = mmap_sim_loss(h_target, h_pred);
  t.mmap_dis = mmap_dis_loss(h_pred, h_probe);
  t.pixel = pixel_loss(x, x_disp, x_adv);
  t.total = t.gan + t.mmap_sim * w.lambda_mmap_sim + t.mmap_dis * w.lambda_mmap_dis + t.pixel * w.lambda_pixel;
  return t;
}

namespace {

json to_json(const DisplacementNetConfig& c) {
  return {{"base_width", c.base_width}, {"res_blocks", c.res_blocks}, {"output_gain", c.output_gain}};
}
json to_json(const DistortionNetConfig& c) { return {{"base_width", c.base_width}}; }
json to_json(const DistortionConfig& c) {
  return {{"c", c.c}, {"sigma", c.sigma}, {"unit_px", c.unit_px}, {"margin", c.margin}};
}
json to_json(const advgen::DiscriminatorConfig& c) {
  return {{"channels", c.channels}, {"base_width", c.base_width}, {"layers", c.layers},
          {"strided_layers", c.strided_layers}};
}
json to_json(const FpLossRecord& r) {
  return json::array({r.step, r.total, r.gan, r.mmap_sim, r.mmap_dis, r.pixel, r.d_loss});
}
FpLossRecord record_from(const json& j) {
  return {j.at(0).get<int>(), j.at(1), j.at(2), j.at(3), j.at(4), j.at(5), j.at(6)};
}

DisplacementNetConfig disp_config_from(const json& j) {
  return {j.at("base_width"), j.at("res_blocks"), j.at("output_gain")};
}
DistortionConfig distortion_from(const json& j) { return {j.at("c"), j.at("sigma"), j.at("unit_px"), j.at("margin")}; }

void write_log_row(std::ofstream& os, const FpLossRecord& r) {
  char line[320];
  std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.total, r.gan, r.mmap_sim,
                r.mmap_dis, r.pixel, r.d_loss);
  os << line;
  os.flush();
}

void prefix_into(const std::map<std::string, Tensor>& src, const std::string& prefix,
                 std::map<std::string, Tensor>& dst) {
  for (const auto& [k, v] : src) dst[prefix + k] = v;
}

std::map<std::string, Tensor> strip_prefix(const std::map<std::string, Tensor>& src, const std::string& prefix) {
  std::map<std::string, Tensor> out;
  for (const auto& [k, v] : src)
    if (k.rfind(prefix, 0) == 0) out[k.substr(prefix.size())] = v;
  return out;
}

void zero_grads(const nn::ParameterSet& ps) {
  for (const auto& [name, v] : ps.params()) v.zero_grad();
}

// Probe maps, detected minutiae and the displaced target maps for a batch.
struct Targets {
  Var h_probe;
  Var h_target;
  std::vector<std::vector<MinutiaPoint>> probe, target;
};

Targets make_targets(const MinutiaeExtractor& e, const Var& x, const DisplacementConfig& disp, double m_t,
                     double render_sigma, Rng& rng) {
  Targets t;
  {
    nn::NoGradGuard guard;
    t.h_probe = e.forward(x).detach();
  }
  const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
  std::vector<MinutiaeMap> maps;
  maps.reserve(n);
  for (int s = 0; s < n; ++s) {
    const MinutiaeMap probe_map(nn::unstack_image(t.h_probe.value(), s));
    t.probe.push_back(detect_minutiae(probe_map, m_t));
    t.target.push_back(displace_minutiae(t.probe.back(), disp, h, w, rng));
    maps.push_back(render_minutiae_map(t.target.back(), h, w, render_sigma));
  }
  std::vector<const FloatImage*> ptrs;
  for (const auto& m : maps) ptrs.push_back(&m);
  t.h_target = Var(nn::stack_images(ptrs));
  return t;
}

void check_probe_shapes(const std::vector<NormalizedImage>& images) {
  if (images.empty()) throw std::invalid_argument("train_fp: no fingerprint images");
  const auto& first = images.front();
  if (first.channels() != 1) throw std::invalid_argument("train_fp: fingerprints must be single-channel");
  if (first.height() % 8 != 0 || first.width() % 8 != 0) {
    throw ShapeError("train_fp: fingerprint height and width must be multiples of 8");
  }
  for (const auto& im : images) {
    if (!(im.shape() == first.shape())) throw ShapeError("train_fp: fingerprints differ in shape");
  }
}

}  // namespace

fs::path fp_checkpoint_path(const fs::path& out_dir, int step) {
  char name[64];
  std::snprintf(name, sizeof(name), "fp_step%06d.ckpt", step);
  return out_dir / name;
}

FpModel train_fp(const std::vector<NormalizedImage>& images, const MinutiaeExtractor& extractor,
                 const FpTrainConfig& cfg, const std::optional<fs::path>& resume_from, const FpStepCallback& on_step) {
  check_probe_shapes(images);
  if (cfg.batch_size < 1 || cfg.steps < 0) throw std::invalid_argument("train_fp: bad batch_size/steps");
  const FpLossWeights& w = cfg.weights;
  if (!(w.lambda_mmap_sim > 0 && w.lambda_mmap_dis > 0 && w.lambda_pixel > 0)) {
    throw std::invalid_argument("train_fp: loss weights must be positive");
  }
  if (cfg.displacement.d < 0) throw std::invalid_argument("train_fp: displacement d must be >= 0");
  if (cfg.discriminator.channels != 1) throw std::invalid_argument("train_fp: discriminator must take 1 channel");
  const int height = images.front().height(), width = images.front().width();

  FpModel model;
  model.g_disp = std::make_unique<DisplacementNet>(cfg.disp_net, derive_seed(cfg.seed, "fp-Gdisp"));
  model.g_dist =
      std::make_unique<DistortionNet>(cfg.dist_net, cfg.distortion, height, width, derive_seed(cfg.seed, "fp-Gdist"));
  model.d = std::make_unique<advgen::DiscriminatorNet>(cfg.discriminator, derive_seed(cfg.seed, "fp-D"));
  DisplacementNet& g_disp = *model.g_disp;
  DistortionNet& g_dist = *model.g_dist;
  advgen::DiscriminatorNet& d = *model.d;
  const nn::AdamConfig acfg{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8};
  nn::Adam opt_disp(g_disp.params(), acfg);
  nn::Adam opt_dist(g_dist.params(), acfg);
  nn::Adam opt_d(d.params(), acfg);
  Rng rng(derive_seed(cfg.seed, "fp-batches"));

  if (resume_from) {
    const nn::Checkpoint ck = nn::load_checkpoint(*resume_from);
    if (ck.meta.value("architecture", "") != "fp_training") {
      throw std::runtime_error(resume_from->string() + " is not a fingerprint training checkpoint");
    }
    if (ck.meta.at("disp_net") != to_json(cfg.disp_net) || ck.meta.at("dist_net") != to_json(cfg.dist_net) ||
        ck.meta.at("distortion") != to_json(cfg.distortion) ||
        ck.meta.at("discriminator") != to_json(cfg.discriminator)) {
      throw std::runtime_error("resume checkpoint architecture differs from the config");
    }
    nn::import_parameters(g_disp.params(), "Gdisp.", ck.arrays);
    nn::import_parameters(g_dist.params(), "Gdist.", ck.arrays);
    nn::import_parameters(d.params(), "D.", ck.arrays);
    model.step = ck.meta.at("step");
    opt_disp.load_state(strip_prefix(ck.arrays, "optGdisp."), ck.meta.at("adam_steps_disp"));
    opt_dist.load_state(strip_prefix(ck.arrays, "optGdist."), ck.meta.at("adam_steps_dist"));
    opt_d.load_state(strip_prefix(ck.arrays, "optD."), ck.meta.at("adam_steps_d"));
    nn::restore_rng(rng, ck.meta.at("rng"));
    for (const auto& r : ck.meta.at("trace")) model.trace.push_back(record_from(r));
  }

  std::ofstream log;
  fs::path last_checkpoint;
  auto save = [&](int step) {
    nn::Checkpoint ck;
    ck.meta["architecture"] = "fp_training";
    ck.meta["disp_net"] = to_json(cfg.disp_net);
    ck.meta["dist_net"] = to_json(cfg.dist_net);
    ck.meta["distortion"] = to_json(cfg.distortion);
    ck.meta["discriminator"] = to_json(cfg.discriminator);
    ck.meta["displacement_d"] = cfg.displacement.d;
    ck.meta["m_t"] = cfg.m_t;
    ck.meta["render_sigma"] = cfg.render_sigma;
    ck.meta["height"] = height;
    ck.meta["width"] = width;
    ck.meta["step"] = step;
    ck.meta["adam_steps_disp"] = opt_disp.step_count();
    ck.meta["adam_steps_dist"] = opt_dist.step_count();
    ck.meta["adam_steps_d"] = opt_d.step_count();
    ck.meta["rng"] = nn::serialize_rng(rng);
    ck.meta["weights"] = {{"lambda_mmap_sim", w.lambda_mmap_sim},
                          {"lambda_mmap_dis", w.lambda_mmap_dis},
                          {"lambda_pixel", w.lambda_pixel}};
    ck.meta["trace"] = json::array();
    for (const auto& r : model.trace) ck.meta["trace"].push_back(to_json(r));
    nn::export_parameters(g_disp.params(), "Gdisp.", ck.arrays);
    nn::export_parameters(g_dist.params(), "Gdist.", ck.arrays);
    nn::export_parameters(d.params(), "D.", ck.arrays);
    prefix_into(opt_disp.state(), "optGdisp.", ck.arrays);
    prefix_into(opt_dist.state(), "optGdist.", ck.arrays);
    prefix_into(opt_d.state(), "optD.", ck.arrays);
    last_checkpoint = fp_checkpoint_path(cfg.out_dir, step);
    nn::save_checkpoint(last_checkpoint, ck);
  };
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    log.open(cfg.out_dir / "train_log.csv", std::ios::trunc);
    log << "step,L,L_gan,L_mmap_sim,L_mmap_dis,L_pixel,L_D\n";
    for (const auto& r : model.trace) write_log_row(log, r);
    if (resume_from) last_checkpoint = *resume_from;
  }

  const int n = static_cast<int>(images.size());
  for (int step = model.step + 1; step <= cfg.steps; ++step) {
    std::vector<const FloatImage*> batch;
    for (int b = 0; b < cfg.batch_size; ++b) batch.push_back(&images[uniform_int(rng, 0, n - 1)]);
    const Var x(nn::stack_images(batch));
    const Targets t = make_targets(extractor, x, cfg.displacement, cfg.m_t, cfg.render_sigma, rng);
    std::vector<SmoothField> fields;
    for (int b = 0; b < cfg.batch_size; ++b) fields.push_back(SmoothField::sample(rng, height, width));

    const Var x_disp = g_disp.forward(x, t.h_target);
    const Var h_pred = extractor.forward(x_disp);
    const ControlPointSet cps = dist_forward(g_dist, x_disp, h_pred.detach(), fields);
    const Var x_adv = tps_warp(x_disp, cps.points, cps.displacements);

    d.params().zero_grad();
    const advgen::GanLosses dl = advgen::gan_losses(d, x, x_adv.detach(), true);
    const double d_value = dl.d_loss.item();
    if (std::isfinite(d_value)) {
      dl.d_loss.backward();
      opt_d.step();
    }

    g_disp.params().zero_grad();
    g_dist.params().zero_grad();
    d.params().zero_grad();
    const advgen::GanLosses gl = advgen::gan_losses(d, x, x_adv, true);
    const FpLossTerms terms = fp_generator_loss(gl.g_loss, t.h_target, h_pred, t.h_probe, x, x_disp, x_adv, w);
    const FpLossRecord rec{step,
                           terms.total.item(),
                           terms.gan.item(),
                           terms.mmap_sim.item(),
                           terms.mmap_dis.item(),
                           terms.pixel.item(),
                           d_value};
    if (!std::isfinite(rec.total) || !std::isfinite(rec.d_loss)) {
      throw advgen::TrainingDiverged("fingerprint training diverged at step " + std::to_string(step), step,
                                     last_checkpoint);
    }
    terms.total.backward();
    opt_disp.step();
    opt_dist.step();
    d.params().zero_grad();
    zero_grads(extractor.params());

    model.trace.push_back(rec);
    model.step = step;
    if (log.is_open()) write_log_row(log, rec);
    if (on_step) on_step(rec);
    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) save(step);
  }
  if (!cfg.out_dir.empty() && (cfg.checkpoint_every <= 0 || model.step % cfg.checkpoint_every != 0)) save(model.step);
  if (!cfg.out_dir.empty()) save_fp_attack(cfg.out_dir / "fp_attack.ckpt", model, cfg);
  return model;
}

void save_fp_attack(const fs::path& path, const FpModel& model, const FpTrainConfig& cfg) {
  nn::Checkpoint ck;
  ck.meta["architecture"] = "fp_attack";
  ck.meta["disp_net"] = to_json(model.g_disp->config());
  ck.meta["dist_net"] = to_json(model.g_dist->config());
  ck.meta["distortion"] = to_json(model.g_dist->distortion());
  ck.meta["displacement_d"] = cfg.displacement.d;
  ck.meta["m_t"] = cfg.m_t;
  ck.meta["render_sigma"] = cfg.render_sigma;
  ck.meta["height"] = model.g_dist->height();
  ck.meta["width"] = model.g_dist->width();
  nn::export_parameters(model.g_disp->params(), "Gdisp.", ck.arrays);
  nn::export_parameters(model.g_dist->params(), "Gdist.", ck.arrays);
  nn::save_checkpoint(path, ck);
}

FpAttack load_fp_attack(const fs::path& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  const std::string arch = ck.meta.value("architecture", "");
  if (arch != "fp_attack" && arch != "fp_training") {
    throw std::runtime_error(path.string() + " holds no fingerprint attack");
  }
  FpAttack a;
  a.g_disp = std::make_unique<DisplacementNet>(disp_config_from(ck.meta.at("disp_net")), 0);
  a.g_dist = std::make_unique<DistortionNet>(DistortionNetConfig{ck.meta.at("dist_net").at("base_width")},
                                             distortion_from(ck.meta.at("distortion")), ck.meta.at("height"),
                                             ck.meta.at("width"), 0);
  nn::import_parameters(a.g_disp->params(), "Gdisp.", ck.arrays);
  nn::import_parameters(a.g_dist->params(), "Gdist.", ck.arrays);
  a.displacement.d = ck.meta.at("displacement_d");
  a.m_t = ck.meta.at("m_t");
  a.render_sigma = ck.meta.at("render_sigma");
  return a;
}

FpAttackResult attack_fingerprint(const FpAttack& attack, const MinutiaeExtractor& extractor,
                                  const NormalizedImage& x, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  if (x.channels() != 1) throw std::invalid_argument("attack_fingerprint: fingerprints must be single-channel");
  if (x.height() != attack.g_dist->height() || x.width() != attack.g_dist->width()) {
    throw ShapeError("attack_fingerprint: probe size differs from the trained model");
  }
  nn::NoGradGuard guard;
  Rng rng(derive_seed(seed, "fp-attack"));
  const Var xv(nn::stack_images(std::vector<const FloatImage*>{&x}));
  const Targets t = make_targets(extractor, xv, attack.displacement, attack.m_t, attack.render_sigma, rng);
  const std::vector<SmoothField> fields{SmoothField::sample(rng, x.height(), x.width())};
  const Var x_disp = attack.g_disp->forward(xv, t.h_target);
  const Var h_pred = extractor.forward(x_disp);
  const DistortionConfig& dc = attack.g_dist->distortion();
  const ControlPointSet cps = dist_forward(*attack.g_dist, x_disp, h_pred, fields);
  const Var x_adv = tps_warp(x_disp, cps.points, cps.displacements);

  FpAttackResult out;
  out.x_disp = nn::unstack_normalized(x_disp.value(), 0);
  out.x_adv = nn::unstack_normalized(x_adv.value(), 0);
  out.probe_minutiae = t.probe.front();
  out.target_minutiae = t.target.front();
  for (int k = 0; k < dc.c; ++k) {
    out.control_points.push_back({cps.points.value()[2 * k], cps.points.value()[2 * k + 1]});
    out.displacements.push_back({cps.displacements.value()[2 * k], cps.displacements.value()[2 * k + 1]});
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace advbiom::fingerprint
