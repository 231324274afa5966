#include "advbiom/advgen/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "advbiom/nn/batch.hpp"
#include "advbiom/nn/checkpoint.hpp"
#include "advbiom/nn/optim.hpp"

namespace advbiom::advgen {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Tensor;
using nn::Var;

double area_scaled_eps(double eps, int height, int width, int reference) {
  return eps * std::sqrt(static_cast<double>(height) * width / (static_cast<double>(reference) * reference));
}

namespace {

json to_json(const GeneratorConfig& c) {
  return {{"mode", attacks::to_string(c.mode)}, {"channels", c.channels}, {"base_width", c.base_width},
          {"res_blocks", c.res_blocks}, {"output_gain", c.output_gain}};
}

GeneratorConfig generator_config_from(const json& j) {
  GeneratorConfig c;
  c.mode = attacks::parse_attack_mode(j.at("mode"));
  c.channels = j.at("channels");
  c.base_width = j.at("base_width");
  c.res_blocks = j.at("res_blocks");
  c.output_gain = j.at("output_gain");
  return c;
}

json to_json(const DiscriminatorConfig& c) {
  return {{"channels", c.channels}, {"base_width", c.base_width}, {"layers", c.layers},
          {"strided_layers", c.strided_layers}};
}

json to_json(const LossRecord& r) {
  return json::array({r.step, r.g_total, r.d_loss, r.identity, r.perturbation, r.gan});
}

LossRecord record_from(const json& j) {
  return {j.at(0).get<int>(), j.at(1), j.at(2), j.at(3), j.at(4), j.at(5)};
}

void write_log_row(std::ofstream& os, const LossRecord& r) {
  char line[256];
  std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.g_total, r.d_loss, r.identity,
                r.perturbation, r.gan);
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

}  // namespace

fs::path checkpoint_path(const fs::path& out_dir, int step) {
  char name[64];
  std::snprintf(name, sizeof(name), "advgen_step%06d.ckpt", step);
  return out_dir / name;
}

AdvGenModel train_advgen(const FaceTrainingSet& data, const matcher::Matcher& m, const AdvGenTrainConfig& cfg,
                         const std::optional<fs::path>& resume_from, const StepCallback& on_step) {
  if (data.images.empty() || data.images.size() != data.labels.size()) {
    throw std::invalid_argument("train_advgen: need images with one label each");
  }
  if (cfg.batch_size < 1 || cfg.steps < 0) throw std::invalid_argument("train_advgen: bad batch_size/steps");
  for (const auto& im : data.images) matcher::check_input(m, im);
  const bool imp = cfg.generator.mode == AttackMode::impersonation;
  if (imp) {
    bool two = false;
    for (int l : data.labels) two |= l != data.labels.front();
    if (!two) throw std::invalid_argument("train_advgen: impersonation needs at least two identities");
  }

  AdvGenModel model;
  model.generator = std::make_unique<GeneratorNet>(cfg.generator, derive_seed(cfg.seed, "advgen-G"));
  model.discriminator = std::make_unique<DiscriminatorNet>(cfg.discriminator, derive_seed(cfg.seed, "advgen-D"));
  GeneratorNet& g = *model.generator;
  DiscriminatorNet& d = *model.discriminator;
  const nn::AdamConfig acfg{cfg.learning_rate, cfg.beta1, cfg.beta2, 1e-8};
  nn::Adam opt_g(g.params(), acfg);
  nn::Adam opt_d(d.params(), acfg);
  Rng batch_rng(derive_seed(cfg.seed, "advgen-batches"));

  if (resume_from) {
    const nn::Checkpoint ck = nn::load_checkpoint(*resume_from);
    if (ck.meta.value("architecture", "") != "advgen_training") {
      throw std::runtime_error(resume_from->string() + " is not an advgen training checkpoint");
    }
    if (ck.meta.at("generator") != to_json(cfg.generator) || ck.meta.at("discriminator") != to_json(cfg.discriminator)) {
      throw std::runtime_error("resume checkpoint architecture differs from the config");
    }
    nn::import_parameters(g.params(), "G.", ck.arrays);
    nn::import_parameters(d.params(), "D.", ck.arrays);
    model.step = ck.meta.at("step");
    opt_g.load_state(strip_prefix(ck.arrays, "optG."), ck.meta.at("adam_steps_g"));
    opt_d.load_state(strip_prefix(ck.arrays, "optD."), ck.meta.at("adam_steps_d"));
    nn::restore_rng(batch_rng, ck.meta.at("batch_rng"));
    for (const auto& r : ck.meta.at("trace")) model.trace.push_back(record_from(r));
  }

  std::ofstream log;
  fs::path last_checkpoint;
  auto save = [&](int step) {
    nn::Checkpoint ck;
    ck.meta["architecture"] = "advgen_training";
    ck.meta["generator"] = to_json(cfg.generator);
    ck.meta["discriminator"] = to_json(cfg.discriminator);
    ck.meta["step"] = step;
    ck.meta["adam_steps_g"] = opt_g.step_count();
    ck.meta["adam_steps_d"] = opt_d.step_count();
    ck.meta["batch_rng"] = nn::serialize_rng(batch_rng);
    ck.meta["weights"] = {{"lambda_i", cfg.weights.lambda_i}, {"lambda_p", cfg.weights.lambda_p}, {"eps", cfg.weights.eps}};
    ck.meta["trace"] = json::array();
    for (const auto& r : model.trace) ck.meta["trace"].push_back(to_json(r));
    nn::export_parameters(g.params(), "G.", ck.arrays);
    nn::export_parameters(d.params(), "D.", ck.arrays);
    prefix_into(opt_g.state(), "optG.", ck.arrays);
    prefix_into(opt_d.state(), "optD.", ck.arrays);
    last_checkpoint = checkpoint_path(cfg.out_dir, step);
    nn::save_checkpoint(last_checkpoint, ck);
  };
  if (!cfg.out_dir.empty()) {
    fs::create_directories(cfg.out_dir);
    log.open(cfg.out_dir / "train_log.csv", std::ios::trunc);
    log << "step,L_G,L_D,L_idt,L_prt,L_G_gan\n";
    for (const auto& r : model.trace) write_log_row(log, r);
    if (resume_from) last_checkpoint = *resume_from;
  }

  const int n = static_cast<int>(data.images.size());
  for (int step = model.step + 1; step <= cfg.steps; ++step) {
    std::vector<const FloatImage*> probes, targets;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const int i = uniform_int(batch_rng, 0, n - 1);
      probes.push_back(&data.images[i]);
      if (imp) {
        int t = i;
        while (data.labels[t] == data.labels[i]) t = uniform_int(batch_rng, 0, n - 1);
        targets.push_back(&data.images[t]);
      }
    }
    const Var x(nn::stack_images(probes));
    const Var y = imp ? Var(nn::stack_images(targets)) : Var();

    const Var mask = g.forward(x, y);
    const Var x_adv = compose(x, mask);

    d.params().zero_grad();
    const GanLosses dl = gan_losses(d, x, x_adv.detach(), true);
    const double d_value = dl.d_loss.item();
    if (std::isfinite(d_value)) {
      dl.d_loss.backward();
      opt_d.step();
    }

    g.params().zero_grad();
    d.params().zero_grad();
    const GeneratorLossTerms t = generator_loss_for_mask(d, m, cfg.generator.mode, x, y, mask, cfg.weights, true);
    const LossRecord rec{step, t.total.item(), d_value, t.identity.item(), t.perturbation.item(), t.gan.item()};
    if (!std::isfinite(rec.g_total) || !std::isfinite(rec.d_loss)) {
      throw TrainingDiverged("advgen training diverged at step " + std::to_string(step), step, last_checkpoint);
    }
    t.total.backward();
    opt_g.step();
    d.params().zero_grad();

    model.trace.push_back(rec);
    model.step = step;
    if (log.is_open()) write_log_row(log, rec);
    if (on_step) on_step(rec);
    if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0) save(step);
  }
  if (!cfg.out_dir.empty() && (cfg.checkpoint_every <= 0 || model.step % cfg.checkpoint_every != 0)) save(model.step);
  if (!cfg.out_dir.empty()) save_generator(cfg.out_dir / "generator.ckpt", g);
  return model;
}

void save_generator(const fs::path& path, const GeneratorNet& g) {
  nn::Checkpoint ck;
  ck.meta["architecture"] = "advgen_generator";
  ck.meta["generator"] = to_json(g.config());
  nn::export_parameters(g.params(), "G.", ck.arrays);
  nn::save_checkpoint(path, ck);
}

std::unique_ptr<GeneratorNet> load_generator(const fs::path& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path);
  const std::string arch = ck.meta.value("architecture", "");
  if (arch != "advgen_generator" && arch != "advgen_training") {
    throw std::runtime_error(path.string() + " holds no advgen generator");
  }
  auto g = std::make_unique<GeneratorNet>(generator_config_from(ck.meta.at("generator")), 0);
  nn::import_parameters(g->params(), "G.", ck.arrays);
  return g;
}

Synthesis synthesize(const GeneratorNet& g, const NormalizedImage& x, const NormalizedImage* target) {
  const auto t0 = std::chrono::steady_clock::now();
  nn::NoGradGuard guard;
  const Var xv(nn::stack_images(std::vector<const FloatImage*>{&x}));
  Var yv;
  if (target) {
    if (!(target->shape() == x.shape())) throw ShapeError("synthesize: target shape differs from probe");
    yv = Var(nn::stack_images(std::vector<const FloatImage*>{target}));
  }
  const Var mask = g.forward(xv, yv);
  Synthesis out;
  out.mask = nn::unstack_mask(mask.value(), 0);
  out.x_adv = clamp_compose(x, out.mask);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace advbiom::advgen
