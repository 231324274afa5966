#include "advbiom/cli/run_config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

namespace advbiom::cli {

namespace fs = std::filesystem;

const char* to_string(Modality m) { return m == Modality::face ? "face" : "fingerprint"; }

const char* to_string(AttackKind a) {
  switch (a) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
    case AttackKind::advgen: return "advgen";
  }
  return "?";
}

namespace {

// One walk over every configurable field drives both reading and writing, so the two
// can not drift apart. V provides section(name) and field(key, value, check).
struct Range {
  double lo = -INFINITY, hi = INFINITY;
  bool open_lo = false;
};
constexpr Range kAny{};
constexpr Range kPositive{0.0, INFINITY, true};
constexpr Range kNonNegative{0.0, INFINITY, false};
constexpr Range kUnit{0.0, 1.0, true};  // (0, 1]
constexpr Range kFraction{0.0, 1.0, false};  // [0, 1]

template <class V>
void walk(V& v, RunConfig& c) {
  v.section("");
  v.field("seed", c.seed, kAny);
  v.field("modality", c.modality, kAny);
  v.field("mode", c.mode, kAny);
  v.field("attack", c.attack, kAny);

  v.section("paths");
  v.field("data", c.paths.data, kAny);
  v.field("work", c.paths.work, kAny);
  v.field("matcher", c.paths.matcher, kAny);
  v.field("generator", c.paths.generator, kAny);
  v.field("extractor", c.paths.extractor, kAny);

  v.section("data");
  v.field("identities", c.data.identities, Range{2, INFINITY});
  v.field("per_identity", c.data.per_identity, Range{1, INFINITY});
  v.field("image_size", c.data.image_size, Range{16, INFINITY});
  v.field("test_fraction", c.data.test_fraction, Range{0.0, 1.0, true});

  v.section("matcher");
  v.field("kind", c.matcher.kind, kAny);
  v.field("command", c.matcher.command, kAny);
  v.field("base_width", c.matcher.arch.base_width, Range{1, INFINITY});
  v.field("embedding_dim", c.matcher.arch.embedding_dim, Range{2, INFINITY});
  v.field("steps", c.matcher.train.steps, kNonNegative);
  v.field("batch_size", c.matcher.train.batch_size, Range{1, INFINITY});
  v.field("learning_rate", c.matcher.train.learning_rate, kPositive);
  v.field("scale", c.matcher.train.scale, kPositive);
  v.field("margin", c.matcher.train.margin, kNonNegative);
  v.field("augment_shift", c.matcher.train.augment_shift, kNonNegative);

  v.section("advgen");
  v.field("base_width", c.advgen.generator.base_width, Range{1, INFINITY});
  v.field("res_blocks", c.advgen.generator.res_blocks, kNonNegative);
  v.field("output_gain", c.advgen.generator.output_gain, kPositive);
  v.field("disc_base_width", c.advgen.discriminator.base_width, Range{1, INFINITY});
  v.field("disc_layers", c.advgen.discriminator.layers, Range{1, INFINITY});
  v.field("disc_strided_layers", c.advgen.discriminator.strided_layers, kNonNegative);
  v.field("lambda_i", c.advgen.weights.lambda_i, kNonNegative);
  v.field("lambda_p", c.advgen.weights.lambda_p, kNonNegative);
  v.field("eps", c.advgen.weights.eps, kNonNegative);
  v.field("learning_rate", c.advgen.learning_rate, kPositive);
  v.field("beta1", c.advgen.beta1, Range{0.0, 1.0});
  v.field("beta2", c.advgen.beta2, Range{0.0, 1.0});
  v.field("batch_size", c.advgen.batch_size, Range{1, INFINITY});
  v.field("steps", c.advgen.steps, kNonNegative);
  v.field("checkpoint_every", c.advgen.checkpoint_every, kNonNegative);

  v.section("fgsm");
  v.field("epsilon", c.fgsm.epsilon, kNonNegative);
  v.field("probe_radius", c.fgsm.probe_radius, kNonNegative);

  v.section("pgd");
  v.field("epsilon", c.pgd.epsilon, kNonNegative);
  v.field("step_size", c.pgd.step_size, kPositive);
  v.field("max_iters", c.pgd.max_iters, Range{1, INFINITY});
  v.field("random_restarts", c.pgd.random_restarts, kNonNegative);
  v.field("probe_radius", c.pgd.probe_radius, kNonNegative);

  v.section("fingerprint");
  v.field("size", c.fp_synth.size, Range{16, INFINITY});
  v.field("ridge_period", c.fp_synth.ridge_period, Range{3.0, INFINITY});
  v.field("minutiae", c.fp_synth.minutiae, kNonNegative);
  v.field("min_separation", c.fp_synth.min_separation, kNonNegative);
  v.field("border", c.fp_synth.border, kNonNegative);
  v.field("core_clearance", c.fp_synth.core_clearance, kNonNegative);
  v.field("max_shift_px", c.fp_synth.max_shift_px, kNonNegative);
  v.field("max_rotation", c.fp_synth.max_rotation, kNonNegative);
  v.field("max_contrast", c.fp_synth.max_contrast, Range{0.0, 1.0});
  v.field("noise_sigma", c.fp_synth.noise_sigma, kNonNegative);
  v.field("d", c.fp.displacement.d, kNonNegative);
  v.field("c", c.fp.distortion.c, Range{3, INFINITY});
  v.field("sigma", c.fp.distortion.sigma, kPositive);
  v.field("unit_px", c.fp.distortion.unit_px, kPositive);
  v.field("margin", c.fp.distortion.margin, kNonNegative);
  v.field("lambda_mmap_sim", c.fp.weights.lambda_mmap_sim, kPositive);
  v.field("lambda_mmap_dis", c.fp.weights.lambda_mmap_dis, kPositive);
  v.field("lambda_pixel", c.fp.weights.lambda_pixel, kPositive);
  v.field("learning_rate", c.fp.learning_rate, kPositive);
  v.field("beta1", c.fp.beta1, Range{0.0, 1.0});
  v.field("beta2", c.fp.beta2, Range{0.0, 1.0});
  v.field("batch_size", c.fp.batch_size, Range{1, INFINITY});
  v.field("steps", c.fp.steps, kNonNegative);
  v.field("checkpoint_every", c.fp.checkpoint_every, kNonNegative);
  v.field("m_t", c.fp.m_t, kFraction);
  v.field("render_sigma", c.fp.render_sigma, kPositive);
  v.field("disp_base_width", c.fp.disp_net.base_width, Range{1, INFINITY});
  v.field("disp_res_blocks", c.fp.disp_net.res_blocks, kNonNegative);
  v.field("disp_output_gain", c.fp.disp_net.output_gain, kPositive);
  v.field("dist_base_width", c.fp.dist_net.base_width, Range{1, INFINITY});
  v.field("disc_base_width", c.fp.discriminator.base_width, Range{1, INFINITY});
  v.field("disc_layers", c.fp.discriminator.layers, Range{1, INFINITY});
  v.field("disc_strided_layers", c.fp.discriminator.strided_layers, kNonNegative);

  v.section("extractor");
  v.field("base_width", c.extractor.arch.base_width, Range{1, INFINITY});
  v.field("half_res_convs", c.extractor.arch.half_res_convs, kNonNegative);
  v.field("steps", c.extractor.steps, kNonNegative);
  v.field("batch_size", c.extractor.batch_size, Range{1, INFINITY});
  v.field("learning_rate", c.extractor.learning_rate, kPositive);
  v.field("positive_weight", c.extractor.positive_weight, kNonNegative);
  v.field("blank_fraction", c.extractor.blank_fraction, kFraction);

  v.section("eval");
  v.field("far", c.eval.far, kUnit);
  v.field("folds", c.eval.folds, Range{1, INFINITY});
  v.field("max_probes", c.eval.max_probes, kNonNegative);
}

std::string key_name(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

class Reader {
 public:
  Reader(const toml::table& root, fs::path base) : root_(root), base_(std::move(base)) {}

  void section(const std::string& name) {
    finish_section();
    name_ = name;
    seen_.clear();
    if (name.empty()) {
      table_ = &root_;
      return;
    }
    const toml::node* n = root_.get(name);
    if (n && !n->is_table()) throw ConfigError("'" + name + "' must be a table");
    table_ = n ? n->as_table() : nullptr;
    sections_.insert(name);
  }

  template <class T>
  void field(const std::string& key, T& value, Range r) {
    seen_.insert(key);
    const toml::node* n = table_ ? table_->get(key) : nullptr;
    if (!n) {
      if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (name_.empty() && key == "seed") throw ConfigError("'seed' is required");
      }
      return;
    }
    read(key_name(name_, key), *n, value, r);
  }

  void finish() {
    finish_section();
    for (const auto& [k, v] : root_) {
      const std::string key(k.str());
      if (v.is_table() && !sections_.contains(key)) throw ConfigError("unknown section '" + key + "'");
    }
  }

 private:
  void finish_section() {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      const std::string key(k.str());
      if (name_.empty() && v.is_table()) continue;
      if (!seen_.contains(key)) throw ConfigError("unknown key '" + key_name(name_, key) + "'");
    }
    table_ = nullptr;
  }

  static void check(const std::string& key, double v, Range r) {
    const bool low = r.open_lo ? v <= r.lo : v < r.lo;
    if (!std::isfinite(v) || low || v > r.hi) throw ConfigError("'" + key + "' is out of range");
  }

  static void read(const std::string& key, const toml::node& n, int& out, Range r) {
    const auto v = n.value_exact<std::int64_t>();
    if (!v) throw ConfigError("'" + key + "' must be an integer");
    check(key, static_cast<double>(*v), r);
    if (*v > INT32_MAX || *v < INT32_MIN) throw ConfigError("'" + key + "' is out of range");
    out = static_cast<int>(*v);
  }
  static void read(const std::string& key, const toml::node& n, std::uint64_t& out, Range) {
    const auto v = n.value_exact<std::int64_t>();
    if (!v || *v < 0) throw ConfigError("'" + key + "' must be a non-negative integer");
    out = static_cast<std::uint64_t>(*v);
  }
  static void read(const std::string& key, const toml::node& n, double& out, Range r) {
    double v;
    if (const auto f = n.value_exact<double>()) {
      v = *f;
    } else if (const auto i = n.value_exact<std::int64_t>()) {
      v = static_cast<double>(*i);
    } else {
      throw ConfigError("'" + key + "' must be a number");
    }
    check(key, v, r);
    out = v;
  }
  static std::string text(const std::string& key, const toml::node& n) {
    const auto v = n.value_exact<std::string>();
    if (!v) throw ConfigError("'" + key + "' must be a string");
    return *v;
  }
  static void read(const std::string& key, const toml::node& n, std::string& out, Range) { out = text(key, n); }
  void read(const std::string& key, const toml::node& n, fs::path& out, Range) const {
    const fs::path p = text(key, n);
    out = p.empty() || p.is_absolute() || base_.empty() ? p : (base_ / p).lexically_normal();
  }
  static void read(const std::string& key, const toml::node& n, Modality& out, Range) {
    const std::string s = text(key, n);
    if (s == "face") out = Modality::face;
    else if (s == "fingerprint") out = Modality::fingerprint;
    else throw ConfigError("'" + key + "' must be face or fingerprint");
  }
  static void read(const std::string& key, const toml::node& n, attacks::AttackMode& out, Range) {
    try {
      out = attacks::parse_attack_mode(text(key, n));
    } catch (const std::invalid_argument&) {
      throw ConfigError("'" + key + "' must be obfuscation or impersonation");
    }
  }
  static void read(const std::string& key, const toml::node& n, AttackKind& out, Range) {
    const std::string s = text(key, n);
    if (s == "fgsm") out = AttackKind::fgsm;
    else if (s == "pgd") out = AttackKind::pgd;
    else if (s == "advgen") out = AttackKind::advgen;
    else throw ConfigError("'" + key + "' must be fgsm, pgd or advgen");
  }

  const toml::table& root_;
  fs::path base_;
  const toml::table* table_ = nullptr;
  std::string name_;
  std::set<std::string> seen_, sections_;
};

class Writer {
 public:
  void section(const std::string& name) {
    if (name.empty()) {
      current_ = &root_;
      return;
    }
    current_ = root_.insert_or_assign(name, toml::table{}).first->second.as_table();
  }
  void field(const std::string& key, int v, Range) { current_->insert_or_assign(key, static_cast<std::int64_t>(v)); }
  void field(const std::string& key, std::uint64_t v, Range) {
    if (v > static_cast<std::uint64_t>(INT64_MAX)) throw ConfigError("seed does not fit a TOML integer");
    current_->insert_or_assign(key, static_cast<std::int64_t>(v));
  }
  void field(const std::string& key, double v, Range) { current_->insert_or_assign(key, v); }
  void field(const std::string& key, const std::string& v, Range) { current_->insert_or_assign(key, v); }
  void field(const std::string& key, const fs::path& v, Range) { current_->insert_or_assign(key, v.generic_string()); }
  void field(const std::string& key, Modality v, Range) { current_->insert_or_assign(key, std::string(to_string(v))); }
  void field(const std::string& key, attacks::AttackMode v, Range) {
    current_->insert_or_assign(key, std::string(attacks::to_string(v)));
  }
  void field(const std::string& key, AttackKind v, Range) {
    current_->insert_or_assign(key, std::string(to_string(v)));
  }

  std::string str() const {
    std::ostringstream os;
    os << root_ << '\n';
    return os.str();
  }

 private:
  toml::table root_;
  toml::table* current_ = &root_;
};

// Fields that follow from others: channel counts, image sizes and subsystem seeds.
void derive(RunConfig& c) {
  const bool face = c.modality == Modality::face;
  c.advgen.generator.mode = c.mode;
  c.advgen.generator.channels = face ? 3 : 1;
  c.advgen.discriminator.channels = c.advgen.generator.channels;
  c.matcher.arch.channels = face ? 3 : 1;
  c.matcher.arch.image_size = face ? c.data.image_size : c.fp_synth.size;
  c.extractor.synth = c.fp_synth;
  c.extractor.render_sigma = c.fp.render_sigma;
  c.fp.discriminator.channels = 1;

  c.matcher.train.seed = derive_seed(c.seed, "matcher");
  c.advgen.seed = derive_seed(c.seed, "advgen");
  c.fgsm.seed = derive_seed(c.seed, "fgsm");
  c.pgd.seed = derive_seed(c.seed, "pgd");
  c.extractor.seed = derive_seed(c.seed, "extractor");
  c.fp.seed = derive_seed(c.seed, "fingerprint");
}

void cross_check(const RunConfig& c) {
  if (c.matcher.kind != "toy" && c.matcher.kind != "external") {
    throw ConfigError("'matcher.kind' must be toy or external");
  }
  if (c.matcher.kind == "external" && c.matcher.command.empty()) {
    throw ConfigError("'matcher.command' is required for an external matcher");
  }
  if (c.modality == Modality::face && c.data.image_size % 16 != 0) {
    throw ConfigError("'data.image_size' must be a multiple of 16");
  }
  if (c.fp_synth.size % 8 != 0) throw ConfigError("'fingerprint.size' must be a multiple of 8");
  if (c.modality == Modality::fingerprint && c.mode != attacks::AttackMode::obfuscation) {
    throw ConfigError("fingerprint attacks are obfuscation only");
  }
  if (c.advgen.discriminator.strided_layers > c.advgen.discriminator.layers ||
      c.fp.discriminator.strided_layers > c.fp.discriminator.layers) {
    throw ConfigError("'disc_strided_layers' can not exceed 'disc_layers'");
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << "invalid TOML at line " << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }
  RunConfig c;
  Reader r(root, base_dir);
  walk(r, c);
  r.finish();
  derive(c);
  cross_check(c);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return parse_run_config(os.str(), fs::absolute(path).parent_path());
}

std::string to_toml(const RunConfig& cfg) {
  Writer w;
  RunConfig copy = cfg;
  walk(w, copy);
  return w.str();
}

bool operator==(const RunConfig& a, const RunConfig& b) { return to_toml(a) == to_toml(b); }

fs::path cache_dir() {
  const char* env = std::getenv("ADVBIOM_CACHE");
  return env && *env ? fs::path(env) : fs::current_path() / ".advbiom_cache";
}

}  // namespace advbiom::cli
