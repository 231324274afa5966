#include "advbiom/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "advbiom/core/image_io.hpp"
#include "advbiom/data/synth_faces.hpp"
#include "advbiom/eval/report.hpp"
#include "advbiom/fingerprint/synth.hpp"

namespace advbiom::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_exists(const fs::path& p, const std::string& what) {
  if (p.empty()) throw ConfigError(what + " path is not set");
  if (!fs::exists(p)) throw ConfigError(what + " not found: " + p.string());
}

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::ranges::transform(ext, ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

bool is_mask(const fs::path& p) {
  const std::string stem = p.stem().string();
  return stem.size() > 5 && stem.ends_with("_mask");
}

// Relative, '/'-separated paths of every image under dir, sorted.
std::vector<std::string> list_images(const fs::path& dir) {
  require_exists(dir, "image directory");
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && is_image(e.path()) && !is_mask(e.path())) {
      out.push_back(fs::relative(e.path(), dir).generic_string());
    }
  }
  std::ranges::sort(out);
  return out;
}

std::string identity_of(const std::string& rel) {
  const auto slash = rel.find('/');
  return slash == std::string::npos ? std::string() : rel.substr(0, slash);
}

std::string without_extension(const std::string& rel) { return fs::path(rel).replace_extension().generic_string(); }

ImageShape expected_shape(const RunConfig& cfg) {
  return cfg.modality == Modality::face ? ImageShape{cfg.data.image_size, cfg.data.image_size, 3}
                                        : ImageShape{cfg.fp_synth.size, cfg.fp_synth.size, 1};
}

NormalizedImage load_probe(const fs::path& p, const RunConfig& cfg) {
  NormalizedImage im = load_normalized(p);
  if (!(im.shape() == expected_shape(cfg))) {
    throw ShapeError(p.string() + " has shape " + to_string(im.shape()) + ", expected " +
                     to_string(expected_shape(cfg)));
  }
  return im;
}

data::DatasetManifest dataset_manifest(const RunConfig& cfg) {
  require_exists(cfg.paths.data, "dataset");
  const fs::path stored = cfg.paths.data / "manifest.json";
  if (fs::exists(stored)) return data::load_manifest(stored);
  char name[32];
  std::snprintf(name, sizeof(name), "%016llx.json",
                static_cast<unsigned long long>(derive_seed(0, fs::absolute(cfg.paths.data).generic_string())));
  data::DatasetManifest m = data::cached_manifest(cfg.paths.data, cache_dir() / "manifests" / name);
  data::assign_identity_splits(m, cfg.data.test_fraction, derive_seed(cfg.seed, "splits"));
  return m;
}

matcher::LabelledImages load_split(const data::DatasetManifest& m, data::Split split, const RunConfig& cfg) {
  matcher::LabelledImages out;
  std::map<std::string, int> labels;
  for (const auto& e : m.entries_in(split)) {
    const auto [it, fresh] = labels.try_emplace(e.identity, static_cast<int>(labels.size()));
    out.images.push_back(load_probe(m.absolute(e), cfg));
    out.labels.push_back(it->second);
  }
  if (out.images.empty()) throw ConfigError("dataset has no images in the requested split");
  return out;
}

std::unique_ptr<matcher::ToyEmbedder> load_toy_matcher(const RunConfig& cfg) {
  if (cfg.matcher.kind != "toy") throw ConfigError("this command needs the differentiable toy matcher");
  require_exists(cfg.paths.matcher, "matcher checkpoint");
  return matcher::load_toy_embedder(cfg.paths.matcher);
}

std::unique_ptr<fingerprint::MinutiaeExtractor> load_or_train_extractor(const RunConfig& cfg) {
  if (cfg.paths.extractor.empty()) throw ConfigError("extractor path is not set");
  if (fs::exists(cfg.paths.extractor)) return fingerprint::load_extractor(cfg.paths.extractor);
  std::cerr << "training minutiae extractor (" << cfg.extractor.steps << " steps)\n";
  auto e = fingerprint::train_minutiae_extractor(cfg.extractor);
  if (cfg.paths.extractor.has_parent_path()) fs::create_directories(cfg.paths.extractor.parent_path());
  fingerprint::save_extractor(cfg.paths.extractor, *e);
  return e;
}

void write_json(const fs::path& p, const json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  os << j.dump(1) << '\n';
  if (!os) throw std::runtime_error("cannot write " + p.string());
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  return json::parse(is);
}

// Pair scores with per-image embedding reuse for the toy matcher.
class Scorer {
 public:
  explicit Scorer(const RunConfig& cfg) {
    if (cfg.matcher.kind == "toy") {
      toy_ = load_toy_matcher(cfg);
      name_ = toy_->name();
    } else {
      std::vector<std::string> words;
      std::istringstream is(cfg.matcher.command);
      for (std::string w; is >> w;) words.push_back(w);
      const fs::path exe = words.front();
      words.erase(words.begin());
      external_ = std::make_unique<matcher::ExternalMatcher>(exe, words, cache_dir() / "scratch");
      name_ = external_->name();
    }
  }

  double operator()(const std::string& key_a, const NormalizedImage& a, const std::string& key_b,
                    const NormalizedImage& b) {
    if (external_) return external_->score(a, b);
    return cosine_similarity(embedding(key_a, a), embedding(key_b, b));
  }

  const std::string& name() const { return name_; }

 private:
  const Embedding& embedding(const std::string& key, const NormalizedImage& x) {
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, matcher::embed(*toy_, x)).first;
    return it->second;
  }

  std::unique_ptr<matcher::ToyEmbedder> toy_;
  std::unique_ptr<matcher::ExternalMatcher> external_;
  std::map<std::string, Embedding> cache_;
  std::string name_;
};

}  // namespace

void cmd_synth_data(const RunConfig& cfg) {
  if (cfg.paths.data.empty()) throw ConfigError("dataset path is not set");
  data::DatasetManifest m;
  if (cfg.modality == Modality::face) {
    data::FaceSynthConfig fc;
    fc.size = cfg.data.image_size;
    fc.max_shift_px = 4.0 * cfg.data.image_size / 160;
    m = data::synth_identity_faces(cfg.paths.data, cfg.data.identities, cfg.data.per_identity,
                                   derive_seed(cfg.seed, "faces"), fc);
  } else {
    m = fingerprint::synth_fingerprint_dataset(cfg.paths.data, cfg.data.identities, cfg.data.per_identity,
                                               derive_seed(cfg.seed, "fingerprints"), cfg.fp_synth);
  }
  data::assign_identity_splits(m, cfg.data.test_fraction, derive_seed(cfg.seed, "splits"));
  data::save_manifest(cfg.paths.data / "manifest.json", m);
}

fs::path cmd_train_matcher(const RunConfig& cfg) {
  if (cfg.matcher.kind != "toy") throw ConfigError("only the toy matcher can be trained");
  if (cfg.paths.matcher.empty()) throw ConfigError("matcher path is not set");
  const auto train = load_split(dataset_manifest(cfg), data::Split::train, cfg);
  const auto m = matcher::train_toy_matcher(train, cfg.matcher.arch, cfg.matcher.train,
                                            [](int step, double loss, double acc) {
                                              std::cerr << "matcher step " << step << " loss " << loss
                                                        << " acc " << acc << '\n';
                                            },
                                            500);
  if (cfg.paths.matcher.has_parent_path()) fs::create_directories(cfg.paths.matcher.parent_path());
  matcher::save_toy_embedder(cfg.paths.matcher, *m);
  return cfg.paths.matcher;
}

fs::path cmd_train_face(const RunConfig& cfg, const std::optional<fs::path>& resume) {
  if (cfg.modality != Modality::face) throw ConfigError("train-face needs modality = \"face\"");
  if (cfg.paths.work.empty()) throw ConfigError("work path is not set");
  if (resume) require_exists(*resume, "resume checkpoint");
  const auto m = load_toy_matcher(cfg);
  const auto train = load_split(dataset_manifest(cfg), data::Split::train, cfg);
  advgen::AdvGenTrainConfig tc = cfg.advgen;
  tc.out_dir = cfg.paths.work;
  advgen::train_advgen({train.images, train.labels}, *m, tc, resume, [](const advgen::LossRecord& r) {
    if (r.step % 100 == 0) std::cerr << "advgen step " << r.step << " L_G " << r.g_total << " L_D " << r.d_loss << '\n';
  });
  const fs::path out = cfg.paths.work / "generator.ckpt";
  if (!cfg.paths.generator.empty() && fs::absolute(cfg.paths.generator) != fs::absolute(out)) {
    if (cfg.paths.generator.has_parent_path()) fs::create_directories(cfg.paths.generator.parent_path());
    fs::copy_file(out, cfg.paths.generator, fs::copy_options::overwrite_existing);
    return cfg.paths.generator;
  }
  return out;
}

fs::path cmd_train_fp(const RunConfig& cfg, const std::optional<fs::path>& resume) {
  if (cfg.modality != Modality::fingerprint) throw ConfigError("train-fp needs modality = \"fingerprint\"");
  if (cfg.paths.work.empty()) throw ConfigError("work path is not set");
  if (resume) require_exists(*resume, "resume checkpoint");
  const auto train = load_split(dataset_manifest(cfg), data::Split::train, cfg);
  const auto extractor = load_or_train_extractor(cfg);
  fingerprint::FpTrainConfig tc = cfg.fp;
  tc.out_dir = cfg.paths.work;
  fingerprint::train_fp(train.images, *extractor, tc, resume, [](const fingerprint::FpLossRecord& r) {
    if (r.step % 100 == 0) std::cerr << "fp step " << r.step << " L " << r.total << " L_D " << r.d_loss << '\n';
  });
  const fs::path out = cfg.paths.work / "fp_attack.ckpt";
  if (!cfg.paths.generator.empty() && fs::absolute(cfg.paths.generator) != fs::absolute(out)) {
    if (cfg.paths.generator.has_parent_path()) fs::create_directories(cfg.paths.generator.parent_path());
    fs::copy_file(out, cfg.paths.generator, fs::copy_options::overwrite_existing);
    return cfg.paths.generator;
  }
  return out;
}

AttackSummary cmd_attack(const RunConfig& cfg, const fs::path& input_dir, const fs::path& output_dir) {
  std::vector<std::string> probes = list_images(input_dir);
  if (cfg.eval.max_probes > 0 && probes.size() > static_cast<std::size_t>(cfg.eval.max_probes)) {
    probes.resize(cfg.eval.max_probes);
  }
  if (probes.empty()) throw ConfigError("no images under " + input_dir.string());
  const bool imp = cfg.mode == attacks::AttackMode::impersonation;
  const bool fp = cfg.modality == Modality::fingerprint;

  std::unique_ptr<matcher::ToyEmbedder> toy;
  std::unique_ptr<advgen::GeneratorNet> generator;
  fingerprint::FpAttack fp_attack;
  std::unique_ptr<fingerprint::MinutiaeExtractor> extractor;
  if (cfg.attack == AttackKind::advgen) {
    require_exists(cfg.paths.generator, fp ? "fingerprint attack checkpoint" : "generator checkpoint");
    if (fp) {
      fp_attack = fingerprint::load_fp_attack(cfg.paths.generator);
      require_exists(cfg.paths.extractor, "extractor checkpoint");
      extractor = fingerprint::load_extractor(cfg.paths.extractor);
    } else {
      generator = advgen::load_generator(cfg.paths.generator);
      if (generator->config().mode != cfg.mode) throw ConfigError("generator was trained for another attack mode");
    }
  } else {
    toy = load_toy_matcher(cfg);
  }

  // Impersonation: fold f attacks the probes dealt to it towards one image of its target.
  std::vector<int> fold_of(probes.size(), -1);
  std::vector<std::string> fold_targets, fold_target_images;
  std::vector<std::string> all_images;
  if (imp) {
    all_images = list_images(input_dir);
    std::set<std::string> ids;
    for (const auto& p : all_images) ids.insert(identity_of(p));
    fold_targets = eval::draw_fold_targets({ids.begin(), ids.end()}, cfg.eval.folds, derive_seed(cfg.seed, "folds"));
    for (int f = 0; f < cfg.eval.folds; ++f) {
      std::vector<std::string> cands;
      for (const auto& p : all_images)
        if (identity_of(p) == fold_targets[f]) cands.push_back(p);
      Rng rng(derive_seed(derive_seed(cfg.seed, "target-image"), static_cast<std::uint64_t>(f)));
      fold_target_images.push_back(cands[uniform_int(rng, 0, static_cast<int>(cands.size()) - 1)]);
    }
    for (std::size_t k = 0; k < probes.size(); ++k) fold_of[k] = static_cast<int>(k % cfg.eval.folds);
  }

  AttackSummary summary;
  std::map<std::string, NormalizedImage> target_cache;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const std::string& rel = probes[k];
    json meta{{"probe", rel},
              {"modality", to_string(cfg.modality)},
              {"mode", attacks::to_string(cfg.mode)},
              {"attack", fp && cfg.attack == AttackKind::advgen ? "fingerprint" : to_string(cfg.attack)}};
    try {
      const NormalizedImage x = load_probe(input_dir / rel, cfg);
      const NormalizedImage* target = nullptr;
      if (imp) {
        const int f = fold_of[k];
        if (identity_of(rel) == fold_targets[f]) continue;  // a probe can not impersonate itself
        const std::string& t = fold_target_images[f];
        auto it = target_cache.find(t);
        if (it == target_cache.end()) it = target_cache.emplace(t, load_probe(input_dir / t, cfg)).first;
        target = &it->second;
        meta["fold"] = f;
        meta["target"] = t;
        meta["target_identity"] = fold_targets[f];
      }
      NormalizedImage x_adv;
      if (cfg.attack == AttackKind::advgen && fp) {
        const auto r = fingerprint::attack_fingerprint(fp_attack, *extractor, x,
                                                       derive_seed(derive_seed(cfg.seed, "fp-attack"), rel));
        x_adv = r.x_adv;
        meta["seconds"] = r.seconds;
        meta["probe_minutiae"] = r.probe_minutiae.size();
        meta["control_points"] = r.control_points;
        meta["displacements"] = r.displacements;
      } else if (cfg.attack == AttackKind::advgen) {
        const auto s = advgen::synthesize(*generator, x, target);
        x_adv = s.x_adv;
        meta["seconds"] = s.seconds;
        double mn = 0.0;
        for (double v : s.mask.values()) mn += v * v;
        meta["mask_l2"] = std::sqrt(mn);
        save_normalized_png(output_dir / (without_extension(rel) + "_mask.png"), s.mask);
      } else {
        const attacks::AttackGoal goal{cfg.mode, target};
        const auto t0 = std::chrono::steady_clock::now();
        const attacks::AttackResult r = cfg.attack == AttackKind::fgsm ? attacks::fgsm_attack(*toy, x, cfg.fgsm, goal)
                                                                       : attacks::pgd_attack(*toy, x, cfg.pgd, goal);
        meta["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        x_adv = r.x_adv;
        meta["score_before"] = r.score_before;
        meta["score_after"] = r.score_after;
        meta["iterations"] = r.iterations;
      }
      meta["linf"] = linf_distance(x, x_adv);
      meta["l2"] = l2_distance(x, x_adv);
      const fs::path out_png = output_dir / (without_extension(rel) + ".png");
      fs::create_directories(out_png.parent_path());
      save_normalized_png(out_png, x_adv);
      write_json(output_dir / (without_extension(rel) + ".json"), meta);
      ++summary.attacked;
    } catch (const matcher::AdapterError&) {
      throw;
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << rel << ": " << e.what() << '\n';
      ++summary.failed;
    }
  }
  if (summary.attacked == 0) throw std::runtime_error("no probe could be attacked");
  return summary;
}

void cmd_evaluate(const RunConfig& cfg, const fs::path& attack_dir, const fs::path& gallery_dir,
                  const fs::path& report_path) {
  const std::vector<std::string> gallery = list_images(gallery_dir);
  std::map<std::string, NormalizedImage> clean;
  std::map<std::string, std::vector<std::string>> by_identity;
  for (const auto& g : gallery) {
    clean.emplace(g, load_probe(gallery_dir / g, cfg));
    by_identity[identity_of(g)].push_back(g);
  }
  if (by_identity.size() < 2) throw ConfigError("gallery needs at least two identities");

  struct Attacked {
    std::string rel;
    json meta;
    NormalizedImage x_adv;
  };
  std::vector<Attacked> attacked;
  for (const auto& a : list_images(attack_dir)) {
    const fs::path meta_path = attack_dir / (without_extension(a) + ".json");
    if (!fs::exists(meta_path)) continue;
    json meta = read_json(meta_path);
    const std::string probe = meta.at("probe");
    if (!clean.contains(probe)) throw ConfigError("attacked probe " + probe + " is not in the gallery");
    attacked.push_back({probe, std::move(meta), load_probe(attack_dir / a, cfg)});
  }
  if (attacked.empty()) throw ConfigError("no attacked images with metadata under " + attack_dir.string());

  Scorer score(cfg);
  const bool imp = cfg.mode == attacks::AttackMode::impersonation;

  eval::ScoreSet clean_set;
  for (std::size_t i = 0; i < gallery.size(); ++i)
    for (std::size_t j = i + 1; j < gallery.size(); ++j) {
      const double s = score(gallery[i], clean.at(gallery[i]), gallery[j], clean.at(gallery[j]));
      (identity_of(gallery[i]) == identity_of(gallery[j]) ? clean_set.genuine : clean_set.imposter).push_back(s);
    }

  eval::AttackReport r;
  r.modality = to_string(cfg.modality);
  r.mode = attacks::to_string(cfg.mode);
  r.attack = attacked.front().meta.at("attack");
  r.matcher = score.name();
  r.seed = cfg.seed;
  r.threshold = eval::threshold_at_far(clean_set.imposter, cfg.eval.far);

  std::map<std::string, eval::FingerprintType> types;
  if (cfg.modality == Modality::fingerprint && fs::exists(gallery_dir / "types.json")) {
    types = fingerprint::load_fingerprint_types(gallery_dir);
  }

  std::vector<double> ssims;
  std::map<int, std::vector<double>> fold_scores;
  std::map<int, std::string> fold_targets;
  for (const Attacked& a : attacked) {
    const NormalizedImage& x = clean.at(a.rel);
    const double ssim = eval::ssim(x, a.x_adv);
    ssims.push_back(ssim);
    const std::string adv_key = "adv:" + a.rel;
    auto add = [&](const std::string& ref, bool genuine) {
      eval::PairRecord p;
      p.probe = a.rel;
      p.reference = ref;
      p.genuine = genuine;
      p.score_before = score(a.rel, x, ref, clean.at(ref));
      p.score_after = score(adv_key, a.x_adv, ref, clean.at(ref));
      p.ssim = ssim;
      p.linf = linf_distance(x, a.x_adv);
      p.l2 = l2_distance(x, a.x_adv);
      if (auto it = types.find(identity_of(a.rel)); it != types.end()) p.fingerprint_type = eval::to_string(it->second);
      r.pairs.push_back(p);
      return p.score_after;
    };
    if (imp) {
      const std::string target_id = a.meta.at("target_identity");
      const int fold = a.meta.at("fold");
      fold_targets[fold] = target_id;
      for (const auto& ref : by_identity.at(target_id)) fold_scores[fold].push_back(add(ref, false));
    } else {
      for (const auto& [id, refs] : by_identity)
        for (const auto& ref : refs)
          if (ref != a.rel) add(ref, id == identity_of(a.rel));
    }
  }
  r.comparisons = r.pairs.size();
  const auto ss = eval::population_stats(ssims);
  r.ssim_mean = ss.mean;
  r.ssim_std = ss.stddev;

  eval::ScoreSet before, after;
  for (const auto& p : r.pairs) {
    (p.genuine ? before.genuine : before.imposter).push_back(p.score_before);
    (p.genuine ? after.genuine : after.imposter).push_back(p.score_after);
  }
  if (imp) {
    r.success_rate = eval::success_rate_impersonation(after.imposter, r.threshold.tau);
    eval::KFoldResult folds;
    for (const auto& [f, scores] : fold_scores) {
      folds.targets.push_back(fold_targets.at(f));
      folds.fold_rates.push_back(eval::success_rate_impersonation(scores, r.threshold.tau));
    }
    const auto fs_stats = eval::population_stats(folds.fold_rates);
    folds.mean = fs_stats.mean;
    folds.stddev = fs_stats.stddev;
    r.folds = folds;
  } else {
    if (after.genuine.empty()) throw ConfigError("no genuine references for the attacked probes");
    r.success_rate = eval::success_rate_obfuscation(after.genuine, r.threshold.tau);
    r.tar_before = eval::tar_at_far(clean_set, cfg.eval.far);
    r.tar_after = eval::success_rate_impersonation(after.genuine, r.threshold.tau);
    if (!after.imposter.empty()) r.distribution = eval::distribution_summary(before, after);
    if (!types.empty()) {
      std::vector<eval::Decision> decisions;
      std::vector<std::string> labels;
      for (const auto& p : r.pairs) {
        if (p.fingerprint_type.empty()) continue;
        decisions.push_back({p.genuine, p.score_after >= r.threshold.tau});
        labels.push_back(p.fingerprint_type);
      }
      r.type_table = eval::type_confusion(decisions, labels);
    }
  }
  if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
  eval::write_report(report_path, r);
  eval::write_scores_csv(fs::path(report_path).replace_extension(".csv"), r);
}

}  // namespace advbiom::cli
