#include "advbiom/eval/report.hpp"

#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace advbiom::eval {

using nlohmann::json;

namespace {

json stats_json(const PopulationStats& s) {
  return {{"mean", s.mean}, {"std", s.stddev}, {"count", s.count}};
}

PopulationStats stats_from(const json& j) {
  PopulationStats s;
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("std").get<double>();
  s.count = j.at("count").get<std::size_t>();
  return s;
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

json to_json(const AttackReport& r) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["modality"] = r.modality;
  j["mode"] = r.mode;
  j["attack"] = r.attack;
  j["matcher"] = r.matcher;
  j["seed"] = r.seed;
  j["threshold"] = {{"tau", r.threshold.tau},
                    {"far_level", r.threshold.far_level},
                    {"achieved_far", r.threshold.achieved_far}};
  j["success_rate"] = r.success_rate;
  j["comparisons"] = r.comparisons;
  j["ssim"] = {{"mean", r.ssim_mean}, {"std", r.ssim_std}};
  if (r.tar_before) j["tar_before"] = *r.tar_before;
  if (r.tar_after) j["tar_after"] = *r.tar_after;
  if (r.distribution) {
    const auto& d = *r.distribution;
    j["distribution"] = {{"genuine_before", stats_json(d.genuine_before)},
                         {"genuine_after", stats_json(d.genuine_after)},
                         {"imposter_before", stats_json(d.imposter_before)},
                         {"imposter_after", stats_json(d.imposter_after)},
                         {"genuine_delta", d.genuine_delta},
                         {"imposter_delta", d.imposter_delta}};
  }
  if (r.folds) {
    j["folds"] = {{"targets", r.folds->targets},
                  {"rates", r.folds->fold_rates},
                  {"mean", r.folds->mean},
                  {"std", r.folds->stddev}};
  }
  if (!r.type_table.empty()) {
    json t = json::object();
    for (const auto& [type, rates] : r.type_table) {
      t[to_string(type)] = {{"genuine", rates.genuine}, {"imposter", rates.imposter},
                            {"tar", rates.tar},         {"frr", rates.frr},
                            {"far", rates.far},         {"trr", rates.trr}};
    }
    j["type_confusion"] = t;
  }
  j["pairs"] = json::array();
  for (const auto& p : r.pairs) {
    json e = {{"probe", p.probe},         {"reference", p.reference},
              {"genuine", p.genuine},     {"score_before", p.score_before},
              {"score_after", p.score_after}, {"ssim", p.ssim},
              {"linf", p.linf},           {"l2", p.l2}};
    if (!p.fingerprint_type.empty()) e["fingerprint_type"] = p.fingerprint_type;
    j["pairs"].push_back(std::move(e));
  }
  return j;
}

AttackReport report_from_json(const json& j) {
  if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
    throw std::runtime_error("unsupported report schema version");
  }
  AttackReport r;
  r.modality = j.at("modality").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.attack = j.at("attack").get<std::string>();
  r.matcher = j.at("matcher").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  const auto& t = j.at("threshold");
  r.threshold = {t.at("tau").get<double>(), t.at("far_level").get<double>(),
                 t.at("achieved_far").get<double>()};
  r.success_rate = j.at("success_rate").get<double>();
  r.comparisons = j.at("comparisons").get<std::size_t>();
  r.ssim_mean = j.at("ssim").at("mean").get<double>();
  r.ssim_std = j.at("ssim").at("std").get<double>();
  if (j.contains("tar_before")) r.tar_before = j["tar_before"].get<double>();
  if (j.contains("tar_after")) r.tar_after = j["tar_after"].get<double>();
  if (j.contains("distribution")) {
    const auto& d = j["distribution"];
    DistributionSummary s;
    s.genuine_before = stats_from(d.at("genuine_before"));
    s.genuine_after = stats_from(d.at("genuine_after"));
    s.imposter_before = stats_from(d.at("imposter_before"));
    s.imposter_after = stats_from(d.at("imposter_after"));
    s.genuine_delta = d.at("genuine_delta").get<double>();
    s.imposter_delta = d.at("imposter_delta").get<double>();
    r.distribution = s;
  }
  if (j.contains("folds")) {
    KFoldResult f;
    f.targets = j["folds"].at("targets").get<std::vector<std::string>>();
    f.fold_rates = j["folds"].at("rates").get<std::vector<double>>();
    f.mean = j["folds"].at("mean").get<double>();
    f.stddev = j["folds"].at("std").get<double>();
    r.folds = f;
  }
  if (j.contains("type_confusion")) {
    for (const auto& [name, e] : j["type_confusion"].items()) {
      TypeRates tr;
      tr.genuine = e.at("genuine").get<std::size_t>();
      tr.imposter = e.at("imposter").get<std::size_t>();
      tr.tar = e.at("tar").get<double>();
      tr.frr = e.at("frr").get<double>();
      tr.far = e.at("far").get<double>();
      tr.trr = e.at("trr").get<double>();
      r.type_table.emplace(parse_fingerprint_type(name), tr);
    }
  }
  for (const auto& e : j.at("pairs")) {
    PairRecord p;
    p.probe = e.at("probe").get<std::string>();
    p.reference = e.at("reference").get<std::string>();
    p.genuine = e.at("genuine").get<bool>();
    p.score_before = e.at("score_before").get<double>();
    p.score_after = e.at("score_after").get<double>();
    p.ssim = e.at("ssim").get<double>();
    p.linf = e.at("linf").get<double>();
    p.l2 = e.at("l2").get<double>();
    if (e.contains("fingerprint_type")) p.fingerprint_type = e["fingerprint_type"].get<std::string>();
    r.pairs.push_back(std::move(p));
  }
  if (r.pairs.size() != r.comparisons) {
    throw std::runtime_error("report lists " + std::to_string(r.pairs.size()) + " pairs but " +
                             std::to_string(r.comparisons) + " comparisons");
  }
  return r;
}

void write_report(const std::filesystem::path& path, const AttackReport& r) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << to_json(r).dump(2) << '\n';
}

AttackReport read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  return report_from_json(json::parse(is));
}

void write_scores_csv(const std::filesystem::path& path, const AttackReport& r) {
  ensure_parent(path);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "probe,reference,genuine,score_before,score_after,ssim,linf,l2\n";
  os << std::setprecision(17);
  for (const auto& p : r.pairs) {
    os << p.probe << ',' << p.reference << ',' << (p.genuine ? 1 : 0) << ',' << p.score_before
       << ',' << p.score_after << ',' << p.ssim << ',' << p.linf << ',' << p.l2 << '\n';
  }
}

}  // namespace advbiom::eval
