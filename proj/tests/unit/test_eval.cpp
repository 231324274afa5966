#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "advbiom/core/random.hpp"
#include "advbiom/eval/report.hpp"
#include "eval_oracles.hpp"

using namespace advbiom;
using namespace advbiom::eval;

TEST_CASE("threshold_at_far examples") {
  std::vector<double> ten;
  for (int i = 1; i <= 10; ++i) ten.push_back(i / 10.0);
  auto t = threshold_at_far(ten, 0.10);
  CHECK(t.tau == 1.0);
  CHECK(t.achieved_far == doctest::Approx(0.1));

  // With far = 1 - 1/N only the minimum must be rejected, so the second score is the
  // smallest threshold that keeps the tail within budget.
  std::vector<double> s{0.3, 0.1, 0.7, 0.5};
  CHECK(threshold_at_far(s, 0.75).tau == 0.3);

  std::vector<double> equal(5, 0.42);
  auto te = threshold_at_far(equal, 0.5);
  CHECK(te.tau == std::nextafter(0.42, std::numeric_limits<double>::infinity()));
  CHECK(te.achieved_far == 0.0);

  CHECK_THROWS(threshold_at_far(std::vector<double>{}, 0.1));
  CHECK_THROWS(threshold_at_far(ten, 0.0));
  CHECK_THROWS(threshold_at_far(ten, 1.0));
}

TEST_CASE("metric functions agree with counting oracles on random score sets") {
  Rng rng(21);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = uniform_int(rng, 1, 60);
    std::vector<double> imp(n), gen(uniform_int(rng, 1, 40));
    // coarse grid forces ties
    for (auto& v : imp) v = std::round(uniform(rng, -1, 1) * 20) / 20;
    for (auto& v : gen) v = std::round(uniform(rng, -1, 1) * 20) / 20;
    const double far = uniform(rng, 0.001, 0.999);
    const auto t = threshold_at_far(imp, far);
    CHECK(t.tau == oracle::threshold(imp, far));
    CHECK(t.achieved_far <= far);
    CHECK(success_rate_obfuscation(gen, t.tau) == oracle::fraction_below(gen, t.tau));
    CHECK(success_rate_impersonation(gen, t.tau) == oracle::fraction_at_or_above(gen, t.tau));
    ScoreSet ss{gen, imp, "m", "d"};
    CHECK(tar_at_far(ss, far) == oracle::fraction_at_or_above(gen, oracle::threshold(imp, far)));
  }
}

TEST_CASE("success rates") {
  std::vector<double> s{0.2, 0.5};
  CHECK(success_rate_obfuscation(s, 0.3) == 0.5);
  CHECK(success_rate_impersonation(s, 0.3) == 0.5);
  CHECK(success_rate_obfuscation(s, 0.9) == 1.0);
  CHECK(success_rate_impersonation(s, 0.9) == 0.0);
  CHECK_THROWS(success_rate_obfuscation(std::vector<double>{}, 0.3));

  Rng rng(22);
  std::vector<double> r(1000);
  for (auto& v : r) v = uniform(rng, -1, 1);
  CHECK(success_rate_obfuscation(r, 0.123) + success_rate_impersonation(r, 0.123) == 1.0);
}

TEST_CASE("tar_at_far is monotone in far and 1 for separated sets") {
  ScoreSet sep{{0.8, 0.9, 0.95}, {0.1, 0.2, 0.3, 0.4}, "", ""};
  CHECK(tar_at_far(sep, 0.25) == 1.0);
  Rng rng(23);
  ScoreSet ss;
  for (int i = 0; i < 200; ++i) ss.genuine.push_back(uniform(rng, -0.2, 1));
  for (int i = 0; i < 300; ++i) ss.imposter.push_back(uniform(rng, -1, 0.5));
  double prev = -1;
  for (double far = 0.001; far < 1.0; far += 0.01) {
    const double tar = tar_at_far(ss, far);
    CHECK(tar >= prev);
    prev = tar;
  }
}

TEST_CASE("ssim identities and the naive oracle") {
  Rng rng(24);
  FloatImage a({16, 16, 1}), b({16, 16, 1});
  for (auto& v : a.values()) v = uniform(rng, -1, 1);
  for (std::size_t i = 0; i < b.size(); ++i) b.values()[i] = std::clamp(a.values()[i] + 0.3 * normal(rng), -1.0, 1.0);
  CHECK(ssim(a, a) == 1.0);
  CHECK(std::abs(ssim(a, b) - oracle::ssim(a, b)) < 1e-6);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-9);

  // Negation flips the structure term. On a locally zero-mean pattern the luminance
  // term stays at 1, so the score turns negative.
  FloatImage checker({16, 16, 1}), neg({16, 16, 1});
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      checker.at(i, j, 0) = (i + j) % 2 ? 0.6 : -0.6;
      neg.at(i, j, 0) = -checker.at(i, j, 0);
    }
  CHECK(ssim(checker, neg) < 0.0);

  FloatImage rgb({20, 18, 3}), rgb2({20, 18, 3});
  for (auto& v : rgb.values()) v = uniform(rng, -1, 1);
  for (auto& v : rgb2.values()) v = uniform(rng, -1, 1);
  CHECK(std::abs(ssim(rgb, rgb2) - oracle::ssim(rgb, rgb2)) < 1e-6);
  CHECK(ssim(rgb, rgb) == 1.0);
  CHECK_THROWS_AS(ssim(a, rgb), ShapeError);
}

TEST_CASE("distribution_summary recovers constructed shifts") {
  Rng rng(25);
  ScoreSet before, after;
  for (int i = 0; i < 500; ++i) {
    const double g = 0.7 + 0.1 * normal(rng), im = 0.1 * normal(rng);
    before.genuine.push_back(g);
    after.genuine.push_back(g - 0.4);
    before.imposter.push_back(im);
    after.imposter.push_back(im + 0.01);
  }
  auto d = distribution_summary(before, after);
  CHECK(std::abs(d.genuine_delta + 0.4) < 1e-9);
  CHECK(std::abs(d.imposter_delta - 0.01) < 1e-9);
  auto same = distribution_summary(before, before);
  CHECK(same.genuine_delta == 0.0);
  CHECK(same.imposter_delta == 0.0);
}

TEST_CASE("kfold_impersonation is seeded and samples distinct targets") {
  std::vector<std::string> ids;
  for (int i = 0; i < 15; ++i) ids.push_back("id" + std::to_string(i));
  auto scores = [](int fold, const std::string&) {
    std::vector<double> s(10, 0.0);
    for (int i = 0; i < fold; ++i) s[i] = 1.0;
    return s;
  };
  auto a = kfold_impersonation(ids, 10, 0.5, 99, scores);
  auto b = kfold_impersonation(ids, 10, 0.5, 99, scores);
  CHECK(a.targets == b.targets);
  std::set<std::string> uniq(a.targets.begin(), a.targets.end());
  CHECK(uniq.size() == 10);
  CHECK(a.mean == doctest::Approx(0.45));
  CHECK_THROWS(kfold_impersonation(std::vector<std::string>(ids.begin(), ids.begin() + 5), 10, 0.5, 1, scores));
}

TEST_CASE("type_confusion matches a hand-built table") {
  // 20 decisions: per type genuine accepted/rejected and imposter accepted/rejected
  std::vector<Decision> d;
  std::vector<std::string> labels;
  auto add = [&](const std::string& t, bool g, bool a, int n) {
    for (int i = 0; i < n; ++i) {
      d.push_back({g, a});
      labels.push_back(t);
    }
  };
  add("left_loop", true, true, 3);
  add("left_loop", true, false, 1);
  add("left_loop", false, false, 2);
  add("whorl", true, true, 2);
  add("whorl", false, true, 1);
  add("whorl", false, false, 3);
  add("arch", true, false, 2);
  add("tented_arch", false, false, 4);
  add("right_loop", true, true, 2);
  auto table = type_confusion(d, labels);
  CHECK(table[FingerprintType::left_loop].tar == 0.75);
  CHECK(table[FingerprintType::left_loop].frr == 0.25);
  CHECK(table[FingerprintType::left_loop].trr == 1.0);
  CHECK(table[FingerprintType::whorl].far == 0.25);
  CHECK(table[FingerprintType::whorl].trr == 0.75);
  CHECK(table[FingerprintType::arch].tar == 0.0);
  CHECK(table[FingerprintType::arch].frr == 1.0);
  CHECK(table[FingerprintType::tented_arch].trr == 1.0);
  CHECK(table[FingerprintType::right_loop].tar == 1.0);
  for (const auto& [t, r] : table) {
    if (r.genuine) CHECK(r.tar + r.frr == 1.0);
    if (r.imposter) CHECK(r.far + r.trr == 1.0);
  }
  labels[0] = "spiral";
  CHECK_THROWS(type_confusion(d, labels));
}

TEST_CASE("report JSON round trip") {
  AttackReport r;
  r.modality = "fingerprint";
  r.mode = "obfuscation";
  r.attack = "fingerprint";
  r.matcher = "toy";
  r.seed = 7;
  r.threshold = {0.5, 0.01, 0.008};
  r.success_rate = 0.75;
  r.comparisons = 1;
  r.pairs.push_back({"a.png", "b.png", true, 0.9, 0.2, 0.93, 0.1, 1.5, "whorl"});
  r.tar_before = 0.95;
  r.tar_after = 0.4;
  r.type_table[FingerprintType::whorl] = {1, 0, 1.0, 0.0, 0.0, 1.0};
  const auto path = std::filesystem::temp_directory_path() / "advbiom_report_test.json";
  write_report(path, r);
  auto back = read_report(path);
  CHECK(to_json(back) == to_json(r));
  std::filesystem::remove(path);
}
