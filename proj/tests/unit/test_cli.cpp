#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "advbiom/cli/commands.hpp"
#include "advbiom/eval/report.hpp"

using namespace advbiom;
using namespace advbiom::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("advbiom_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_file(const fs::path& p, const std::string& text) {
  std::ofstream os(p);
  os << text;
  return p;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "advbiom");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

// Small enough that the whole face pipeline runs in a few seconds.
const char* kTinyFace = R"(seed = 11
attack = "fgsm"
[paths]
data = "data"
work = "work"
matcher = "m.ckpt"
generator = "g.ckpt"
[data]
identities = 6
per_identity = 4
image_size = 16
[matcher]
steps = 40
batch_size = 8
base_width = 4
embedding_dim = 16
[advgen]
steps = 2
batch_size = 2
base_width = 2
res_blocks = 1
disc_base_width = 2
disc_layers = 2
disc_strided_layers = 2
checkpoint_every = 1
[eval]
max_probes = 4
folds = 2
)";

}  // namespace

TEST_CASE("config round trip through canonical toml") {
  RunConfig c = parse_run_config("seed = 5\nmodality = \"fingerprint\"\n[fingerprint]\nd = 12.5\nsize = 48\n", "/base");
  CHECK(c.seed == 5);
  CHECK(c.modality == Modality::fingerprint);
  CHECK(c.fp.displacement.d == 12.5);
  const RunConfig back = parse_run_config(to_toml(c), "/base");
  CHECK(back == c);
  CHECK(to_toml(back) == to_toml(c));

  RunConfig face = parse_run_config("seed = 1\nmode = \"impersonation\"\n[advgen]\nlambda_p = 3.0\n");
  CHECK(face.advgen.weights.lambda_p == 3.0);
  CHECK(parse_run_config(to_toml(face)) == face);
}

TEST_CASE("subsystem seeds derive from the root seed") {
  const RunConfig a = parse_run_config("seed = 1\n"), b = parse_run_config("seed = 2\n");
  CHECK(a.advgen.seed != b.advgen.seed);
  CHECK(a.matcher.train.seed != a.advgen.seed);
  CHECK(parse_run_config("seed = 1\n").pgd.seed == a.pgd.seed);
}

TEST_CASE("config paths resolve against the config directory") {
  const RunConfig c = parse_run_config("seed = 1\n[paths]\ndata = \"d\"\nwork = \"/abs/w\"\n", "/cfg/dir");
  CHECK(c.paths.data == fs::path("/cfg/dir/d"));
  CHECK(c.paths.work == fs::path("/abs/w"));
}

TEST_CASE("invalid configs are rejected with the offending key") {
  auto message = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  CHECK(message("seed = 1\nbogus = 3\n").find("bogus") != std::string::npos);
  CHECK(message("seed = 1\n[advgen]\nlamda_p = 3.0\n").find("lamda_p") != std::string::npos);
  CHECK(message("seed = 1\n[nonsense]\nx = 1\n").find("nonsense") != std::string::npos);
  CHECK(message("modality = \"face\"\n").find("seed") != std::string::npos);
  CHECK(message("seed = 1\n[advgen]\neps = -1.0\n").find("eps") != std::string::npos);
  CHECK(message("seed = 1\n[eval]\nfar = 2.0\n").find("far") != std::string::npos);
  CHECK(message("seed = 1\n[data]\nimage_size = \"big\"\n").find("image_size") != std::string::npos);
  CHECK(message("seed = 1\nmodality = \"iris\"\n") != "accepted");
  CHECK(message("seed = 1\nmodality = \"fingerprint\"\nmode = \"impersonation\"\n") != "accepted");
  CHECK(message("seed = 1\n[matcher]\nkind = \"external\"\n").find("command") != std::string::npos);
  CHECK(message("seed = 1\n[data]\nimage_size = 20\n") != "accepted");
  CHECK(message("seed = [1\n") != "accepted");
}

TEST_CASE("exit codes") {
  const fs::path dir = fresh_dir("exit");
  CHECK(run({"no-such-command"}) == kExitConfig);
  CHECK(run({"attack", "-c", (dir / "missing.toml").string(), "-i", "x", "-o", "y"}) == kExitConfig);
  CHECK(run({"print-config", "-c", write_file(dir / "bad.toml", "seed = 1\nwat = 2\n").string()}) == kExitConfig);

  // Missing dataset, missing checkpoints.
  const fs::path cfg = write_file(dir / "c.toml", "seed = 1\n[paths]\ndata = \"nowhere\"\nmatcher = \"m.ckpt\"\n");
  CHECK(run({"train-matcher", "-c", cfg.string()}) == kExitConfig);
  CHECK(run({"synth-data", "-c", write_file(dir / "nodata.toml", "seed = 1\n").string()}) == kExitConfig);
  CHECK(run({"print-config", "-c", cfg.string()}) == kExitOk);
  CHECK(run({"report", "-o", (dir / "plots").string()}) == kExitOk);
}

TEST_CASE("face pipeline through the command line") {
  const fs::path dir = fresh_dir("face");
  const fs::path cfg = write_file(dir / "face.toml", kTinyFace);
  const std::string c = cfg.string();
  REQUIRE(run({"synth-data", "-c", c}) == kExitOk);
  CHECK(fs::exists(dir / "data" / "manifest.json"));
  REQUIRE(run({"train-matcher", "-c", c}) == kExitOk);
  CHECK(fs::exists(dir / "m.ckpt"));

  const std::string data = (dir / "data").string(), adv = (dir / "adv").string();
  REQUIRE(run({"attack", "-c", c, "-i", data, "-o", adv}) == kExitOk);
  const auto meta = nlohmann::json::parse(std::ifstream(dir / "adv" / "id_0000" / "img_00.json"));
  CHECK(meta.at("attack") == "fgsm");
  CHECK(meta.at("linf").get<double>() == doctest::Approx(0.06).epsilon(1e-6));
  CHECK(meta.at("seconds").get<double>() > 0.0);

  const fs::path report = dir / "out" / "fgsm.json";
  REQUIRE(run({"evaluate", "-c", c, "-a", adv, "-g", data, "-r", report.string()}) == kExitOk);
  const eval::AttackReport r = eval::read_report(report);
  CHECK(r.attack == "fgsm");
  CHECK(r.mode == "obfuscation");
  CHECK(r.comparisons == r.pairs.size());
  // 4 probes, each against the other 23 gallery images.
  CHECK(r.pairs.size() == 4 * 23);
  CHECK(r.tar_before.has_value());
  CHECK(fs::exists(dir / "out" / "fgsm.csv"));

  // Same inputs, same report bytes.
  const fs::path again = dir / "out" / "again.json";
  REQUIRE(run({"evaluate", "-c", c, "-a", adv, "-g", data, "-r", again.string()}) == kExitOk);
  std::ifstream a(report), b(again);
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));

  REQUIRE(run({"train-face", "-c", c}) == kExitOk);
  CHECK(fs::exists(dir / "g.ckpt"));
  CHECK(fs::exists(dir / "work" / "train_log.csv"));

  // Resuming from the first checkpoint in a fresh work directory lands on the same run.
  std::string resumed = kTinyFace;
  resumed.replace(resumed.find("work = \"work\""), 13, "work = \"work2\"");
  resumed.replace(resumed.find("generator = \"g.ckpt\""), 20, "generator = \"g2.ckpt\"");
  const std::string c_resume = write_file(dir / "resume.toml", resumed).string();
  REQUIRE(run({"train-face", "-c", c_resume, "--resume", (dir / "work" / "advgen_step000001.ckpt").string()}) ==
          kExitOk);
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(is), {});
  };
  CHECK(slurp(dir / "work" / "train_log.csv") == slurp(dir / "work2" / "train_log.csv"));
  CHECK(slurp(dir / "g.ckpt") == slurp(dir / "g2.ckpt"));
  CHECK(run({"train-face", "-c", c_resume, "--resume", (dir / "nope.ckpt").string()}) == kExitConfig);
  const std::string adv_ag = (dir / "adv_ag").string();
  std::string text = kTinyFace;
  text.replace(text.find("\"fgsm\""), 6, "\"advgen\"");
  const std::string c2 = write_file(dir / "ag.toml", text).string();
  REQUIRE(run({"attack", "-c", c2, "-i", data, "-o", adv_ag}) == kExitOk);
  CHECK(fs::exists(dir / "adv_ag" / "id_0000" / "img_00_mask.png"));
  REQUIRE(run({"report", report.string(), "-o", (dir / "plots").string(), "-a", adv_ag}) == kExitOk);
  CHECK(fs::exists(dir / "plots" / "fgsm_hist.png"));
  CHECK(fs::exists(dir / "plots" / "fgsm_roc.png"));
  CHECK(fs::exists(dir / "plots" / "saliency" / "id_0000" / "img_00_saliency.png"));
}

TEST_CASE("unmodified copies score a success rate of one minus the clean TAR") {
  const fs::path dir = fresh_dir("copies");
  const std::string c = write_file(dir / "face.toml", kTinyFace).string();
  REQUIRE(run({"synth-data", "-c", c}) == kExitOk);
  REQUIRE(run({"train-matcher", "-c", c}) == kExitOk);
  const fs::path data = dir / "data", copies = dir / "copies";
  int n = 0;
  for (const auto& e : fs::recursive_directory_iterator(data)) {
    if (e.path().extension() != ".png") continue;
    const fs::path rel = fs::relative(e.path(), data);
    fs::create_directories((copies / rel).parent_path());
    fs::copy_file(e.path(), copies / rel);
    write_file(fs::path(copies / rel).replace_extension(".json"),
               nlohmann::json{{"probe", rel.generic_string()}, {"attack", "none"}}.dump());
    ++n;
  }
  REQUIRE(n == 24);
  const fs::path report = dir / "copies.json";
  REQUIRE(run({"evaluate", "-c", c, "-a", copies.string(), "-g", data.string(), "-r", report.string()}) == kExitOk);
  const eval::AttackReport r = eval::read_report(report);
  REQUIRE(r.tar_before.has_value());
  CHECK(r.attack == "none");
  CHECK(r.success_rate == doctest::Approx(1.0 - *r.tar_before).epsilon(1e-12));
  CHECK(r.ssim_mean == 1.0);
}

TEST_CASE("impersonation deals probes into folds with one target each") {
  const fs::path dir = fresh_dir("imp");
  std::string text = kTinyFace;
  text.replace(text.find("attack = \"fgsm\""), 15, "attack = \"pgd\"\nmode = \"impersonation\"");
  text.replace(text.find("max_probes = 4"), 14, "max_probes = 12");
  const std::string c = write_file(dir / "imp.toml", text).string();
  REQUIRE(run({"synth-data", "-c", c}) == kExitOk);
  REQUIRE(run({"train-matcher", "-c", c}) == kExitOk);
  const std::string data = (dir / "data").string(), adv = (dir / "adv").string();
  REQUIRE(run({"attack", "-c", c, "-i", data, "-o", adv}) == kExitOk);
  const fs::path report = dir / "imp.json";
  REQUIRE(run({"evaluate", "-c", c, "-a", adv, "-g", data, "-r", report.string()}) == kExitOk);
  const eval::AttackReport r = eval::read_report(report);
  REQUIRE(r.folds.has_value());
  CHECK(r.folds->targets.size() == r.folds->fold_rates.size());
  CHECK(r.folds->targets.size() <= 2);
  for (const auto& p : r.pairs) {
    CHECK_FALSE(p.genuine);
    CHECK(p.probe.substr(0, 7) != p.reference.substr(0, 7));
  }
}

TEST_CASE("external matcher failures map to their own exit code") {
  const fs::path dir = fresh_dir("external");
  const std::string c = write_file(dir / "face.toml", kTinyFace).string();
  REQUIRE(run({"synth-data", "-c", c}) == kExitOk);
  REQUIRE(run({"train-matcher", "-c", c}) == kExitOk);
  const std::string data = (dir / "data").string(), adv = (dir / "adv").string();
  REQUIRE(run({"attack", "-c", c, "-i", data, "-o", adv}) == kExitOk);

  auto external = [&](const std::string& mode) {
    std::string text = kTinyFace;
    text.replace(text.find("[matcher]\n"), 10,
                 "[matcher]\nkind = \"external\"\ncommand = \"" + std::string(MOCK_MATCHER_PATH) + " " + mode + "\"\n");
    return write_file(dir / (mode + ".toml"), text).string();
  };
  CHECK(run({"evaluate", "-c", external("ok"), "-a", adv, "-g", data, "-r", (dir / "ok.json").string()}) ==
        kExitOk);
  CHECK(eval::read_report(dir / "ok.json").matcher == "mock_matcher");
  CHECK(run({"evaluate", "-c", external("crash"), "-a", adv, "-g", data, "-r", (dir / "x.json").string()}) ==
        kExitMatcher);
  CHECK(run({"evaluate", "-c", external("garbage"), "-a", adv, "-g", data, "-r", (dir / "x.json").string()}) ==
        kExitMatcher);
}
