#include <iostream>

#include <CLI11.hpp>

#include "advbiom/cli/commands.hpp"
#include "advbiom/matcher/matcher.hpp"

namespace advbiom::cli {

namespace fs = std::filesystem;

int run_cli(int argc, char** argv) {
  CLI::App app{"Adversarial biometrics: synthetic data, matchers, attacks and evaluation"};
  app.require_subcommand(1);

  fs::path config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "TOML run configuration")->required();
  };

  auto* synth = app.add_subcommand("synth-data", "Write a synthetic dataset and its manifest");
  add_config(synth);
  auto* train_matcher = app.add_subcommand("train-matcher", "Train the toy matcher on the train split");
  add_config(train_matcher);

  std::optional<fs::path> resume;
  auto* train_face = app.add_subcommand("train-face", "Train the face mask generator");
  add_config(train_face);
  train_face->add_option("--resume", resume, "Training checkpoint to continue from");
  auto* train_fp = app.add_subcommand("train-fp", "Train the fingerprint displacement and distortion modules");
  add_config(train_fp);
  train_fp->add_option("--resume", resume, "Training checkpoint to continue from");

  fs::path input_dir, output_dir;
  auto* attack = app.add_subcommand("attack", "Attack every probe image under a directory");
  add_config(attack);
  attack->add_option("-i,--input", input_dir, "Probe images, <identity>/<image>")->required();
  attack->add_option("-o,--output", output_dir, "Where adversarial images go")->required();

  fs::path attack_dir, gallery_dir, report_path;
  auto* evaluate = app.add_subcommand("evaluate", "Score attacked probes against the clean gallery");
  add_config(evaluate);
  evaluate->add_option("-a,--attacked", attack_dir, "Output directory of the attack command")->required();
  evaluate->add_option("-g,--gallery", gallery_dir, "Clean images with the same layout")->required();
  evaluate->add_option("-r,--report", report_path, "Report JSON to write")->required();

  std::vector<fs::path> reports;
  std::optional<fs::path> overlay_dir;
  fs::path plot_dir;
  auto* report = app.add_subcommand("report", "Plot score histograms, TAR/FAR curves and saliency overlays");
  report->add_option("reports", reports, "Report JSON files");
  report->add_option("-o,--out", plot_dir, "Output directory")->required();
  report->add_option("-a,--attacked", overlay_dir, "Attack directory with *_mask.png files");

  auto* print_config = app.add_subcommand("print-config", "Print the fully resolved configuration");
  add_config(print_config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (report->parsed()) {
      const auto files = cmd_report(reports, plot_dir, overlay_dir);
      for (const auto& f : files) std::cout << f.string() << '\n';
      return kExitOk;
    }
    const RunConfig cfg = load_run_config(config_path);
    if (print_config->parsed()) {
      std::cout << to_toml(cfg);
    } else if (synth->parsed()) {
      cmd_synth_data(cfg);
    } else if (train_matcher->parsed()) {
      std::cout << cmd_train_matcher(cfg).string() << '\n';
    } else if (train_face->parsed()) {
      std::cout << cmd_train_face(cfg, resume).string() << '\n';
    } else if (train_fp->parsed()) {
      std::cout << cmd_train_fp(cfg, resume).string() << '\n';
    } else if (attack->parsed()) {
      const auto s = cmd_attack(cfg, input_dir, output_dir);
      std::cout << "attacked " << s.attacked << ", skipped " << s.failed << '\n';
    } else if (evaluate->parsed()) {
      cmd_evaluate(cfg, attack_dir, gallery_dir, report_path);
      std::cout << report_path.string() << '\n';
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const advgen::TrainingDiverged& e) {
    std::cerr << "error: " << e.what();
    if (!e.last_checkpoint.empty()) std::cerr << " (last checkpoint " << e.last_checkpoint.string() << ")";
    std::cerr << '\n';
    return kExitDiverged;
  } catch (const matcher::AdapterError& e) {
    std::cerr << "matcher error: " << e.what() << '\n';
    return kExitMatcher;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace advbiom::cli
