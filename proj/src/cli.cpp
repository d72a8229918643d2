#include "scgan/cli.hpp"

#include <iostream>

#include "CLI11.hpp"
#include "scgan/config.hpp"
#include "scgan/log.hpp"
#include "scgan/stages.hpp"

namespace scgan {

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"3D shape-consistent cycle-GAN segmentation pipeline", "scgan"};
  app.require_subcommand(1);

  std::string config_path;
  bool no_resume = false;
  auto with_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "pipeline config (JSON)")->required();
    sub->add_flag("--no-resume", no_resume, "ignore existing checkpoints of the stage");
    return sub;
  };

  auto* preprocess = with_config(app.add_subcommand("preprocess", "reorient, crop, resize and split the scans"));
  auto* augment = with_config(app.add_subcommand("augment", "generate the augmented training set"));
  auto* train_seg = with_config(app.add_subcommand("train-seg", "phase 1: pre-train both segmentors"));
  auto* train_gan = with_config(app.add_subcommand("train-gan", "phase 2: train the translation networks"));
  auto* synth = with_config(app.add_subcommand("synthesize", "translate training scans into the other domain"));
  auto* train_final = with_config(app.add_subcommand("train-final", "phase 3: train the final segmentors"));
  auto* evaluate = with_config(app.add_subcommand("evaluate", "per-label Dice on the test split"));
  std::vector<std::string> mode_names;
  evaluate->add_option("--mode", mode_names, "four_label and/or seven_label (default: from config)")
      ->check(CLI::IsMember({"four_label", "seven_label"}));
  auto* run_all = with_config(app.add_subcommand("run-all", "every stage in order"));
  auto* check = with_config(app.add_subcommand("check-config", "list config violations"));

  auto* phantom = app.add_subcommand("phantom", "synthetic phantom data");
  phantom->require_subcommand(1);
  auto* generate = phantom->add_subcommand("generate", "write pseudo-CT (A) and pseudo-MRI (B) phantoms");
  PhantomSetSpec ps;
  std::string out_dir;
  std::vector<int> shape{32, 32, 32};
  generate->add_option("-o,--out", out_dir, "output directory")->required();
  generate->add_option("-n,--count", ps.count, "phantoms per domain")->check(CLI::PositiveNumber);
  generate->add_option("--shape", shape, "X Y Z, each divisible by 32")->expected(3);
  generate->add_option("--labels", ps.n_labels, "4 or 7")->check(CLI::IsMember({4, 7}));
  generate->add_option("--seed", ps.seed, "root seed");
  generate->add_flag("--paired", ps.paired, "share label geometry between the domains");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (phantom->parsed()) {
      ps.shape = {shape[0], shape[1], shape[2]};
      write_phantom_set(out_dir, ps);
      log::info("wrote " + std::to_string(2 * ps.count) + " phantoms to " + out_dir);
      return kExitOk;
    }
    if (check->parsed()) {
      const auto violations = validate_config(config_path);
      for (const auto& v : violations) std::cout << v << "\n";
      if (violations.empty()) std::cout << "config OK\n";
      return violations.empty() ? kExitOk : kExitInvalid;
    }

    PipelineConfig cfg = load_config(config_path);
    cfg.resume = !no_resume;
    if (preprocess->parsed()) stage_preprocess(cfg);
    else if (augment->parsed()) stage_augment(cfg);
    else if (train_seg->parsed()) stage_train_seg(cfg);
    else if (train_gan->parsed()) stage_train_gan(cfg);
    else if (synth->parsed()) stage_synthesize(cfg);
    else if (train_final->parsed()) stage_train_final(cfg);
    else if (evaluate->parsed()) {
      std::optional<std::vector<EvalMode>> modes;
      if (!mode_names.empty()) {
        modes.emplace();
        for (const auto& m : mode_names) modes->push_back(parse_eval_mode(m));
      }
      stage_evaluate(cfg, modes);
    } else if (run_all->parsed()) {
      stage_run_all(cfg);
    }
    return kExitOk;
  } catch (const ValidationError& e) {
    log::error(e.what());
    return kExitInvalid;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kExitRuntime;
  }
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"scgan"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace scgan
