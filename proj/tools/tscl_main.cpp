#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tscl/commands.hpp"
#include "tscl/config.hpp"
#include "tscl/error.hpp"
#include "tscl/util.hpp"

namespace fs = std::filesystem;
using namespace tscl;

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"tscl: time-series contrastive pretraining and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  fs::path config_path, out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  app.add_option("--config", config_path, "INI run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override [run] seed");
  app.add_option("--out", out, "Output file or directory");
  app.add_flag("--force", force, "Overwrite existing outputs");

  auto* synth = app.add_subcommand("synth", "Generate unlabeled/train/val/test splits");
  auto* pretrain = app.add_subcommand("pretrain", "Self-supervised pretraining into a run directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  fs::path checkpoint;
  std::string mode = "linear";
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--mode", mode, "linear or finetune")
      ->check(CLI::IsMember({"linear", "finetune"}));

  auto* sweep = app.add_subcommand("sweep", "Label-efficiency sweep over pretrained encoders");

  auto* preview = app.add_subcommand("augment-preview", "CSV of one series and its two views");
  fs::path dataset;
  std::size_t sample = 0, series = 0;
  preview->add_option("--dataset", dataset, "Dataset file")->required();
  preview->add_option("--sample", sample, "Sample index");
  preview->add_option("--series", series, "Series index within the sample");

  auto* report = app.add_subcommand("report", "Summarize a run or sweep directory");
  fs::path report_dir;
  report->add_option("dir", report_dir, "Run or sweep directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    if (seed) cfg.set_seed(*seed);
    nlohmann::json result;
    if (synth->parsed()) result = commands::synth(cfg, out, force);
    else if (pretrain->parsed()) result = commands::pretrain(cfg, out, force);
    else if (eval->parsed()) result = commands::evaluate(cfg, checkpoint, mode, out, force);
    else if (sweep->parsed()) result = commands::sweep(cfg, out, force);
    else if (preview->parsed())
      result = commands::augment_preview(cfg, dataset, sample, series, out, force);
    else if (report->parsed()) result = commands::report(report_dir);
    if (!(preview->parsed() && out.empty())) std::cout << result.dump(2) << '\n';
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
