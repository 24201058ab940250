#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tscl/eval.hpp"
#include "tscl/synth.hpp"
#include "tscl/train.hpp"

namespace tscl {

struct DataConfig {
  std::filesystem::path unlabeled = "data/unlabeled.tscl";
  std::filesystem::path train = "data/train.tscl";
  std::filesystem::path val = "data/val.tscl";
  std::filesystem::path test = "data/test.tscl";
};

// Samples per class in each split written by `tscl synth`.
struct SplitSizes {
  std::size_t unlabeled = 200;
  std::size_t train = 100;
  std::size_t val = 20;
  std::size_t test = 50;

  std::size_t total() const { return unlabeled + train + val + test; }
};

struct SweepConfig {
  std::vector<std::size_t> ks{5, 10, 20, 50, 100};
  std::size_t repeats = 20;
  std::vector<std::string> strategies{"jitter", "resize", "mask", "resample"};
  // Holds one run directory per strategy: <dir>/<strategy>/best.ckpt.
  std::filesystem::path checkpoint_dir = "runs";
  bool include_raw = true;
};

// Resolved configuration of one command. Text form is INI: `[section]`
// headers and `key = value` lines; every key is optional, unknown keys are
// rejected. Sections: run, data, synth, augment, ssl, model, train, eval, sweep.
struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  synth::SynthConfig synth;
  SplitSizes splits;
  train::PretrainSettings pretrain;
  eval::FinetuneConfig finetune;
  SweepConfig sweep;

  RunConfig();

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& section, const std::string& key, const std::string& value);
  void set_seed(std::uint64_t s);
  void validate() const;

  // Every field, one per line, in a fixed order; parse(to_ini()) round-trips.
  std::string to_ini() const;
  // FNV-1a of to_ini().
  std::string hash() const;
};

}  // namespace tscl
