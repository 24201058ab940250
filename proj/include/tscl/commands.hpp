#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "tscl/config.hpp"
#include "tscl/data.hpp"

// Command implementations behind the `tscl` executable. Each returns a JSON
// summary that the executable prints; files are only overwritten with force.
namespace tscl::commands {

namespace fs = std::filesystem;

struct SplitSet {
  Dataset unlabeled, train, val, test;
};

// One generated pool cut into class-balanced, disjoint splits.
SplitSet synthesize_splits(const synth::SynthConfig& cfg, const SplitSizes& sizes,
                           std::uint64_t seed);

// Writes the four splits to out_dir/{unlabeled,train,val,test}.tscl, or to the
// configured data paths when out_dir is empty.
nlohmann::json synth(const RunConfig& cfg, const fs::path& out_dir, bool force);

// Pretrains into run_dir (default runs/<strategy>).
nlohmann::json pretrain(const RunConfig& cfg, const fs::path& run_dir, bool force);

// mode is "linear" or "finetune"; metrics JSON goes to out when non-empty.
nlohmann::json evaluate(const RunConfig& cfg, const fs::path& checkpoint, const std::string& mode,
                        const fs::path& out, bool force);

// Label-efficiency grid; writes out_dir/sweep.csv and out_dir/summary.json.
nlohmann::json sweep(const RunConfig& cfg, const fs::path& out_dir, bool force);

// CSV rows (t, channel, original, view1, view2) for one series of one sample.
nlohmann::json augment_preview(const RunConfig& cfg, const fs::path& dataset, std::size_t sample,
                               std::size_t series, const fs::path& out, bool force);

// Summary of a pretraining run directory or a sweep output directory.
nlohmann::json report(const fs::path& dir);

// Throws ArgumentError if path exists and force is not set.
void guard_overwrite(const fs::path& path, bool force);

}  // namespace tscl::commands
