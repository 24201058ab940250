#include "tscl/commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "tscl/augment.hpp"
#include "tscl/error.hpp"
#include "tscl/eval.hpp"
#include "tscl/model.hpp"
#include "tscl/synth.hpp"
#include "tscl/train.hpp"

namespace tscl::commands {

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f.precision(10);
  return f;
}

void write_text(const fs::path& path, const std::string& text) {
  auto f = open_out(path);
  f << text;
  if (!f) throw IoError("write failed: " + path.string());
}

Dataset load_labeled(const fs::path& path, const char* role) {
  Dataset ds = load_dataset(path);
  if (!ds.has_labels())
    throw FormatError(std::string(role) + " split " + path.string() + " has no labels");
  return ds;
}

std::vector<std::size_t> rounds(std::size_t first, std::size_t count, std::size_t n_classes) {
  std::vector<std::size_t> out;
  for (std::size_t r = first; r < first + count; ++r)
    for (std::size_t c = 0; c < n_classes; ++c) out.push_back(r * n_classes + c);
  return out;
}

nlohmann::json metrics_json(const eval::Metrics& m) {
  return {{"overall_accuracy", m.overall_accuracy}, {"kappa", m.kappa}, {"macro_f1", m.macro_f1}};
}

void check_compatible(const ModelConfig& model, const Dataset& ds, const std::string& what) {
  if (static_cast<nn::Index>(ds.shape().c) != model.encoder.in_channels)
    throw ArgumentError("incompatible shapes: checkpoint expects C=" +
                        std::to_string(model.encoder.in_channels) + " but " + what +
                        " has shape " + to_string(ds.shape()));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::vector<std::vector<double>> read_numeric_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split_csv_line(line)) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw FormatError(path.string() + ": non-numeric cell '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void guard_overwrite(const fs::path& path, bool force) {
  if (!force && fs::exists(path))
    throw ArgumentError(path.string() + " already exists; pass --force to overwrite");
}

SplitSet synthesize_splits(const synth::SynthConfig& cfg, const SplitSizes& sizes,
                           std::uint64_t seed) {
  TSCL_REQUIRE(sizes.unlabeled >= 1 && sizes.train >= 1 && sizes.val >= 1 && sizes.test >= 1,
               ConfigError, "every synth split needs at least one sample per class");
  synth::SynthConfig full = cfg;
  full.n_per_class = sizes.total();
  const Dataset pool =
      synth::generate(full, RngStream(seed, stream_id({static_cast<std::uint64_t>(StreamPurpose::kSynth)})));
  const std::size_t k = cfg.n_classes;
  std::size_t at = 0;
  auto take = [&](std::size_t count, SplitTag tag) {
    Dataset out = pool.subset(rounds(at, count, k), tag);
    at += count;
    return out;
  };
  SplitSet s;
  s.unlabeled = take(sizes.unlabeled, SplitTag::kUnlabeled);
  s.train = take(sizes.train, SplitTag::kTrain);
  s.val = take(sizes.val, SplitTag::kVal);
  s.test = take(sizes.test, SplitTag::kTest);
  return s;
}

nlohmann::json synth(const RunConfig& cfg, const fs::path& out_dir, bool force) {
  DataConfig paths = cfg.data;
  if (!out_dir.empty()) {
    paths.unlabeled = out_dir / "unlabeled.tscl";
    paths.train = out_dir / "train.tscl";
    paths.val = out_dir / "val.tscl";
    paths.test = out_dir / "test.tscl";
  }
  const std::vector<fs::path> targets{paths.unlabeled, paths.train, paths.val, paths.test};
  std::set<fs::path> unique;
  for (const auto& p : targets)
    if (!unique.insert(fs::weakly_canonical(p)).second)
      throw ArgumentError("synth: output path " + p.string() + " is used by more than one split");
  for (const auto& p : targets) guard_overwrite(p, force);

  const SplitSet s = synthesize_splits(cfg.synth, cfg.splits, cfg.seed);
  const std::vector<std::pair<const Dataset*, fs::path>> jobs{
      {&s.unlabeled, paths.unlabeled}, {&s.train, paths.train}, {&s.val, paths.val},
      {&s.test, paths.test}};
  nlohmann::json out;
  std::size_t total = 0;
  for (const auto& [ds, path] : jobs) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_dataset(*ds, path);
    const auto shape = ds->shape();
    total += shape.n;
    out["splits"][to_string(ds->split())] = {{"path", path.string()},
                                             {"n", shape.n},
                                             {"n_ts", shape.n_ts},
                                             {"t", shape.t},
                                             {"c", shape.c}};
  }
  out["total_samples"] = total;
  out["n_classes"] = cfg.synth.n_classes;
  out["config_hash"] = cfg.hash();
  return out;
}

nlohmann::json pretrain(const RunConfig& cfg, const fs::path& run_dir_in, bool force) {
  const fs::path run_dir =
      run_dir_in.empty() ? fs::path("runs") / augment::to_string(cfg.pretrain.augment.strategy)
                         : run_dir_in;
  if (fs::exists(run_dir) && !fs::is_empty(run_dir) && !force)
    throw ArgumentError("run directory " + run_dir.string() +
                        " is not empty; pass --force to overwrite");
  const Dataset unlabeled = load_dataset(cfg.data.unlabeled);
  std::optional<Dataset> val;
  if (!cfg.data.val.empty()) val = load_labeled(cfg.data.val, "validation");

  fs::create_directories(run_dir);
  write_text(run_dir / "config.ini", cfg.to_ini());
  const nlohmann::json extra{{"config_hash", cfg.hash()}};
  train::RunHooks hooks;
  hooks.run_dir = run_dir;
  hooks.extra_config = extra;
  const std::size_t total = cfg.pretrain.train.total_steps;
  const std::size_t every = std::max<std::size_t>(1, cfg.pretrain.train.eval_every);
  hooks.on_step = [&](std::size_t step, const train::StepResult& r) {
    if ((step + 1) % every == 0 || step + 1 == total)
      std::cerr << "step " << step + 1 << "/" << total << " loss " << r.loss << " lr " << r.lr
                << '\n';
  };
  const auto result = train::pretrain(unlabeled, val ? &*val : nullptr, cfg.pretrain, hooks);
  nlohmann::json history = nlohmann::json::array();
  for (const auto& p : result.history) history.push_back({{"step", p.step}, {"score", p.score}});
  nlohmann::json out{{"run_dir", run_dir.string()},
                     {"steps", result.steps_run},
                     {"final_loss", result.losses.back()},
                     {"best_step", result.best_step},
                     {"best_checkpoint", (run_dir / "best.ckpt").string()},
                     {"history", history},
                     {"config_hash", cfg.hash()}};
  write_text(run_dir / "run.json", out.dump(2) + "\n");
  return out;
}

nlohmann::json evaluate(const RunConfig& cfg, const fs::path& checkpoint, const std::string& mode,
                        const fs::path& out, bool force) {
  if (mode != "linear" && mode != "finetune")
    throw ArgumentError("eval: unknown mode '" + mode + "' (linear, finetune)");
  if (!out.empty()) guard_overwrite(out, force);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  SslModel<float> model = ssl_model_from_checkpoint(ckpt);
  const ModelConfig mcfg = model_config_from_json(ckpt.config.at("model"));
  const Dataset train_ds = load_labeled(cfg.data.train, "train");
  const Dataset test_ds = load_labeled(cfg.data.test, "test");
  check_compatible(mcfg, train_ds, "train split");
  check_compatible(mcfg, test_ds, "test split");

  nlohmann::json result{{"mode", mode}, {"checkpoint", checkpoint.string()},
                        {"config_hash", cfg.hash()}, {"n_train", train_ds.size()},
                        {"n_test", test_ds.size()}};
  eval::Metrics m;
  if (mode == "linear") {
    const auto outcome = eval::linear_probe(eval::extract_features(train_ds, model.encoder),
                                            train_ds, eval::extract_features(test_ds, model.encoder),
                                            test_ds, cfg.pretrain.probe);
    m = outcome.metrics;
    result["probe_iterations"] = outcome.model.iterations;
    result["probe_converged"] = outcome.model.converged;
  } else {
    const Dataset val_ds = load_labeled(cfg.data.val, "validation");
    check_compatible(mcfg, val_ds, "validation split");
    const RngStream rng(cfg.seed, stream_id({static_cast<std::uint64_t>(StreamPurpose::kProbe)}));
    auto ft = eval::finetune(train_ds, val_ds, model.encoder, cfg.finetune, rng);
    const auto pred = eval::predict_samples(ft.model, test_ds);
    m = eval::metrics(eval::ConfusionMatrix::from_predictions(
        test_ds.labels(), pred, std::max(train_ds.n_classes(), test_ds.n_classes())));
    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : ft.log)
      log.push_back({{"epoch", e.epoch}, {"phase", e.phase}, {"train_loss", e.train_loss},
                     {"val_accuracy", e.val_accuracy}});
    result["head_epochs"] = ft.head_epochs;
    result["full_epochs"] = ft.full_epochs;
    result["best_epoch"] = ft.best_epoch;
    result["best_val_accuracy"] = ft.best_val_accuracy;
    result["log"] = log;
  }
  result.update(metrics_json(m));
  if (!out.empty()) write_text(out, result.dump(2) + "\n");
  return result;
}

nlohmann::json sweep(const RunConfig& cfg, const fs::path& out_dir_in, bool force) {
  const fs::path out_dir = out_dir_in.empty() ? fs::path("sweep") : out_dir_in;
  guard_overwrite(out_dir / "sweep.csv", force);
  guard_overwrite(out_dir / "summary.json", force);
  const Dataset pool = load_labeled(cfg.data.train, "train");
  const Dataset test = load_labeled(cfg.data.test, "test");

  std::vector<eval::FeatureSet> features;
  if (cfg.sweep.include_raw)
    features.push_back({"raw", eval::raw_features(pool), eval::raw_features(test)});
  for (const auto& strategy : cfg.sweep.strategies) {
    const fs::path ckpt_path = cfg.sweep.checkpoint_dir / strategy / "best.ckpt";
    if (!fs::exists(ckpt_path))
      throw IoError("sweep: no checkpoint for strategy '" + strategy + "' (expected " +
                    ckpt_path.string() + ")");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    SslModel<float> model = ssl_model_from_checkpoint(ckpt);
    check_compatible(model_config_from_json(ckpt.config.at("model")), pool, "train split");
    features.push_back({strategy, eval::extract_features(pool, model.encoder),
                        eval::extract_features(test, model.encoder)});
  }
  auto cells = eval::label_efficiency_sweep(features, pool, test, cfg.sweep.ks, cfg.sweep.repeats,
                                            cfg.pretrain.probe, cfg.seed);
  std::stable_sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    return std::tuple(eval::strategy_rank(a.strategy), a.strategy, a.k, a.repeat) <
           std::tuple(eval::strategy_rank(b.strategy), b.strategy, b.k, b.repeat);
  });
  fs::create_directories(out_dir);
  {
    auto csv = open_out(out_dir / "sweep.csv");
    csv << "augmentation,k,repeat,oa,kappa,f1\n";
    for (const auto& c : cells)
      csv << c.strategy << ',' << c.k << ',' << c.repeat << ',' << c.metrics.overall_accuracy << ','
          << c.metrics.kappa << ',' << c.metrics.macro_f1 << '\n';
  }
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& s : eval::summarize(cells))
    rows.push_back({{"augmentation", s.strategy},
                    {"k", s.k},
                    {"repeats", s.repeats},
                    {"oa_mean", s.oa_mean},
                    {"oa_std", s.oa_std},
                    {"kappa_mean", s.kappa_mean},
                    {"kappa_std", s.kappa_std},
                    {"f1_mean", s.f1_mean},
                    {"f1_std", s.f1_std},
                    {"high_variance", s.high_variance}});
  nlohmann::json out{{"cells", cells.size()}, {"summary", rows}, {"config_hash", cfg.hash()},
                     {"csv", (out_dir / "sweep.csv").string()}};
  write_text(out_dir / "summary.json", out.dump(2) + "\n");
  return out;
}

nlohmann::json augment_preview(const RunConfig& cfg, const fs::path& dataset, std::size_t sample,
                               std::size_t series, const fs::path& out, bool force) {
  const Dataset ds = load_dataset(dataset);
  if (sample >= ds.size())
    throw ArgumentError("augment-preview: sample " + std::to_string(sample) + " out of range (N=" +
                        std::to_string(ds.size()) + ")");
  const auto& s = ds[sample];
  if (series >= s.series.size())
    throw ArgumentError("augment-preview: series " + std::to_string(series) +
                        " out of range (N_ts=" + std::to_string(s.series.size()) + ")");
  RngStream rng = RngStream(cfg.seed, 0).substream(StreamPurpose::kAugment, 0, sample);
  const std::vector<TimeSeries> group{s.series[series]};
  const auto [v1, v2] = augment::make_views(group, cfg.pretrain.augment, rng);
  const auto& orig = s.series[series].values();
  std::ostringstream csv;
  csv.precision(10);
  csv << "t,channel,original,view1,view2\n";
  for (nn::Index t = 0; t < orig.rows(); ++t)
    for (nn::Index c = 0; c < orig.cols(); ++c)
      csv << t << ',' << c << ',' << orig(t, c) << ',' << v1[0](t, c) << ',' << v2[0](t, c) << '\n';
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    guard_overwrite(out, force);
    write_text(out, csv.str());
  }
  return {{"dataset", dataset.string()},
          {"sample", sample},
          {"series", series},
          {"strategy", augment::to_string(cfg.pretrain.augment.strategy)},
          {"rows", orig.rows() * orig.cols()}};
}

nlohmann::json report(const fs::path& dir) {
  if (fs::exists(dir / "loss.csv")) {
    const auto loss = read_numeric_csv(dir / "loss.csv");
    if (loss.empty()) throw FormatError(dir.string() + "/loss.csv has no rows");
    for (const auto& r : loss)
      if (r.size() < 3) throw FormatError(dir.string() + "/loss.csv: expected 3 columns");
    double lo = loss.front()[1], hi = lo;
    for (const auto& r : loss) {
      lo = std::min(lo, r[1]);
      hi = std::max(hi, r[1]);
    }
    nlohmann::json out{{"kind", "pretrain"},
                       {"steps", loss.size()},
                       {"first_loss", loss.front()[1]},
                       {"final_loss", loss.back()[1]},
                       {"min_loss", lo},
                       {"max_loss", hi}};
    if (fs::exists(dir / "val.csv")) {
      nlohmann::json evals = nlohmann::json::array();
      for (const auto& r : read_numeric_csv(dir / "val.csv")) {
        if (r.size() < 4) throw FormatError(dir.string() + "/val.csv: expected 4 columns");
        evals.push_back({{"step", r[0]},
                         {"score", r[1]},
                         {"embedding_std", r[2]},
                         {"projection_std", r[3]}});
      }
      out["evaluations"] = evals;
    }
    if (fs::exists(dir / "best.txt")) {
      std::ifstream in(dir / "best.txt");
      std::string name;
      in >> name;
      out["best_checkpoint"] = name;
    }
    return out;
  }
  if (fs::exists(dir / "summary.json")) {
    std::ifstream in(dir / "summary.json");
    nlohmann::json summary;
    try {
      summary = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(dir.string() + "/summary.json: " + e.what());
    }
    summary["kind"] = "sweep";
    return summary;
  }
  throw IoError("report: " + dir.string() + " holds neither loss.csv nor summary.json");
}

}  // namespace tscl::commands
