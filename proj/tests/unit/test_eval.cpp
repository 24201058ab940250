#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "tscl/error.hpp"
#include "tscl/eval.hpp"
#include "tscl/synth.hpp"

using namespace tscl;
using namespace tscl::eval;

namespace {

struct Pairs {
  std::vector<std::uint32_t> truth, pred;
};

Pairs expand(const ConfusionMatrix& cm) {
  Pairs p;
  for (std::uint32_t i = 0; i < cm.n_classes(); ++i)
    for (std::uint32_t j = 0; j < cm.n_classes(); ++j)
      for (std::uint64_t n = 0; n < cm.at(i, j); ++n) {
        p.truth.push_back(i);
        p.pred.push_back(j);
      }
  return p;
}

// Recomputes every metric from the individual (truth, prediction) pairs.
Metrics brute_force(const Pairs& p, std::size_t k) {
  const double n = static_cast<double>(p.truth.size());
  double agree = 0.0;
  for (std::size_t i = 0; i < p.truth.size(); ++i) agree += p.truth[i] == p.pred[i];
  double chance = 0.0, f1 = 0.0;
  for (std::uint32_t c = 0; c < k; ++c) {
    double as_truth = 0.0, as_pred = 0.0, tp = 0.0;
    for (std::size_t i = 0; i < p.truth.size(); ++i) {
      as_truth += p.truth[i] == c;
      as_pred += p.pred[i] == c;
      tp += p.truth[i] == c && p.pred[i] == c;
    }
    chance += (as_truth / n) * (as_pred / n);
    if (tp > 0.0) {
      const double precision = tp / as_pred, recall = tp / as_truth;
      f1 += 2.0 * precision * recall / (precision + recall);
    }
  }
  const double oa = agree / n;
  return {oa, (oa - chance) / (1.0 - chance), f1 / static_cast<double>(k)};
}

Dataset tiny_labeled(std::size_t per_class, std::uint64_t seed, SplitTag tag) {
  synth::SynthConfig cfg;
  cfg.n_classes = 3;
  cfg.n_per_class = per_class;
  cfg.n_ts = 2;
  cfg.t = 16;
  cfg.c = 2;
  const Dataset ds = synth::generate(cfg, RngStream(seed, 0));
  std::vector<std::size_t> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  return ds.subset(all, tag);
}

}  // namespace

TEST_CASE("metrics match a brute-force recomputation on random confusion matrices") {
  RngStream rng(1, 0);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    ConfusionMatrix cm(5);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j) cm.at(i, j) = rng.index(i == j ? 30 : 8);
    if (cm.total() == 0) cm.at(0, 0) = 1;
    const Metrics got = metrics(cm);
    const Metrics want = brute_force(expand(cm), 5);
    worst = std::max({worst, std::abs(got.overall_accuracy - want.overall_accuracy),
                      std::abs(got.kappa - want.kappa), std::abs(got.macro_f1 - want.macro_f1)});
    CHECK(got.kappa <= got.overall_accuracy + 1e-12);
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("metric hand cases") {
  ConfusionMatrix even(2);
  even.at(0, 0) = even.at(0, 1) = even.at(1, 0) = even.at(1, 1) = 1;
  const Metrics m = metrics(even);
  CHECK(m.overall_accuracy == 0.5);
  CHECK(m.kappa == 0.0);
  CHECK(m.macro_f1 == 0.5);

  ConfusionMatrix perfect(3);
  for (std::size_t i = 0; i < 3; ++i) perfect.at(i, i) = 4;
  CHECK(metrics(perfect).kappa == 1.0);
  CHECK(metrics(perfect).macro_f1 == 1.0);

  // One class only, all correct: chance agreement is 1.
  ConfusionMatrix single(2);
  single.at(0, 0) = 5;
  CHECK(metrics(single).overall_accuracy == 1.0);
  CHECK(metrics(single).kappa == 1.0);
  CHECK(metrics(single).macro_f1 == 0.5);

  CHECK_THROWS_AS(metrics(ConfusionMatrix(3)), ArgumentError);
  const auto cm = ConfusionMatrix::from_predictions({0, 1, 1}, {0, 0, 1}, 2);
  CHECK(cm.at(1, 0) == 1);
  CHECK(cm.total() == 3);
  CHECK_THROWS_AS(ConfusionMatrix::from_predictions({0, 2}, {0, 1}, 2), ArgumentError);
}

TEST_CASE("majority vote") {
  CHECK(majority_vote({0, 1, 1, 2, 2, 0}, 3, 3) == std::vector<std::uint32_t>{1, 2});
  // Three-way tie without probabilities: lowest index.
  CHECK(majority_vote({2, 1, 0}, 3, 3) == std::vector<std::uint32_t>{0});
  // Tie broken by summed probability.
  Features probs(2, 3);
  probs << 0.1, 0.5, 0.4,  //
      0.2, 0.1, 0.7;
  CHECK(majority_vote({1, 2}, 2, 3, &probs) == std::vector<std::uint32_t>{2});
  CHECK(majority_vote({4, 4}, 1, 5) == std::vector<std::uint32_t>{4, 4});
  CHECK_THROWS_AS(majority_vote({0, 1, 2}, 2, 3), ArgumentError);
  CHECK_THROWS_AS(majority_vote({0, 3}, 2, 3), ArgumentError);
}

TEST_CASE("majority vote ignores the order of a sample's predictions") {
  RngStream rng(2, 0);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<std::uint32_t> v(8);
    for (auto& x : v) x = static_cast<std::uint32_t>(rng.index(4));
    const auto base = majority_vote(v, 8, 4);
    const auto perm = rng.permutation(8);
    std::vector<std::uint32_t> w(8);
    for (std::size_t i = 0; i < 8; ++i) w[i] = v[perm[i]];
    CHECK(majority_vote(w, 8, 4) == base);
  }
}

TEST_CASE("logistic regression objective gradient") {
  RngStream rng(3, 0);
  const Features x = testing::random_matrix(12, 3, rng);
  std::vector<std::uint32_t> y(12);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<std::uint32_t>(i % 4);
  Features w = testing::random_matrix(3, 4, rng);
  nn::RowVector<double> b = testing::random_matrix(1, 4, rng);
  Features gw;
  nn::RowVector<double> gb;
  logreg_objective(x, y, 4, 0.7, w, b, &gw, &gb);
  CHECK(testing::fd_relative_error(w, gw, [&] { return logreg_objective(x, y, 4, 0.7, w, b); }) <=
        1e-6);
  Features bm = b;
  const Features gbm = gb;
  auto with_bias = [&] {
    return logreg_objective(x, y, 4, 0.7, w, nn::RowVector<double>(bm.row(0)));
  };
  CHECK(testing::fd_relative_error(bm, gbm, with_bias) <= 1e-6);
}

TEST_CASE("logistic regression separates a toy problem") {
  RngStream rng(4, 0);
  Features x(40, 2);
  std::vector<std::uint32_t> y(40);
  for (Index i = 0; i < 40; ++i) {
    y[i] = static_cast<std::uint32_t>(i % 2);
    x(i, 0) = (y[i] ? 2.0 : -2.0) + 0.3 * rng.normal();
    x(i, 1) = rng.normal();
  }
  const auto model = fit_logreg(x, y, 2, ProbeConfig{});
  CHECK(model.converged);
  CHECK(model.predict(x) == y);
  const Features p = model.predict_proba(x);
  for (Index i = 0; i < p.rows(); ++i) CHECK(p.row(i).sum() == doctest::Approx(1.0));
}

TEST_CASE("duplicated features receive identical weights") {
  RngStream rng(5, 0);
  Features x(30, 2);
  std::vector<std::uint32_t> y(30);
  for (Index i = 0; i < 30; ++i) {
    y[i] = static_cast<std::uint32_t>(i % 3);
    x(i, 0) = x(i, 1) = static_cast<double>(y[i]) + 0.5 * rng.normal();
  }
  const auto model = fit_logreg(x, y, 3, ProbeConfig{1.0, 1e-9, 5000});
  CHECK(model.converged);
  CHECK((model.weights.row(0) - model.weights.row(1)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("logistic regression reaches the grid-search minimum") {
  // One feature, two classes: the optimum has w1 = -w0 and only the bias
  // difference matters, so a 2-D grid over (w1 - w0, b1 - b0) covers it.
  RngStream rng(6, 0);
  Features x(20, 1);
  std::vector<std::uint32_t> y(20);
  for (Index i = 0; i < 20; ++i) {
    y[i] = static_cast<std::uint32_t>(i % 2);
    x(i, 0) = (y[i] ? 0.5 : -0.5) + rng.normal();
  }
  const double c = 2.0;
  const auto model = fit_logreg(x, y, 2, ProbeConfig{c, 1e-10, 5000});
  double grid_min = std::numeric_limits<double>::infinity();
  for (double dw = -5.0; dw <= 5.0; dw += 0.01)
    for (double db = -2.0; db <= 2.0; db += 0.01) {
      Features w(1, 2);
      w << -dw / 2.0, dw / 2.0;
      nn::RowVector<double> b(2);
      b << 0.0, db;
      grid_min = std::min(grid_min, logreg_objective(x, y, 2, c, w, b));
    }
  CHECK(model.objective <= grid_min + 1e-12);
  CHECK(grid_min - model.objective <= 1e-4);
}

TEST_CASE("logistic regression needs two classes") {
  const Features x = Features::Ones(4, 2);
  CHECK_THROWS_AS(fit_logreg(x, {1, 1, 1, 1}, 3, ProbeConfig{}), ArgumentError);
  CHECK_THROWS_AS(fit_logreg(x, {0, 1, 1, 3}, 3, ProbeConfig{}), ArgumentError);
  CHECK_THROWS_AS(ProbeConfig({0.0, 1e-5, 10}).validate(), ArgumentError);
}

TEST_CASE("per-class draws are reproducible and balanced") {
  const Dataset pool = tiny_labeled(6, 7, SplitTag::kTrain);
  const auto a = draw_per_class(pool, 4, 2, 11);
  CHECK(a == draw_per_class(pool, 4, 2, 11));
  CHECK(a.size() == 12);
  CHECK(std::is_sorted(a.begin(), a.end()));
  std::vector<int> counts(3, 0);
  for (auto i : a) ++counts[*pool[i].label];
  CHECK(counts == std::vector<int>{4, 4, 4});
  CHECK_FALSE(a == draw_per_class(pool, 4, 3, 11));
  CHECK_THROWS_AS(draw_per_class(pool, 7, 0, 11), ArgumentError);
}

TEST_CASE("label-efficiency sweep is deterministic and summarized in canonical order") {
  const Dataset pool = tiny_labeled(6, 8, SplitTag::kTrain);
  const Dataset test = tiny_labeled(4, 9, SplitTag::kTest);
  std::vector<FeatureSet> feats;
  feats.push_back({"resample", raw_features(pool), raw_features(test)});
  feats.push_back({"raw", raw_features(pool), raw_features(test)});
  const auto c1 = label_efficiency_sweep(feats, pool, test, {2, 3}, 3, ProbeConfig{}, 5);
  const auto c2 = label_efficiency_sweep(feats, pool, test, {2, 3}, 3, ProbeConfig{}, 5);
  REQUIRE(c1.size() == 12);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i].metrics.overall_accuracy == c2[i].metrics.overall_accuracy);
    CHECK(c1[i].metrics.kappa == c2[i].metrics.kappa);
  }
  const auto summary = summarize(c1);
  REQUIRE(summary.size() == 4);
  CHECK(summary[0].strategy == "raw");
  CHECK(summary[0].k == 2);
  CHECK(summary[3].strategy == "resample");
  CHECK(summary[3].k == 3);
  // Identical features give identical cells.
  CHECK(summary[0].oa_mean == summary[2].oa_mean);
  CHECK(summary[0].repeats == 3);
  CHECK(strategy_rank("raw") < strategy_rank("jitter"));
  CHECK(strategy_rank("mask") < strategy_rank("resample"));
  CHECK_THROWS_AS(label_efficiency_sweep(feats, pool, test, {7}, 1, ProbeConfig{}, 5),
                  ArgumentError);
}

TEST_CASE("summary statistics use the sample standard deviation") {
  std::vector<SweepCell> cells;
  for (std::size_t r = 0; r < 3; ++r)
    cells.push_back({"jitter", 5, r, Metrics{0.5 + 0.005 * static_cast<double>(r), 0.0, 0.0}});
  const auto s = summarize(cells);
  REQUIRE(s.size() == 1);
  CHECK(s[0].oa_mean == doctest::Approx(0.505));
  CHECK(s[0].oa_std == doctest::Approx(0.005));
  CHECK_FALSE(s[0].high_variance);
  cells[2].metrics.overall_accuracy = 0.6;
  CHECK(summarize(cells)[0].high_variance);
}

TEST_CASE("raw features and series labels line up") {
  const Dataset ds = tiny_labeled(2, 10, SplitTag::kTrain);
  const Features f = raw_features(ds);
  CHECK(f.rows() == 12);
  CHECK(f.cols() == 2 * 4 + 16 * 2);
  const auto labels = series_labels(ds);
  CHECK(labels.size() == 12);
  CHECK(labels[0] == labels[1]);
  CHECK(labels[2] == *ds[1].label);
  const auto& s = ds[0].series[1].values();
  CHECK(f(1, 0) == doctest::Approx(s.col(0).mean()));
}

TEST_CASE("finetuning freezes the encoder during the head phase") {
  const Dataset train = tiny_labeled(4, 11, SplitTag::kTrain);
  const Dataset val = tiny_labeled(2, 12, SplitTag::kVal);
  nn::EncoderConfig ec;
  ec.in_channels = 2;
  ec.block_filters = {4};
  RngStream init(13, 0);
  const nn::Encoder<float> encoder(ec, init);
  FinetuneConfig cfg;
  cfg.head_epochs = 3;
  cfg.full_epochs = 0;
  cfg.batch_size = 8;
  cfg.hidden = 8;
  const auto r = finetune(train, val, encoder, cfg, RngStream(14, 0));
  CHECK(r.head_epochs == 3);
  CHECK(r.full_epochs == 0);
  CHECK(r.log.size() == 3);
  const auto before = nn::param_refs<float>(encoder);
  const auto after = nn::param_refs<float>(r.model.encoder);
  for (std::size_t i = 0; i < before.params.size(); ++i)
    CHECK(before.params[i]->value == after.params[i]->value);
  for (std::size_t i = 0; i < before.buffers.size(); ++i)
    CHECK(before.buffers[i]->value == after.buffers[i]->value);

  cfg.full_epochs = 2;
  auto full = finetune(train, val, encoder, cfg, RngStream(14, 0));
  REQUIRE(full.log.size() == 5);
  CHECK(full.log[2].phase == "head");
  CHECK(full.log[3].phase == "full");
  CHECK(full.log[4].epoch == 5);
  CHECK(full.best_epoch >= 1);
  auto again = finetune(train, val, encoder, cfg, RngStream(14, 0));
  CHECK(again.log.back().train_loss == full.log.back().train_loss);
  CHECK(predict_samples(again.model, val) == predict_samples(full.model, val));
}
