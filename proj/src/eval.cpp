#include "tscl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>

#include "tscl/error.hpp"
#include "tscl/optim.hpp"
#include "tscl/util.hpp"

namespace tscl::eval {

ConfusionMatrix ConfusionMatrix::from_predictions(const std::vector<std::uint32_t>& truth,
                                                  const std::vector<std::uint32_t>& predicted,
                                                  std::size_t n_classes) {
  TSCL_REQUIRE(truth.size() == predicted.size(), ArgumentError,
               "confusion matrix: truth and prediction lengths differ");
  ConfusionMatrix cm(n_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

void ConfusionMatrix::add(std::uint32_t truth, std::uint32_t predicted) {
  TSCL_REQUIRE(truth < n_ && predicted < n_, ArgumentError, "confusion matrix: class out of range");
  ++at(truth, predicted);
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

Metrics metrics(const ConfusionMatrix& cm) {
  const std::size_t n = cm.n_classes();
  const double total = static_cast<double>(cm.total());
  TSCL_REQUIRE(total > 0, ArgumentError, "metrics: empty confusion matrix");
  std::vector<double> rows(n, 0.0), cols(n, 0.0);
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double v = static_cast<double>(cm.at(i, j));
      rows[i] += v;
      cols[j] += v;
      if (i == j) trace += v;
    }
  Metrics m;
  m.overall_accuracy = trace / total;
  double pe = 0.0;
  for (std::size_t k = 0; k < n; ++k) pe += rows[k] * cols[k];
  pe /= total * total;
  // p_e = 1 only when truth and prediction are the same single class.
  m.kappa = pe < 1.0 ? (m.overall_accuracy - pe) / (1.0 - pe) : (m.overall_accuracy == 1.0 ? 1.0 : 0.0);
  double f1 = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double tp = static_cast<double>(cm.at(k, k));
    const double denom = rows[k] + cols[k];
    if (rows[k] > 0 && tp > 0) f1 += 2.0 * tp / denom;
  }
  m.macro_f1 = f1 / static_cast<double>(n);
  return m;
}

std::vector<std::uint32_t> majority_vote(const std::vector<std::uint32_t>& per_series,
                                         std::size_t n_ts, std::size_t n_classes,
                                         const Features* probs) {
  TSCL_REQUIRE(n_ts >= 1, ArgumentError, "majority_vote: N_ts must be >= 1");
  TSCL_REQUIRE(per_series.size() % n_ts == 0, ArgumentError,
               "majority_vote: prediction count not a multiple of N_ts");
  if (probs)
    TSCL_REQUIRE(static_cast<std::size_t>(probs->rows()) == per_series.size() &&
                     static_cast<std::size_t>(probs->cols()) == n_classes,
                 ArgumentError, "majority_vote: probability matrix shape mismatch");
  const std::size_t n = per_series.size() / n_ts;
  std::vector<std::uint32_t> out(n);
  std::vector<std::size_t> votes(n_classes);
  std::vector<double> mass(n_classes);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(votes.begin(), votes.end(), 0);
    std::fill(mass.begin(), mass.end(), 0.0);
    for (std::size_t j = 0; j < n_ts; ++j) {
      const std::size_t row = s * n_ts + j;
      TSCL_REQUIRE(per_series[row] < n_classes, ArgumentError, "majority_vote: class out of range");
      ++votes[per_series[row]];
      if (probs)
        for (std::size_t k = 0; k < n_classes; ++k)
          mass[k] += (*probs)(static_cast<Index>(row), static_cast<Index>(k));
    }
    std::size_t best = 0;
    for (std::size_t k = 1; k < n_classes; ++k) {
      if (votes[k] > votes[best] || (votes[k] == votes[best] && mass[k] > mass[best])) best = k;
    }
    out[s] = static_cast<std::uint32_t>(best);
  }
  return out;
}

void ProbeConfig::validate() const {
  TSCL_REQUIRE(c > 0.0, ArgumentError, "probe: C must be > 0");
  TSCL_REQUIRE(tolerance > 0.0, ArgumentError, "probe: tolerance must be > 0");
  TSCL_REQUIRE(max_iterations >= 1, ArgumentError, "probe: max_iterations must be >= 1");
}

namespace {

Features softmax_rows(Features logits) {
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - mx).exp();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

}  // namespace

Features LogisticModel::predict_proba(const Features& x) const {
  Features logits = x * weights;
  logits.rowwise() += bias;
  return softmax_rows(std::move(logits));
}

std::vector<std::uint32_t> LogisticModel::predict(const Features& x) const {
  Features logits = x * weights;
  logits.rowwise() += bias;
  std::vector<std::uint32_t> out(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(arg);
  }
  return out;
}

double logreg_objective(const Features& x, const std::vector<std::uint32_t>& labels,
                        std::size_t n_classes, double c, const Features& weights,
                        const nn::RowVector<double>& bias, Features* grad_w,
                        nn::RowVector<double>* grad_b) {
  const double m = static_cast<double>(x.rows());
  Features logits = x * weights;
  logits.rowwise() += bias;
  double loss = 0.0;
  Features residual(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const nn::RowVector<double> e = (logits.row(i).array() - mx).exp();
    const double s = e.sum();
    const auto y = static_cast<Index>(labels[static_cast<std::size_t>(i)]);
    loss += mx + std::log(s) - logits(i, y);
    residual.row(i) = e / s;
    residual(i, y) -= 1.0;
  }
  const double reg = 1.0 / (2.0 * c * m);
  loss = loss / m + reg * weights.squaredNorm();
  if (grad_w) *grad_w = x.transpose() * residual / m + 2.0 * reg * weights;
  if (grad_b) *grad_b = residual.colwise().sum() / m;
  (void)n_classes;
  return loss;
}

LogisticModel fit_logreg(const Features& x, const std::vector<std::uint32_t>& labels,
                         std::size_t n_classes, const ProbeConfig& cfg) {
  cfg.validate();
  TSCL_REQUIRE(static_cast<std::size_t>(x.rows()) == labels.size() && x.rows() > 0, ArgumentError,
               "fit_logreg: feature rows and labels differ in length");
  std::vector<bool> present(n_classes, false);
  for (auto y : labels) {
    TSCL_REQUIRE(y < n_classes, ArgumentError, "fit_logreg: label out of range");
    present[y] = true;
  }
  TSCL_REQUIRE(std::count(present.begin(), present.end(), true) >= 2, ArgumentError,
               "fit_logreg: need at least two classes");

  const Index d = x.cols();
  const Index k = static_cast<Index>(n_classes);
  const Index dim = d * k + k;
  using Vec = Eigen::VectorXd;
  auto unpack = [&](const Vec& theta, Features& w, nn::RowVector<double>& b) {
    w = Eigen::Map<const Features>(theta.data(), d, k);
    b = theta.tail(k).transpose();
  };
  auto eval = [&](const Vec& theta, Vec& grad) {
    Features w, gw;
    nn::RowVector<double> b, gb;
    unpack(theta, w, b);
    const double f = logreg_objective(x, labels, n_classes, cfg.c, w, b, &gw, &gb);
    grad.resize(dim);
    grad.head(d * k) = Eigen::Map<const Vec>(gw.data(), d * k);
    grad.tail(k) = gb.transpose();
    return f;
  };

  Vec theta = Vec::Zero(dim);
  Vec grad;
  double f = eval(theta, grad);
  constexpr std::size_t kMemory = 10;
  std::deque<Vec> s_hist, y_hist;
  std::deque<double> rho_hist;
  LogisticModel model;
  std::size_t it = 0;
  for (; it < cfg.max_iterations; ++it) {
    if (grad.cwiseAbs().maxCoeff() <= cfg.tolerance) {
      model.converged = true;
      break;
    }
    // Two-loop recursion.
    Vec q = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Vec dir = -q;
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -grad;
      slope = -grad.squaredNorm();
    }
    double step = s_hist.empty() ? std::min(1.0, 1.0 / grad.norm()) : 1.0;
    Vec next, next_grad;
    double next_f = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      next = theta + step * dir;
      next_f = eval(next, next_grad);
      if (std::isfinite(next_f) && next_f <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further decrease representable
    Vec s = next - theta;
    Vec y = next_grad - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    theta = std::move(next);
    grad = std::move(next_grad);
    f = next_f;
  }
  if (!model.converged && grad.cwiseAbs().maxCoeff() <= cfg.tolerance) model.converged = true;
  unpack(theta, model.weights, model.bias);
  model.iterations = it;
  model.objective = f;
  return model;
}

Features extract_features(const Dataset& ds, nn::Encoder<float>& encoder) {
  const auto shape = ds.shape();
  if (static_cast<Index>(shape.c) != encoder.config().in_channels)
    throw ArgumentError("extract_features: dataset has C=" + std::to_string(shape.c) +
                        " but the encoder expects " +
                        std::to_string(encoder.config().in_channels) + " channels");
  const std::size_t total = shape.n * shape.n_ts;
  Features out(static_cast<Index>(total), encoder.embedding_dim());
  constexpr std::size_t kChunk = 256;
  std::vector<const SeriesMatrix*> chunk;
  std::size_t row = 0;
  auto flush = [&] {
    if (chunk.empty()) return;
    std::vector<SeriesMatrix> values;
    values.reserve(chunk.size());
    for (const auto* m : chunk) values.push_back(*m);
    const nn::Matrix<float> x = nn::stack_series<float>(values);
    nn::Pass pass{false, static_cast<Index>(shape.t), nullptr};
    const nn::Matrix<float> e = encoder.forward(x, pass);
    out.middleRows(static_cast<Index>(row), e.rows()) = e.cast<double>();
    row += chunk.size();
    chunk.clear();
  };
  for (const auto& s : ds.samples())
    for (const auto& ts : s.series) {
      chunk.push_back(&ts.values());
      if (chunk.size() == kChunk) flush();
    }
  flush();
  return out;
}

Features raw_features(const Dataset& ds) {
  const auto shape = ds.shape();
  const bool flat = shape.t * shape.c <= 1024;
  const Index width = static_cast<Index>(4 * shape.c + (flat ? shape.t * shape.c : 0));
  Features out(static_cast<Index>(shape.n * shape.n_ts), width);
  Index r = 0;
  for (const auto& s : ds.samples())
    for (const auto& ts : s.series) {
      const SeriesMatrix& v = ts.values();
      const Eigen::RowVectorXd mean = v.colwise().mean();
      const Eigen::RowVectorXd sd =
          ((v.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(v.rows()))
              .sqrt();
      const Index c = v.cols();
      out.block(r, 0, 1, c) = mean;
      out.block(r, c, 1, c) = sd;
      out.block(r, 2 * c, 1, c) = v.colwise().minCoeff();
      out.block(r, 3 * c, 1, c) = v.colwise().maxCoeff();
      if (flat) out.block(r, 4 * c, 1, v.size()) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), v.size());
      ++r;
    }
  return out;
}

std::vector<std::uint32_t> series_labels(const Dataset& ds) {
  std::vector<std::uint32_t> out;
  const auto n_ts = ds.shape().n_ts;
  for (auto y : ds.labels()) out.insert(out.end(), n_ts, y);
  return out;
}

ProbeOutcome linear_probe(const Features& train_x, const Dataset& train, const Features& test_x,
                          const Dataset& test, const ProbeConfig& cfg) {
  TSCL_REQUIRE(train_x.cols() == test_x.cols(), ArgumentError,
               "linear_probe: train and test feature widths differ");
  const std::size_t n_classes = std::max(train.n_classes(), test.n_classes());
  ProbeOutcome out;
  out.model = fit_logreg(train_x, series_labels(train), n_classes, cfg);
  const Features probs = out.model.predict_proba(test_x);
  std::vector<std::uint32_t> per_series(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) {
    Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    per_series[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(arg);
  }
  out.predictions = majority_vote(per_series, test.shape().n_ts, n_classes, &probs);
  out.metrics = metrics(ConfusionMatrix::from_predictions(test.labels(), out.predictions, n_classes));
  return out;
}

// ---- finetuning ----

namespace {

struct SeriesRef {
  const SeriesMatrix* values;
  std::uint32_t label;
};

std::vector<SeriesRef> flatten(const Dataset& ds) {
  std::vector<SeriesRef> out;
  for (const auto& s : ds.samples())
    for (const auto& ts : s.series) out.push_back({&ts.values(), *s.label});
  return out;
}

// Mean cross-entropy and its gradient w.r.t. logits.
double cross_entropy(const nn::Matrix<float>& logits, const std::vector<std::uint32_t>& labels,
                     nn::Matrix<float>& grad) {
  grad.resize(logits.rows(), logits.cols());
  double loss = 0.0;
  const float inv = 1.0f / static_cast<float>(logits.rows());
  for (Index i = 0; i < logits.rows(); ++i) {
    const float mx = logits.row(i).maxCoeff();
    const nn::RowVector<float> e = (logits.row(i).array() - mx).exp();
    const float s = e.sum();
    const auto y = static_cast<Index>(labels[static_cast<std::size_t>(i)]);
    loss += static_cast<double>(mx + std::log(s) - logits(i, y));
    grad.row(i) = e / s * inv;
    grad(i, y) -= inv;
  }
  return loss / static_cast<double>(logits.rows());
}

double sample_accuracy(ClassifierModel<float>& model, const Dataset& ds) {
  const auto pred = predict_samples(model, ds);
  const auto truth = ds.labels();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace

std::vector<std::uint32_t> predict_samples(ClassifierModel<float>& model, const Dataset& ds) {
  const Features feats = extract_features(ds, model.encoder);
  const std::size_t n_classes = static_cast<std::size_t>(model.head.out_features());
  nn::Pass pass{false, 0, nullptr};
  const nn::Matrix<float> logits = model.head.forward(feats.cast<float>(), pass);
  Features probs = softmax_rows(logits.cast<double>());
  std::vector<std::uint32_t> per_series(static_cast<std::size_t>(probs.rows()));
  for (Index i = 0; i < probs.rows(); ++i) {
    Index arg = 0;
    probs.row(i).maxCoeff(&arg);
    per_series[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(arg);
  }
  return majority_vote(per_series, ds.shape().n_ts, n_classes, &probs);
}

FinetuneResult finetune(const Dataset& train, const Dataset& val, const nn::Encoder<float>& encoder,
                        const FinetuneConfig& cfg, const RngStream& rng) {
  TSCL_REQUIRE(train.has_labels() && val.has_labels(), ArgumentError,
               "finetune: train and val splits must be labeled");
  TSCL_REQUIRE(cfg.batch_size >= 2, ArgumentError, "finetune: batch size must be >= 2");
  const std::size_t n_classes = std::max(train.n_classes(), val.n_classes());
  RngStream init = rng.substream(StreamPurpose::kInit);
  ClassifierModel<float> model{encoder,
                               nn::Mlp<float>("head", encoder.embedding_dim(), cfg.hidden,
                                              static_cast<Index>(n_classes), init, cfg.dropout)};
  nn::ParamRefs<float> refs;
  model.collect(refs);
  nn::ParamRefs<float> enc_refs;
  model.encoder.collect(enc_refs);
  const std::size_t n_encoder = enc_refs.params.size();

  const auto series = flatten(train);
  const Index len = static_cast<Index>(train.shape().t);
  optim::AdamW<float> opt(cfg.weight_decay);

  FinetuneResult result;
  result.head_epochs = cfg.head_epochs;
  result.full_epochs = cfg.full_epochs;
  result.best_val_accuracy = -1.0;

  // Frozen-encoder features for the head-only phase.
  Features frozen;
  if (cfg.head_epochs > 0) frozen = extract_features(train, model.encoder);

  const std::size_t total_epochs = cfg.head_epochs + cfg.full_epochs;
  for (std::size_t epoch = 0; epoch < total_epochs; ++epoch) {
    const bool head_only = epoch < cfg.head_epochs;
    RngStream order_rng = rng.substream(StreamPurpose::kBatchOrder, epoch);
    RngStream drop_rng = rng.substream(StreamPurpose::kDropout, epoch);
    const auto order = order_rng.permutation(series.size());
    std::vector<double> lrs(refs.params.size(), cfg.head_lr);
    for (std::size_t i = 0; i < n_encoder; ++i) lrs[i] = head_only ? 0.0 : cfg.encoder_lr;
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 1 < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) break;
      std::vector<std::uint32_t> labels;
      std::vector<SeriesMatrix> values;
      nn::Matrix<float> feats;
      if (head_only) feats.resize(static_cast<Index>(end - start), frozen.cols());
      for (std::size_t i = start; i < end; ++i) {
        labels.push_back(series[order[i]].label);
        if (head_only)
          feats.row(static_cast<Index>(i - start)) =
              frozen.row(static_cast<Index>(order[i])).cast<float>();
        else
          values.push_back(*series[order[i]].values);
      }
      nn::zero_grad(refs);
      nn::Pass pass{true, len, &drop_rng};
      if (!head_only) feats = model.encoder.forward(nn::stack_series<float>(values), pass);
      nn::Matrix<float> grad;
      const double loss = cross_entropy(model.head.forward(feats, pass), labels, grad);
      if (!std::isfinite(loss))
        throw NumericalError("finetune: non-finite loss at epoch " + std::to_string(epoch + 1));
      const nn::Matrix<float> dfeat = model.head.backward(grad);
      if (!head_only) model.encoder.backward(dfeat);
      opt.step(refs, lrs);
      loss_sum += loss;
      ++batches;
    }
    const double acc = sample_accuracy(model, val);
    result.log.push_back({epoch + 1, head_only ? "head" : "full",
                          batches ? loss_sum / static_cast<double>(batches) : 0.0, acc});
    if (acc > result.best_val_accuracy) {
      result.best_val_accuracy = acc;
      result.best_epoch = epoch + 1;
      result.model = model;
    }
  }
  if (total_epochs == 0) {
    result.model = model;
    result.best_val_accuracy = sample_accuracy(result.model, val);
  }
  return result;
}

// ---- sweep ----

std::vector<std::size_t> draw_per_class(const Dataset& pool, std::size_t k, std::size_t repeat,
                                        std::uint64_t seed) {
  TSCL_REQUIRE(k >= 1, ArgumentError, "sweep: k must be >= 1");
  const auto labels = pool.labels();
  std::vector<std::vector<std::size_t>> by_class(pool.n_classes());
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  RngStream rng(seed, stream_id({static_cast<std::uint64_t>(StreamPurpose::kSweep), k, repeat}));
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) continue;
    if (by_class[c].size() < k)
      throw ArgumentError("sweep: class " + std::to_string(c) + " has " +
                          std::to_string(by_class[c].size()) + " labeled samples, fewer than k=" +
                          std::to_string(k));
    for (auto i : rng.choose_from(by_class[c], k)) out.push_back(i);
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

Features gather_rows(const Features& x, const std::vector<std::size_t>& samples, std::size_t n_ts) {
  Features out(static_cast<Index>(samples.size() * n_ts), x.cols());
  Index r = 0;
  for (auto s : samples)
    for (std::size_t j = 0; j < n_ts; ++j) out.row(r++) = x.row(static_cast<Index>(s * n_ts + j));
  return out;
}

}  // namespace

std::vector<SweepCell> label_efficiency_sweep(const std::vector<FeatureSet>& features,
                                              const Dataset& pool, const Dataset& test,
                                              const std::vector<std::size_t>& ks,
                                              std::size_t repeats, const ProbeConfig& probe,
                                              std::uint64_t seed) {
  TSCL_REQUIRE(repeats >= 1, ArgumentError, "sweep: repeats must be >= 1");
  const std::size_t n_ts = pool.shape().n_ts;
  std::vector<std::vector<std::size_t>> draws;
  for (auto k : ks)
    for (std::size_t r = 0; r < repeats; ++r) draws.push_back(draw_per_class(pool, k, r, seed));
  std::vector<SweepCell> cells(features.size() * draws.size());
  parallel_for(cells.size(), [&](std::size_t idx) {
    const std::size_t f = idx / draws.size();
    const std::size_t d = idx % draws.size();
    const auto& fs = features[f];
    const auto& chosen = draws[d];
    const Dataset train = pool.subset(chosen, SplitTag::kTrain);
    const auto outcome =
        linear_probe(gather_rows(fs.pool, chosen, n_ts), train, fs.test, test, probe);
    cells[idx] = {fs.strategy, ks[d / repeats], d % repeats, outcome.metrics};
  });
  return cells;
}

int strategy_rank(const std::string& strategy) {
  static const std::vector<std::string> order{"raw", "jitter", "resize", "mask", "resample"};
  const auto it = std::find(order.begin(), order.end(), strategy);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

std::vector<SweepSummary> summarize(const std::vector<SweepCell>& cells) {
  std::map<std::tuple<int, std::string, std::size_t>, std::vector<Metrics>> groups;
  for (const auto& c : cells) groups[{strategy_rank(c.strategy), c.strategy, c.k}].push_back(c.metrics);
  auto mean_std = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double sq = 0.0;
    for (double x : v) sq += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(sq / static_cast<double>(v.size() - 1)) : 0.0;
    return std::pair{mean, sd};
  };
  std::vector<SweepSummary> out;
  for (const auto& [key, ms] : groups) {
    SweepSummary s;
    s.strategy = std::get<1>(key);
    s.k = std::get<2>(key);
    s.repeats = ms.size();
    std::vector<double> oa, kappa, f1;
    for (const auto& m : ms) {
      oa.push_back(m.overall_accuracy);
      kappa.push_back(m.kappa);
      f1.push_back(m.macro_f1);
    }
    std::tie(s.oa_mean, s.oa_std) = mean_std(oa);
    std::tie(s.kappa_mean, s.kappa_std) = mean_std(kappa);
    std::tie(s.f1_mean, s.f1_std) = mean_std(f1);
    s.high_variance = s.oa_std * 100.0 > 1.0;
    out.push_back(s);
  }
  return out;
}

}  // namespace tscl::eval
