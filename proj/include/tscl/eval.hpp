#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tscl/data.hpp"
#include "tscl/model.hpp"
#include "tscl/nn.hpp"

namespace tscl::eval {

using nn::Index;
using Features = nn::Matrix<double>;

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t n_classes)
      : n_(n_classes), counts_(n_classes * n_classes, 0) {}
  static ConfusionMatrix from_predictions(const std::vector<std::uint32_t>& truth,
                                          const std::vector<std::uint32_t>& predicted,
                                          std::size_t n_classes);

  std::size_t n_classes() const { return n_; }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * n_ + predicted];
  }
  std::uint64_t& at(std::size_t truth, std::size_t predicted) {
    return counts_[truth * n_ + predicted];
  }
  void add(std::uint32_t truth, std::uint32_t predicted);
  std::uint64_t total() const;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

struct Metrics {
  double overall_accuracy = 0.0;
  double kappa = 0.0;
  double macro_f1 = 0.0;
};

// OA = trace / total; kappa = (OA - p_e) / (1 - p_e) with
// p_e = sum_k row_k * col_k / total^2; macro-F1 averages 2TP / (2TP + FP + FN)
// over all classes, 0 for classes that are never true nor predicted correctly.
Metrics metrics(const ConfusionMatrix& cm);

// Plurality per sample over n_ts consecutive predictions. Ties go to the class
// with the largest summed probability (if given), then the lowest index.
// probs, when given, has one row per prediction and one column per class.
std::vector<std::uint32_t> majority_vote(const std::vector<std::uint32_t>& per_series,
                                         std::size_t n_ts, std::size_t n_classes,
                                         const Features* probs = nullptr);

struct ProbeConfig {
  double c = 1.0;
  double tolerance = 1e-5;
  std::size_t max_iterations = 2000;

  void validate() const;
};

// Multinomial softmax regression minimizing
//   mean cross-entropy + |W|^2 / (2 * C * M)   (bias unpenalized)
// with L-BFGS; stops when the gradient max-norm is <= tolerance.
struct LogisticModel {
  Features weights;  // D x K
  nn::RowVector<double> bias;
  std::size_t iterations = 0;
  bool converged = false;
  double objective = 0.0;

  Features predict_proba(const Features& x) const;
  std::vector<std::uint32_t> predict(const Features& x) const;
};

double logreg_objective(const Features& x, const std::vector<std::uint32_t>& labels,
                        std::size_t n_classes, double c, const Features& weights,
                        const nn::RowVector<double>& bias, Features* grad_w = nullptr,
                        nn::RowVector<double>* grad_b = nullptr);

LogisticModel fit_logreg(const Features& x, const std::vector<std::uint32_t>& labels,
                         std::size_t n_classes, const ProbeConfig& cfg);

// Per-series embeddings through a frozen encoder in eval mode, rows ordered
// (sample, series): N*N_ts x D.
Features extract_features(const Dataset& ds, nn::Encoder<float>& encoder);

// Raw-series baseline: per channel (mean, std, min, max), followed by the
// flattened series when T*C <= 1024.
Features raw_features(const Dataset& ds);

// Labels repeated per series, matching the row order of the feature matrices.
std::vector<std::uint32_t> series_labels(const Dataset& ds);

// Fit a probe on per-series training rows, predict test series, vote per sample.
struct ProbeOutcome {
  std::vector<std::uint32_t> predictions;
  Metrics metrics;
  LogisticModel model;
};
ProbeOutcome linear_probe(const Features& train_x, const Dataset& train, const Features& test_x,
                          const Dataset& test, const ProbeConfig& cfg);

struct FinetuneConfig {
  std::size_t head_epochs = 10;
  std::size_t full_epochs = 100;
  double head_lr = 1e-3;
  double encoder_lr = 2e-5;
  double weight_decay = 5e-4;
  std::size_t batch_size = 64;
  Index hidden = 256;
  double dropout = 0.2;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based across both phases
  std::string phase;      // "head" or "full"
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct FinetuneResult {
  ClassifierModel<float> model;  // parameters of the best validation epoch
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  std::size_t head_epochs = 0;
  std::size_t full_epochs = 0;
  std::vector<EpochLog> log;
};

// Head alone with the encoder frozen (eval mode, no updates), then the whole
// model; Adam with decoupled weight decay at per-group learning rates.
// Trains on individual series labeled with their sample's label.
FinetuneResult finetune(const Dataset& train, const Dataset& val, const nn::Encoder<float>& encoder,
                        const FinetuneConfig& cfg, const RngStream& rng);

// Per-series class probabilities, then majority vote per sample.
std::vector<std::uint32_t> predict_samples(ClassifierModel<float>& model, const Dataset& ds);

// ---- label-efficiency sweep ----

struct SweepCell {
  std::string strategy;
  std::size_t k = 0;
  std::size_t repeat = 0;
  Metrics metrics;
};

struct SweepSummary {
  std::string strategy;
  std::size_t k = 0;
  std::size_t repeats = 0;
  double oa_mean = 0.0, oa_std = 0.0;
  double kappa_mean = 0.0, kappa_std = 0.0;
  double f1_mean = 0.0, f1_std = 0.0;
  // Std of OA above one percentage point.
  bool high_variance = false;
};

struct FeatureSet {
  std::string strategy;
  Features pool;
  Features test;
};

// Sample indices of the k-per-class draw for one (k, repeat) cell; the same
// draw is shared by every strategy. Throws if a class has fewer than k samples.
std::vector<std::size_t> draw_per_class(const Dataset& pool, std::size_t k, std::size_t repeat,
                                        std::uint64_t seed);

std::vector<SweepCell> label_efficiency_sweep(const std::vector<FeatureSet>& features,
                                              const Dataset& pool, const Dataset& test,
                                              const std::vector<std::size_t>& ks,
                                              std::size_t repeats, const ProbeConfig& probe,
                                              std::uint64_t seed);

// Canonical row order: raw, jitter, resize, mask, resample, then others.
int strategy_rank(const std::string& strategy);
std::vector<SweepSummary> summarize(const std::vector<SweepCell>& cells);

}  // namespace tscl::eval
