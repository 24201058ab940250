#pragma once

// Contrastive / non-contrastive objectives with analytic gradients, and the
// auxiliary state (momentum targets, key queue) some frameworks need.

#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "tscl/error.hpp"
#include "tscl/nn.hpp"

namespace tscl::ssl {

using nn::Index;
using nn::Matrix;
using nn::RowVector;

enum class Framework { kSimclr, kMoco, kByol, kVicreg };

std::string to_string(Framework f);
Framework parse_framework(const std::string& name);

struct VicregWeights {
  double invariance = 25.0;  // lambda
  double variance = 25.0;    // mu
  double covariance = 1.0;   // nu
  double gamma = 1.0;
  double eps = 1e-4;
};

struct SslConfig {
  Framework framework = Framework::kSimclr;
  double temperature = 0.1;
  double momentum = 0.996;
  std::size_t queue_capacity = 8192;
  VicregWeights vicreg;
  // Mean per-dimension std of H below this flags collapse.
  double collapse_threshold = 1e-3;
};

// Loss value and gradients with respect to both inputs. A branch that does
// not receive gradient (stop-gradient targets) gets an empty matrix.
template <class S>
struct LossResult {
  double loss = 0.0;
  Matrix<S> grad_a;
  Matrix<S> grad_b;
};

namespace detail {

template <class S>
struct Normalized {
  Matrix<S> unit;
  RowVector<S> norm;  // stored as 1 x B
};

template <class S>
Normalized<S> normalize_rows(const Matrix<S>& z) {
  Normalized<S> out;
  out.norm = z.rowwise().norm().transpose();
  for (Index i = 0; i < out.norm.size(); ++i)
    if (!(out.norm(i) > S(0))) throw NumericalError("loss: zero-norm embedding row");
  out.unit = z.array().colwise() / out.norm.transpose().array();
  return out;
}

// Gradient through u = z / |z| given dL/du.
template <class S>
Matrix<S> normalize_backward(const Normalized<S>& n, const Matrix<S>& du) {
  const Eigen::Matrix<S, Eigen::Dynamic, 1> dots = (n.unit.array() * du.array()).rowwise().sum();
  Matrix<S> dz = du - (n.unit.array().colwise() * dots.array()).matrix();
  return dz.array().colwise() / n.norm.transpose().array();
}

template <class S>
void require_same_shape(const Matrix<S>& a, const Matrix<S>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ArgumentError(std::string(what) + ": inputs differ in shape");
}

}  // namespace detail

// Normalized-temperature cross-entropy over 2B anchors. Anchor i's positive
// is its counterpart in the other view; the anchor itself is excluded from
// the softmax denominator.
template <class S>
LossResult<S> nt_xent(const Matrix<S>& z1, const Matrix<S>& z2, double tau) {
  detail::require_same_shape(z1, z2, "nt_xent");
  const Index b = z1.rows();
  if (b < 2) throw ArgumentError("nt_xent: batch size must be >= 2");
  if (!(tau > 0.0)) throw ArgumentError("nt_xent: temperature must be > 0");
  Matrix<S> z(2 * b, z1.cols());
  z << z1, z2;
  const auto n = detail::normalize_rows(z);
  const Index m = 2 * b;
  Matrix<S> sim = (n.unit * n.unit.transpose()) / static_cast<S>(tau);
  // Row-wise softmax excluding the diagonal.
  Matrix<S> grad_sim = Matrix<S>::Zero(m, m);
  double loss = 0.0;
  for (Index i = 0; i < m; ++i) {
    const Index pos = i < b ? i + b : i - b;
    S mx = -std::numeric_limits<S>::infinity();
    for (Index k = 0; k < m; ++k)
      if (k != i) mx = std::max(mx, sim(i, k));
    S denom = 0;
    for (Index k = 0; k < m; ++k)
      if (k != i) denom += std::exp(sim(i, k) - mx);
    loss += static_cast<double>(-(sim(i, pos) - mx) + std::log(denom));
    for (Index k = 0; k < m; ++k) {
      if (k == i) continue;
      grad_sim(i, k) = std::exp(sim(i, k) - mx) / denom;
    }
    grad_sim(i, pos) -= S(1);
  }
  grad_sim /= static_cast<S>(m);
  const Matrix<S> du = ((grad_sim + grad_sim.transpose()) * n.unit) / static_cast<S>(tau);
  const Matrix<S> dz = detail::normalize_backward(n, du);
  return {loss / static_cast<double>(m), dz.topRows(b), dz.bottomRows(b)};
}

// Variance-invariance-covariance objective:
//   lambda * mean((z1 - z2)^2)
// + mu * sum_branch mean_d max(0, gamma - sqrt(var_d + eps))
// + nu * sum_branch sum_{i != j} cov_ij^2 / D
// with unbiased (B - 1) variance and covariance.
template <class S>
LossResult<S> vicreg_loss(const Matrix<S>& z1, const Matrix<S>& z2, const VicregWeights& w) {
  detail::require_same_shape(z1, z2, "vicreg");
  const Index b = z1.rows();
  const Index d = z1.cols();
  if (b < 2) throw ArgumentError("vicreg: batch size must be >= 2");
  const S bd = static_cast<S>(b * d);
  const Matrix<S> diff = z1 - z2;
  double loss = w.invariance * static_cast<double>(diff.array().square().sum() / bd);
  Matrix<S> g1 = diff * static_cast<S>(2.0 * w.invariance / static_cast<double>(b * d));
  Matrix<S> g2 = -g1;

  auto branch = [&](const Matrix<S>& z, Matrix<S>& g) {
    const RowVector<S> mean = z.colwise().mean();
    const Matrix<S> zc = z.rowwise() - mean;
    const S denom = static_cast<S>(b - 1);
    const RowVector<S> var = zc.array().square().colwise().sum() / denom;
    const RowVector<S> stddev = (var.array() + static_cast<S>(w.eps)).sqrt();
    RowVector<S> dvar_coef = RowVector<S>::Zero(d);
    double hinge = 0.0;
    for (Index j = 0; j < d; ++j) {
      const S h = static_cast<S>(w.gamma) - stddev(j);
      if (h > S(0)) {
        hinge += static_cast<double>(h);
        // d/dz of -(sqrt(var + eps)) through var = sum zc^2 / (B-1).
        dvar_coef(j) = -static_cast<S>(w.variance) / static_cast<S>(d) / stddev(j) / denom;
      }
    }
    loss += w.variance * hinge / static_cast<double>(d);
    g += (zc.array().rowwise() * dvar_coef.array()).matrix();

    Matrix<S> cov = (zc.transpose() * zc) / denom;
    cov.diagonal().setZero();
    loss += w.covariance * static_cast<double>(cov.array().square().sum()) / static_cast<double>(d);
    // d/dcov_ij = 2 nu cov_ij / D; cov symmetric, so dzc = 2 * zc * G / (B-1).
    const Matrix<S> gcov = cov * static_cast<S>(2.0 * w.covariance / static_cast<double>(d));
    Matrix<S> dzc = (zc * gcov) * (S(2) / denom);
    dzc.rowwise() -= dzc.colwise().mean();
    g += dzc;
  };
  branch(z1, g1);
  branch(z2, g2);
  return {loss, std::move(g1), std::move(g2)};
}

// 2 - 2 * mean cosine(p, t); gradient flows to p only.
template <class S>
LossResult<S> byol_half(const Matrix<S>& p, const Matrix<S>& t) {
  detail::require_same_shape(p, t, "byol");
  const Index b = p.rows();
  if (b < 1) throw ArgumentError("byol: empty batch");
  const auto np = detail::normalize_rows(p);
  const auto nt = detail::normalize_rows(t);
  const double cos_sum = static_cast<double>((np.unit.array() * nt.unit.array()).sum());
  const Matrix<S> du = nt.unit * static_cast<S>(-2.0 / static_cast<double>(b));
  return {2.0 - 2.0 * cos_sum / static_cast<double>(b), detail::normalize_backward(np, du), {}};
}

// Symmetrized: (L(p1, t2) + L(p2, t1)) / 2. grad_a / grad_b are the
// gradients w.r.t. p1 / p2; targets t1, t2 receive none.
template <class S>
LossResult<S> byol_loss(const Matrix<S>& p1, const Matrix<S>& p2, const Matrix<S>& t1,
                        const Matrix<S>& t2) {
  auto a = byol_half(p1, t2);
  auto b = byol_half(p2, t1);
  return {0.5 * (a.loss + b.loss), a.grad_a * S(0.5), b.grad_a * S(0.5)};
}

// Fixed-capacity FIFO of unit-norm keys.
class KeyQueue {
 public:
  KeyQueue() = default;
  KeyQueue(std::size_t capacity, Index dim) : capacity_(capacity), dim_(dim) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return keys_.size(); }
  Index dim() const { return dim_; }

  // Oldest first, one key per row.
  Matrix<double> contents() const;
  // Normalizes rows, appends them and evicts the oldest beyond capacity.
  void enqueue(const Matrix<double>& keys);

 private:
  std::size_t capacity_ = 0;
  Index dim_ = 0;
  std::deque<RowVector<double>> keys_;
};

// InfoNCE with positives (query_i, key_i); negatives are the other in-batch
// keys and every queued key. Gradient w.r.t. the query only.
template <class S>
LossResult<S> moco_loss(const Matrix<S>& query, const Matrix<S>& key, const KeyQueue& queue,
                        double tau) {
  detail::require_same_shape(query, key, "moco");
  const Index b = query.rows();
  if (b < 1) throw ArgumentError("moco: empty batch");
  if (queue.size() > 0 && queue.dim() != query.cols())
    throw ArgumentError("moco: queue dimension differs from embedding dimension");
  const auto nq = detail::normalize_rows(query);
  const auto nk = detail::normalize_rows(key);
  const Matrix<S> bank_keys = queue.contents().template cast<S>();
  const Index m = b + bank_keys.rows();
  Matrix<S> all(m, query.cols());
  all.topRows(b) = nk.unit;
  if (bank_keys.rows() > 0) all.bottomRows(bank_keys.rows()) = bank_keys;
  const Matrix<S> logits = (nq.unit * all.transpose()) / static_cast<S>(tau);
  Matrix<S> grad_logits(b, m);
  double loss = 0.0;
  for (Index i = 0; i < b; ++i) {
    const S mx = logits.row(i).maxCoeff();
    const RowVector<S> e = (logits.row(i).array() - mx).exp();
    const S denom = e.sum();
    loss += static_cast<double>(-(logits(i, i) - mx) + std::log(denom));
    grad_logits.row(i) = e / denom;
    grad_logits(i, i) -= S(1);
  }
  grad_logits /= static_cast<S>(b);
  const Matrix<S> du = (grad_logits * all) / static_cast<S>(tau);
  return {loss / static_cast<double>(b), detail::normalize_backward(nq, du), {}};
}

// Loss against the current queue, then enqueue the keys.
template <class S>
double moco_step(const Matrix<S>& query, const Matrix<S>& key, KeyQueue& queue, double tau,
                 Matrix<S>* grad_query = nullptr) {
  if (queue.capacity() % static_cast<std::size_t>(query.rows()) != 0)
    throw ArgumentError("moco: queue capacity " + std::to_string(queue.capacity()) +
                        " is not a multiple of the batch size " + std::to_string(query.rows()));
  auto r = moco_loss(query, key, queue, tau);
  queue.enqueue(key.template cast<double>());
  if (grad_query) *grad_query = std::move(r.grad_a);
  return r.loss;
}

// target <- m * target + (1 - m) * online, parameter by parameter.
template <class S>
void momentum_update(const nn::ConstParamRefs<S>& online, nn::ParamRefs<S>& target, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ArgumentError("momentum_update: m must be in [0, 1]");
  if (online.params.size() != target.params.size())
    throw StateError("momentum_update: parameter lists differ in length");
  for (std::size_t i = 0; i < online.params.size(); ++i) {
    const auto& src = online.params[i]->value;
    auto& dst = target.params[i]->value;
    if (src.rows() != dst.rows() || src.cols() != dst.cols())
      throw StateError("momentum_update: shape mismatch at " + online.params[i]->name);
    dst = static_cast<S>(m) * dst + static_cast<S>(1.0 - m) * src;
  }
}

// Mean over dimensions of the per-dimension standard deviation of rows of h.
template <class S>
double mean_dimension_std(const Matrix<S>& h) {
  if (h.rows() < 2) throw ArgumentError("collapse check: need at least 2 rows");
  const Matrix<double> hd = h.template cast<double>();
  const RowVector<double> mean = hd.colwise().mean();
  const RowVector<double> var =
      (hd.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(h.rows() - 1);
  return var.array().sqrt().mean();
}

template <class S>
bool is_collapsed(const Matrix<S>& h, double threshold) {
  return mean_dimension_std(h) < threshold;
}

}  // namespace tscl::ssl
