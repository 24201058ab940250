#pragma once

// Trainable building blocks with explicit reverse-mode gradients.
//
// Activations are row-major matrices. Sequence layers see rows ordered as
// (series, timestep) with channels along columns, so a batch of N series of
// length L is an (N*L) x C matrix. Each layer caches what its backward pass
// needs during forward; calling backward() without a preceding forward()
// throws StateError.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "tscl/error.hpp"
#include "tscl/rng.hpp"

namespace tscl::nn {

using Index = Eigen::Index;

template <class S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <class S>
struct Parameter {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;
  // Weight decay applies to conv / linear weights only.
  bool decay = true;

  Parameter() = default;
  Parameter(std::string n, Matrix<S> v, bool d)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<S>::Zero(value.rows(), value.cols())),
        decay(d) {}

  std::vector<Index> shape() const { return {value.rows(), value.cols()}; }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

// Non-trainable state saved with checkpoints (BN running statistics).
template <class S>
struct Buffer {
  std::string name;
  Matrix<S> value;
};

template <class S>
struct ParamRefs {
  std::vector<Parameter<S>*> params;
  std::vector<Buffer<S>*> buffers;
};

template <class S>
struct ConstParamRefs {
  std::vector<const Parameter<S>*> params;
  std::vector<const Buffer<S>*> buffers;
};

struct Pass {
  bool training = false;
  // Timesteps per series for sequence layers.
  Index seq_len = 0;
  // Dropout masks; required when training with dropout > 0.
  RngStream* rng = nullptr;
};

namespace detail {

template <class S>
Matrix<S> he_normal(Index rows, Index cols, Index fan_in, RngStream& rng) {
  Matrix<S> m(rows, cols);
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(std * rng.normal());
  return m;
}

inline void require_forward(bool cached, const std::string& name) {
  if (!cached) throw StateError(name + ": backward called before forward");
}

}  // namespace detail

template <class S>
class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, Index in, Index out, RngStream& rng)
      : weight_(name + ".weight", detail::he_normal<S>(in, out, in, rng), true),
        bias_(name + ".bias", Matrix<S>::Zero(1, out), false) {}

  Index in_features() const { return weight_.value.rows(); }
  Index out_features() const { return weight_.value.cols(); }

  Matrix<S> forward(const Matrix<S>& x) {
    if (x.cols() != in_features())
      throw ArgumentError(weight_.name + ": expected input width " + std::to_string(in_features()) +
                          ", got " + std::to_string(x.cols()));
    input_ = x;
    cached_ = true;
    Matrix<S> y = x * weight_.value;
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  Matrix<S> backward(const Matrix<S>& dy) {
    detail::require_forward(cached_, weight_.name);
    weight_.grad.noalias() += input_.transpose() * dy;
    bias_.grad.row(0) += dy.colwise().sum();
    return dy * weight_.value.transpose();
  }

  void collect(ParamRefs<S>& refs) {
    refs.params.push_back(&weight_);
    refs.params.push_back(&bias_);
  }
  void collect(ConstParamRefs<S>& refs) const {
    refs.params.push_back(&weight_);
    refs.params.push_back(&bias_);
  }

 private:
  Parameter<S> weight_;
  Parameter<S> bias_;
  Matrix<S> input_;
  bool cached_ = false;
};

// 1D convolution, stride 1, "same" zero padding (left = (K-1)/2).
// Weight layout: (K * C_in) x C_out, tap-major.
template <class S>
class Conv1d {
 public:
  Conv1d() = default;
  Conv1d(const std::string& name, Index in, Index out, Index kernel, RngStream& rng)
      : in_(in), kernel_(kernel),
        weight_(name + ".weight", detail::he_normal<S>(kernel * in, out, kernel * in, rng), true),
        bias_(name + ".bias", Matrix<S>::Zero(1, out), false) {}

  Index in_channels() const { return in_; }
  Index out_channels() const { return weight_.value.cols(); }
  Index kernel() const { return kernel_; }

  Matrix<S> forward(const Matrix<S>& x, const Pass& pass) {
    check_input(x, pass.seq_len);
    seq_len_ = pass.seq_len;
    cached_ = true;
    Matrix<S> y;
    if (kernel_ == 1) {
      input_ = x;
      y.noalias() = x * weight_.value;
    } else {
      im2col(x, seq_len_, input_);
      y.noalias() = input_ * weight_.value;
    }
    y.rowwise() += bias_.value.row(0);
    return y;
  }

  Matrix<S> backward(const Matrix<S>& dy) {
    detail::require_forward(cached_, weight_.name);
    bias_.grad.row(0) += dy.colwise().sum();
    if (kernel_ == 1) {
      weight_.grad.noalias() += input_.transpose() * dy;
      return dy * weight_.value.transpose();
    }
    weight_.grad.noalias() += input_.transpose() * dy;
    const Matrix<S> dcols = dy * weight_.value.transpose();
    return col2im(dcols, seq_len_);
  }

  void collect(ParamRefs<S>& refs) {
    refs.params.push_back(&weight_);
    refs.params.push_back(&bias_);
  }
  void collect(ConstParamRefs<S>& refs) const {
    refs.params.push_back(&weight_);
    refs.params.push_back(&bias_);
  }

 private:
  void check_input(const Matrix<S>& x, Index seq_len) const {
    if (seq_len <= 0 || x.rows() % seq_len != 0)
      throw ArgumentError(weight_.name + ": rows not a multiple of the sequence length");
    if (x.cols() != in_)
      throw ArgumentError(weight_.name + ": expected " + std::to_string(in_) +
                          " input channels, got " + std::to_string(x.cols()));
  }

  // Row (s, t) of cols holds the K input rows around t, zero outside the series.
  void im2col(const Matrix<S>& x, Index len, Matrix<S>& cols) const {
    const Index n = x.rows() / len;
    const Index pad = (kernel_ - 1) / 2;
    cols.resize(x.rows(), kernel_ * in_);
    for (Index s = 0; s < n; ++s) {
      for (Index t = 0; t < len; ++t) {
        S* dst = cols.data() + (s * len + t) * kernel_ * in_;
        for (Index k = 0; k < kernel_; ++k) {
          const Index src = t + k - pad;
          if (src < 0 || src >= len) {
            std::fill(dst + k * in_, dst + (k + 1) * in_, S(0));
          } else {
            const S* from = x.data() + (s * len + src) * in_;
            std::copy(from, from + in_, dst + k * in_);
          }
        }
      }
    }
  }

  Matrix<S> col2im(const Matrix<S>& cols, Index len) const {
    const Index n = cols.rows() / len;
    const Index pad = (kernel_ - 1) / 2;
    Matrix<S> dx = Matrix<S>::Zero(cols.rows(), in_);
    for (Index s = 0; s < n; ++s) {
      for (Index t = 0; t < len; ++t) {
        const S* from = cols.data() + (s * len + t) * kernel_ * in_;
        for (Index k = 0; k < kernel_; ++k) {
          const Index src = t + k - pad;
          if (src < 0 || src >= len) continue;
          S* dst = dx.data() + (s * len + src) * in_;
          const S* f = from + k * in_;
          for (Index c = 0; c < in_; ++c) dst[c] += f[c];
        }
      }
    }
    return dx;
  }

  Index in_ = 0;
  Index kernel_ = 1;
  Parameter<S> weight_;
  Parameter<S> bias_;
  // Input for K = 1, im2col columns otherwise.
  Matrix<S> input_;
  Index seq_len_ = 0;
  bool cached_ = false;
};

// Batch normalization over rows, per column. Training mode normalizes with
// batch statistics (biased variance) and updates running statistics as
// running = momentum * running + (1 - momentum) * batch (unbiased variance).
template <class S>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, Index features, double momentum = 0.9, double eps = 1e-5)
      : momentum_(momentum), eps_(eps),
        scale_(name + ".scale", Matrix<S>::Ones(1, features), false),
        shift_(name + ".shift", Matrix<S>::Zero(1, features), false),
        running_mean_{name + ".running_mean", Matrix<S>::Zero(1, features)},
        running_var_{name + ".running_var", Matrix<S>::Ones(1, features)} {}

  Matrix<S> forward(const Matrix<S>& x, const Pass& pass) {
    if (x.cols() != scale_.value.cols())
      throw ArgumentError(scale_.name + ": feature width mismatch");
    training_ = pass.training;
    if (pass.training) {
      if (x.rows() < 2) throw ArgumentError(scale_.name + ": training needs at least 2 rows");
      const RowVector<S> mean = x.colwise().mean();
      Matrix<S> centered = x.rowwise() - mean;
      const RowVector<S> var = centered.array().square().colwise().mean();
      inv_std_ = (var.array() + static_cast<S>(eps_)).rsqrt();
      xhat_ = centered.array().rowwise() * inv_std_.array();
      const S n = static_cast<S>(x.rows());
      const S m = static_cast<S>(momentum_);
      running_mean_.value.row(0) = m * running_mean_.value.row(0) + (S(1) - m) * mean;
      running_var_.value.row(0) =
          m * running_var_.value.row(0) + (S(1) - m) * (var * (n / (n - S(1))));
    } else {
      inv_std_ = (running_var_.value.row(0).array() + static_cast<S>(eps_)).rsqrt();
      xhat_ = (x.rowwise() - running_mean_.value.row(0)).array().rowwise() * inv_std_.array();
    }
    cached_ = true;
    Matrix<S> y = xhat_.array().rowwise() * scale_.value.row(0).array();
    y.rowwise() += shift_.value.row(0);
    return y;
  }

  Matrix<S> backward(const Matrix<S>& dy) {
    detail::require_forward(cached_, scale_.name);
    shift_.grad.row(0) += dy.colwise().sum();
    scale_.grad.row(0) += (dy.array() * xhat_.array()).colwise().sum().matrix();
    const Matrix<S> dxhat = dy.array().rowwise() * scale_.value.row(0).array();
    if (!training_) return dxhat.array().rowwise() * inv_std_.array();
    // Batch statistics depend on every row.
    const S n = static_cast<S>(dy.rows());
    const RowVector<S> sum_dxhat = dxhat.colwise().sum();
    const RowVector<S> sum_dxhat_xhat = (dxhat.array() * xhat_.array()).colwise().sum().matrix();
    Matrix<S> dx = (dxhat * n).rowwise() - sum_dxhat;
    dx.array() -= xhat_.array().rowwise() * sum_dxhat_xhat.array();
    dx.array().rowwise() *= (inv_std_ / n).array();
    return dx;
  }

  void collect(ParamRefs<S>& refs) {
    refs.params.push_back(&scale_);
    refs.params.push_back(&shift_);
    refs.buffers.push_back(&running_mean_);
    refs.buffers.push_back(&running_var_);
  }
  void collect(ConstParamRefs<S>& refs) const {
    refs.params.push_back(&scale_);
    refs.params.push_back(&shift_);
    refs.buffers.push_back(&running_mean_);
    refs.buffers.push_back(&running_var_);
  }

 private:
  double momentum_ = 0.9;
  double eps_ = 1e-5;
  Parameter<S> scale_;
  Parameter<S> shift_;
  Buffer<S> running_mean_;
  Buffer<S> running_var_;
  Matrix<S> xhat_;
  RowVector<S> inv_std_;
  bool training_ = false;
  bool cached_ = false;
};

template <class S>
class ReLU {
 public:
  Matrix<S> forward(const Matrix<S>& x) {
    output_ = x.cwiseMax(S(0));
    cached_ = true;
    return output_;
  }
  Matrix<S> backward(const Matrix<S>& dy) {
    detail::require_forward(cached_, "relu");
    return (output_.array() > S(0)).select(dy, S(0));
  }

 private:
  Matrix<S> output_;
  bool cached_ = false;
};

// Inverted dropout: kept units are scaled by 1 / (1 - rate).
template <class S>
class Dropout {
 public:
  explicit Dropout(double rate = 0.0) : rate_(rate) {
    TSCL_REQUIRE(rate >= 0.0 && rate < 1.0, ArgumentError, "dropout: rate must be in [0, 1)");
  }

  double rate() const { return rate_; }

  Matrix<S> forward(const Matrix<S>& x, const Pass& pass) {
    cached_ = true;
    active_ = pass.training && rate_ > 0.0;
    if (!active_) return x;
    if (pass.rng == nullptr) throw StateError("dropout: training pass without an RngStream");
    mask_.resize(x.rows(), x.cols());
    const S keep = static_cast<S>(1.0 / (1.0 - rate_));
    for (Index i = 0; i < mask_.size(); ++i)
      mask_.data()[i] = pass.rng->bernoulli(rate_) ? S(0) : keep;
    return x.cwiseProduct(mask_);
  }

  Matrix<S> backward(const Matrix<S>& dy) {
    detail::require_forward(cached_, "dropout");
    return active_ ? Matrix<S>(dy.cwiseProduct(mask_)) : dy;
  }

  const Matrix<S>& last_mask() const { return mask_; }

 private:
  double rate_ = 0.0;
  Matrix<S> mask_;
  bool active_ = false;
  bool cached_ = false;
};

// Mean over timesteps of each series: (N*L) x C -> N x C.
template <class S>
Matrix<S> global_avg_pool(const Matrix<S>& x, Index seq_len) {
  TSCL_REQUIRE(seq_len > 0 && x.rows() % seq_len == 0, ArgumentError,
               "global_avg_pool: rows not a multiple of the sequence length");
  const Index n = x.rows() / seq_len;
  Matrix<S> out(n, x.cols());
  for (Index s = 0; s < n; ++s)
    out.row(s) = x.middleRows(s * seq_len, seq_len).colwise().mean();
  return out;
}

template <class S>
Matrix<S> global_avg_pool_backward(const Matrix<S>& dy, Index seq_len) {
  Matrix<S> dx(dy.rows() * seq_len, dy.cols());
  const S inv = S(1) / static_cast<S>(seq_len);
  for (Index s = 0; s < dy.rows(); ++s)
    dx.middleRows(s * seq_len, seq_len).rowwise() = dy.row(s) * inv;
  return dx;
}

// Mean over consecutive groups of g rows: (B*g) x D -> B x D.
template <class S>
Matrix<S> group_mean(const Matrix<S>& x, Index g) {
  TSCL_REQUIRE(g > 0 && x.rows() % g == 0, ArgumentError,
               "group_mean: rows not a multiple of the group size");
  const Index b = x.rows() / g;
  Matrix<S> out(b, x.cols());
  for (Index i = 0; i < b; ++i) out.row(i) = x.middleRows(i * g, g).colwise().mean();
  return out;
}

template <class S>
Matrix<S> group_mean_backward(const Matrix<S>& dy, Index g) {
  Matrix<S> dx(dy.rows() * g, dy.cols());
  const S inv = S(1) / static_cast<S>(g);
  for (Index i = 0; i < dy.rows(); ++i) dx.middleRows(i * g, g).rowwise() = dy.row(i) * inv;
  return dx;
}

struct EncoderConfig {
  Index in_channels = 12;
  std::vector<Index> block_filters{256, 512, 512};
  std::vector<Index> kernel_sizes{8, 5, 3};
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  Index embedding_dim() const { return block_filters.empty() ? 0 : block_filters.back(); }
  void validate() const {
    TSCL_REQUIRE(in_channels >= 1, ArgumentError, "encoder: in_channels must be >= 1");
    TSCL_REQUIRE(!block_filters.empty(), ArgumentError, "encoder: need at least one block");
    TSCL_REQUIRE(kernel_sizes.size() == 3, ArgumentError,
                 "encoder: exactly three kernel sizes per block");
    for (auto f : block_filters) TSCL_REQUIRE(f >= 1, ArgumentError, "encoder: filters must be >= 1");
    for (auto k : kernel_sizes) TSCL_REQUIRE(k >= 1, ArgumentError, "encoder: kernels must be >= 1");
  }
};

// Three conv-BN layers (ReLU after the first two), a shortcut that is the
// identity when widths match and a 1x1 conv + BN otherwise, and a final ReLU.
template <class S>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, Index in, Index out, const EncoderConfig& cfg,
                RngStream& rng) {
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string id = std::to_string(i + 1);
      convs_[i] = Conv1d<S>(name + ".conv" + id, i == 0 ? in : out, out, cfg.kernel_sizes[i], rng);
      norms_[i] = BatchNorm<S>(name + ".bn" + id, out, cfg.bn_momentum, cfg.bn_eps);
    }
    if (in != out) {
      shortcut_conv_ = Conv1d<S>(name + ".shortcut.conv", in, out, 1, rng);
      shortcut_norm_ = BatchNorm<S>(name + ".shortcut.bn", out, cfg.bn_momentum, cfg.bn_eps);
    }
  }

  Matrix<S> forward(const Matrix<S>& x, const Pass& pass) {
    Matrix<S> h = x;
    for (std::size_t i = 0; i < 3; ++i) {
      h = norms_[i].forward(convs_[i].forward(h, pass), pass);
      if (i < 2) h = relus_[i].forward(h);
    }
    if (shortcut_conv_) h += shortcut_norm_->forward(shortcut_conv_->forward(x, pass), pass);
    else h += x;
    return out_relu_.forward(h);
  }

  Matrix<S> backward(const Matrix<S>& dy) {
    const Matrix<S> d = out_relu_.backward(dy);
    Matrix<S> dx = shortcut_conv_ ? shortcut_conv_->backward(shortcut_norm_->backward(d)) : d;
    Matrix<S> h = d;
    for (std::size_t i = 3; i-- > 0;) {
      if (i < 2) h = relus_[i].backward(h);
      h = convs_[i].backward(norms_[i].backward(h));
    }
    dx += h;
    return dx;
  }

  template <class Refs>
  void collect(Refs& refs) {
    for (std::size_t i = 0; i < 3; ++i) {
      convs_[i].collect(refs);
      norms_[i].collect(refs);
    }
    if (shortcut_conv_) {
      shortcut_conv_->collect(refs);
      shortcut_norm_->collect(refs);
    }
  }
  template <class Refs>
  void collect(Refs& refs) const {
    for (std::size_t i = 0; i < 3; ++i) {
      convs_[i].collect(refs);
      norms_[i].collect(refs);
    }
    if (shortcut_conv_) {
      shortcut_conv_->collect(refs);
      shortcut_norm_->collect(refs);
    }
  }

 private:
  std::array<Conv1d<S>, 3> convs_;
  std::array<BatchNorm<S>, 3> norms_;
  std::array<ReLU<S>, 2> relus_;
  std::optional<Conv1d<S>> shortcut_conv_;
  std::optional<BatchNorm<S>> shortcut_norm_;
  ReLU<S> out_relu_;
};

// Time-series ResNet: residual blocks, then global average pooling.
// Input (N*L) x C, output N x embedding_dim.
template <class S>
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, RngStream& rng) : cfg_(cfg) {
    cfg.validate();
    Index in = cfg.in_channels;
    for (std::size_t b = 0; b < cfg.block_filters.size(); ++b) {
      blocks_.emplace_back("encoder.block" + std::to_string(b), in, cfg.block_filters[b], cfg, rng);
      in = cfg.block_filters[b];
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  Index embedding_dim() const { return cfg_.embedding_dim(); }

  Matrix<S> forward(const Matrix<S>& x, const Pass& pass) {
    if (x.cols() != cfg_.in_channels)
      throw ArgumentError("encoder: expected " + std::to_string(cfg_.in_channels) +
                          " channels, got " + std::to_string(x.cols()));
    Matrix<S> h = x;
    for (auto& b : blocks_) h = b.forward(h, pass);
    seq_len_ = pass.seq_len;
    cached_ = true;
    return global_avg_pool(h, pass.seq_len);
  }

  Matrix<S> backward(const Matrix<S>& dy) {
    detail::require_forward(cached_, "encoder");
    Matrix<S> h = global_avg_pool_backward(dy, seq_len_);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) h = it->backward(h);
    return h;
  }

  void collect(ParamRefs<S>& refs) {
    for (auto& b : blocks_) b.collect(refs);
  }
  void collect(ConstParamRefs<S>& refs) const {
    for (const auto& b : blocks_) b.collect(refs);
  }

 private:
  EncoderConfig cfg_;
  std::vector<ResidualBlock<S>> blocks_;
  Index seq_len_ = 0;
  bool cached_ = false;
};

// Two-layer perceptron: Linear -> ReLU -> Dropout -> Linear.
// Used as projection head, BYOL predictor and classifier head.
template <class S>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, Index in, Index hidden, Index out, RngStream& rng,
      double dropout = 0.0)
      : first_(name + ".fc1", in, hidden, rng), dropout_(dropout),
        second_(name + ".fc2", hidden, out, rng) {}

  Index in_features() const { return first_.in_features(); }
  Index out_features() const { return second_.out_features(); }

  Matrix<S> forward(const Matrix<S>& x, const Pass& pass) {
    return second_.forward(dropout_.forward(relu_.forward(first_.forward(x)), pass));
  }

  Matrix<S> backward(const Matrix<S>& dy) {
    return first_.backward(relu_.backward(dropout_.backward(second_.backward(dy))));
  }

  const Dropout<S>& dropout() const { return dropout_; }

  void collect(ParamRefs<S>& refs) {
    first_.collect(refs);
    second_.collect(refs);
  }
  void collect(ConstParamRefs<S>& refs) const {
    first_.collect(refs);
    second_.collect(refs);
  }

 private:
  Linear<S> first_;
  ReLU<S> relu_;
  Dropout<S> dropout_;
  Linear<S> second_;
};

template <class S, class Module>
ParamRefs<S> param_refs(Module& m) {
  ParamRefs<S> r;
  m.collect(r);
  return r;
}

template <class S, class Module>
ConstParamRefs<S> param_refs(const Module& m) {
  ConstParamRefs<S> r;
  m.collect(r);
  return r;
}

template <class S>
std::size_t count_parameters(const ConstParamRefs<S>& refs) {
  std::size_t n = 0;
  for (const auto* p : refs.params) n += static_cast<std::size_t>(p->value.size());
  return n;
}

template <class S>
void zero_grad(ParamRefs<S>& refs) {
  for (auto* p : refs.params) p->zero_grad();
}

// Convert a list of series matrices (each L x C) into one (N*L) x C block.
template <class S, class SeriesRange>
Matrix<S> stack_series(const SeriesRange& series) {
  Index rows = 0, cols = 0, len = -1;
  for (const auto& s : series) {
    if (len < 0) {
      len = s.rows();
      cols = s.cols();
    }
    if (s.rows() != len || s.cols() != cols)
      throw ArgumentError("stack_series: series have different shapes");
    rows += s.rows();
  }
  Matrix<S> out(rows, cols);
  Index r = 0;
  for (const auto& s : series) {
    out.middleRows(r, s.rows()) = s.template cast<S>();
    r += s.rows();
  }
  return out;
}

}  // namespace tscl::nn
