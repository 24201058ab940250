#include <doctest.h>

#include "helpers.hpp"
#include "tscl/error.hpp"
#include "tscl/model.hpp"
#include "tscl/nn.hpp"

using namespace tscl;
using namespace tscl::nn;
using testing::MatD;

namespace {

// Checks d(sum(R .* f(x)))/d(x and every parameter) against central differences.
template <class Fwd, class Bwd>
double layer_fd_error(MatD& x, ParamRefs<double> refs, Fwd fwd, Bwd bwd, RngStream& rng) {
  const MatD y = fwd(x);
  const MatD r = testing::random_matrix(y.rows(), y.cols(), rng);
  zero_grad(refs);
  const MatD dx = bwd(r);
  auto loss = [&] { return (fwd(x).array() * r.array()).sum(); };
  double worst = testing::fd_relative_error(x, dx, loss);
  for (auto* p : refs.params) {
    const MatD grad = p->grad;
    worst = std::max(worst, testing::fd_relative_error(p->value, grad, loss));
  }
  return worst;
}

std::size_t expected_encoder_parameters(Index c, const std::vector<Index>& filters,
                                        const std::vector<Index>& kernels) {
  std::size_t total = 0;
  Index in = c;
  for (Index out : filters) {
    Index layer_in = in;
    for (Index k : kernels) {
      total += static_cast<std::size_t>(k * layer_in * out + out + 2 * out);
      layer_in = out;
    }
    if (in != out) total += static_cast<std::size_t>(in * out + out + 2 * out);
    in = out;
  }
  return total;
}

}  // namespace

TEST_CASE("linear gradients") {
  RngStream rng(1, 0);
  Linear<double> layer("fc", 5, 4, rng);
  MatD x = testing::random_matrix(6, 5, rng);
  const double err = layer_fd_error(
      x, param_refs<double>(layer), [&](const MatD& in) { return layer.forward(in); },
      [&](const MatD& dy) { return layer.backward(dy); }, rng);
  CHECK(err <= 1e-6);
}

TEST_CASE("conv1d gradients for every kernel size") {
  RngStream rng(2, 0);
  for (Index k : {1, 3, 5, 8}) {
    Conv1d<double> conv("conv", 3, 4, k, rng);
    MatD x = testing::random_matrix(2 * 9, 3, rng);
    const Pass pass{true, 9, nullptr};
    const double err = layer_fd_error(
        x, param_refs<double>(conv), [&](const MatD& in) { return conv.forward(in, pass); },
        [&](const MatD& dy) { return conv.backward(dy); }, rng);
    CHECK_MESSAGE(err <= 1e-6, "kernel " << k);
  }
}

TEST_CASE("conv1d matches a direct same-padded convolution") {
  RngStream rng(3, 0);
  const Index k = 8, in = 2, out = 3, len = 11;
  Conv1d<double> conv("conv", in, out, k, rng);
  auto refs = param_refs<double>(conv);
  refs.params[1]->value = testing::random_matrix(1, out, rng);
  const MatD& w = refs.params[0]->value;
  const MatD& b = refs.params[1]->value;
  const MatD x = testing::random_matrix(2 * len, in, rng);
  const MatD y = conv.forward(x, Pass{false, len, nullptr});
  const Index pad = (k - 1) / 2;
  for (Index s = 0; s < 2; ++s)
    for (Index t = 0; t < len; ++t)
      for (Index o = 0; o < out; ++o) {
        double acc = b(0, o);
        for (Index j = 0; j < k; ++j) {
          const Index src = t + j - pad;
          if (src < 0 || src >= len) continue;
          for (Index c = 0; c < in; ++c) acc += x(s * len + src, c) * w(j * in + c, o);
        }
        CHECK(y(s * len + t, o) == doctest::Approx(acc).epsilon(1e-12));
      }
}

TEST_CASE("batch norm gradients include the batch statistics terms") {
  RngStream rng(4, 0);
  BatchNorm<double> bn("bn", 4);
  auto refs = param_refs<double>(bn);
  refs.params[0]->value = testing::random_matrix(1, 4, rng);
  refs.params[1]->value = testing::random_matrix(1, 4, rng);
  MatD x = testing::random_matrix(7, 4, rng, 2.0);
  const Pass train{true, 1, nullptr};
  CHECK(layer_fd_error(
            x, refs, [&](const MatD& in) { return bn.forward(in, train); },
            [&](const MatD& dy) { return bn.backward(dy); }, rng) <= 1e-6);
  const Pass eval{false, 1, nullptr};
  CHECK(layer_fd_error(
            x, refs, [&](const MatD& in) { return bn.forward(in, eval); },
            [&](const MatD& dy) { return bn.backward(dy); }, rng) <= 1e-6);
}

TEST_CASE("batch norm running statistics and eval mode") {
  RngStream rng(5, 0);
  BatchNorm<double> bn("bn", 2, 0.9);
  const MatD x = testing::random_matrix(10, 2, rng);
  bn.forward(x, Pass{true, 1, nullptr});
  auto refs = param_refs<double>(bn);
  const MatD mean = x.colwise().mean();
  const MatD var = (x.rowwise() - x.colwise().mean()).array().square().colwise().sum() / 9.0;
  CHECK(refs.buffers[0]->value(0, 0) == doctest::Approx(0.1 * mean(0, 0)).epsilon(1e-12));
  CHECK(refs.buffers[1]->value(0, 1) == doctest::Approx(0.9 + 0.1 * var(0, 1)).epsilon(1e-12));
  const MatD e1 = bn.forward(x, Pass{false, 1, nullptr});
  const MatD e2 = bn.forward(x, Pass{false, 1, nullptr});
  CHECK(e1 == e2);
  const double expect =
      (x(3, 1) - refs.buffers[0]->value(0, 1)) / std::sqrt(refs.buffers[1]->value(0, 1) + 1e-5);
  CHECK(e1(3, 1) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("relu and pooling gradients") {
  RngStream rng(6, 0);
  ReLU<double> relu;
  MatD x = testing::random_matrix(5, 3, rng);
  CHECK(layer_fd_error(
            x, {}, [&](const MatD& in) { return relu.forward(in); },
            [&](const MatD& dy) { return relu.backward(dy); }, rng) <= 1e-6);
  MatD seq = testing::random_matrix(12, 3, rng);
  CHECK(layer_fd_error(
            seq, {}, [&](const MatD& in) { return global_avg_pool(in, 4); },
            [&](const MatD& dy) { return global_avg_pool_backward(dy, 4); }, rng) <= 1e-6);
  MatD grouped = testing::random_matrix(8, 3, rng);
  CHECK(layer_fd_error(
            grouped, {}, [&](const MatD& in) { return group_mean(in, 4); },
            [&](const MatD& dy) { return group_mean_backward(dy, 4); }, rng) <= 1e-6);
}

TEST_CASE("group mean gradient is 1/G per member") {
  const MatD dy = MatD::Ones(2, 3);
  const MatD dx = group_mean_backward(dy, 4);
  CHECK(dx.rows() == 8);
  CHECK((dx.array() == 0.25).all());
}

TEST_CASE("dropout with a fixed mask is linear and has the configured rate") {
  RngStream rng(7, 0);
  Dropout<double> drop(0.2);
  MatD x = testing::random_matrix(4, 5, rng);
  auto fwd = [&](const MatD& in) {
    RngStream mask_rng(99, 1);
    return drop.forward(in, Pass{true, 0, &mask_rng});
  };
  CHECK(layer_fd_error(x, {}, fwd, [&](const MatD& dy) { return drop.backward(dy); }, rng) <= 1e-6);

  const Index n = 200, d = 256;
  const MatD ones = MatD::Ones(n, d);
  RngStream mask_rng(100, 0);
  const MatD out = drop.forward(ones, Pass{true, 0, &mask_rng});
  const double zeros = static_cast<double>((out.array() == 0.0).count());
  const double total = static_cast<double>(n * d);
  CHECK(std::abs(zeros - 0.2 * total) <= 3.0 * std::sqrt(total * 0.2 * 0.8));
  CHECK(((out.array() == 0.0) || (out.array() == 1.25)).all());
  CHECK(drop.forward(ones, Pass{false, 0, nullptr}) == ones);
  CHECK_THROWS_AS(drop.forward(ones, Pass{true, 0, nullptr}), StateError);
}

TEST_CASE("mlp head gradients at 64-bit") {
  RngStream rng(8, 0);
  Mlp<double> mlp("head", 6, 5, 3, rng);
  MatD x = testing::random_matrix(4, 6, rng);
  const Pass pass{true, 0, nullptr};
  CHECK(layer_fd_error(
            x, param_refs<double>(mlp), [&](const MatD& in) { return mlp.forward(in, pass); },
            [&](const MatD& dy) { return mlp.backward(dy); }, rng) <= 1e-6);
}

TEST_CASE("projection head gradients at 32-bit") {
  RngStream rng(9, 0);
  Mlp<float> mlp("projector", 32, 32, 16, rng);
  Matrix<float> x = testing::random_matrix(4, 32, rng).cast<float>();
  const Pass pass{true, 0, nullptr};
  const MatD r = testing::random_matrix(4, 16, rng);
  auto loss = [&] {
    return (mlp.forward(x, pass).cast<double>().array() * r.array()).sum();
  };
  auto refs = param_refs<float>(mlp);
  loss();
  zero_grad(refs);
  mlp.backward(r.cast<float>());
  const float h = 1e-3f;
  for (auto* p : refs.params) {
    const MatD analytic = p->grad.cast<double>();
    MatD numeric(analytic.rows(), analytic.cols());
    for (Index i = 0; i < p->value.size(); ++i) {
      const float keep = p->value.data()[i];
      p->value.data()[i] = keep + h;
      const double up = loss();
      p->value.data()[i] = keep - h;
      const double down = loss();
      p->value.data()[i] = keep;
      numeric.data()[i] = (up - down) / (2.0 * static_cast<double>(h));
    }
    CHECK_MESSAGE((analytic - numeric).norm() <= 1e-3 * numeric.norm(), p->name);
  }
}

TEST_CASE("classifier head eval mode is deterministic") {
  RngStream rng(10, 0);
  Mlp<float> head("head", 8, 256, 5, rng, 0.2);
  const Matrix<float> x = testing::random_matrix(3, 8, rng).cast<float>();
  const Pass eval{false, 0, nullptr};
  CHECK(head.forward(x, eval) == head.forward(x, eval));
}

TEST_CASE("projection head shapes and zero weights") {
  RngStream rng(11, 0);
  Mlp<double> mlp("projector", 512, 512, 128, rng);
  for (Index b : {1, 3}) CHECK(mlp.forward(MatD::Ones(b, 512), Pass{}).cols() == 128);
  auto refs = param_refs<double>(mlp);
  for (auto* p : refs.params) p->value.setZero();
  CHECK(mlp.forward(testing::random_matrix(2, 512, rng), Pass{}).isZero());
}

TEST_CASE("toy encoder gradients for every parameter") {
  RngStream rng(12, 0);
  EncoderConfig cfg;
  cfg.in_channels = 3;
  cfg.block_filters = {8, 8};
  Encoder<double> enc(cfg, rng);
  const Index len = 10;
  MatD x = testing::random_matrix(3 * len, 3, rng);
  const Pass pass{true, len, nullptr};
  const double err = layer_fd_error(
      x, param_refs<double>(enc), [&](const MatD& in) { return enc.forward(in, pass); },
      [&](const MatD& dy) { return enc.backward(dy); }, rng);
  CHECK(err <= 1e-6);
}

TEST_CASE("encoder with a projection shortcut and a third block") {
  RngStream rng(13, 0);
  EncoderConfig cfg;
  cfg.in_channels = 2;
  cfg.block_filters = {4, 6, 6};
  Encoder<double> enc(cfg, rng);
  MatD x = testing::random_matrix(2 * 9, 2, rng);
  const Pass pass{true, 9, nullptr};
  CHECK(layer_fd_error(
            x, param_refs<double>(enc), [&](const MatD& in) { return enc.forward(in, pass); },
            [&](const MatD& dy) { return enc.backward(dy); }, rng) <= 1e-6);
}

TEST_CASE("constant input gives bias gradients equal to summed upstream gradients") {
  RngStream rng(14, 0);
  Conv1d<double> conv("conv", 2, 3, 5, rng);
  const MatD x = MatD::Constant(2 * 8, 2, 0.5);
  conv.forward(x, Pass{true, 8, nullptr});
  auto refs = param_refs<double>(conv);
  zero_grad(refs);
  const MatD dy = testing::random_matrix(16, 3, rng);
  conv.backward(dy);
  const MatD sums = dy.colwise().sum();
  for (Index o = 0; o < 3; ++o) CHECK(refs.params[1]->grad(0, o) == doctest::Approx(sums(0, o)));
}

TEST_CASE("group aggregation properties") {
  RngStream rng(15, 0);
  EncoderConfig cfg;
  cfg.in_channels = 3;
  cfg.block_filters = {8, 8};
  Encoder<double> enc(cfg, rng);
  const Index len = 12;
  const MatD a = testing::random_matrix(len, 3, rng), b = testing::random_matrix(len, 3, rng);
  const Pass eval{false, len, nullptr};
  MatD ab(2 * len, 3), ba(2 * len, 3), aa(2 * len, 3);
  ab << a, b;
  ba << b, a;
  aa << a, a;
  const MatD h_ab = group_mean(enc.forward(ab, eval), 2);
  const MatD h_ba = group_mean(enc.forward(ba, eval), 2);
  CHECK((h_ab - h_ba).cwiseAbs().maxCoeff() < 1e-12);
  const MatD single = enc.forward(a, eval);
  CHECK((group_mean(enc.forward(aa, eval), 2) - single).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(group_mean(single, 1) == single);
}

TEST_CASE("backward before forward is a state error") {
  RngStream rng(16, 0);
  Linear<double> fc("fc", 2, 2, rng);
  CHECK_THROWS_AS(fc.backward(MatD::Ones(1, 2)), StateError);
  Conv1d<double> conv("conv", 2, 2, 3, rng);
  CHECK_THROWS_AS(conv.backward(MatD::Ones(8, 2)), StateError);
  BatchNorm<double> bn("bn", 2);
  CHECK_THROWS_AS(bn.backward(MatD::Ones(2, 2)), StateError);
  EncoderConfig cfg;
  cfg.in_channels = 2;
  cfg.block_filters = {4};
  Encoder<double> enc(cfg, rng);
  CHECK_THROWS_AS(enc.backward(MatD::Ones(1, 4)), StateError);
}

TEST_CASE("shape mismatches are argument errors") {
  RngStream rng(17, 0);
  EncoderConfig cfg;
  cfg.in_channels = 3;
  cfg.block_filters = {4};
  Encoder<double> enc(cfg, rng);
  CHECK_THROWS_AS(enc.forward(MatD::Ones(10, 2), Pass{false, 10, nullptr}), ArgumentError);
  CHECK_THROWS_AS(enc.forward(MatD::Ones(10, 3), Pass{false, 3, nullptr}), ArgumentError);
  Linear<double> fc("fc", 2, 2, rng);
  CHECK_THROWS_AS(fc.forward(MatD::Ones(1, 3)), ArgumentError);
}

TEST_CASE("default encoder parameter count") {
  RngStream rng(18, 0);
  EncoderConfig cfg;  // 12 channels, (256, 512, 512), kernels (8, 5, 3)
  Encoder<float> enc(cfg, rng);
  const auto n = count_parameters(param_refs<float>(std::as_const(enc)));
  CHECK(n == expected_encoder_parameters(12, {256, 512, 512}, {8, 5, 3}));
  CHECK(n == 8036864);
  CHECK(enc.embedding_dim() == 512);
  Encoder<float> again(cfg, rng);
  CHECK(count_parameters(param_refs<float>(std::as_const(again))) == n);
}

TEST_CASE("weight decay flags exclude batch norm and biases") {
  RngStream rng(19, 0);
  EncoderConfig cfg;
  cfg.in_channels = 2;
  cfg.block_filters = {4, 8};
  Encoder<float> enc(cfg, rng);
  for (const auto* p : param_refs<float>(enc).params) {
    const bool weight = p->name.ends_with(".weight");
    CHECK_MESSAGE(p->decay == weight, p->name);
  }
}
