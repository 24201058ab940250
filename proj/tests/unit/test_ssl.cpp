#include <doctest.h>

#include <numeric>

#include "helpers.hpp"
#include "tscl/error.hpp"
#include "tscl/ssl.hpp"

using namespace tscl;
using namespace tscl::ssl;
using testing::MatD;

namespace {

MatD rows(std::initializer_list<std::initializer_list<double>> values) {
  MatD m(static_cast<nn::Index>(values.size()), static_cast<nn::Index>(values.begin()->size()));
  nn::Index i = 0;
  for (const auto& r : values) {
    nn::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

template <class Loss>
double two_input_fd_error(MatD& a, MatD& b, Loss loss_fn, bool grad_b) {
  const auto r = loss_fn();
  auto value = [&] { return loss_fn().loss; };
  double err = testing::fd_relative_error(a, r.grad_a, value);
  if (grad_b) err = std::max(err, testing::fd_relative_error(b, r.grad_b, value));
  return err;
}

MatD permute_rows(const MatD& m, const std::vector<nn::Index>& order) {
  MatD out(m.rows(), m.cols());
  for (nn::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(order[i]);
  return out;
}

}  // namespace

TEST_CASE("nt-xent hand case") {
  // Orthogonal pairs at tau = 1: each anchor sees e^1 for its positive and
  // e^0 for two negatives.
  const MatD z = rows({{1, 0}, {0, 1}});
  const auto r = nt_xent<double>(z, z, 1.0);
  CHECK(r.loss == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 2.0))).epsilon(1e-12));
  CHECK(std::abs(r.loss - 0.5514) < 1e-4);
}

TEST_CASE("nt-xent gradients, permutation and scale invariance") {
  RngStream rng(1, 0);
  MatD a = testing::random_matrix(5, 4, rng), b = testing::random_matrix(5, 4, rng);
  CHECK(two_input_fd_error(a, b, [&] { return nt_xent<double>(a, b, 0.5); }, true) <= 1e-6);
  const double base = nt_xent<double>(a, b, 0.5).loss;
  const std::vector<nn::Index> order{3, 0, 4, 2, 1};
  CHECK(nt_xent<double>(permute_rows(a, order), permute_rows(b, order), 0.5).loss ==
        doctest::Approx(base).epsilon(1e-12));
  CHECK(nt_xent<double>(a * 3.0, b * 0.2, 0.5).loss == doctest::Approx(base).epsilon(1e-12));
  CHECK_THROWS_AS(nt_xent<double>(a.topRows(1), b.topRows(1), 0.5), ArgumentError);
  CHECK_THROWS_AS(nt_xent<double>(a, b, 0.0), ArgumentError);
  CHECK_THROWS_AS(nt_xent<double>(a, b.leftCols(3), 0.5), ArgumentError);
}

TEST_CASE("vicreg zero case") {
  // Identical views with unit-variance, uncorrelated columns.
  const MatD z = rows({{1, 1}, {1, -1}, {-1, 1}, {-1, -1}});
  const auto r = vicreg_loss<double>(z, z, VicregWeights{});
  CHECK(std::abs(r.loss) <= 1e-12);
}

TEST_CASE("vicreg collapsed batch closed form") {
  const VicregWeights w;
  const MatD z = MatD::Constant(6, 3, 0.7);
  const auto r = vicreg_loss<double>(z, z, w);
  CHECK(r.loss == doctest::Approx(w.variance * 2.0 * (w.gamma - std::sqrt(w.eps))).epsilon(1e-6));
  VicregWeights no_variance = w;
  no_variance.variance = 0.0;
  CHECK(std::abs(vicreg_loss<double>(z, z, no_variance).loss) <= 1e-12);
}

TEST_CASE("vicreg gradients with active and inactive hinges") {
  RngStream rng(2, 0);
  for (double scale : {0.3, 4.0}) {
    MatD a = testing::random_matrix(8, 5, rng, scale), b = testing::random_matrix(8, 5, rng, scale);
    CHECK_MESSAGE(
        two_input_fd_error(a, b, [&] { return vicreg_loss<double>(a, b, VicregWeights{}); }, true) <=
            1e-6,
        "scale " << scale);
  }
}

TEST_CASE("byol extremes and gradients") {
  RngStream rng(3, 0);
  const MatD p = testing::random_matrix(4, 3, rng);
  CHECK(std::abs(byol_loss<double>(p, p, p, p).loss) <= 1e-12);
  CHECK(byol_loss<double>(p, p, -p, -p).loss == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(byol_half<double>(p, p * 5.0).loss == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  CHECK(byol_half<double>(p, -p).loss == doctest::Approx(4.0).epsilon(1e-12));

  MatD p1 = testing::random_matrix(4, 3, rng), p2 = testing::random_matrix(4, 3, rng);
  const MatD t1 = testing::random_matrix(4, 3, rng), t2 = testing::random_matrix(4, 3, rng);
  CHECK(two_input_fd_error(p1, p2, [&] { return byol_loss<double>(p1, p2, t1, t2); }, true) <=
        1e-6);
  const auto r = byol_half<double>(p1, t1);
  CHECK(r.grad_b.size() == 0);
}

TEST_CASE("byol orthogonal prediction gives 2") {
  const MatD p = rows({{1, 0}}), t = rows({{0, 1}});
  CHECK(byol_half<double>(p, t).loss == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("moco hand case against one queued key") {
  KeyQueue queue(4, 2);
  queue.enqueue(rows({{0, 3}}));
  const MatD q = rows({{2, 0}});
  const auto r = moco_loss<double>(q, q, queue, 1.0);
  CHECK(r.loss == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-12));
}

TEST_CASE("moco ring buffer keeps the newest keys") {
  const nn::Index b = 2, d = 3;
  KeyQueue queue(4, d);
  std::vector<MatD> pushed;
  RngStream rng(4, 0);
  for (int step = 0; step < 5; ++step) {
    const MatD q = testing::random_matrix(b, d, rng), k = testing::random_matrix(b, d, rng);
    moco_step<double>(q, k, queue, 0.2);
    pushed.push_back(k);
    CHECK(queue.size() == std::min<std::size_t>(4, 2 * (step + 1)));
  }
  const MatD contents = queue.contents();
  REQUIRE(contents.rows() == 4);
  // Oldest first: keys of steps 3 and 4, each row unit-normalized.
  for (int s = 0; s < 2; ++s)
    for (nn::Index i = 0; i < b; ++i) {
      const auto expect = pushed[3 + s].row(i) / pushed[3 + s].row(i).norm();
      CHECK((contents.row(2 * s + i) - expect).cwiseAbs().maxCoeff() <= 1e-12);
    }
  KeyQueue odd(5, d);
  CHECK_THROWS_AS(moco_step<double>(MatD::Ones(2, d), MatD::Ones(2, d), odd, 0.2), ArgumentError);
}

TEST_CASE("moco gradients with a populated queue") {
  RngStream rng(5, 0);
  KeyQueue queue(6, 4);
  queue.enqueue(testing::random_matrix(6, 4, rng));
  MatD q = testing::random_matrix(3, 4, rng), k = testing::random_matrix(3, 4, rng);
  CHECK(two_input_fd_error(q, k, [&] { return moco_loss<double>(q, k, queue, 0.2); }, false) <=
        1e-6);
  KeyQueue wrong(6, 5);
  wrong.enqueue(testing::random_matrix(1, 5, rng));
  CHECK_THROWS_AS(moco_loss<double>(q, k, wrong, 0.2), ArgumentError);
}

TEST_CASE("momentum update endpoints and midpoint") {
  RngStream rng(6, 0);
  nn::Linear<double> online("fc", 3, 2, rng), target("fc", 3, 2, rng);
  const auto src = nn::param_refs<double>(std::as_const(online));
  auto dst = nn::param_refs<double>(target);
  const MatD before = dst.params[0]->value;
  momentum_update(src, dst, 1.0);
  CHECK(dst.params[0]->value == before);
  momentum_update(src, dst, 0.5);
  CHECK((dst.params[0]->value - 0.5 * (before + src.params[0]->value)).cwiseAbs().maxCoeff() <
        1e-15);
  momentum_update(src, dst, 0.0);
  CHECK(dst.params[0]->value == src.params[0]->value);
  CHECK_THROWS_AS(momentum_update(src, dst, 1.5), ArgumentError);
}

TEST_CASE("collapse statistic") {
  CHECK(mean_dimension_std<double>(MatD::Constant(5, 4, 2.0)) == 0.0);
  CHECK(is_collapsed<double>(MatD::Constant(5, 4, 2.0), 1e-3));
  const MatD z = rows({{1, 1}, {1, -1}, {-1, 1}, {-1, -1}});
  CHECK(mean_dimension_std<double>(z) == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-12));
  CHECK_FALSE(is_collapsed<double>(z, 1e-3));
}

TEST_CASE("framework names round trip") {
  for (auto f : {Framework::kSimclr, Framework::kMoco, Framework::kByol, Framework::kVicreg})
    CHECK(parse_framework(to_string(f)) == f);
  CHECK_THROWS(parse_framework("barlow"));
}
