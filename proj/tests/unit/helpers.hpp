#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "tscl/data.hpp"
#include "tscl/nn.hpp"
#include "tscl/rng.hpp"

namespace testing {

using tscl::nn::Index;
using MatD = tscl::nn::Matrix<double>;

inline tscl::SeriesMatrix random_series(Index t, Index c, tscl::RngStream& rng) {
  tscl::SeriesMatrix m(t, c);
  for (Index i = 0; i < m.size(); ++i)
    m.data()[i] = static_cast<double>(static_cast<float>(rng.uniform(-2.0, 2.0)));
  return m;
}

inline MatD random_matrix(Index r, Index c, tscl::RngStream& rng, double scale = 1.0) {
  MatD m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

inline tscl::Dataset random_dataset(tscl::RngStream& rng, bool labeled) {
  const std::size_t n = 1 + rng.index(6), n_ts = 1 + rng.index(4);
  const Index t = 8 + static_cast<Index>(rng.index(10)), c = 1 + static_cast<Index>(rng.index(4));
  const std::uint32_t k = 2 + static_cast<std::uint32_t>(rng.index(5));
  std::vector<tscl::Sample> samples(n);
  for (auto& s : samples) {
    for (std::size_t j = 0; j < n_ts; ++j) s.series.emplace_back(random_series(t, c, rng));
    if (labeled) s.label = static_cast<std::uint32_t>(rng.index(k));
  }
  return tscl::Dataset(std::move(samples), k,
                       labeled ? tscl::SplitTag::kTrain : tscl::SplitTag::kUnlabeled);
}

// Worst relative error between an analytic gradient and central differences
// of f at x, over every entry of x. Relative to max(|analytic|, |numeric|, floor):
// entries below the floor (e.g. conv biases cancelled by a following batch
// norm) are compared absolutely, since their numeric value is pure roundoff.
inline double fd_relative_error(MatD& x, const MatD& analytic, const std::function<double()>& f,
                                double h = 1e-5, double floor = 1e-3) {
  double worst = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + h;
    const double up = f();
    x.data()[i] = keep - h;
    const double down = f();
    x.data()[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic.data()[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace testing
