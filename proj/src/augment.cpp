#include "tscl/augment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tscl/error.hpp"

namespace tscl::augment {

namespace {

// Piecewise-linear curve through (knots[k], values.row(k)) evaluated at
// increasing query positions inside [knots.front(), knots.back()].
SeriesMatrix interpolate(const std::vector<double>& knots, const SeriesMatrix& values,
                         const std::vector<double>& queries) {
  const Index n = static_cast<Index>(knots.size());
  SeriesMatrix out(static_cast<Index>(queries.size()), values.cols());
  Index k = 0;
  for (Index q = 0; q < static_cast<Index>(queries.size()); ++q) {
    const double x = queries[static_cast<std::size_t>(q)];
    while (k + 1 < n - 1 && knots[static_cast<std::size_t>(k + 1)] <= x) ++k;
    const double x0 = knots[static_cast<std::size_t>(k)];
    const double x1 = knots[static_cast<std::size_t>(k + 1)];
    if (x == x1) {
      out.row(q) = values.row(k + 1);
      continue;
    }
    const double f = (x - x0) / (x1 - x0);
    out.row(q) = values.row(k) + (values.row(k + 1) - values.row(k)) * f;
  }
  return out;
}

std::vector<Index> draw_view(const std::vector<std::vector<Index>>& reserved_by_quarter,
                             std::vector<bool>& used, Index count, RngStream& rng) {
  std::vector<Index> view;
  for (const auto& q : reserved_by_quarter) view.insert(view.end(), q.begin(), q.end());
  std::vector<std::size_t> free;
  for (std::size_t u = 0; u < used.size(); ++u)
    if (!used[u]) free.push_back(u);
  const auto extra = static_cast<std::size_t>(count) - view.size();
  for (auto u : rng.choose_from(free, extra)) {
    used[u] = true;
    view.push_back(static_cast<Index>(u));
  }
  std::sort(view.begin(), view.end());
  return view;
}

}  // namespace

ResamplingConfig ResamplingConfig::defaults(Index t) {
  return ResamplingConfig{2 * t - 1, t / 2, t / 2};
}

std::array<std::pair<Index, Index>, 4> quarter_bounds(Index t_up) {
  std::array<std::pair<Index, Index>, 4> out{};
  // ceil(j * t_up / 4) is the first u with 4u >= j * t_up.
  for (Index j = 0; j < 4; ++j) out[j] = {(j * t_up + 3) / 4, ((j + 1) * t_up + 3) / 4};
  return out;
}

void ResamplingConfig::validate() const {
  std::ostringstream os;
  if (t_int_1 < 4 || t_int_2 < 4) {
    os << "resampling: subsequence lengths must be >= 4, got " << t_int_1 << ", " << t_int_2;
    throw ArgumentError(os.str());
  }
  if (t_int_1 + t_int_2 > t_up) {
    os << "resampling: t_int_1 + t_int_2 = " << t_int_1 + t_int_2 << " exceeds t_up = " << t_up;
    throw ArgumentError(os.str());
  }
  const Index need = t_int_1 / 4 + t_int_2 / 4;
  for (const auto& [b, e] : quarter_bounds(t_up)) {
    if (e - b < need) {
      os << "resampling: quarter [" << b << ", " << e << ") of t_up = " << t_up
         << " cannot hold " << need << " reserved indices";
      throw ArgumentError(os.str());
    }
  }
}

std::string check_index_pair(const IndexPair& pair, Index t_up) {
  std::ostringstream os;
  std::vector<int> owner(static_cast<std::size_t>(std::max<Index>(t_up, 0)), 0);
  const auto quarters = quarter_bounds(t_up);
  int view_id = 0;
  for (const auto* view : {&pair.x1, &pair.x2}) {
    ++view_id;
    for (std::size_t i = 0; i < view->size(); ++i) {
      const Index u = (*view)[i];
      if (u < 0 || u >= t_up) {
        os << "view " << view_id << ": index " << u << " out of [0, " << t_up << ")";
        return os.str();
      }
      if (i > 0 && (*view)[i - 1] >= u) {
        os << "view " << view_id << ": indices not strictly increasing at position " << i;
        return os.str();
      }
      if (owner[static_cast<std::size_t>(u)] != 0) {
        os << "index " << u << " shared by both views";
        return os.str();
      }
      owner[static_cast<std::size_t>(u)] = view_id;
    }
    const auto need = static_cast<std::ptrdiff_t>(view->size() / 4);
    for (std::size_t j = 0; j < 4; ++j) {
      const auto [b, e] = quarters[j];
      const auto have = std::count_if(view->begin(), view->end(),
                                      [b = b, e = e](Index u) { return u >= b && u < e; });
      if (have < need) {
        os << "view " << view_id << ": quarter " << j + 1 << " holds " << have << " < " << need;
        return os.str();
      }
    }
  }
  return {};
}

TimeSeries upsample(const TimeSeries& s, Index t_up) {
  const Index t = s.length();
  if (t_up < t)
    throw ArgumentError("upsample: t_up = " + std::to_string(t_up) + " is below T = " +
                        std::to_string(t));
  std::vector<double> knots(static_cast<std::size_t>(t));
  for (Index i = 0; i < t; ++i) knots[static_cast<std::size_t>(i)] = static_cast<double>(i);
  std::vector<double> queries(static_cast<std::size_t>(t_up));
  for (Index k = 0; k < t_up; ++k)
    queries[static_cast<std::size_t>(k)] =
        static_cast<double>(k * (t - 1)) / static_cast<double>(t_up - 1);
  queries.back() = static_cast<double>(t - 1);
  return TimeSeries(interpolate(knots, s.values(), queries));
}

IndexPair sample_disjoint_indices(const ResamplingConfig& cfg, RngStream& rng) {
  cfg.validate();
  const auto quarters = quarter_bounds(cfg.t_up);
  const Index q1 = cfg.t_int_1 / 4;
  const Index q2 = cfg.t_int_2 / 4;
  std::vector<bool> used(static_cast<std::size_t>(cfg.t_up), false);
  std::vector<std::vector<Index>> reserve1(4), reserve2(4);
  // Both views' per-quarter quotas are drawn first so that topping up view 1
  // can never starve view 2 in any quarter.
  for (std::size_t j = 0; j < 4; ++j) {
    const auto [b, e] = quarters[j];
    const auto picks =
        rng.choose(static_cast<std::size_t>(e - b), static_cast<std::size_t>(q1 + q2));
    for (std::size_t i = 0; i < picks.size(); ++i) {
      const Index u = b + static_cast<Index>(picks[i]);
      used[static_cast<std::size_t>(u)] = true;
      (static_cast<Index>(i) < q1 ? reserve1 : reserve2)[j].push_back(u);
    }
  }
  IndexPair out;
  out.x1 = draw_view(reserve1, used, cfg.t_int_1, rng);
  out.x2 = draw_view(reserve2, used, cfg.t_int_2, rng);
  return out;
}

SeriesMatrix gather(const SeriesMatrix& s, std::span<const Index> indices) {
  SeriesMatrix out(static_cast<Index>(indices.size()), s.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    TSCL_REQUIRE(indices[i] >= 0 && indices[i] < s.rows(), ArgumentError,
                 "gather: index out of range");
    out.row(static_cast<Index>(i)) = s.row(indices[i]);
  }
  return out;
}

TimeSeries realign(const SeriesMatrix& sub_values, std::span<const Index> sub_indices, Index t) {
  const auto n = static_cast<Index>(sub_indices.size());
  TSCL_REQUIRE(n >= 2, ArgumentError, "realign: need at least 2 subsequence points");
  TSCL_REQUIRE(sub_values.rows() == n, ArgumentError,
               "realign: values and indices differ in length");
  for (Index i = 1; i < n; ++i)
    TSCL_REQUIRE(sub_indices[i] > sub_indices[i - 1], ArgumentError,
                 "realign: indices must be strictly increasing");
  const double first = static_cast<double>(sub_indices.front());
  const double span = static_cast<double>(sub_indices.back()) - first;
  std::vector<double> knots(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    knots[static_cast<std::size_t>(i)] =
        (static_cast<double>(sub_indices[i]) - first) * static_cast<double>(t - 1) / span;
  knots.back() = static_cast<double>(t - 1);
  std::vector<double> queries(static_cast<std::size_t>(t));
  for (Index i = 0; i < t; ++i) queries[static_cast<std::size_t>(i)] = static_cast<double>(i);
  return TimeSeries(interpolate(knots, sub_values, queries));
}

namespace {

std::pair<TimeSeries, TimeSeries> apply_pair(const TimeSeries& s, Index t_up,
                                             const IndexPair& idx) {
  const auto up = upsample(s, t_up);
  return {realign(gather(up.values(), idx.x1), idx.x1, s.length()),
          realign(gather(up.values(), idx.x2), idx.x2, s.length())};
}

}  // namespace

std::pair<TimeSeries, TimeSeries> resampling_pair(const TimeSeries& s, const ResamplingConfig& cfg,
                                                  RngStream& rng) {
  TSCL_REQUIRE(cfg.t_up >= s.length(), ArgumentError, "resampling: t_up below T");
  return apply_pair(s, cfg.t_up, sample_disjoint_indices(cfg, rng));
}

std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> resampling_pair_group(
    std::span<const TimeSeries> group, const ResamplingConfig& cfg, RngStream& rng,
    bool share_indices) {
  std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> out;
  if (group.empty()) return out;
  TSCL_REQUIRE(cfg.t_up >= group.front().length(), ArgumentError, "resampling: t_up below T");
  IndexPair shared;
  if (share_indices) shared = sample_disjoint_indices(cfg, rng);
  for (const auto& s : group) {
    auto [a, b] = apply_pair(s, cfg.t_up, share_indices ? shared : sample_disjoint_indices(cfg, rng));
    out.first.push_back(std::move(a));
    out.second.push_back(std::move(b));
  }
  return out;
}

TimeSeries jitter(const TimeSeries& s, double sigma, RngStream& rng) {
  TSCL_REQUIRE(sigma >= 0.0, ArgumentError, "jitter: sigma must be >= 0");
  if (sigma == 0.0) return s;
  const SeriesMatrix& v = s.values();
  const Eigen::RowVectorXd mean = v.colwise().mean();
  const Eigen::RowVectorXd stddev =
      ((v.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(v.rows()))
          .sqrt();
  SeriesMatrix out = v;
  for (Index t = 0; t < out.rows(); ++t)
    for (Index c = 0; c < out.cols(); ++c) out(t, c) += sigma * stddev(c) * rng.normal();
  return TimeSeries(std::move(out));
}

TimeSeries resize_crop(const TimeSeries& s, double scale_low, double scale_high, RngStream& rng) {
  TSCL_REQUIRE(scale_low > 0.0 && scale_low <= scale_high && scale_high <= 1.0, ArgumentError,
               "resize_crop: need 0 < low <= high <= 1");
  const Index t = s.length();
  const double r = scale_low == scale_high ? scale_low : rng.uniform(scale_low, scale_high);
  const auto len = static_cast<Index>(std::ceil(r * static_cast<double>(t)));
  TSCL_REQUIRE(len >= 2, ArgumentError, "resize_crop: crop length below 2");
  const Index start = len >= t ? 0 : static_cast<Index>(rng.index(static_cast<std::size_t>(t - len + 1)));
  std::vector<Index> idx(static_cast<std::size_t>(std::min(len, t)));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = start + static_cast<Index>(i);
  return realign(gather(s.values(), idx), idx, t);
}

TimeSeries time_mask(const TimeSeries& s, double ratio, RngStream& rng) {
  TSCL_REQUIRE(ratio >= 0.0 && ratio < 1.0, ArgumentError, "time_mask: need 0 <= ratio < 1");
  const Index t = s.length();
  const auto count = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(t)));
  if (count == 0) return s;
  SeriesMatrix out = s.values();
  for (auto row : rng.choose(static_cast<std::size_t>(t), count))
    out.row(static_cast<Index>(row)).setZero();
  return TimeSeries(std::move(out));
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kNone: return "none";
    case Strategy::kJitter: return "jitter";
    case Strategy::kResize: return "resize";
    case Strategy::kMask: return "mask";
    case Strategy::kResampling: return "resample";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "none") return Strategy::kNone;
  if (name == "jitter" || name == "jittering") return Strategy::kJitter;
  if (name == "resize" || name == "resizing") return Strategy::kResize;
  if (name == "mask" || name == "masking") return Strategy::kMask;
  if (name == "resample" || name == "resampling") return Strategy::kResampling;
  throw ArgumentError("unknown augmentation strategy '" + name + "'");
}

ResamplingConfig AugmentConfig::resampling_for(Index t) const {
  auto cfg = ResamplingConfig::defaults(t);
  if (t_up > 0) cfg.t_up = t_up;
  if (t_int_1 > 0) cfg.t_int_1 = t_int_1;
  if (t_int_2 > 0) cfg.t_int_2 = t_int_2;
  return cfg;
}

std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> make_views(
    std::span<const TimeSeries> group, const AugmentConfig& cfg, RngStream& rng) {
  if (cfg.strategy == Strategy::kResampling) {
    if (group.empty()) return {};
    return resampling_pair_group(group, cfg.resampling_for(group.front().length()), rng,
                                 cfg.share_indices);
  }
  std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> out;
  for (auto* view : {&out.first, &out.second}) {
    for (const auto& s : group) {
      switch (cfg.strategy) {
        case Strategy::kJitter: view->push_back(jitter(s, cfg.jitter_sigma, rng)); break;
        case Strategy::kResize:
          view->push_back(resize_crop(s, cfg.resize_low, cfg.resize_high, rng));
          break;
        case Strategy::kMask: view->push_back(time_mask(s, cfg.mask_ratio, rng)); break;
        default: view->push_back(s); break;
      }
    }
  }
  return out;
}

}  // namespace tscl::augment
