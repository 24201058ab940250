#pragma once

#include <array>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tscl/data.hpp"
#include "tscl/rng.hpp"

namespace tscl::augment {

using Index = Eigen::Index;

// Lengths for the resampling augmentation. Defaults for a length-T series:
// t_up = 2T - 1 (midpoint insertion), t_int_1 = t_int_2 = floor(T / 2).
struct ResamplingConfig {
  Index t_up = 0;
  Index t_int_1 = 0;
  Index t_int_2 = 0;

  static ResamplingConfig defaults(Index t);
  // Throws ArgumentError if no index pair can satisfy the constraints.
  void validate() const;
};

// Half-open [begin, end) of the j-th quarter of {0..t_up-1}, j in 0..3, where
// quarter j holds the indices u with j*t_up/4 <= u < (j+1)*t_up/4.
std::array<std::pair<Index, Index>, 4> quarter_bounds(Index t_up);

struct IndexPair {
  std::vector<Index> x1;
  std::vector<Index> x2;
};

// Empty string when the pair is strictly increasing, in range, disjoint, and
// covers every quarter with at least floor(|x_i| / 4) indices; otherwise a
// description of the first violation found.
std::string check_index_pair(const IndexPair& pair, Index t_up);

TimeSeries upsample(const TimeSeries& s, Index t_up);

IndexPair sample_disjoint_indices(const ResamplingConfig& cfg, RngStream& rng);

// Gather rows of s at the given indices.
SeriesMatrix gather(const SeriesMatrix& s, std::span<const Index> indices);

// Rescale sub_indices affinely so that first -> 0 and last -> t-1, then
// linearly interpolate at the integer grid {0..t-1}.
TimeSeries realign(const SeriesMatrix& sub_values, std::span<const Index> sub_indices, Index t);

std::pair<TimeSeries, TimeSeries> resampling_pair(const TimeSeries& s, const ResamplingConfig& cfg,
                                                  RngStream& rng);

// Two views of a group of aligned series. With share_indices, one index pair
// is drawn and applied to every member; otherwise each member draws its own.
std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> resampling_pair_group(
    std::span<const TimeSeries> group, const ResamplingConfig& cfg, RngStream& rng,
    bool share_indices = true);

TimeSeries jitter(const TimeSeries& s, double sigma, RngStream& rng);
TimeSeries resize_crop(const TimeSeries& s, double scale_low, double scale_high, RngStream& rng);
TimeSeries time_mask(const TimeSeries& s, double ratio, RngStream& rng);

enum class Strategy { kNone, kJitter, kResize, kMask, kResampling };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

struct AugmentConfig {
  Strategy strategy = Strategy::kResampling;
  // Zero means "derive from T" (see ResamplingConfig::defaults).
  Index t_up = 0;
  Index t_int_1 = 0;
  Index t_int_2 = 0;
  bool share_indices = true;
  double jitter_sigma = 0.03;
  double resize_low = 0.5;
  double resize_high = 1.0;
  double mask_ratio = 0.3;

  ResamplingConfig resampling_for(Index t) const;
};

// Positive pair of views for one group, using the configured strategy. The
// baselines transform each member independently for each view.
std::pair<std::vector<TimeSeries>, std::vector<TimeSeries>> make_views(
    std::span<const TimeSeries> group, const AugmentConfig& cfg, RngStream& rng);

}  // namespace tscl::augment
