#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tscl/rng.hpp"

namespace tscl {

// T timesteps x C channels, row-major so that one timestep is contiguous.
using SeriesMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr Eigen::Index kMinTimesteps = 8;

// One multichannel series on the implicit timestamp grid {1..T}.
class TimeSeries {
 public:
  TimeSeries() = default;
  explicit TimeSeries(SeriesMatrix values);

  Eigen::Index length() const { return values_.rows(); }
  Eigen::Index channels() const { return values_.cols(); }
  const SeriesMatrix& values() const { return values_; }
  double operator()(Eigen::Index t, Eigen::Index c) const { return values_(t, c); }

  bool operator==(const TimeSeries& other) const;

 private:
  SeriesMatrix values_;
};

// A set of aligned series sharing one label (e.g. the pixels of a parcel).
struct Sample {
  std::vector<TimeSeries> series;
  std::optional<std::uint32_t> label;

  bool operator==(const Sample& other) const = default;
};

enum class SplitTag { kUnlabeled, kTrain, kVal, kTest };

std::string to_string(SplitTag tag);
SplitTag parse_split_tag(const std::string& name);

struct DatasetShape {
  std::size_t n = 0;
  std::size_t n_ts = 0;
  std::size_t t = 0;
  std::size_t c = 0;

  bool operator==(const DatasetShape&) const = default;
};

std::string to_string(const DatasetShape& shape);

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<Sample> samples, std::uint32_t n_classes, SplitTag split);

  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  std::size_t size() const { return samples_.size(); }
  std::uint32_t n_classes() const { return n_classes_; }
  SplitTag split() const { return split_; }
  bool has_labels() const;
  DatasetShape shape() const;
  std::vector<std::uint32_t> labels() const;

  // Throws ValidationError when invariants do not hold.
  void validate() const;

  // Subset by sample index, optionally retagged.
  Dataset subset(const std::vector<std::size_t>& indices, SplitTag split) const;

  // Content equality; the split tag is not part of the on-disk format.
  bool operator==(const Dataset& other) const {
    return n_classes_ == other.n_classes_ && samples_ == other.samples_;
  }

 private:
  std::vector<Sample> samples_;
  std::uint32_t n_classes_ = 0;
  SplitTag split_ = SplitTag::kUnlabeled;
};

// Binary container: magic "TSCL", version 1, little-endian header, f32 payload.
inline constexpr std::uint32_t kDatasetVersion = 1;

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const Dataset& ds);
Dataset decode_dataset(const std::vector<std::uint8_t>& bytes);

// g distinct series of s, uniformly without replacement, in draw order.
std::vector<TimeSeries> select_group(const Sample& s, std::size_t g, RngStream& rng);
std::vector<std::size_t> select_group_indices(std::size_t n_ts, std::size_t g, RngStream& rng);

}  // namespace tscl
