#include "tscl/data.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tscl/error.hpp"

namespace tscl {

TimeSeries::TimeSeries(SeriesMatrix values) : values_(std::move(values)) {
  if (values_.rows() < kMinTimesteps || values_.cols() < 1) {
    std::ostringstream os;
    os << "TimeSeries: need T >= " << kMinTimesteps << " and C >= 1, got " << values_.rows()
       << " x " << values_.cols();
    throw ArgumentError(os.str());
  }
  if (!values_.allFinite()) throw ValidationError("TimeSeries: non-finite value");
}

bool TimeSeries::operator==(const TimeSeries& other) const {
  return values_.rows() == other.values_.rows() && values_.cols() == other.values_.cols() &&
         values_ == other.values_;
}

std::string to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::kUnlabeled: return "unlabeled";
    case SplitTag::kTrain: return "train";
    case SplitTag::kVal: return "val";
    case SplitTag::kTest: return "test";
  }
  return "unknown";
}

SplitTag parse_split_tag(const std::string& name) {
  if (name == "unlabeled") return SplitTag::kUnlabeled;
  if (name == "train") return SplitTag::kTrain;
  if (name == "val") return SplitTag::kVal;
  if (name == "test") return SplitTag::kTest;
  throw ArgumentError("unknown split tag '" + name + "'");
}

std::string to_string(const DatasetShape& shape) {
  std::ostringstream os;
  os << "(N=" << shape.n << ", N_ts=" << shape.n_ts << ", T=" << shape.t << ", C=" << shape.c
     << ")";
  return os.str();
}

Dataset::Dataset(std::vector<Sample> samples, std::uint32_t n_classes, SplitTag split)
    : samples_(std::move(samples)), n_classes_(n_classes), split_(split) {
  validate();
}

bool Dataset::has_labels() const {
  if (samples_.empty()) return false;
  for (const auto& s : samples_)
    if (!s.label) return false;
  return true;
}

DatasetShape Dataset::shape() const {
  DatasetShape sh;
  sh.n = samples_.size();
  if (!samples_.empty() && !samples_[0].series.empty()) {
    sh.n_ts = samples_[0].series.size();
    sh.t = static_cast<std::size_t>(samples_[0].series[0].length());
    sh.c = static_cast<std::size_t>(samples_[0].series[0].channels());
  }
  return sh;
}

std::vector<std::uint32_t> Dataset::labels() const {
  std::vector<std::uint32_t> out;
  out.reserve(samples_.size());
  for (const auto& s : samples_) {
    TSCL_REQUIRE(s.label.has_value(), ValidationError, "Dataset::labels: unlabeled sample");
    out.push_back(*s.label);
  }
  return out;
}

void Dataset::validate() const {
  TSCL_REQUIRE(!samples_.empty(), ValidationError, "Dataset: no samples");
  const auto sh = shape();
  TSCL_REQUIRE(sh.n_ts >= 1, ValidationError, "Dataset: sample without series");
  bool any_label = false;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    const auto& s = samples_[i];
    if (s.series.size() != sh.n_ts)
      throw ValidationError("Dataset: sample " + std::to_string(i) + " has " +
                            std::to_string(s.series.size()) + " series, expected " +
                            std::to_string(sh.n_ts));
    for (const auto& ts : s.series) {
      if (static_cast<std::size_t>(ts.length()) != sh.t ||
          static_cast<std::size_t>(ts.channels()) != sh.c)
        throw ValidationError("Dataset: sample " + std::to_string(i) + " has mismatched (T, C)");
    }
    if (s.label) {
      any_label = true;
      if (*s.label >= n_classes_)
        throw ValidationError("Dataset: label " + std::to_string(*s.label) + " of sample " +
                              std::to_string(i) + " outside [0, " + std::to_string(n_classes_) +
                              ")");
    }
  }
  if (split_ != SplitTag::kUnlabeled)
    TSCL_REQUIRE(has_labels(), ValidationError,
                 "Dataset: split '" + to_string(split_) + "' requires labels on every sample");
  else if (any_label)
    TSCL_REQUIRE(has_labels(), ValidationError, "Dataset: labels must be all-or-none");
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices, SplitTag split) const {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    TSCL_REQUIRE(i < samples_.size(), ArgumentError, "Dataset::subset: index out of range");
    out.push_back(samples_[i]);
  }
  if (split == SplitTag::kUnlabeled)
    for (auto& s : out) s.label.reset();
  return Dataset(std::move(out), n_classes_, split);
}

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', 'L'};
constexpr std::size_t kHeaderBytes = 4 + 4 * 6 + 4;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  TSCL_REQUIRE(v <= 0xffffffffULL, ValidationError, std::string("Dataset: ") + what + " too large");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  ds.validate();
  const auto sh = ds.shape();
  const bool labeled = ds.has_labels();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + sh.n * sh.n_ts * sh.t * sh.c * 4 + (labeled ? sh.n * 4 : 0));
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, kDatasetVersion);
  put_u32(out, checked_u32(sh.n, "N"));
  put_u32(out, checked_u32(sh.n_ts, "N_ts"));
  put_u32(out, checked_u32(sh.t, "T"));
  put_u32(out, checked_u32(sh.c, "C"));
  put_u32(out, ds.n_classes());
  out.push_back(labeled ? 1 : 0);
  out.push_back(0);
  out.push_back(0);
  out.push_back(0);
  for (const auto& s : ds.samples())
    for (const auto& ts : s.series)
      for (Eigen::Index t = 0; t < ts.length(); ++t)
        for (Eigen::Index c = 0; c < ts.channels(); ++c)
          put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(ts(t, c))));
  if (labeled)
    for (const auto& s : ds.samples()) put_u32(out, *s.label);
  return out;
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("dataset: bad magic (expected \"TSCL\")");
  TSCL_REQUIRE(bytes.size() >= kHeaderBytes, CorruptionError, "dataset: truncated header");
  const std::uint8_t* p = bytes.data();
  const std::uint32_t version = get_u32(p + 4);
  if (version != kDatasetVersion)
    throw FormatError("dataset: unsupported version " + std::to_string(version));
  const std::size_t n = get_u32(p + 8), n_ts = get_u32(p + 12), t = get_u32(p + 16),
                    c = get_u32(p + 20);
  const std::uint32_t n_classes = get_u32(p + 24);
  const std::uint8_t has_labels = p[28];
  if (has_labels > 1) throw FormatError("dataset: invalid has_labels flag");
  const std::size_t values = n * n_ts * t * c;
  const std::size_t expected = kHeaderBytes + values * 4 + (has_labels ? n * 4 : 0);
  if (bytes.size() < expected)
    throw CorruptionError("dataset: truncated payload (" + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(expected) + ")");
  if (bytes.size() > expected) throw CorruptionError("dataset: trailing bytes after payload");

  std::vector<Sample> samples(n);
  const std::uint8_t* v = p + kHeaderBytes;
  for (auto& s : samples) {
    s.series.reserve(n_ts);
    for (std::size_t k = 0; k < n_ts; ++k) {
      SeriesMatrix m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c));
      for (std::size_t i = 0; i < t * c; ++i, v += 4)
        m.data()[i] = static_cast<double>(std::bit_cast<float>(get_u32(v)));
      s.series.emplace_back(std::move(m));
    }
  }
  if (has_labels)
    for (auto& s : samples) {
      s.label = get_u32(v);
      v += 4;
    }
  return Dataset(std::move(samples), n_classes,
                 has_labels ? SplitTag::kTrain : SplitTag::kUnlabeled);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_dataset(bytes);
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  const auto bytes = encode_dataset(ds);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<std::size_t> select_group_indices(std::size_t n_ts, std::size_t g, RngStream& rng) {
  if (g < 1 || g > n_ts)
    throw ArgumentError("select_group: need 1 <= g <= N_ts, got g=" + std::to_string(g) +
                        ", N_ts=" + std::to_string(n_ts));
  return rng.choose(n_ts, g);
}

std::vector<TimeSeries> select_group(const Sample& s, std::size_t g, RngStream& rng) {
  std::vector<TimeSeries> out;
  for (auto i : select_group_indices(s.series.size(), g, rng)) out.push_back(s.series[i]);
  return out;
}

}  // namespace tscl
