#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "tscl/data.hpp"
#include "tscl/error.hpp"
#include "tscl/rng.hpp"

using namespace tscl;

TEST_CASE("rng streams replay and separate") {
  RngStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  std::vector<std::uint64_t> va, vb, vc, vd;
  for (int i = 0; i < 16; ++i) {
    va.push_back(a.next_u64());
    vb.push_back(b.next_u64());
    vc.push_back(c.next_u64());
    vd.push_back(d.next_u64());
  }
  CHECK(va == vb);
  CHECK(va != vc);
  CHECK(va != vd);

  const RngStream root(1, 0);
  RngStream s1 = root.substream(StreamPurpose::kAugment, 3, 9);
  RngStream s2 = root.substream(StreamPurpose::kAugment, 3, 9);
  RngStream s3 = root.substream(StreamPurpose::kGroupSelect, 3, 9);
  CHECK(s1.next_u64() == s2.next_u64());
  CHECK(s1.next_u64() != s3.next_u64());
}

TEST_CASE("rng uniform and index ranges") {
  RngStream r(5, 1);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  // Mean of U(0,1): sd of the mean is sqrt(1/12/n).
  CHECK(std::abs(sum / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
  for (int i = 0; i < 1000; ++i) CHECK(r.index(7) < 7);

  double m = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    m += z;
    sq += z * z;
  }
  m /= n;
  CHECK(std::abs(m) < 4.0 / std::sqrt(n));
  CHECK(std::abs(sq / n - 1.0) < 0.03);
}

TEST_CASE("choose returns distinct values in range") {
  RngStream r(9, 2);
  for (int rep = 0; rep < 200; ++rep) {
    const auto v = r.choose(20, 7);
    REQUIRE(v.size() == 7);
    std::set<std::size_t> s(v.begin(), v.end());
    CHECK(s.size() == 7);
    CHECK(*s.rbegin() < 20);
  }
  auto p = r.permutation(10);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(p[i] == i);
}

TEST_CASE("select_group exhaustive case returns a permutation") {
  RngStream rng(3, 3);
  Sample s;
  for (int i = 0; i < 4; ++i)
    s.series.emplace_back(SeriesMatrix::Constant(8, 1, static_cast<double>(i)));
  const auto g = select_group(s, 4, rng);
  REQUIRE(g.size() == 4);
  std::set<double> seen;
  for (const auto& ts : g) seen.insert(ts(0, 0));
  CHECK(seen == std::set<double>{0, 1, 2, 3});
}

TEST_CASE("select_group draws distinct members and rejects g > N_ts") {
  RngStream rng(3, 4);
  for (int rep = 0; rep < 100; ++rep) {
    const auto idx = select_group_indices(100, 4, rng);
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 4);
  }
  CHECK_THROWS_AS(select_group_indices(3, 4, rng), ArgumentError);
  CHECK_THROWS_AS(select_group_indices(3, 0, rng), ArgumentError);
}

TEST_CASE("select_group is uniform over members") {
  // N_ts = 10, g = 2: each index is included with probability 0.2.
  RngStream rng(11, 0);
  const int draws = 100000;
  std::vector<int> counts(10, 0);
  for (int i = 0; i < draws; ++i)
    for (auto k : select_group_indices(10, 2, rng)) ++counts[k];
  const double p = 0.2;
  const double sd = std::sqrt(draws * p * (1 - p));
  double chi2 = 0.0;
  for (int c : counts) {
    CHECK(std::abs(c - draws * p) < 3.0 * sd + 1.0);
    chi2 += (c - draws * p) * (c - draws * p) / (draws * p);
  }
  // 9 degrees of freedom; 99.9th percentile is 27.88.
  CHECK(chi2 < 27.88);
}

TEST_CASE("dataset encode/decode round trip is bit exact") {
  RngStream rng(21, 0);
  for (int rep = 0; rep < 100; ++rep) {
    const Dataset ds = testing::random_dataset(rng, rep % 2 == 0);
    const auto bytes = encode_dataset(ds);
    const Dataset back = decode_dataset(bytes);
    CHECK(back == ds);
    CHECK(encode_dataset(back) == bytes);
  }
}

TEST_CASE("dataset file round trip and header layout") {
  RngStream rng(22, 0);
  const Dataset ds = testing::random_dataset(rng, false);
  const auto path = std::filesystem::temp_directory_path() / "tscl_unit_roundtrip.tscl";
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);
  CHECK(back == ds);
  CHECK(back.split() == SplitTag::kUnlabeled);
  const auto bytes = encode_dataset(ds);
  CHECK(bytes[28] == 0);  // has_labels
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TSCL");
  const auto sh = ds.shape();
  CHECK(bytes.size() == 32 + sh.n * sh.n_ts * sh.t * sh.c * 4);
  std::filesystem::remove(path);
}

TEST_CASE("two-sample one-series dataset decodes with the encoded shape") {
  std::vector<Sample> samples(2);
  for (std::uint32_t i = 0; i < 2; ++i) {
    samples[i].series.emplace_back(SeriesMatrix::Constant(8, 1, 0.5 * i));
    samples[i].label = i;
  }
  const Dataset back = decode_dataset(encode_dataset(Dataset(samples, 2, SplitTag::kTrain)));
  CHECK(back.shape() == DatasetShape{2, 1, 8, 1});
  CHECK(back.labels() == std::vector<std::uint32_t>{0, 1});
}

TEST_CASE("dataset decode errors") {
  RngStream rng(23, 0);
  const auto bytes = encode_dataset(testing::random_dataset(rng, true));
  auto bad = bytes;
  bad[0] = 'X';
  bad[1] = 'X';
  bad[2] = 'X';
  bad[3] = 'X';
  CHECK_THROWS_AS(decode_dataset(bad), FormatError);

  auto version = bytes;
  version[4] = 2;
  CHECK_THROWS_AS(decode_dataset(version), FormatError);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(decode_dataset(truncated), CorruptionError);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_dataset(trailing), CorruptionError);

  // Last label set to n_classes.
  auto label = bytes;
  const std::uint32_t k = label[24];
  label[label.size() - 4] = static_cast<std::uint8_t>(k);
  CHECK_THROWS_AS(decode_dataset(label), ValidationError);

  CHECK_THROWS_AS(load_dataset("/nonexistent/dir/x.tscl"), IoError);
}

TEST_CASE("dataset invariants") {
  CHECK_THROWS_AS(Dataset({}, 2, SplitTag::kUnlabeled), ValidationError);
  Sample a, b;
  a.series.emplace_back(SeriesMatrix::Zero(8, 2));
  b.series.emplace_back(SeriesMatrix::Zero(9, 2));
  CHECK_THROWS_AS(Dataset({a, b}, 2, SplitTag::kUnlabeled), ValidationError);
  CHECK_THROWS_AS(Dataset({a}, 2, SplitTag::kTrain), ValidationError);
  a.label = 5;
  CHECK_THROWS_AS(Dataset({a}, 2, SplitTag::kTrain), ValidationError);
  CHECK_THROWS_AS(TimeSeries(SeriesMatrix::Zero(7, 1)), ArgumentError);
  SeriesMatrix nan = SeriesMatrix::Zero(8, 1);
  nan(3, 0) = std::nan("");
  CHECK_THROWS_AS((void)TimeSeries(nan), ValidationError);
}

TEST_CASE("subset to unlabeled strips labels") {
  RngStream rng(24, 0);
  const Dataset ds = testing::random_dataset(rng, true);
  const Dataset u = ds.subset({0}, SplitTag::kUnlabeled);
  CHECK_FALSE(u.has_labels());
  CHECK(encode_dataset(u)[28] == 0);
}
