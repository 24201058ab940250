#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace tscl {

std::uint64_t splitmix64(std::uint64_t x);

// Hash a list of integers into one stream id, e.g. {purpose, epoch, sample}.
std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts);

// Purposes used to derive independent substreams.
enum class StreamPurpose : std::uint64_t {
  kGroupSelect = 1,
  kAugment = 2,
  kBatchOrder = 3,
  kInit = 4,
  kDropout = 5,
  kSynth = 6,
  kSplit = 7,
  kSweep = 8,
  kProbe = 9,
};

// Deterministic random stream keyed by (seed, stream id). The engine is
// std::mt19937_64, whose output is fully specified by the standard; all
// conversions to uniform / normal / index draws are done here rather than
// with std distributions so that draws do not depend on the standard library.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  // Independent child stream; same (seed, stream, child) gives same child.
  RngStream substream(std::uint64_t child) const;
  RngStream substream(StreamPurpose purpose, std::uint64_t a = 0, std::uint64_t b = 0) const;

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 bits.
  double uniform();
  double uniform(double low, double high) { return low + (high - low) * uniform(); }
  // Uniform integer in [0, n), unbiased.
  std::size_t index(std::size_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  // k distinct values of [0, n) in draw order (partial Fisher-Yates).
  std::vector<std::size_t> choose(std::size_t n, std::size_t k);
  // k distinct elements of pool in draw order.
  std::vector<std::size_t> choose_from(const std::vector<std::size_t>& pool, std::size_t k);
  std::vector<std::size_t> permutation(std::size_t n) { return choose(n, n); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace tscl
