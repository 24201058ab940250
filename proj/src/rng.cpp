#include "tscl/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "tscl/error.hpp"

namespace tscl {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_id(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x5153434c5453ULL;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(splitmix64(splitmix64(seed) ^ stream)) {}

RngStream RngStream::substream(std::uint64_t child) const {
  return RngStream(seed_, stream_id({stream_, child}));
}

RngStream RngStream::substream(StreamPurpose purpose, std::uint64_t a, std::uint64_t b) const {
  return RngStream(seed_, stream_id({stream_, static_cast<std::uint64_t>(purpose), a, b}));
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::size_t RngStream::index(std::size_t n) {
  TSCL_REQUIRE(n > 0, ArgumentError, "RngStream::index: empty range");
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return static_cast<std::size_t>(v % range);
}

double RngStream::normal() {
  // Box-Muller, one output per call.
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<std::size_t> RngStream::choose(std::size_t n, std::size_t k) {
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  return choose_from(pool, k);
}

std::vector<std::size_t> RngStream::choose_from(const std::vector<std::size_t>& pool,
                                                std::size_t k) {
  TSCL_REQUIRE(k <= pool.size(), ArgumentError, "RngStream::choose: k exceeds pool size");
  std::vector<std::size_t> work = pool;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + index(work.size() - i);
    std::swap(work[i], work[j]);
  }
  work.resize(k);
  return work;
}

}  // namespace tscl
