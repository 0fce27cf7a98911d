#pragma once

// Counter-based splittable RNG (Philox 4x32-10).  A stream is fully
// determined by (seed, stream_id): replicates, datapoints and training
// phases each get their own stream id and can run in parallel while
// reproducing the single-threaded draw sequence exactly.

#include <array>
#include <cstdint>

#include "amci/math.hpp"

namespace amci {

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::array<std::uint32_t, 2>& key) {
  constexpr std::uint64_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
  const std::uint64_t p0 = m0 * ctr[0];
  const std::uint64_t p1 = m1 * ctr[2];
  const std::array<std::uint32_t, 4> out = {
      static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
      static_cast<std::uint32_t>(p1),
      static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
      static_cast<std::uint32_t>(p0)};
  ctr = out;
  key[0] += 0x9E3779B9u;
  key[1] += 0xBB67AE85u;
}

inline std::array<std::uint32_t, 4> philox10(std::array<std::uint32_t, 4> ctr,
                                             std::array<std::uint32_t, 2> key) {
  for (int i = 0; i < 10; ++i) philox_round(ctr, key);
  return ctr;
}

}  // namespace detail

class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_(stream_id) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  std::uint64_t next_u64() {
    if (buffered_ == 0) refill();
    return buf_[--buffered_];
  }

  // Uniform on the open interval (0, 1); never returns an endpoint, so
  // log(u) and inverse-CDF transforms are always finite.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal by inverse CDF; one uniform consumed per draw.
  double normal() { return normal_quantile(uniform()); }

  // Index in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Derived stream with an unrelated id; used when a consumer needs an
  // independent child sequence without coordinating ids globally.
  RngStream fork(std::uint64_t tag) const {
    std::uint64_t z = stream_ ^ (0x9E3779B97F4A7C15ull + tag);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    z ^= z >> 31;
    return RngStream(seed_, z);
  }

 private:
  void refill() {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(pos_), static_cast<std::uint32_t>(pos_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    const std::array<std::uint32_t, 2> key = {
        static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    const std::array<std::uint32_t, 4> out = detail::philox10(ctr, key);
    buf_[0] = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    buf_[1] = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    buffered_ = 2;
    ++pos_;
  }

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t pos_ = 0;
  std::uint64_t buf_[2] = {0, 0};
  int buffered_ = 0;
};

// Structured stream ids for the bench harness: every (purpose, datapoint,
// grid index, replicate, estimator) tuple maps to a distinct id so results
// are independent of scheduling order.
enum class StreamPurpose : std::uint64_t {
  datapoints = 1,
  truth = 2,
  training = 3,
  replicate = 4,
  validation = 5,
};

inline std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t a = 0,
                               std::uint64_t b = 0, std::uint64_t c = 0,
                               std::uint64_t d = 0) {
  return (static_cast<std::uint64_t>(purpose) << 56) | ((a & 0xFFFF) << 40) |
         ((b & 0xFF) << 32) | ((c & 0xFFFFFF) << 8) | (d & 0xFF);
}

}  // namespace amci
