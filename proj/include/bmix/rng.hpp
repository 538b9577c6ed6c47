#pragma once

// Counter-based random streams.
//
// Every replicate of an experiment draws from its own Philox4x32-10 stream,
// keyed by the 64-bit master seed with the replicate index in the upper half
// of the counter. Results therefore do not depend on how replicates are
// scheduled across worker threads.
//
// Reference: Salmon et al., "Parallel random numbers: as easy as 1, 2, 3" (SC11).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace bmix {

class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Block = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  Philox4x32() : Philox4x32(0, 0) {}

  // Stream `stream` of generator `seed`.
  Philox4x32(std::uint64_t seed, std::uint64_t stream) {
    key_ = {static_cast<std::uint32_t>(seed),
            static_cast<std::uint32_t>(seed >> 32)};
    counter_ = {0, 0, static_cast<std::uint32_t>(stream),
                static_cast<std::uint32_t>(stream >> 32)};
  }

  // The bare bijection, ten rounds.
  static Block bijection(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
             static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
             static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

  result_type operator()() {
    if (index_ == 4) refill();
    return buffer_[index_++];
  }

  // Uniform on the open interval (0, 1) with 53 random bits.
  double uniform() {
    const std::uint64_t hi = (*this)() >> 6;  // 26 bits
    const std::uint64_t lo = (*this)() >> 5;  // 27 bits
    return (static_cast<double>((hi << 27) | lo) + 0.5) * 0x1.0p-53;
  }

  // Standard normal, Marsaglia polar method with the spare variate cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double scale = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * scale;
    has_spare_ = true;
    return u * scale;
  }

  double exponential() { return -std::log(uniform()); }

  void discard(std::uint64_t z) {
    while (z > 0 && index_ < 4) {
      ++index_;
      --z;
    }
    if (z == 0) return;
    advance_counter(z / 4);
    refill();
    index_ = static_cast<int>(z % 4);
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57;
  static constexpr std::uint32_t kW0 = 0x9E3779B9;
  static constexpr std::uint32_t kW1 = 0xBB67AE85;

  void advance_counter(std::uint64_t blocks) {
    std::uint64_t low = (std::uint64_t{counter_[1]} << 32) | counter_[0];
    low += blocks;
    counter_[0] = static_cast<std::uint32_t>(low);
    counter_[1] = static_cast<std::uint32_t>(low >> 32);
  }

  void refill() {
    buffer_ = bijection(counter_, key_);
    advance_counter(1);
    index_ = 0;
  }

  Key key_{};
  Block counter_{};
  Block buffer_{};
  int index_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

using Rng = Philox4x32;

}  // namespace bmix
