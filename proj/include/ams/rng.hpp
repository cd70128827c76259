#pragma once

// Counter-based random streams.
//
// Every random draw in a splitting run comes from a Philox4x32-10 stream
// addressed by (seed, stage, role, index).  Streams share no state, so the
// draws a particle sees do not depend on how particles are distributed over
// threads.

#include <array>
#include <cstdint>
#include <limits>

namespace ams {

/// Philox4x32 with 10 rounds (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3").  Satisfies UniformRandomBitGenerator with 64-bit output.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32() = default;
  Philox4x32(Key key, Counter counter) : key_(key), counter_(counter) {}

  /// Raw block function: encrypts `counter` under `key`.
  static Counter block(Counter counter, Key key) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform in the open interval (0,1) with 53 bits of resolution.
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  const Counter& counter() const noexcept { return counter_; }

 private:
  Key key_{};
  Counter counter_{};
  Counter buffer_{};
  int used_ = 4;  // 64-bit words consumed from buffer_ (0, 1 or 2 when valid)
};

/// What a stream is used for; part of the counter so draws for different
/// purposes at the same (stage, index) never overlap.
enum class StreamRole : std::uint32_t {
  Prior = 1,
  Explore = 2,
  Resample = 3,
  Tag = 4,
  Misc = 5,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Seed for replication `j` of an experiment; a pure function of both.
std::uint64_t replication_seed(std::uint64_t master_seed, std::uint64_t replication) noexcept;

/// Hands out independent streams keyed by a 64-bit seed.
class StreamFactory {
 public:
  explicit StreamFactory(std::uint64_t seed) noexcept;

  Philox4x32 stream(std::uint32_t stage, StreamRole role, std::uint32_t index) const noexcept {
    return Philox4x32(key_, {0u, index, stage, static_cast<std::uint32_t>(role)});
  }

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  Philox4x32::Key key_;
};

}  // namespace ams
