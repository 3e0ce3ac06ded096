#pragma once

#include <array>
#include <cstdint>

namespace inpaint {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// Constants: multipliers 0xD2511F53, 0xCD9E8D57; Weyl key increments
/// 0x9E3779B9, 0xBB67AE85; ten rounds. The 64-bit seed is the key, the
/// 128-bit counter is (block index lo, block index hi, stream lo, stream hi).
/// Every value is a pure function of (seed, stream, draw index), so byte
/// streams are reproducible across platforms and languages.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

class Rng {
public:
  Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal via Box-Muller; the sine branch is cached.
  double normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Derives a child stream id from a parent id and a tag, e.g. (run seed, step).
std::uint64_t mix_stream(std::uint64_t a, std::uint64_t b);

} // namespace inpaint
