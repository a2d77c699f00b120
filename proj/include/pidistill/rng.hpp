#pragma once

#include <cstdint>
#include <string_view>

namespace pidistill {

/// Counter-based generator: the n-th draw of a stream is a pure function of
/// (key, n), so streams are cheap to split and copy.
///
/// Draw order is part of the on-disk reproducibility contract:
///   next_u64   one counter step
///   uniform    one step, top 53 bits scaled to [0, 1)
///   normal     two uniforms (Box-Muller, cosine branch only)
///   below(n)   one or more steps (Lemire multiply with rejection)
class Rng {
 public:
  explicit Rng(std::uint64_t key = 0) : key_(key) {}

  /// Independent stream for a named purpose under a run seed, e.g.
  /// `Rng::stream(seed, "dropout")`. An optional index separates epochs.
  static Rng stream(std::uint64_t seed, std::string_view purpose, std::uint64_t index = 0);

  std::uint64_t next_u64();
  double uniform();
  double normal();
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z);

}  // namespace pidistill
