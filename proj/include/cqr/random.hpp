#pragma once

#include <array>
#include <cstdint>

#include "cqr/types.hpp"

namespace cqr {

// Purpose tags used when deriving child streams. Values are part of the
// reproducibility contract; never renumber.
enum class StreamTag : std::uint64_t {
  replication = 1,
  data = 2,
  bootstrap = 3,
  jackknife = 4,
  rc_interval = 5,
  scheme = 6,
};

/// Identifies an independent random stream. Keys form a tree: a master seed
/// is refined by (tag, index) pairs, so every consumer owns a stream that
/// does not depend on execution order.
class RngKey {
 public:
  constexpr RngKey() = default;
  explicit constexpr RngKey(std::uint64_t seed) : value_(seed) {}

  RngKey child(std::uint64_t index) const;
  RngKey child(StreamTag tag, std::uint64_t index = 0) const;

  std::uint64_t value() const noexcept { return value_; }

 private:
  std::uint64_t value_ = 0;
};

/// Philox4x32-10 block function.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

/// Counter-based generator: output block k is philox(k, key).
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(RngKey key);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() { return next_u64(); }

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1).
  double uniform_open();
  double normal();
  /// Student t with three degrees of freedom.
  double student_t3();
  /// Uniform integer in [0, n) by Lemire's multiply-and-reject.
  Index uniform_index(Index n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 4;
};

}  // namespace cqr
