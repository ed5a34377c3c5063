#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace censura {

/// SplitMix64 finaliser. Bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Derives an independent child seed from a parent seed and a sequence of
/// integer keys. Used to give every ensemble member, repeat and sampling pass
/// its own stream without any shared generator state.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> keys) noexcept;

/// Derives a child seed from a string tag (FNV-1a hashed) and an index.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0) noexcept;

/// Counter-based generator: the i-th draw is a pure function of (seed, i), so
/// sequences are identical on every platform and compiler. Normal variates
/// use Box-Muller on consecutive uniform pairs.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept : seed_(mix64(seed ^ 0x6a09e667f3bcc909ULL)) {}

  std::uint64_t next_u64() noexcept;
  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace censura
