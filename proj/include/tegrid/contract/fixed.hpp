#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <stdexcept>

namespace tegrid::contract {

using int128 = __int128;
using uint128 = unsigned __int128;

/// Decimal fixed-point number: value = raw * 1e-9. All contract arithmetic
/// runs on the integer mantissa so every replaying node computes the same
/// bits.
struct Fixed {
  static constexpr std::int64_t kScale = 1'000'000'000;

  std::int64_t raw = 0;

  /// Round-half-even conversion; throws std::range_error on overflow or NaN.
  static Fixed from_double(double v) {
    const double scaled = v * static_cast<double>(kScale);
    if (!std::isfinite(scaled) || std::abs(scaled) >= 9.2e18) {
      throw std::range_error("value outside fixed-point range");
    }
    // nearbyint honours the default FE_TONEAREST mode: ties go to even.
    return Fixed{static_cast<std::int64_t>(std::nearbyint(scaled))};
  }
  static constexpr Fixed from_raw(std::int64_t r) { return Fixed{r}; }

  double to_double() const { return static_cast<double>(raw) / static_cast<double>(kScale); }

  friend constexpr auto operator<=>(Fixed, Fixed) = default;
};

/// num/den rounded to nearest, ties to even. den must be non-zero.
constexpr std::int64_t div_round_half_even(int128 num, int128 den) {
  if (den < 0) {
    num = -num;
    den = -den;
  }
  int128 q = num / den;
  int128 r = num % den;
  // Make the remainder non-negative so q is the floor.
  if (r < 0) {
    q -= 1;
    r += den;
  }
  const int128 twice = 2 * r;
  if (twice > den || (twice == den && (q % 2) != 0)) q += 1;
  return static_cast<std::int64_t>(q);
}

/// floor(sqrt(v)) by Newton iteration on integers.
constexpr std::uint64_t isqrt(uint128 v) {
  if (v == 0) return 0;
  uint128 x = v;
  uint128 y = (x + 1) / 2;
  while (y < x) {
    x = y;
    y = (x + v / x) / 2;
  }
  return static_cast<std::uint64_t>(x);
}

}  // namespace tegrid::contract
