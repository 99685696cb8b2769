#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lichw {

using int128 = __int128;

/// Binary fixed-point layout: value = raw * 2^-frac_bits.
///
/// Conversions round half away from zero. With `saturate` set, out-of-range
/// results clamp to the representable range; otherwise they wrap two's-complement.
struct FixedPointFormat {
  int total_bits = 32;
  int frac_bits = 24;
  bool is_signed = true;
  bool saturate = true;

  /// total_bits in {8, 16, 32} and 0 <= frac_bits < total_bits.
  void validate() const;

  std::int64_t max_raw() const noexcept;
  std::int64_t min_raw() const noexcept;
  double resolution() const noexcept;
  double max_value() const noexcept;
  double min_value() const noexcept;
  std::string str() const;

  static FixedPointFormat signed_q(int total, int frac) { return {total, frac, true, true}; }
  static FixedPointFormat unsigned_q(int total, int frac) { return {total, frac, false, true}; }

  friend bool operator==(const FixedPointFormat&, const FixedPointFormat&) = default;
};

/// Shifts `v` right by `shift` bits (left when negative), rounding half away from zero.
int128 round_shift(int128 v, int shift);

/// Brings a wide intermediate into `fmt`; counts a saturation (or wrap) in `*overflows`.
std::int64_t fit_to_format(int128 raw, const FixedPointFormat& fmt, std::uint64_t* overflows = nullptr);

/// Requantizes a raw value with `from_frac` fraction bits into `fmt`.
std::int64_t requantize(int128 raw, int from_frac, const FixedPointFormat& fmt,
                        std::uint64_t* overflows = nullptr);

std::int64_t to_fixed(double value, const FixedPointFormat& fmt, std::uint64_t* overflows = nullptr);
double from_fixed(std::int64_t raw, const FixedPointFormat& fmt) noexcept;

/// A raw value tagged with its format.
struct Fixed {
  std::int64_t raw = 0;
  FixedPointFormat format;

  double value() const noexcept { return from_fixed(raw, format); }
  static Fixed from_double(double v, const FixedPointFormat& fmt) { return {to_fixed(v, fmt), fmt}; }
};

/// Piecewise-linear square root over [lo, hi), uniform segments.
///
/// Segment k covers raw inputs [starts[k], starts[k+1]) and evaluates
/// intercepts[k] + slopes[k] * (m - starts[k]). Intercepts are sqrt at the
/// segment start; slopes are floored so the approximation never overshoots
/// the next segment's start value, which keeps it monotone.
struct SqrtLut {
  double lo = 1.0;
  double hi = 4.0;
  int segments = 64;
  FixedPointFormat format;
  std::vector<std::int64_t> starts;      // segments + 1 entries, last is the domain end
  std::vector<std::int64_t> slopes;      // raw, format.frac_bits fraction bits
  std::vector<std::int64_t> intercepts;  // raw, format.frac_bits fraction bits
  /// Largest |lut(m) - sqrt(m)| over every representable m in the domain.
  double max_abs_error = 0.0;

  /// Evaluates at a raw input in `format`; DomainError outside [lo, hi).
  std::int64_t eval_raw(std::int64_t m_raw) const;
  double eval(double m) const;
};

SqrtLut build_sqrt_lut(double lo, double hi, int segments, const FixedPointFormat& format);

/// Square root of a non-negative fixed-point value through a [1, 4) LUT.
///
/// The input is normalised by an even power of two into [1, 4), looked up,
/// and shifted back by half that power.
std::int64_t fixed_sqrt(const Fixed& a, const SqrtLut& lut, const FixedPointFormat& out,
                        std::uint64_t* overflows = nullptr);

/// Number of seed entries covering the mantissa octave [1, 2).
inline constexpr int kReciprocalSeedEntries = 64;
inline constexpr int kReciprocalNewtonSteps = 2;

/// 1/d: mantissa seed from a 64-entry table over [1, 2) followed by two
/// Newton-Raphson steps r <- r (2 - d r), carried out with 8 guard bits
/// beyond `out`. DomainError when d <= 0.
Fixed reciprocal_fixed(const Fixed& d, const FixedPointFormat& out, std::uint64_t* overflows = nullptr);
Fixed reciprocal_fixed(const Fixed& d);

/// Max relative error of reciprocal_fixed over every representable d in [1, 2) of `fmt`.
double reciprocal_octave_error(const FixedPointFormat& fmt);

}  // namespace lichw
