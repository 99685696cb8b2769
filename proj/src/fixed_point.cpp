#include "lichw/fixed_point.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "lichw/error.hpp"

namespace lichw {

void FixedPointFormat::validate() const {
  if (total_bits != 8 && total_bits != 16 && total_bits != 32) {
    throw ParameterError("fixed-point total_bits must be 8, 16 or 32, got " + std::to_string(total_bits));
  }
  if (frac_bits < 0 || frac_bits >= total_bits) {
    throw ParameterError("fixed-point frac_bits " + std::to_string(frac_bits) + " outside [0, " +
                         std::to_string(total_bits) + ")");
  }
}

std::int64_t FixedPointFormat::max_raw() const noexcept {
  return is_signed ? (std::int64_t{1} << (total_bits - 1)) - 1 : (std::int64_t{1} << total_bits) - 1;
}

std::int64_t FixedPointFormat::min_raw() const noexcept {
  return is_signed ? -(std::int64_t{1} << (total_bits - 1)) : 0;
}

double FixedPointFormat::resolution() const noexcept { return std::ldexp(1.0, -frac_bits); }
double FixedPointFormat::max_value() const noexcept { return from_fixed(max_raw(), *this); }
double FixedPointFormat::min_value() const noexcept { return from_fixed(min_raw(), *this); }

std::string FixedPointFormat::str() const {
  return std::string(is_signed ? "s" : "u") + std::to_string(total_bits) + "." + std::to_string(frac_bits);
}

int128 round_shift(int128 v, int shift) {
  if (shift <= 0) return v * (int128{1} << -shift);
  const int128 half = int128{1} << (shift - 1);
  return v >= 0 ? (v + half) >> shift : -((-v + half) >> shift);
}

std::int64_t fit_to_format(int128 raw, const FixedPointFormat& fmt, std::uint64_t* overflows) {
  const int128 hi = fmt.max_raw();
  const int128 lo = fmt.min_raw();
  if (raw >= lo && raw <= hi) return static_cast<std::int64_t>(raw);
  if (overflows) ++*overflows;
  if (fmt.saturate) return static_cast<std::int64_t>(raw > hi ? hi : lo);
  const auto mask = (static_cast<unsigned __int128>(1) << fmt.total_bits) - 1;
  auto bits = static_cast<unsigned __int128>(raw) & mask;
  if (fmt.is_signed && (bits >> (fmt.total_bits - 1)) != 0) {
    return static_cast<std::int64_t>(static_cast<int128>(bits) - (int128{1} << fmt.total_bits));
  }
  return static_cast<std::int64_t>(bits);
}

std::int64_t requantize(int128 raw, int from_frac, const FixedPointFormat& fmt, std::uint64_t* overflows) {
  return fit_to_format(round_shift(raw, from_frac - fmt.frac_bits), fmt, overflows);
}

std::int64_t to_fixed(double value, const FixedPointFormat& fmt, std::uint64_t* overflows) {
  if (!std::isfinite(value)) throw DomainError("cannot represent a non-finite value in fixed point");
  const double scaled = std::round(std::ldexp(value, fmt.frac_bits));
  // Anything beyond 2^40 is out of range for every supported width.
  const double limit = std::ldexp(1.0, 40);
  const double clipped = std::clamp(scaled, -limit, limit);
  return fit_to_format(static_cast<int128>(clipped), fmt, overflows);
}

double from_fixed(std::int64_t raw, const FixedPointFormat& fmt) noexcept {
  return std::ldexp(static_cast<double>(raw), -fmt.frac_bits);
}

std::int64_t SqrtLut::eval_raw(std::int64_t m_raw) const {
  if (m_raw < starts.front() || m_raw >= starts.back()) {
    throw DomainError("sqrt LUT input " + std::to_string(from_fixed(m_raw, format)) + " outside [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + ")");
  }
  const auto it = std::upper_bound(starts.begin(), starts.end(), m_raw);
  const auto k = static_cast<std::size_t>(it - starts.begin() - 1);
  const int128 delta = static_cast<int128>(slopes[k]) * (m_raw - starts[k]);
  return fit_to_format(intercepts[k] + round_shift(delta, format.frac_bits), format);
}

double SqrtLut::eval(double m) const {
  return from_fixed(eval_raw(std::llround(std::ldexp(m, format.frac_bits))), format);
}

SqrtLut build_sqrt_lut(double lo, double hi, int segments, const FixedPointFormat& format) {
  format.validate();
  if (!(lo > 0.0) || !(hi > lo)) {
    throw DomainError("sqrt LUT domain [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      ") must satisfy 0 < lo < hi");
  }
  if (segments < 2) throw ParameterError("sqrt LUT needs at least 2 segments");
  const int f = format.frac_bits;
  const auto lo_raw = static_cast<std::int64_t>(std::llround(std::ldexp(lo, f)));
  const auto hi_raw = static_cast<std::int64_t>(std::llround(std::ldexp(hi, f)));
  if (lo_raw <= 0) throw DomainError("sqrt LUT lower bound rounds to zero in " + format.str());
  if (hi_raw - lo_raw < segments) {
    throw ParameterError("sqrt LUT domain holds fewer representable points than segments");
  }

  SqrtLut lut;
  lut.lo = lo;
  lut.hi = hi;
  lut.segments = segments;
  lut.format = format;
  const auto s = static_cast<std::size_t>(segments);
  lut.starts.resize(s + 1);
  std::vector<std::int64_t> node(s + 1);
  for (std::size_t k = 0; k <= s; ++k) {
    lut.starts[k] = lo_raw + static_cast<std::int64_t>(
                                 static_cast<int128>(k) * (hi_raw - lo_raw) / segments);
    node[k] = std::llround(std::ldexp(std::sqrt(std::ldexp(static_cast<double>(lut.starts[k]), -f)), f));
  }
  std::uint64_t overflow = 0;
  lut.intercepts.resize(s);
  lut.slopes.resize(s);
  for (std::size_t k = 0; k < s; ++k) {
    lut.intercepts[k] = fit_to_format(node[k], format, &overflow);
    const int128 rise = static_cast<int128>(node[k + 1] - node[k]) << f;
    lut.slopes[k] = fit_to_format(rise / (lut.starts[k + 1] - lut.starts[k]), format, &overflow);
  }
  if (overflow != 0) {
    throw DomainError("sqrt LUT coefficients do not fit " + format.str());
  }

  double worst = 0.0;
  for (std::size_t k = 0; k < s; ++k) {
    const int128 slope = lut.slopes[k];
    for (std::int64_t m = lut.starts[k]; m < lut.starts[k + 1]; ++m) {
      const int128 v = lut.intercepts[k] + round_shift(slope * (m - lut.starts[k]), f);
      const double approx = std::ldexp(static_cast<double>(v), -f);
      const double exact = std::sqrt(std::ldexp(static_cast<double>(m), -f));
      worst = std::max(worst, std::abs(approx - exact));
    }
  }
  lut.max_abs_error = worst;
  return lut;
}

std::int64_t fixed_sqrt(const Fixed& a, const SqrtLut& lut, const FixedPointFormat& out,
                        std::uint64_t* overflows) {
  if (a.raw < 0) throw DomainError("square root of a negative fixed-point value");
  if (a.raw == 0) return 0;
  const int fl = lut.format.frac_bits;
  const std::int64_t one = std::int64_t{1} << fl;
  if (lut.starts.front() != one || lut.starts.back() != 4 * one) {
    throw DomainError("range-reduced square root needs a LUT over [1, 4)");
  }
  const int msb = std::bit_width(static_cast<std::uint64_t>(a.raw)) - 1;
  const int exponent = msb - a.format.frac_bits;
  int even = exponent - (((exponent % 2) + 2) % 2);
  auto m = static_cast<std::int64_t>(round_shift(a.raw, a.format.frac_bits + even - fl));
  if (m >= 4 * one) {
    m >>= 2;
    even += 2;
  }
  const std::int64_t root = lut.eval_raw(m);
  return fit_to_format(round_shift(root, fl - out.frac_bits - even / 2), out, overflows);
}

namespace {

constexpr int kSeedIndexBits = 6;
static_assert((1 << kSeedIndexBits) == kReciprocalSeedEntries);

}  // namespace

Fixed reciprocal_fixed(const Fixed& d, const FixedPointFormat& out, std::uint64_t* overflows) {
  if (d.raw <= 0) throw DomainError("reciprocal of a non-positive value");
  const int work = out.frac_bits + 8;
  const int128 one = int128{1} << work;
  const int msb = std::bit_width(static_cast<std::uint64_t>(d.raw)) - 1;
  int exponent = msb - d.format.frac_bits;
  int128 m = round_shift(d.raw, d.format.frac_bits + exponent - work);
  if (m >= 2 * one) {
    m >>= 1;
    exponent += 1;
  }
  const auto index = static_cast<int>((m - one) >> (work - kSeedIndexBits));
  const double mid = 1.0 + (index + 0.5) / kReciprocalSeedEntries;
  int128 r = static_cast<int128>(std::llround(std::ldexp(1.0 / mid, work)));
  for (int step = 0; step < kReciprocalNewtonSteps; ++step) {
    const int128 t = round_shift(m * r, work);
    r = round_shift(r * (2 * one - t), work);
  }
  return {fit_to_format(round_shift(r, work + exponent - out.frac_bits), out, overflows), out};
}

Fixed reciprocal_fixed(const Fixed& d) { return reciprocal_fixed(d, d.format); }

double reciprocal_octave_error(const FixedPointFormat& fmt) {
  fmt.validate();
  const std::int64_t one = std::int64_t{1} << fmt.frac_bits;
  double worst = 0.0;
  for (std::int64_t raw = one; raw < 2 * one && raw <= fmt.max_raw(); ++raw) {
    const double dv = from_fixed(raw, fmt);
    const double r = reciprocal_fixed(Fixed{raw, fmt}).value();
    worst = std::max(worst, std::abs(r * dv - 1.0));
  }
  return worst;
}

}  // namespace lichw
