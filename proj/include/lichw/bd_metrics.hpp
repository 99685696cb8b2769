#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lichw {

struct RdPoint {
  double rate_bpp = 0.0;
  double psnr_db = 0.0;
};

struct RdCurve {
  std::vector<RdPoint> points;

  /// At least 4 finite points with strictly increasing positive rate.
  void validate() const;
};

/// Parses a CSV with header `bpp,psnr_db`; FormatError on malformed rows.
RdCurve parse_rd_curve_csv(std::string_view text);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Averages of B relative to A. A missing value means the curves share no
/// interval on that axis; the matching overlap field is then empty too.
struct BdResult {
  std::optional<double> bd_rate_percent;
  std::optional<double> bd_psnr_db;
  std::optional<Interval> log_rate_overlap;
  std::optional<Interval> psnr_overlap;
};

/// Cubic least-squares fits (interpolating for exactly 4 points), integrated analytically.
BdResult bd_metrics(const RdCurve& a, const RdCurve& b);

/// Cubic fit y(x) returned as coefficients of t = (x - center) / scale, lowest order first.
struct CubicFit {
  double center = 0.0;
  double scale = 1.0;
  double c[4] = {0.0, 0.0, 0.0, 0.0};

  double operator()(double x) const noexcept;
  /// Exact integral over [x0, x1].
  double integral(double x0, double x1) const noexcept;
};

CubicFit fit_cubic(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lichw
