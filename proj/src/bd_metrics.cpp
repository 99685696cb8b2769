#include "lichw/bd_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include <Eigen/Dense>

#include "lichw/error.hpp"

namespace lichw {

void RdCurve::validate() const {
  if (points.size() < 4) {
    throw ParameterError("an RD curve needs at least 4 points, got " + std::to_string(points.size()));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const RdPoint& p = points[i];
    if (!std::isfinite(p.rate_bpp) || !std::isfinite(p.psnr_db)) throw DomainError("RD point is not finite");
    if (!(p.rate_bpp > 0.0)) throw DomainError("RD rate must be positive");
    if (i > 0 && !(p.rate_bpp > points[i - 1].rate_bpp)) {
      throw DomainError("RD rates must be strictly increasing");
    }
  }
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_number(const std::string& s, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw FormatError("line " + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

}  // namespace

RdCurve parse_rd_curve_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string row;
  std::size_t line = 0;
  bool header = false;
  RdCurve curve;
  while (std::getline(in, row)) {
    ++line;
    const std::string t = trim(row);
    if (t.empty()) continue;
    const auto comma = t.find(',');
    if (comma == std::string::npos || t.find(',', comma + 1) != std::string::npos) {
      throw FormatError("line " + std::to_string(line) + ": expected two columns");
    }
    const std::string c0 = trim(std::string_view(t).substr(0, comma));
    const std::string c1 = trim(std::string_view(t).substr(comma + 1));
    if (!header) {
      if (c0 != "bpp" || c1 != "psnr_db") throw FormatError("RD curve CSV header must be 'bpp,psnr_db'");
      header = true;
      continue;
    }
    curve.points.push_back({parse_number(c0, line), parse_number(c1, line)});
  }
  if (!header) throw FormatError("RD curve CSV is empty");
  return curve;
}

double CubicFit::operator()(double x) const noexcept {
  const double t = (x - center) / scale;
  return ((c[3] * t + c[2]) * t + c[1]) * t + c[0];
}

double CubicFit::integral(double x0, double x1) const noexcept {
  auto antiderivative = [this](double x) {
    const double t = (x - center) / scale;
    return (((c[3] / 4.0 * t + c[2] / 3.0) * t + c[1] / 2.0) * t + c[0]) * t;
  };
  return scale * (antiderivative(x1) - antiderivative(x0));
}

CubicFit fit_cubic(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 4) throw ParameterError("cubic fit needs at least 4 paired samples");
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  CubicFit f;
  f.center = 0.5 * (*lo + *hi);
  f.scale = 0.5 * (*hi - *lo);
  if (!(f.scale > 0.0)) throw DomainError("cubic fit needs distinct abscissae");
  const auto n = static_cast<Eigen::Index>(x.size());
  Eigen::MatrixXd v(n, 4);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = (x[static_cast<std::size_t>(i)] - f.center) / f.scale;
    v(i, 0) = 1.0;
    v(i, 1) = t;
    v(i, 2) = t * t;
    v(i, 3) = t * t * t;
    rhs(i) = y[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd sol = v.colPivHouseholderQr().solve(rhs);
  for (int k = 0; k < 4; ++k) f.c[k] = sol(k);
  return f;
}

namespace {

std::optional<Interval> overlap(const std::vector<double>& a, const std::vector<double>& b) {
  const auto [alo, ahi] = std::minmax_element(a.begin(), a.end());
  const auto [blo, bhi] = std::minmax_element(b.begin(), b.end());
  const Interval iv{std::max(*alo, *blo), std::min(*ahi, *bhi)};
  if (!(iv.hi > iv.lo)) return std::nullopt;
  return iv;
}

}  // namespace

BdResult bd_metrics(const RdCurve& a, const RdCurve& b) {
  a.validate();
  b.validate();
  auto columns = [](const RdCurve& c, std::vector<double>& lr, std::vector<double>& q) {
    for (const auto& p : c.points) {
      lr.push_back(std::log10(p.rate_bpp));
      q.push_back(p.psnr_db);
    }
  };
  std::vector<double> lr_a, q_a, lr_b, q_b;
  columns(a, lr_a, q_a);
  columns(b, lr_b, q_b);

  BdResult r;
  r.log_rate_overlap = overlap(lr_a, lr_b);
  if (r.log_rate_overlap) {
    const CubicFit fa = fit_cubic(lr_a, q_a);
    const CubicFit fb = fit_cubic(lr_b, q_b);
    const auto [lo, hi] = *r.log_rate_overlap;
    r.bd_psnr_db = (fb.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
  }
  r.psnr_overlap = overlap(q_a, q_b);
  if (r.psnr_overlap) {
    const CubicFit fa = fit_cubic(q_a, lr_a);
    const CubicFit fb = fit_cubic(q_b, lr_b);
    const auto [lo, hi] = *r.psnr_overlap;
    const double mean_diff = (fb.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    r.bd_rate_percent = (std::pow(10.0, mean_diff) - 1.0) * 100.0;
  }
  return r;
}

}  // namespace lichw
