#include <doctest.h>

#include <cmath>
#include <random>

#include "lichw/bd_metrics.hpp"
#include "lichw/error.hpp"

using namespace lichw;

namespace {

RdCurve base_curve() {
  return {{{0.1, 28.0}, {0.2, 30.5}, {0.4, 33.0}, {0.8, 35.2}}};
}

// Lagrange interpolant through 4 points, integrated with composite Simpson.
double lagrange(const std::vector<double>& x, const std::vector<double>& y, double t) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double l = 1.0;
    for (std::size_t j = 0; j < x.size(); ++j)
      if (j != i) l *= (t - x[j]) / (x[i] - x[j]);
    s += y[i] * l;
  }
  return s;
}

double simpson_mean(const std::vector<double>& x, const std::vector<double>& y, double lo, double hi) {
  const int n = 2000;
  const double h = (hi - lo) / n;
  double s = lagrange(x, y, lo) + lagrange(x, y, hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * lagrange(x, y, lo + i * h);
  return s * h / 3 / (hi - lo);
}

RdCurve random_curve(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> step(0.05, 0.4);
  std::uniform_real_distribution<double> gain(1.0, 3.0);
  RdCurve c;
  double r = std::uniform_real_distribution<double>(0.05, 0.2)(rng);
  double q = std::uniform_real_distribution<double>(26.0, 30.0)(rng);
  for (int i = 0; i < 4; ++i) {
    c.points.push_back({r, q});
    r *= 1.0 + step(rng) * 3;
    q += gain(rng);
  }
  return c;
}

}  // namespace

TEST_SUITE("bd_metrics") {
  TEST_CASE("identical curves") {
    const BdResult r = bd_metrics(base_curve(), base_curve());
    CHECK(*r.bd_psnr_db == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(*r.bd_rate_percent == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("uniform PSNR shift and rate doubling") {
    RdCurve up = base_curve();
    for (auto& p : up.points) p.psnr_db += 1.0;
    CHECK(std::abs(*bd_metrics(base_curve(), up).bd_psnr_db - 1.0) <= 1e-9);

    RdCurve twice = base_curve();
    for (auto& p : twice.points) p.rate_bpp *= 2.0;
    CHECK(std::abs(*bd_metrics(base_curve(), twice).bd_rate_percent - 100.0) <= 1e-7);
  }

  TEST_CASE("matches an interpolant integrated numerically") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
      const RdCurve a = random_curve(rng);
      const RdCurve b = random_curve(rng);
      const BdResult r = bd_metrics(a, b);
      std::vector<double> la, qa, lb, qb;
      for (const auto& p : a.points) {
        la.push_back(std::log10(p.rate_bpp));
        qa.push_back(p.psnr_db);
      }
      for (const auto& p : b.points) {
        lb.push_back(std::log10(p.rate_bpp));
        qb.push_back(p.psnr_db);
      }
      if (r.log_rate_overlap) {
        const auto [lo, hi] = *r.log_rate_overlap;
        CHECK(lo == std::max(la.front(), lb.front()));
        CHECK(hi == std::min(la.back(), lb.back()));
        const double expect = simpson_mean(lb, qb, lo, hi) - simpson_mean(la, qa, lo, hi);
        CHECK(*r.bd_psnr_db == doctest::Approx(expect).epsilon(1e-6));
      }
      if (r.psnr_overlap) {
        const auto [lo, hi] = *r.psnr_overlap;
        const double d = simpson_mean(qb, lb, lo, hi) - simpson_mean(qa, la, lo, hi);
        CHECK(*r.bd_rate_percent == doctest::Approx((std::pow(10.0, d) - 1) * 100).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("antisymmetry on random curves") {
    std::mt19937_64 rng(2);
    int compared = 0;
    for (int i = 0; i < 100; ++i) {
      const RdCurve a = random_curve(rng);
      const RdCurve b = random_curve(rng);
      const BdResult ab = bd_metrics(a, b);
      const BdResult ba = bd_metrics(b, a);
      CHECK(ab.bd_psnr_db.has_value() == ba.bd_psnr_db.has_value());
      CHECK(ab.bd_rate_percent.has_value() == ba.bd_rate_percent.has_value());
      if (ab.bd_psnr_db) CHECK(*ab.bd_psnr_db == -*ba.bd_psnr_db);
      if (ab.bd_rate_percent) {
        const double x = 1 + *ab.bd_rate_percent / 100;
        const double y = 1 + *ba.bd_rate_percent / 100;
        CHECK(std::abs(x * y - 1.0) <= 1e-9);
        ++compared;
      }
    }
    CHECK(compared > 50);
  }

  TEST_CASE("least squares beyond four points keeps a cubic exact") {
    std::vector<double> x, y;
    for (int i = 0; i < 9; ++i) {
      x.push_back(-1.0 + 0.3 * i);
      y.push_back(2 - x.back() + 0.5 * x.back() * x.back() * x.back());
    }
    const CubicFit f = fit_cubic(x, y);
    CHECK(f(0.25) == doctest::Approx(2 - 0.25 + 0.5 * 0.25 * 0.25 * 0.25).epsilon(1e-12));
    // Integral of 2 - x + x^3/2 over [0, 1] = 2 - 1/2 + 1/8.
    CHECK(f.integral(0.0, 1.0) == doctest::Approx(1.625).epsilon(1e-12));
  }

  TEST_CASE("disjoint curves report no overlap") {
    RdCurve far = base_curve();
    for (auto& p : far.points) {
      p.rate_bpp *= 100;
      p.psnr_db += 50;
    }
    const BdResult r = bd_metrics(base_curve(), far);
    CHECK_FALSE(r.bd_psnr_db.has_value());
    CHECK_FALSE(r.bd_rate_percent.has_value());
    CHECK_FALSE(r.log_rate_overlap.has_value());
    CHECK_FALSE(r.psnr_overlap.has_value());
  }

  TEST_CASE("validation and parsing") {
    RdCurve three{{{0.1, 28}, {0.2, 30}, {0.4, 32}}};
    CHECK_THROWS_AS(bd_metrics(three, base_curve()), ParameterError);
    RdCurve unsorted = base_curve();
    std::swap(unsorted.points[1], unsorted.points[2]);
    CHECK_THROWS_AS(bd_metrics(unsorted, base_curve()), DomainError);
    RdCurve bad = base_curve();
    bad.points[0].rate_bpp = 0.0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = base_curve();
    bad.points[3].psnr_db = NAN;
    CHECK_THROWS_AS(bad.validate(), DomainError);

    const RdCurve parsed = parse_rd_curve_csv("bpp,psnr_db\n0.1,28\n0.2, 30.5\n0.4,33\n0.8,35.2\n");
    REQUIRE(parsed.points.size() == 4);
    CHECK(parsed.points[1].psnr_db == 30.5);
    CHECK_THROWS_AS(parse_rd_curve_csv("rate,psnr\n0.1,28\n"), FormatError);
    CHECK_THROWS_AS(parse_rd_curve_csv("bpp,psnr_db\n0.1\n"), FormatError);
    CHECK_THROWS_AS(parse_rd_curve_csv("bpp,psnr_db\n0.1,abc\n"), FormatError);
    CHECK_THROWS_AS(parse_rd_curve_csv(""), FormatError);
  }
}
