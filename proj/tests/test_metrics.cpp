#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tomo/metrics.hpp"
#include "tomo/simulate.hpp"

using namespace tomo;

namespace {

CdfCurve uniform_curve(double lo, double hi) {
  CdfCurve c = tabulate_cdf([&](double x) { return std::clamp((x - lo) / (hi - lo), 0.0, 1.0); },
                            linear_grid(lo, hi, 2001), "uniform");
  c.quantile = [lo, hi](double p) { return lo + p * (hi - lo); };
  c.stddev = (hi - lo) / std::sqrt(12.0);
  return c;
}

CdfCurve shifted_mm1(double u, double v, double shift, double scale = 1.0) {
  CdfCurve c;
  c.x = {0.0, 1.0};
  c.f = {0.0, 1.0};
  c.quantile = [=](double p) { return scale * mm1_quantile(u, v, p) + shift; };
  c.stddev = scale * mm1_stddev(u, v);
  return c;
}

}  // namespace

TEST(Mallows, IdenticalIsZero) {
  const CdfCurve f = mm1_cdf_curve(0.4, 2.0);
  EXPECT_EQ(mallows_distance(f, f), 0.0);
  EXPECT_EQ(normalized_mallows(f, f), 0.0);
}

TEST(Mallows, UniformOracle) {
  EXPECT_NEAR(mallows_distance(uniform_curve(0.0, 1.0), uniform_curve(0.0, 2.0), 10000), 0.5, 1e-3);
}

TEST(Mallows, TabulatedCurvesWithoutQuantileFunction) {
  CdfCurve a = uniform_curve(0.0, 1.0), b = uniform_curve(0.0, 2.0);
  a.quantile = nullptr;
  b.quantile = nullptr;
  EXPECT_NEAR(mallows_distance(a, b, 10000), 0.5, 2e-3);
}

TEST(Mallows, LocationShift) {
  for (double c : {0.01, 0.5, 3.0}) {
    const double d = mallows_distance(shifted_mm1(0.5, 1.0, 0.0), shifted_mm1(0.5, 1.0, c), 10000);
    EXPECT_NEAR(d, c, 1e-3 * c);
  }
}

TEST(Mallows, SymmetryAndTriangle) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> uu(0.2, 0.8), vv(0.3, 4.0);
  for (int trial = 0; trial < 20; ++trial) {
    const CdfCurve f = mm1_cdf_curve(uu(gen), vv(gen));
    const CdfCurve g = mm1_cdf_curve(uu(gen), vv(gen));
    const CdfCurve h = mm1_cdf_curve(uu(gen), vv(gen));
    const double fg = mallows_distance(f, g), gf = mallows_distance(g, f);
    EXPECT_DOUBLE_EQ(fg, gf);
    EXPECT_LE(fg, mallows_distance(f, h) + mallows_distance(h, g) + 1e-12);
  }
}

TEST(Mallows, QuadratureConverges) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> uu(0.2, 0.8), vv(0.3, 4.0);
  for (int trial = 0; trial < 10; ++trial) {
    const CdfCurve f = mm1_cdf_curve(uu(gen), vv(gen));
    const CdfCurve g = mm1_cdf_curve(uu(gen), vv(gen));
    const double coarse = mallows_distance(f, g, 5000);
    const double fine = mallows_distance(f, g, 10000);
    EXPECT_LT(std::abs(coarse - fine), 0.01 * fine);
  }
}

TEST(Mallows, AtomHandledByGeneralizedInverse) {
  // Two laws differing only in the atom weight: F^{-1} is zero on the flat part.
  const double d = mallows_distance(shifted_mm1(0.3, 1.0, 0.0), shifted_mm1(0.6, 1.0, 0.0), 20000);
  // Oracle: integral of |q_0.3(p) - q_0.6(p)|, both exponential quantiles above their atoms.
  double oracle = 0.0;
  const int n = 2000000;
  for (int k = 0; k < n; ++k) {
    const double p = (k + 0.5) / n;
    oracle += std::abs(mm1_quantile(0.3, 1.0, p) - mm1_quantile(0.6, 1.0, p));
  }
  EXPECT_NEAR(d, oracle / n, 1e-3 * oracle / n);
  EXPECT_EQ(mm1_quantile(0.3, 1.0, 0.5), 0.0);
}

TEST(NormalizedMallows, ScaleInvariant) {
  const double base = normalized_mallows(shifted_mm1(0.5, 1.0, 0.0), shifted_mm1(0.4, 1.5, 0.0));
  for (double s : {0.1, 3.0, 50.0}) {
    const double scaled = normalized_mallows(shifted_mm1(0.5, 1.0, 0.0, s), shifted_mm1(0.4, 1.5, 0.0, s));
    EXPECT_NEAR(scaled, base, 1e-12 * std::max(1.0, base));
  }
  // Numeric sigma from the curve agrees with the closed form.
  CdfCurve numeric = shifted_mm1(0.5, 1.0, 0.0);
  numeric.stddev.reset();
  EXPECT_NEAR(numeric.standard_deviation(200000), mm1_stddev(0.5, 1.0), 2e-3);
}

TEST(NormalizedMallows, DegenerateReferenceThrows) {
  CdfCurve point;
  point.x = {0.0, 1.0};
  point.f = {1.0, 1.0};
  EXPECT_THROW(normalized_mallows(point, mm1_cdf_curve(0.5, 1.0)), DegenerateDistribution);
}

TEST(Mm1, StddevMatchesMonteCarlo) {
  Rng gen(3);
  for (auto [u, v] : {std::pair{0.3, 1.0}, std::pair{0.7, 3.0}, std::pair{0.5, 0.2}}) {
    const Vector x = sample_mm1_delay(u, v, 400000, gen);
    const double m = x.mean();
    const double sd = std::sqrt((x.array() - m).square().mean());
    EXPECT_NEAR(sd, mm1_stddev(u, v), 0.01 * mm1_stddev(u, v)) << u << " " << v;
  }
}

TEST(CdfCurve, Validation) {
  CdfCurve bad;
  bad.x = {0.0, 1.0};
  bad.f = {0.5, 0.4};
  EXPECT_THROW(bad.validate(), PreconditionError);
  bad.f = {0.5, 1.5};
  EXPECT_THROW(bad.validate(), PreconditionError);
  const CdfCurve good = mm1_cdf_curve(0.5, 1.0);
  EXPECT_NO_THROW(good.validate());
  EXPECT_DOUBLE_EQ(good.f.front(), 0.5);
}

TEST(LogAbsError, Basics) {
  const Vector theta{{1.0, 2.0, 3.0}};
  EXPECT_EQ(log_abs_error(theta, theta), Vector::Zero(3));
  EXPECT_TRUE(log_abs_error(std::exp(1.0) * theta, theta).isApprox(Vector::Ones(3), 1e-15));
  EXPECT_NEAR(log_abs_error(Vector{{2.0}}, Vector{{1.0}})(0), 0.6931471805599453, 1e-15);
  EXPECT_THROW(log_abs_error(Vector{{0.0}}, Vector{{1.0}}), PreconditionError);
  EXPECT_THROW(log_abs_error(Vector{{1.0}}, Vector{{-1.0}}), PreconditionError);
}
