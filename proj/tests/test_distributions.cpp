#include <gtest/gtest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "lmsc/distributions.hpp"

using namespace lmsc;

namespace {

const double inf = std::numeric_limits<double>::infinity();

double gaussian_pdf(double mu, double sigma, double r) {
  const double z = (r - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double rayleigh_pdf(double sigma, double r) {
  return r < 0 ? 0.0 : r / (sigma * sigma) * std::exp(-r * r / (2.0 * sigma * sigma));
}

// Adaptive quadrature over the whole support.
double total_mass(const EmissionDistribution& d) {
  const auto f = [&](double r) { return pdf(d, r); };
  const auto [lo, hi] = support_extent(d);
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, lo, hi, 15, 1e-13);
}

std::vector<EmissionDistribution> sample_distributions() {
  return {Gaussian{0.4, 0.2},         Gaussian{-3.0, 2.5},       Rayleigh{0.3},
          Rayleigh{2.0},              Rice{0.0, 0.3},            Rice{1.0, 0.15},
          Rice{0.8, 0.05},            Rice{30.0, 0.02},          Lognormal{std::log(0.45), 0.35},
          Lognormal{0.0, 1.0},        Lognormal{-2.0, 0.1}};
}

}  // namespace

TEST(Pdf, GaussianPeak) { EXPECT_NEAR(pdf(Gaussian{1.0, 0.2}, 1.0), 1.99471, 1e-5); }

TEST(Pdf, LognormalOutsideSupport) { EXPECT_EQ(pdf(Lognormal{0.0, 0.5}, -0.5), 0.0); }

TEST(Pdf, RiceWithZeroNuIsRayleigh) {
  EXPECT_NEAR(pdf(Rice{0.0, 0.3}, 0.3), rayleigh_pdf(0.3, 0.3), 1e-12);
  double worst = 0.0;
  for (double r = 0.0; r <= 3.0; r += 0.001) {
    worst = std::max(worst, std::abs(pdf(Rice{0.0, 0.3}, r) - pdf(Rayleigh{0.3}, r)));
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Pdf, RiceAgainstBesselClosedForm) {
  const double nu = 1.0;
  const double s = 0.4;
  for (double r : {0.05, 0.5, 1.0, 1.7, 3.0}) {
    const double expected =
        r / (s * s) * std::exp(-(r * r + nu * nu) / (2 * s * s)) * std::cyl_bessel_i(0.0, r * nu / (s * s));
    EXPECT_NEAR(pdf(Rice{nu, s}, r), expected, 1e-12 * expected + 1e-300);
  }
}

TEST(LogPdf, StandardNormalPeak) { EXPECT_NEAR(log_pdf(Gaussian{0.0, 1.0}, 0.0), -0.91894, 1e-5); }

TEST(LogPdf, RayleighNegativeIsMinusInfinity) { EXPECT_EQ(log_pdf(Rayleigh{1.0}, -1.0), -inf); }

TEST(LogPdf, FarTailDoesNotUnderflow) {
  // Printed reference is rounded; the exact value is -49.3095006.
  EXPECT_NEAR(log_pdf(Gaussian{1.0, 0.2}, 3.0), -49.30947, 1e-4);
  EXPECT_NEAR(log_pdf(Gaussian{1.0, 0.2}, 3.0), -std::log(0.2 * std::sqrt(2 * std::numbers::pi)) - 50.0, 1e-12);
}

TEST(LogPdf, RiceFiniteForLargeArguments) {
  // r*nu/sigma^2 = 2.5e6, far beyond where I0 overflows.
  const double lp = log_pdf(Rice{50.0, 0.05}, 50.0);
  EXPECT_TRUE(std::isfinite(lp));
  // Near its mean a narrow Rice is almost Gaussian with the same sigma.
  EXPECT_NEAR(lp, std::log(gaussian_pdf(50.0, 0.05, 50.0)), 1e-3);
}

TEST(LogPdf, NonFiniteInputThrows) {
  EXPECT_THROW(log_pdf(Gaussian{0, 1}, std::nan("")), Error);
  EXPECT_THROW(log_pdf(Gaussian{0, 1}, inf), Error);
}

TEST(LogPdf, ExpMatchesPdf) {
  for (const auto& d : sample_distributions()) {
    for (double r = -5.0; r <= 60.0; r += 0.01) {
      const double p = pdf(d, r);
      if (p > 1e-300) {
        EXPECT_NEAR(std::exp(log_pdf(d, r)), p, 1e-12 * p);
      }
    }
  }
}

TEST(Validate, RejectsBadParameters) {
  EXPECT_THROW(validate(Gaussian{0.0, 0.0}), Error);
  EXPECT_THROW(validate(Gaussian{0.0, -1.0}), Error);
  EXPECT_THROW(validate(Rayleigh{0.0}), Error);
  EXPECT_THROW(validate(Rice{-1.0, 1.0}), Error);
  EXPECT_THROW(validate(Rice{1.0, 0.0}), Error);
  EXPECT_THROW(validate(Lognormal{std::nan(""), 1.0}), Error);
  EXPECT_THROW(validate(Lognormal{0.0, 0.0}), Error);
  EXPECT_NO_THROW(validate(Rice{0.0, 1.0}));
}

TEST(Pdf, IntegratesToOne) {
  for (const auto& d : sample_distributions()) {
    EXPECT_NEAR(total_mass(d), 1.0, 1e-6) << family_name(family_of(d));
  }
}

TEST(Pdf, MeanMatchesQuadrature) {
  for (const auto& d : sample_distributions()) {
    const auto [lo, hi] = support_extent(d);
    const double m = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double r) { return r * pdf(d, r); }, lo, hi, 15, 1e-13);
    EXPECT_NEAR(mean(d), m, 1e-6 * std::max(1.0, std::abs(m)));
  }
}

TEST(Family, NamesRoundTrip) {
  for (Family f : {Family::gaussian, Family::rayleigh, Family::rice, Family::lognormal}) {
    EXPECT_EQ(parse_family(family_name(f)), f);
  }
  EXPECT_THROW(parse_family("weibull"), Error);
}

TEST(Sample, GaussianMean) {
  Rng rng(7);
  const Gaussian g{0.4, 0.2};
  double sum = 0;
  const int n = 1000000;
  for (int k = 0; k < n; ++k) sum += sample(g, rng);
  EXPECT_NEAR(sum / n, 0.4, 0.001);
}

TEST(Sample, RayleighMean) {
  Rng rng(11);
  double sum = 0;
  const int n = 1000000;
  for (int k = 0; k < n; ++k) sum += sample(Rayleigh{1.0}, rng);
  EXPECT_NEAR(sum / n, std::sqrt(std::numbers::pi / 2.0), 0.005);
}

TEST(Sample, RiceNonNegativeAndMean) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const Rice d{0.8, 0.3};
    double sum = 0;
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
      const double v = sample(d, rng);
      ASSERT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum / n, mean(d), 0.005);
  }
}

TEST(Sample, LognormalMean) {
  Rng rng(5);
  const Lognormal d{std::log(0.45), 0.35};
  double sum = 0;
  const int n = 500000;
  for (int k = 0; k < n; ++k) sum += sample(d, rng);
  EXPECT_NEAR(sum / n, mean(d), 0.002);
}

TEST(Sample, DeterministicUnderSeed) {
  Rng a(42), b(42);
  for (int k = 0; k < 100; ++k) {
    EXPECT_EQ(sample(Rice{1.0, 0.2}, a), sample(Rice{1.0, 0.2}, b));
  }
}

TEST(Bhattacharyya, IdenticalIsZero) {
  EXPECT_NEAR(bhattacharyya(Gaussian{1.0, 0.2}, Gaussian{1.0, 0.2}), 0.0, 1e-9);
}

TEST(Bhattacharyya, PaperSpacings) {
  const std::vector<double> expected{1.13, 0.78, 0.50, 0.28, 0.13, 0.03};
  for (std::size_t k = 0; k < expected.size(); ++k) {
    const double mu1 = 0.4 + 0.1 * static_cast<double>(k);
    const double b = bhattacharyya(Gaussian{mu1, 0.2}, Gaussian{1.0, 0.2});
    EXPECT_NEAR(b, expected[k], 0.01) << "mu1 = " << mu1;
    const double closed = (1.0 - mu1) * (1.0 - mu1) / (8.0 * 0.04);
    EXPECT_NEAR(b, closed, 1e-3);
  }
}

TEST(Bhattacharyya, Symmetric) {
  const auto ds = sample_distributions();
  for (std::size_t a = 0; a < ds.size(); ++a) {
    for (std::size_t b = a + 1; b < ds.size(); ++b) {
      const double ab = bhattacharyya(ds[a], ds[b]);
      const double ba = bhattacharyya(ds[b], ds[a]);
      if (std::isfinite(ab)) {
        EXPECT_NEAR(ab, ba, 1e-9 * std::max(1.0, ab));
      }
    }
  }
}

TEST(Bhattacharyya, RiceAgainstTanhSinh) {
  const Rice a{0.8, 0.15};
  const Lognormal b{std::log(0.45), 0.35};
  const double coefficient = boost::math::quadrature::tanh_sinh<double>().integrate(
      [&](double r) { return std::sqrt(pdf(a, r) * pdf(b, r)); }, 0.0, 3.0);
  EXPECT_NEAR(bhattacharyya(a, b), -std::log(coefficient), 1e-6);
}

TEST(Bhattacharyya, CoverageCheck) {
  EXPECT_THROW(bhattacharyya(Gaussian{0.0, 1.0}, Gaussian{0.0, 1.0}, uniform_grid(-1.0, 1.0, 4096)), Error);
  try {
    bhattacharyya(Gaussian{0.0, 1.0}, Gaussian{0.0, 1.0}, uniform_grid(-1.0, 1.0, 4096));
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::integration_coverage);
  }
}

TEST(Bhattacharyya, NonNegative) {
  const auto ds = sample_distributions();
  for (const auto& a : ds) {
    for (const auto& b : ds) EXPECT_GE(bhattacharyya(a, b), 0.0);
  }
}

TEST(Mixture, SingleComponent) {
  const std::vector<double> w{1.0};
  const std::vector<EmissionDistribution> d{Gaussian{0.4, 0.2}};
  for (double r : {0.0, 0.4, 0.9}) EXPECT_DOUBLE_EQ(mixture_pdf(w, d, r), pdf(d[0], r));
}

TEST(Mixture, IdenticalComponents) {
  const std::vector<double> w{0.5, 0.5};
  const std::vector<EmissionDistribution> d{Rice{1.0, 0.2}, Rice{1.0, 0.2}};
  for (double r : {0.5, 1.0, 1.3}) EXPECT_NEAR(mixture_pdf(w, d, r), pdf(d[0], r), 1e-15);
}

TEST(Mixture, SymmetricPoint) {
  const std::vector<double> w{0.333, 0.667};
  const std::vector<EmissionDistribution> d{Gaussian{0.4, 0.2}, Gaussian{1.0, 0.2}};
  EXPECT_NEAR(mixture_pdf(w, d, 0.7), 0.64759, 1e-5);
}

TEST(Mixture, RejectsBadWeights) {
  const std::vector<EmissionDistribution> d{Gaussian{0.4, 0.2}, Gaussian{1.0, 0.2}};
  EXPECT_THROW(mixture_pdf(std::vector<double>{0.5, 0.6}, d, 0.0), Error);
  EXPECT_THROW(mixture_pdf(std::vector<double>{-0.5, 1.5}, d, 0.0), Error);
  EXPECT_THROW(mixture_pdf(std::vector<double>{1.0}, d, 0.0), Error);
}

TEST(ProbabilityMass, GaussianTail) {
  const double tail = probability_mass(Gaussian{0.0, 1.0}, 1.0, inf);
  EXPECT_NEAR(tail, 0.5 * std::erfc(1.0 / std::sqrt(2.0)), 1e-9);
}
