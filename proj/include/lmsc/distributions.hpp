#pragma once

// Per-state amplitude densities and the Bhattacharyya overlap measure.
//
// All densities are over a linear signal envelope. log_pdf is the primary
// evaluation path; pdf is exp(log_pdf) so the two agree to rounding.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "lmsc/error.hpp"

namespace lmsc {

using Rng = std::mt19937_64;

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

struct Gaussian {
  double mu = 0.0;
  double sigma = 1.0;
  friend bool operator==(const Gaussian&, const Gaussian&) = default;
};

struct Rayleigh {
  double sigma = 1.0;
  friend bool operator==(const Rayleigh&, const Rayleigh&) = default;
};

/// Rician envelope with line-of-sight amplitude `nu` and per-quadrature
/// scatter deviation `sigma` (K-factor nu^2 / 2 sigma^2).
struct Rice {
  double nu = 0.0;
  double sigma = 1.0;
  friend bool operator==(const Rice&, const Rice&) = default;
};

/// exp(N(mu_log, sigma_log^2)).
struct Lognormal {
  double mu_log = 0.0;
  double sigma_log = 1.0;
  friend bool operator==(const Lognormal&, const Lognormal&) = default;
};

using EmissionDistribution = std::variant<Gaussian, Rayleigh, Rice, Lognormal>;

enum class Family { gaussian, rayleigh, rice, lognormal };

inline Family family_of(const EmissionDistribution& d) {
  return static_cast<Family>(d.index());
}

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::rayleigh: return "rayleigh";
    case Family::rice: return "rice";
    case Family::lognormal: return "lognormal";
  }
  return "unknown";
}

inline Family parse_family(std::string_view name) {
  for (auto f : {Family::gaussian, Family::rayleigh, Family::rice, Family::lognormal}) {
    if (family_name(f) == name) return f;
  }
  throw Error(ErrorKind::invalid_input, "unknown distribution family '" + std::string(name) + "'");
}

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline constexpr double half_log_two_pi = 0.91893853320467274178;

inline void require_finite(double r) {
  if (!std::isfinite(r)) throw Error(ErrorKind::invalid_input, "amplitude must be finite");
}

// ln I0(x) for x >= 0. The direct Bessel evaluation overflows near x ~ 700,
// so large arguments switch to the Hankel expansion of the scaled function.
inline double log_bessel_i0(double x) {
  if (x < 600.0) return std::log(std::cyl_bessel_i(0.0, x));
  const double inv = 1.0 / x;
  const double series = inv * (1.0 / 8.0 + inv * (9.0 / 128.0 + inv * (225.0 / 3072.0)));
  return x - 0.5 * std::log(2.0 * std::numbers::pi * x) + std::log1p(series);
}

template <class F>
double simpson(F&& f, double a, double b, std::size_t intervals) {
  if (!(b > a)) return 0.0;
  if (intervals < 2) intervals = 2;
  if (intervals % 2 != 0) ++intervals;
  const double h = (b - a) / static_cast<double>(intervals);
  double sum = f(a) + f(b);
  for (std::size_t k = 1; k < intervals; ++k) {
    sum += (k % 2 == 1 ? 4.0 : 2.0) * f(a + h * static_cast<double>(k));
  }
  return sum * h / 3.0;
}

}  // namespace detail

/// Throws if any scale parameter is non-positive or any parameter non-finite.
inline void validate(const EmissionDistribution& d) {
  auto positive = [](double v, const char* name) {
    if (!(std::isfinite(v) && v > 0.0)) {
      throw Error(ErrorKind::invalid_input, std::string(name) + " must be finite and > 0");
    }
  };
  auto finite = [](double v, const char* name) {
    if (!std::isfinite(v)) throw Error(ErrorKind::invalid_input, std::string(name) + " must be finite");
  };
  std::visit(detail::overloaded{
                 [&](const Gaussian& g) { finite(g.mu, "gaussian mu"); positive(g.sigma, "gaussian sigma"); },
                 [&](const Rayleigh& g) { positive(g.sigma, "rayleigh sigma"); },
                 [&](const Rice& g) {
                   finite(g.nu, "rice nu");
                   if (g.nu < 0.0) throw Error(ErrorKind::invalid_input, "rice nu must be >= 0");
                   positive(g.sigma, "rice sigma");
                 },
                 [&](const Lognormal& g) { finite(g.mu_log, "lognormal mu_log"); positive(g.sigma_log, "lognormal sigma_log"); },
             },
             d);
}

inline double log_pdf(const EmissionDistribution& d, double r) {
  detail::require_finite(r);
  return std::visit(
      detail::overloaded{
          [r](const Gaussian& g) {
            const double z = (r - g.mu) / g.sigma;
            return -std::log(g.sigma) - detail::half_log_two_pi - 0.5 * z * z;
          },
          [r](const Rayleigh& g) {
            if (r <= 0.0) return neg_inf;
            const double s2 = g.sigma * g.sigma;
            return std::log(r) - std::log(s2) - r * r / (2.0 * s2);
          },
          [r](const Rice& g) {
            if (r <= 0.0) return neg_inf;
            const double s2 = g.sigma * g.sigma;
            return std::log(r) - std::log(s2) - (r * r + g.nu * g.nu) / (2.0 * s2) +
                   detail::log_bessel_i0(r * g.nu / s2);
          },
          [r](const Lognormal& g) {
            if (r <= 0.0) return neg_inf;
            const double lr = std::log(r);
            const double z = (lr - g.mu_log) / g.sigma_log;
            return -lr - std::log(g.sigma_log) - detail::half_log_two_pi - 0.5 * z * z;
          },
      },
      d);
}

inline double pdf(const EmissionDistribution& d, double r) { return std::exp(log_pdf(d, r)); }

/// One draw. Every sampler is an exact transform of uniform/normal variates.
inline double sample(const EmissionDistribution& d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  return std::visit(detail::overloaded{
                        [&](const Gaussian& g) { return g.mu + g.sigma * normal(rng); },
                        [&](const Rayleigh& g) {
                          // 1 - U lies in (0, 1], keeping the log finite
                          const double u = 1.0 - std::generate_canonical<double, 53>(rng);
                          return g.sigma * std::sqrt(-2.0 * std::log(u));
                        },
                        [&](const Rice& g) {
                          const double x = g.nu + g.sigma * normal(rng);
                          const double y = g.sigma * normal(rng);
                          return std::hypot(x, y);
                        },
                        [&](const Lognormal& g) { return std::exp(g.mu_log + g.sigma_log * normal(rng)); },
                    },
                    d);
}

/// Interval holding all but a negligible (< 1e-20) share of the mass.
inline std::pair<double, double> support_extent(const EmissionDistribution& d) {
  return std::visit(detail::overloaded{
                        [](const Gaussian& g) { return std::pair{g.mu - 10.0 * g.sigma, g.mu + 10.0 * g.sigma}; },
                        [](const Rayleigh& g) { return std::pair{0.0, 10.0 * g.sigma}; },
                        [](const Rice& g) {
                          return std::pair{std::max(0.0, g.nu - 10.0 * g.sigma), g.nu + 10.0 * g.sigma};
                        },
                        [](const Lognormal& g) {
                          return std::pair{std::exp(g.mu_log - 10.0 * g.sigma_log),
                                           std::exp(g.mu_log + 10.0 * g.sigma_log)};
                        },
                    },
                    d);
}

namespace detail {

// Points one scale step apart across the support extent (geometric steps for
// the lognormal). Between neighbouring points the density changes smoothly,
// so a fixed number of Simpson intervals per panel resolves it.
inline std::vector<double> breakpoints(const EmissionDistribution& d) {
  std::vector<double> pts;
  auto steps = [&](double center, double step, double floor) {
    for (int k = -10; k <= 10; ++k) pts.push_back(std::max(floor, center + k * step));
  };
  constexpr double none = -std::numeric_limits<double>::infinity();
  std::visit(overloaded{
                 [&](const Gaussian& g) { steps(g.mu, g.sigma, none); },
                 [&](const Rayleigh& g) { steps(0.0, g.sigma, 0.0); },
                 [&](const Rice& g) {
                   steps(g.nu, g.sigma, 0.0);
                   steps(0.0, g.sigma, 0.0);
                 },
                 [&](const Lognormal& g) {
                   for (int k = -10; k <= 10; ++k) pts.push_back(std::exp(g.mu_log + k * g.sigma_log));
                 },
             },
             d);
  return pts;
}

// Sorted, de-duplicated union of the points, clipped to [a, b].
inline std::vector<double> merge_breakpoints(std::vector<double> pts, double a, double b) {
  std::erase_if(pts, [&](double x) { return !(x > a && x < b); });
  if (std::isfinite(a)) pts.push_back(a);
  if (std::isfinite(b)) pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

}  // namespace detail

/// Piecewise composite Simpson rule: `breaks` split the range into panels and
/// every panel gets `intervals_per_panel` (even) intervals.
struct IntegrationGrid {
  std::vector<double> breaks;
  std::size_t intervals_per_panel = 128;

  std::size_t panels() const noexcept { return breaks.size() < 2 ? 0 : breaks.size() - 1; }
  std::size_t intervals() const noexcept { return panels() * intervals_per_panel; }
  double lo() const { return breaks.front(); }
  double hi() const { return breaks.back(); }

  template <class F>
  double integrate(F&& f) const {
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
      total += detail::simpson(f, breaks[k], breaks[k + 1], intervals_per_panel);
    }
    return total;
  }
};

/// Uniform grid of `intervals` Simpson intervals on [lo, hi].
inline IntegrationGrid uniform_grid(double lo, double hi, std::size_t intervals) {
  if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw Error(ErrorKind::invalid_input, "integration grid must have finite hi > lo");
  }
  return IntegrationGrid{{lo, hi}, std::max<std::size_t>(2, intervals + intervals % 2)};
}

/// Panels at the scale steps of all given densities, restricted to [a, b],
/// with at least `min_intervals` intervals in total.
inline IntegrationGrid density_grid(std::span<const EmissionDistribution> dists, double a, double b,
                                    std::size_t min_intervals = 4096) {
  std::vector<double> pts;
  for (const auto& d : dists) {
    const auto more = detail::breakpoints(d);
    pts.insert(pts.end(), more.begin(), more.end());
  }
  IntegrationGrid grid{detail::merge_breakpoints(std::move(pts), a, b), 128};
  if (grid.panels() == 0) return grid;
  const std::size_t needed = (min_intervals + grid.panels() - 1) / grid.panels();
  grid.intervals_per_panel = std::max<std::size_t>(grid.intervals_per_panel, needed + needed % 2);
  return grid;
}

/// Grid covering both densities: at least 4096 intervals, with panel breaks
/// at each density's scale steps.
inline IntegrationGrid default_grid(const EmissionDistribution& f1, const EmissionDistribution& f2) {
  const std::vector<EmissionDistribution> both{f1, f2};
  const double inf = std::numeric_limits<double>::infinity();
  return density_grid(both, -inf, inf);
}

/// Probability mass on [a, b] (bounds may be infinite).
inline double probability_mass(const EmissionDistribution& d, double a, double b,
                               std::size_t min_intervals = 4096) {
  const auto [lo, hi] = support_extent(d);
  a = std::max(a, lo);
  b = std::min(b, hi);
  if (!(b > a)) return 0.0;
  return density_grid(std::span(&d, 1), a, b, min_intervals).integrate([&](double r) { return pdf(d, r); });
}

inline double mean(const EmissionDistribution& d) {
  return std::visit(detail::overloaded{
                        [](const Gaussian& g) { return g.mu; },
                        [](const Rayleigh& g) { return g.sigma * std::sqrt(std::numbers::pi / 2.0); },
                        [&](const Rice&) {
                          const auto [lo, hi] = support_extent(d);
                          return density_grid(std::span(&d, 1), lo, hi).integrate([&](double r) {
                            return r * pdf(d, r);
                          });
                        },
                        [](const Lognormal& g) { return std::exp(g.mu_log + 0.5 * g.sigma_log * g.sigma_log); },
                    },
                    d);
}

/// -ln of the Bhattacharyya coefficient, integrated on `grid`. Each density
/// must integrate to at least 0.999 on the grid.
inline double bhattacharyya(const EmissionDistribution& f1, const EmissionDistribution& f2,
                            const IntegrationGrid& grid) {
  validate(f1);
  validate(f2);
  if (grid.panels() == 0 || grid.intervals_per_panel < 2) {
    throw Error(ErrorKind::invalid_input, "integration grid needs at least one panel");
  }
  const double mass1 = grid.integrate([&](double r) { return pdf(f1, r); });
  const double mass2 = grid.integrate([&](double r) { return pdf(f2, r); });
  if (mass1 < 0.999 || mass2 < 0.999) {
    throw Error(ErrorKind::integration_coverage, "grid [" + std::to_string(grid.lo()) + ", " +
                                                     std::to_string(grid.hi()) + "] does not cover both densities");
  }
  const double coefficient =
      grid.integrate([&](double r) { return std::exp(0.5 * (log_pdf(f1, r) + log_pdf(f2, r))); });
  if (coefficient <= 0.0) return std::numeric_limits<double>::infinity();
  return std::max(0.0, -std::log(coefficient));
}

inline double bhattacharyya(const EmissionDistribution& f1, const EmissionDistribution& f2) {
  return bhattacharyya(f1, f2, default_grid(f1, f2));
}

inline void validate_weights(std::span<const double> weights, std::size_t expected, const char* what) {
  if (weights.size() != expected) {
    throw Error(ErrorKind::invalid_input, std::string(what) + ": length mismatch");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0 && w <= 1.0)) throw Error(ErrorKind::invalid_input, std::string(what) + ": entry outside [0,1]");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorKind::invalid_input, std::string(what) + ": does not sum to 1");
  }
}

inline double mixture_pdf(std::span<const double> weights, std::span<const EmissionDistribution> dists,
                          double r) {
  validate_weights(weights, dists.size(), "mixture weights");
  double density = 0.0;
  for (std::size_t k = 0; k < dists.size(); ++k) density += weights[k] * pdf(dists[k], r);
  return density;
}

}  // namespace lmsc
