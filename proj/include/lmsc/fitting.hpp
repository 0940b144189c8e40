#pragma once

// Histogram density estimation and simulated-annealing fits of fixed-family
// mixtures to it. The fitted weights seed the Markov state probabilities and
// the fitted components become the (frozen) per-state emissions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "lmsc/distributions.hpp"
#include "lmsc/error.hpp"
#include "lmsc/seed.hpp"

namespace lmsc {

struct EmpiricalPdf {
  std::vector<double> edges;    // B + 1 increasing bin edges
  std::vector<double> density;  // B densities

  std::size_t bins() const noexcept { return density.size(); }
  double center(std::size_t b) const { return 0.5 * (edges[b] + edges[b + 1]); }
  double width(std::size_t b) const { return edges[b + 1] - edges[b]; }
};

/// Normalized histogram on the given edges. Samples outside [edges.front(),
/// edges.back()] are ignored; the last bin is closed on the right.
inline EmpiricalPdf empirical_pdf(std::span<const double> obs, std::vector<double> edges) {
  if (obs.empty()) throw Error(ErrorKind::invalid_input, "observation sequence is empty");
  if (edges.size() < 2) throw Error(ErrorKind::invalid_input, "need at least one bin");
  for (std::size_t k = 1; k < edges.size(); ++k) {
    if (!(edges[k] > edges[k - 1])) throw Error(ErrorKind::invalid_input, "bin edges must increase");
  }
  EmpiricalPdf hist{std::move(edges), {}};
  const std::size_t bins = hist.edges.size() - 1;
  std::vector<double> counts(bins, 0.0);
  double kept = 0.0;
  for (double r : obs) {
    if (!std::isfinite(r)) throw Error(ErrorKind::invalid_input, "non-finite sample");
    if (r < hist.edges.front() || r > hist.edges.back()) continue;
    auto it = std::upper_bound(hist.edges.begin(), hist.edges.end(), r);
    std::size_t b = static_cast<std::size_t>(it - hist.edges.begin());
    b = b == 0 ? 0 : std::min(b - 1, bins - 1);
    counts[b] += 1.0;
    kept += 1.0;
  }
  if (kept == 0.0) throw Error(ErrorKind::invalid_input, "no samples fall inside the bin range");
  hist.density.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) hist.density[b] = counts[b] / (kept * hist.width(b));
  return hist;
}

/// Histogram with `bins` equal-width bins spanning the sample range.
inline EmpiricalPdf empirical_pdf(std::span<const double> obs, std::size_t bins) {
  if (obs.empty()) throw Error(ErrorKind::invalid_input, "observation sequence is empty");
  if (bins < 1) throw Error(ErrorKind::invalid_input, "need at least one bin");
  const auto [lo_it, hi_it] = std::minmax_element(obs.begin(), obs.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<double> edges(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) {
    edges[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(bins);
  }
  edges.back() = hi;
  return empirical_pdf(obs, std::move(edges));
}

struct MixtureModel {
  std::vector<double> weights;
  std::vector<EmissionDistribution> components;

  void validate() const {
    if (components.empty()) throw Error(ErrorKind::invalid_input, "mixture needs a component");
    validate_weights(weights, components.size(), "mixture weights");
    for (const auto& c : components) lmsc::validate(c);
  }

  double pdf(double r) const { return mixture_pdf(weights, components, r); }

  friend bool operator==(const MixtureModel&, const MixtureModel&) = default;
};

/// Mixture weights, read as Markov state probabilities.
inline std::vector<double> state_probabilities(const MixtureModel& mix) {
  mix.validate();
  return mix.weights;
}

/// Random-walk proposal deviations by parameter role. Zero means derive from
/// the target histogram (1% of its range for amplitudes, 0.02 otherwise).
struct ProposalScales {
  double location = 0.0;      // gaussian mu, rice nu
  double scale = 0.0;         // gaussian/rayleigh/rice sigma
  double log_location = 0.0;  // lognormal mu_log
  double log_scale = 0.0;     // lognormal sigma_log
  double weight = 0.0;
};

struct SaConfig {
  std::optional<double> initial_temperature;  // default: stddev of 100 probe objectives
  double cooling_factor = 0.95;
  std::size_t steps_per_temperature = 200;
  std::optional<double> min_temperature;  // default: 1e-6 * initial
  ProposalScales proposal_scales;
  std::uint64_t seed = 1;
  std::size_t retry_budget = 100;

  void validate() const {
    if (!(cooling_factor > 0.0 && cooling_factor < 1.0)) {
      throw Error(ErrorKind::invalid_input, "cooling factor must lie in (0, 1)");
    }
    if (steps_per_temperature < 1) throw Error(ErrorKind::invalid_input, "steps per temperature must be >= 1");
    if (initial_temperature && !(*initial_temperature > 0.0)) {
      throw Error(ErrorKind::invalid_input, "initial temperature must be > 0");
    }
    if (min_temperature && !(*min_temperature > 0.0)) {
      throw Error(ErrorKind::invalid_input, "min temperature must be > 0");
    }
  }
};

struct SaResult {
  MixtureModel mixture;
  double objective = 0.0;
  double initial_objective = 0.0;
  double initial_temperature = 0.0;
  std::size_t proposals = 0;
};

namespace detail {

enum class Role { location, scale, log_location, log_scale };

inline std::vector<double> parameters_of(const EmissionDistribution& d) {
  return std::visit(overloaded{
                        [](const Gaussian& g) { return std::vector{g.mu, g.sigma}; },
                        [](const Rayleigh& g) { return std::vector{g.sigma}; },
                        [](const Rice& g) { return std::vector{g.nu, g.sigma}; },
                        [](const Lognormal& g) { return std::vector{g.mu_log, g.sigma_log}; },
                    },
                    d);
}

inline std::vector<Role> roles_of(Family f) {
  switch (f) {
    case Family::gaussian: return {Role::location, Role::scale};
    case Family::rayleigh: return {Role::scale};
    case Family::rice: return {Role::location, Role::scale};
    case Family::lognormal: return {Role::log_location, Role::log_scale};
  }
  return {};
}

inline EmissionDistribution make_distribution(Family f, std::span<const double> p) {
  switch (f) {
    case Family::gaussian: return Gaussian{p[0], p[1]};
    case Family::rayleigh: return Rayleigh{p[0]};
    case Family::rice: return Rice{p[0], p[1]};
    case Family::lognormal: return Lognormal{p[0], p[1]};
  }
  return Gaussian{};
}

inline bool in_domain(Role role, double v) {
  if (!std::isfinite(v)) return false;
  return role == Role::scale || role == Role::log_scale ? v > 0.0 : true;
}

inline double histogram_quantile(const EmpiricalPdf& target, double q) {
  double acc = 0.0;
  for (std::size_t b = 0; b < target.bins(); ++b) {
    const double mass = target.density[b] * target.width(b);
    if (acc + mass >= q && mass > 0.0) return target.edges[b] + target.width(b) * (q - acc) / mass;
    acc += mass;
  }
  return target.edges.back();
}

// Working state of one annealing run; keeps each component's density at the
// bin centers so a proposal touching one component re-evaluates only it.
class MixtureState {
 public:
  MixtureState(const EmpiricalPdf& target, std::vector<Family> families, std::vector<double> weights,
               std::vector<std::vector<double>> params)
      : target_(&target), families_(std::move(families)), weights_(std::move(weights)), params_(std::move(params)) {
    values_.assign(families_.size(), std::vector<double>(target.bins()));
    for (std::size_t k = 0; k < families_.size(); ++k) refresh(k);
  }

  std::size_t components() const noexcept { return families_.size(); }
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& params(std::size_t k) { return params_[k]; }
  Family family(std::size_t k) const { return families_[k]; }

  void refresh(std::size_t k) {
    const EmissionDistribution d = make_distribution(families_[k], params_[k]);
    for (std::size_t b = 0; b < target_->bins(); ++b) values_[k][b] = pdf(d, target_->center(b));
  }

  double objective() const {
    double sse = 0.0;
    for (std::size_t b = 0; b < target_->bins(); ++b) {
      double model = 0.0;
      for (std::size_t k = 0; k < families_.size(); ++k) model += weights_[k] * values_[k][b];
      const double diff = model - target_->density[b];
      sse += diff * diff;
    }
    return sse / static_cast<double>(target_->bins());
  }

  MixtureModel mixture() const {
    MixtureModel mix{weights_, {}};
    for (std::size_t k = 0; k < families_.size(); ++k) {
      mix.components.push_back(make_distribution(families_[k], params_[k]));
    }
    return mix;
  }

 private:
  const EmpiricalPdf* target_;
  std::vector<Family> families_;
  std::vector<double> weights_;
  std::vector<std::vector<double>> params_;
  std::vector<std::vector<double>> values_;
};

}  // namespace detail

/// Uniform weights; component k sits at the (k + 1/2)/K quantile of the
/// histogram with a width derived from the histogram spread.
inline MixtureModel initial_mixture(const EmpiricalPdf& target, std::span<const Family> families) {
  const std::size_t K = families.size();
  if (K == 0) throw Error(ErrorKind::invalid_input, "need at least one family");
  double mean = 0.0;
  double second = 0.0;
  for (std::size_t b = 0; b < target.bins(); ++b) {
    const double mass = target.density[b] * target.width(b);
    mean += mass * target.center(b);
    second += mass * target.center(b) * target.center(b);
  }
  const double range = target.edges.back() - target.edges.front();
  const double spread = std::max(std::sqrt(std::max(second - mean * mean, 0.0)), 1e-3 * range);
  const double floor = 1e-3 * range;

  MixtureModel mix{std::vector<double>(K, 1.0 / static_cast<double>(K)), {}};
  for (std::size_t k = 0; k < K; ++k) {
    const double q = detail::histogram_quantile(target, (static_cast<double>(k) + 0.5) / static_cast<double>(K));
    const double width = spread / static_cast<double>(K);
    const double positive_q = std::max(q, floor);
    switch (families[k]) {
      case Family::gaussian: mix.components.push_back(Gaussian{q, width}); break;
      case Family::rayleigh: mix.components.push_back(Rayleigh{positive_q / std::sqrt(2.0 * std::log(2.0))}); break;
      case Family::rice: mix.components.push_back(Rice{std::max(q, 0.0), width}); break;
      case Family::lognormal:
        mix.components.push_back(Lognormal{std::log(positive_q), std::clamp(width / positive_q, 0.05, 2.0)});
        break;
    }
  }
  return mix;
}

/// Metropolis annealing on the mean squared difference between the mixture
/// density and the histogram at bin centers, with geometric cooling. Returns
/// the best mixture visited.
inline SaResult fit_mixture_sa(const EmpiricalPdf& target, std::span<const Family> families,
                               const SaConfig& cfg) {
  cfg.validate();
  if (families.empty()) throw Error(ErrorKind::invalid_input, "need at least one family");
  if (target.bins() == 0) throw Error(ErrorKind::invalid_input, "empty target histogram");

  const MixtureModel start = initial_mixture(target, families);
  std::vector<std::vector<double>> params;
  for (const auto& c : start.components) params.push_back(detail::parameters_of(c));
  detail::MixtureState state(target, {families.begin(), families.end()}, start.weights, params);

  const double range = target.edges.back() - target.edges.front();
  ProposalScales scales = cfg.proposal_scales;
  if (scales.location <= 0.0) scales.location = 0.01 * range;
  if (scales.scale <= 0.0) scales.scale = 0.01 * range;
  if (scales.log_location <= 0.0) scales.log_location = 0.02;
  if (scales.log_scale <= 0.0) scales.log_scale = 0.02;
  if (scales.weight <= 0.0) scales.weight = 0.02;
  auto scale_for = [&](detail::Role role) {
    switch (role) {
      case detail::Role::location: return scales.location;
      case detail::Role::scale: return scales.scale;
      case detail::Role::log_location: return scales.log_location;
      case detail::Role::log_scale: return scales.log_scale;
    }
    return scales.location;
  };

  // Coordinates: every component parameter, then every weight (if K > 1).
  struct Coordinate {
    std::size_t component;
    std::ptrdiff_t param;  // -1 for the weight
  };
  std::vector<Coordinate> coords;
  for (std::size_t k = 0; k < state.components(); ++k) {
    for (std::size_t p = 0; p < params[k].size(); ++p) coords.push_back({k, static_cast<std::ptrdiff_t>(p)});
  }
  if (state.components() > 1) {
    for (std::size_t k = 0; k < state.components(); ++k) coords.push_back({k, -1});
  }

  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, coords.size() - 1);

  struct Undo {
    Coordinate coord;
    double old_value;
    std::vector<double> old_weights;
  };

  std::size_t proposals = 0;
  // Applies one in-domain random-walk move to `state`; returns how to undo it.
  auto propose = [&]() -> Undo {
    for (std::size_t attempt = 0; attempt <= cfg.retry_budget; ++attempt) {
      const Coordinate c = coords[pick(rng)];
      if (c.param < 0) {
        auto& w = state.weights();
        const double moved = w[c.component] + scales.weight * normal(rng);
        if (!(moved > 0.0)) continue;
        Undo undo{c, 0.0, w};
        w[c.component] = moved;
        double total = 0.0;
        for (double v : w) total += v;
        for (double& v : w) v /= total;
        ++proposals;
        return undo;
      }
      auto& p = state.params(c.component);
      const auto role = detail::roles_of(state.family(c.component))[static_cast<std::size_t>(c.param)];
      double moved = p[static_cast<std::size_t>(c.param)] + scale_for(role) * normal(rng);
      if (state.family(c.component) == Family::rice && role == detail::Role::location && moved < 0.0) continue;
      if (!detail::in_domain(role, moved)) continue;
      Undo undo{c, p[static_cast<std::size_t>(c.param)], {}};
      p[static_cast<std::size_t>(c.param)] = moved;
      state.refresh(c.component);
      ++proposals;
      return undo;
    }
    throw Error(ErrorKind::non_finite_objective, "proposal retry budget exhausted");
  };
  auto revert = [&](const Undo& undo) {
    if (undo.coord.param < 0) {
      state.weights() = undo.old_weights;
    } else {
      state.params(undo.coord.component)[static_cast<std::size_t>(undo.coord.param)] = undo.old_value;
      state.refresh(undo.coord.component);
    }
  };

  double current = state.objective();
  if (!std::isfinite(current)) throw Error(ErrorKind::non_finite_objective, "initial mixture objective");
  SaResult result{state.mixture(), current, current, 0.0, 0};

  double temperature = 0.0;
  if (cfg.initial_temperature) {
    temperature = *cfg.initial_temperature;
  } else {
    double sum = 0.0;
    double sum_sq = 0.0;
    constexpr int probes = 100;
    for (int k = 0; k < probes; ++k) {
      const Undo undo = propose();
      const double value = state.objective();
      sum += value;
      sum_sq += value * value;
      revert(undo);
    }
    const double mean = sum / probes;
    temperature = std::sqrt(std::max(sum_sq / probes - mean * mean, 0.0));
    if (!(temperature > 0.0)) temperature = std::max(1e-12, 0.1 * current);
  }
  result.initial_temperature = temperature;
  const double min_temperature = cfg.min_temperature.value_or(1e-6 * temperature);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  do {
    for (std::size_t step = 0; step < cfg.steps_per_temperature; ++step) {
      const Undo undo = propose();
      const double candidate = state.objective();
      const double delta = candidate - current;
      if (std::isfinite(candidate) && (delta <= 0.0 || unit(rng) < std::exp(-delta / temperature))) {
        current = candidate;
        if (current < result.objective) {
          result.objective = current;
          result.mixture = state.mixture();
        }
      } else {
        revert(undo);
      }
    }
    temperature *= cfg.cooling_factor;
  } while (temperature >= min_temperature);

  result.proposals = proposals;
  return result;
}

/// Independent annealing runs with seeds derived from cfg.seed; keeps the best.
inline SaResult fit_mixture_sa(const EmpiricalPdf& target, std::span<const Family> families, const SaConfig& cfg,
                               std::size_t restarts) {
  if (restarts < 1) throw Error(ErrorKind::invalid_input, "restarts must be >= 1");
  std::optional<SaResult> best;
  for (std::size_t r = 0; r < restarts; ++r) {
    SaConfig run = cfg;
    run.seed = restarts == 1 ? cfg.seed : derive_seed(cfg.seed, r);
    SaResult res = fit_mixture_sa(target, families, run);
    if (!best || res.objective < best->objective) best = std::move(res);
  }
  return *best;
}

}  // namespace lmsc
