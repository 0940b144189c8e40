#pragma once

// Finite-state Markov chains: stationary analysis, dwell times and joint
// simulation of hidden states with their emitted amplitudes.
//
// States are 0-based in memory. Files and user-facing reports use 1-based
// indices.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmsc/distributions.hpp"
#include "lmsc/error.hpp"
#include "lmsc/observation.hpp"
#include "lmsc/table.hpp"

namespace lmsc {

using StatePath = std::vector<std::size_t>;

struct MarkovChain {
  Table transition;             // p_ij, row-stochastic
  std::vector<double> initial;  // p_i

  std::size_t states() const noexcept { return initial.size(); }

  void validate() const {
    const std::size_t m = states();
    if (m == 0) throw Error(ErrorKind::invalid_input, "chain needs at least one state");
    if (transition.rows() != m || transition.cols() != m) {
      throw Error(ErrorKind::invalid_input, "transition matrix must be m x m with m = initial.size()");
    }
    for (std::size_t i = 0; i < m; ++i) validate_weights(transition.row(i), m, "transition row");
    validate_weights(initial, m, "initial probabilities");
  }

  friend bool operator==(const MarkovChain&, const MarkovChain&) = default;
};

/// Chain whose rows keep `self` on the diagonal and split the rest evenly.
/// self = 1/m gives the fully uniform matrix.
inline MarkovChain uniform_chain(std::size_t m, double self, std::vector<double> initial = {}) {
  if (m == 0) throw Error(ErrorKind::invalid_input, "chain needs at least one state");
  MarkovChain chain{Table(m, m), std::move(initial)};
  if (chain.initial.empty()) chain.initial.assign(m, 1.0 / static_cast<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      chain.transition(i, j) = m == 1 ? 1.0 : (i == j ? self : (1.0 - self) / static_cast<double>(m - 1));
    }
  }
  chain.validate();
  return chain;
}

/// Solves (P^T - I) pi = 0 with one equation replaced by sum(pi) = 1.
inline std::vector<double> stationary_distribution(const MarkovChain& chain) {
  chain.validate();
  const std::size_t m = chain.states();
  Table a(m, m);
  std::vector<double> b(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) a(i, j) = chain.transition(j, i) - (i == j ? 1.0 : 0.0);
  }
  for (std::size_t j = 0; j < m; ++j) a(m - 1, j) = 1.0;
  b[m - 1] = 1.0;

  // Gaussian elimination with partial pivoting.
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < m; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (std::abs(a(pivot, col)) < 1e-12) {
      throw Error(ErrorKind::ambiguous_stationary, "chain has no unique stationary distribution");
    }
    if (pivot != col) {
      for (std::size_t j = 0; j < m; ++j) std::swap(a(col, j), a(pivot, j));
      std::swap(b[col], b[pivot]);
    }
    for (std::size_t r = col + 1; r < m; ++r) {
      const double factor = a(r, col) / a(col, col);
      if (factor == 0.0) continue;
      for (std::size_t j = col; j < m; ++j) a(r, j) -= factor * a(col, j);
      b[r] -= factor * b[col];
    }
  }
  std::vector<double> pi(m);
  for (std::size_t k = m; k-- > 0;) {
    double acc = b[k];
    for (std::size_t j = k + 1; j < m; ++j) acc -= a(k, j) * pi[j];
    pi[k] = acc / a(k, k);
  }
  for (double& v : pi) v = std::max(v, 0.0);
  double total = 0.0;
  for (double v : pi) total += v;
  for (double& v : pi) v /= total;
  return pi;
}

/// D_i = 1 / (1 - p_ii), in samples per visit.
inline std::vector<double> mean_state_durations(const MarkovChain& chain) {
  const std::size_t m = chain.states();
  std::vector<double> durations(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double stay = chain.transition(i, i);
    if (stay >= 1.0) {
      throw Error(ErrorKind::infinite_duration, "state " + std::to_string(i + 1) + " is absorbing");
    }
    durations[i] = 1.0 / (1.0 - stay);
  }
  return durations;
}

inline std::size_t draw_index(std::span<const double> probabilities, Rng& rng) {
  const double u = std::generate_canonical<double, 53>(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < probabilities.size(); ++k) {
    acc += probabilities[k];
    if (u < acc) return k;
  }
  // Rounding can leave the cumulative sum a hair below one.
  for (std::size_t k = probabilities.size(); k-- > 0;) {
    if (probabilities[k] > 0.0) return k;
  }
  return 0;
}

struct Simulation {
  StatePath states;
  ObservationSequence observations;
};

inline Simulation simulate(const MarkovChain& chain, std::span<const EmissionDistribution> emissions,
                           std::size_t n, Rng& rng) {
  chain.validate();
  if (emissions.size() != chain.states()) {
    throw Error(ErrorKind::invalid_input, "need one emission distribution per state");
  }
  if (n == 0) throw Error(ErrorKind::invalid_input, "simulation length must be >= 1");
  for (const auto& e : emissions) validate(e);

  Simulation sim;
  sim.states.resize(n);
  sim.observations.values.resize(n);
  std::size_t state = draw_index(chain.initial, rng);
  for (std::size_t t = 0; t < n; ++t) {
    if (t > 0) state = draw_index(chain.transition.row(state), rng);
    sim.states[t] = state;
    sim.observations.values[t] = sample(emissions[state], rng);
  }
  sim.observations.source = "simulation";
  return sim;
}

/// Relabels every run shorter than `min_run` samples with the state of the
/// preceding run (a leading short run takes the following run's state).
/// min_run <= 1 leaves the path unchanged.
inline StatePath merge_short_runs(const StatePath& path, std::size_t min_run) {
  if (min_run <= 1 || path.empty()) return path;
  struct Run {
    std::size_t state;
    std::size_t length;
  };
  std::vector<Run> runs;
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (runs.empty() || runs.back().state != path[t]) runs.push_back({path[t], 0});
    ++runs.back().length;
  }
  std::vector<Run> merged;
  std::size_t pending = 0;
  for (const Run& run : runs) {
    if (run.length < min_run) {
      if (merged.empty()) pending += run.length;
      else merged.back().length += run.length;
      continue;
    }
    if (!merged.empty() && merged.back().state == run.state) {
      merged.back().length += run.length;
    } else {
      merged.push_back({run.state, run.length + pending});
      pending = 0;
    }
  }
  if (merged.empty()) return path;  // every run is short
  StatePath out;
  out.reserve(path.size());
  for (const Run& run : merged) out.insert(out.end(), run.length, run.state);
  return out;
}

/// Mean length of maximal runs per state; 0 for states never visited.
inline std::vector<double> mean_run_lengths(const StatePath& path, std::size_t m) {
  std::vector<double> total(m, 0.0);
  std::vector<double> count(m, 0.0);
  for (std::size_t t = 0; t < path.size(); ++t) {
    total[path[t]] += 1.0;
    if (t == 0 || path[t] != path[t - 1]) count[path[t]] += 1.0;
  }
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (count[i] > 0.0) out[i] = total[i] / count[i];
  }
  return out;
}

}  // namespace lmsc
