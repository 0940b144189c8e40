#pragma once

// Log-domain forward-backward inference and Baum-Welch re-estimation of the
// transition matrix and initial-state probabilities. Emission densities are
// supplied by the caller and never modified.
//
// Notation in comments: alpha/beta/gamma/zeta are natural logs of the forward
// metric, backward metric, state posterior and transition posterior. Sums of
// probabilities become max* (log-sum-exp) folds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lmsc/distributions.hpp"
#include "lmsc/error.hpp"
#include "lmsc/markov.hpp"
#include "lmsc/table.hpp"

namespace lmsc {

/// ln(e^a + e^b) as max(a, b) + ln(1 + e^-|a-b|). The correction is dropped
/// once |a - b| > 37, where it is below double resolution.
inline double max_star(double a, double b) noexcept {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  const double diff = std::abs(a - b);
  const double hi = a > b ? a : b;
  if (diff > 37.0) return hi;
  return hi + std::log1p(std::exp(-diff));
}

/// Left fold of max* over the values; -inf for an empty range.
inline double max_star(std::span<const double> values) noexcept {
  double acc = neg_inf;
  for (double v : values) acc = max_star(acc, v);
  return acc;
}

struct HmmModel {
  MarkovChain chain;
  std::vector<EmissionDistribution> emissions;

  std::size_t states() const noexcept { return chain.states(); }

  void validate() const {
    chain.validate();
    if (emissions.size() != chain.states()) {
      throw Error(ErrorKind::invalid_input, "need one emission distribution per state");
    }
    for (const auto& e : emissions) lmsc::validate(e);
  }

  friend bool operator==(const HmmModel&, const HmmModel&) = default;
};

struct ForwardPass {
  Table alpha;
  double log_likelihood = neg_inf;
};

struct PosteriorTables {
  Table alpha;
  Table beta;
  Table gamma;
  double log_likelihood = neg_inf;
};

struct Reestimation {
  HmmModel model;
  double log_likelihood = neg_inf;  // of the input model
  PosteriorTables posteriors;       // E-step under the input model
};

struct FitOptions {
  std::size_t max_iters = 100;
  double tol = 1e-6;
};

/// trace[k] is the log-likelihood of the model entering iteration k; `model`
/// is the output of the last M-step.
struct FitReport {
  HmmModel model;
  std::vector<double> log_likelihood_trace;
  std::size_t iterations = 0;
  bool converged = false;
  FitOptions options;
};

/// phi(t, i) = ln f_i(r_t). Fails if some sample has zero density under every state.
inline Table emission_log_table(const HmmModel& model, std::span<const double> obs) {
  const std::size_t n = obs.size();
  const std::size_t m = model.states();
  Table phi(n, m);
  for (std::size_t t = 0; t < n; ++t) {
    bool possible = false;
    for (std::size_t i = 0; i < m; ++i) {
      phi(t, i) = log_pdf(model.emissions[i], obs[t]);
      possible = possible || phi(t, i) != neg_inf;
    }
    if (!possible) {
      throw Error(ErrorKind::zero_likelihood,
                  "sample " + std::to_string(t + 1) + " has zero density under every state");
    }
  }
  return phi;
}

inline Table log_transition(const MarkovChain& chain) {
  const std::size_t m = chain.states();
  Table out(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) out(i, j) = std::log(chain.transition(i, j));
  }
  return out;
}

inline ForwardPass forward(const HmmModel& model, const Table& phi) {
  const std::size_t n = phi.rows();
  const std::size_t m = model.states();
  if (n == 0) throw Error(ErrorKind::invalid_input, "observation sequence is empty");
  if (phi.cols() != m) throw Error(ErrorKind::invalid_input, "emission table width differs from state count");
  const Table log_p = log_transition(model.chain);

  ForwardPass pass{Table(n, m), neg_inf};
  Table& alpha = pass.alpha;
  for (std::size_t i = 0; i < m; ++i) alpha(0, i) = std::log(model.chain.initial[i]) + phi(0, i);
  for (std::size_t t = 1; t < n; ++t) {
    bool reachable = false;
    for (std::size_t i = 0; i < m; ++i) {
      double acc = neg_inf;
      for (std::size_t j = 0; j < m; ++j) acc = max_star(acc, alpha(t - 1, j) + log_p(j, i));
      alpha(t, i) = phi(t, i) + acc;
      reachable = reachable || alpha(t, i) != neg_inf;
    }
    if (!reachable) {
      throw Error(ErrorKind::zero_likelihood, "observation prefix up to sample " + std::to_string(t + 1) +
                                                  " is impossible under the model");
    }
  }
  pass.log_likelihood = max_star(alpha.row(n - 1));
  if (pass.log_likelihood == neg_inf) {
    throw Error(ErrorKind::zero_likelihood, "observation sequence is impossible under the model");
  }
  return pass;
}

inline ForwardPass forward(const HmmModel& model, std::span<const double> obs) {
  model.validate();
  return forward(model, emission_log_table(model, obs));
}

inline Table backward(const HmmModel& model, const Table& phi) {
  const std::size_t n = phi.rows();
  const std::size_t m = model.states();
  if (n == 0) throw Error(ErrorKind::invalid_input, "observation sequence is empty");
  if (phi.cols() != m) throw Error(ErrorKind::invalid_input, "emission table width differs from state count");
  const Table log_p = log_transition(model.chain);

  Table beta(n, m, 0.0);
  std::vector<double> ahead(m);
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t j = 0; j < m; ++j) ahead[j] = beta(t + 1, j) + phi(t + 1, j);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = neg_inf;
      for (std::size_t j = 0; j < m; ++j) acc = max_star(acc, ahead[j] + log_p(i, j));
      beta(t, i) = acc;
    }
  }
  return beta;
}

inline Table backward(const HmmModel& model, std::span<const double> obs) {
  model.validate();
  return backward(model, emission_log_table(model, obs));
}

/// gamma(t, i) = alpha + beta - max*_i(alpha + beta).
inline Table posteriors(const Table& alpha, const Table& beta) {
  if (alpha.rows() != beta.rows() || alpha.cols() != beta.cols()) {
    throw Error(ErrorKind::invalid_input, "alpha and beta tables differ in shape");
  }
  const std::size_t n = alpha.rows();
  const std::size_t m = alpha.cols();
  Table gamma(n, m);
  for (std::size_t t = 0; t < n; ++t) {
    double norm = neg_inf;
    for (std::size_t i = 0; i < m; ++i) {
      gamma(t, i) = alpha(t, i) + beta(t, i);
      norm = max_star(norm, gamma(t, i));
    }
    for (std::size_t i = 0; i < m; ++i) gamma(t, i) -= norm;
  }
  return gamma;
}

/// zeta_t(i, j) for one t in [0, n-2], normalized over (i, j).
inline Table transition_posteriors(const HmmModel& model, const Table& phi, const PosteriorTables& post,
                                   std::size_t t) {
  const std::size_t m = model.states();
  if (t + 1 >= phi.rows()) throw Error(ErrorKind::invalid_input, "transition posterior index out of range");
  const Table log_p = log_transition(model.chain);
  Table zeta(m, m);
  double norm = neg_inf;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      zeta(i, j) = post.alpha(t, i) + log_p(i, j) + phi(t + 1, j) + post.beta(t + 1, j);
      norm = max_star(norm, zeta(i, j));
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) zeta(i, j) -= norm;
  }
  return zeta;
}

inline PosteriorTables infer(const HmmModel& model, const Table& phi) {
  ForwardPass fwd = forward(model, phi);
  PosteriorTables post;
  post.beta = backward(model, phi);
  post.gamma = posteriors(fwd.alpha, post.beta);
  post.alpha = std::move(fwd.alpha);
  post.log_likelihood = fwd.log_likelihood;
  return post;
}

inline PosteriorTables infer(const HmmModel& model, std::span<const double> obs) {
  model.validate();
  return infer(model, emission_log_table(model, obs));
}

/// Per-sample MAP state; ties go to the lowest index.
inline StatePath decode(const Table& gamma) {
  StatePath path(gamma.rows(), 0);
  for (std::size_t t = 0; t < gamma.rows(); ++t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < gamma.cols(); ++i) {
      if (gamma(t, i) > gamma(t, best)) best = i;
    }
    path[t] = best;
  }
  return path;
}

namespace detail {

// Exponentiates log-probabilities and removes the rounding drift from the sum.
inline void normalize_from_log(std::span<const double> logs, std::span<double> out) {
  double total = 0.0;
  for (std::size_t k = 0; k < logs.size(); ++k) {
    out[k] = std::exp(logs[k]);
    total += out[k];
  }
  for (double& v : out) v /= total;
}

}  // namespace detail

/// One E-step (forward-backward under `model`) and M-step (new p_ij and p_i
/// from accumulated zeta). `phi` must come from `model`'s emissions.
inline Reestimation reestimate(const HmmModel& model, const Table& phi) {
  const std::size_t n = phi.rows();
  const std::size_t m = model.states();
  if (n < 2) throw Error(ErrorKind::invalid_input, "re-estimation needs at least two samples");

  Reestimation out{model, neg_inf, infer(model, phi)};
  out.log_likelihood = out.posteriors.log_likelihood;
  const Table& alpha = out.posteriors.alpha;
  const Table& beta = out.posteriors.beta;
  const Table log_p = log_transition(model.chain);

  // numerator(i, j) = max*_t zeta_t(i, j); first(i, j) = zeta_1(i, j).
  Table numerator(m, m, neg_inf);
  Table first(m, m);
  Table zeta(m, m);
  for (std::size_t t = 0; t + 1 < n; ++t) {
    double norm = neg_inf;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        zeta(i, j) = alpha(t, i) + log_p(i, j) + phi(t + 1, j) + beta(t + 1, j);
        norm = max_star(norm, zeta(i, j));
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double z = zeta(i, j) - norm;
        numerator(i, j) = max_star(numerator(i, j), z);
        if (t == 0) first(i, j) = z;
      }
    }
  }

  MarkovChain& chain = out.model.chain;
  std::vector<double> row_logs(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double denominator = max_star(numerator.row(i));
    if (denominator == neg_inf) continue;  // state never occupied before n: keep its row
    for (std::size_t j = 0; j < m; ++j) row_logs[j] = numerator(i, j) - denominator;
    detail::normalize_from_log(row_logs, chain.transition.row(i));
  }
  for (std::size_t i = 0; i < m; ++i) row_logs[i] = max_star(first.row(i));
  detail::normalize_from_log(row_logs, chain.initial);
  return out;
}

inline Reestimation reestimate(const HmmModel& model, std::span<const double> obs) {
  model.validate();
  return reestimate(model, emission_log_table(model, obs));
}

/// Iterates re-estimation until the log-likelihood improves by less than
/// `tol` or `max_iters` steps have run.
inline FitReport fit(const HmmModel& model0, std::span<const double> obs, const FitOptions& options = {}) {
  if (options.max_iters < 1) throw Error(ErrorKind::invalid_input, "max_iters must be >= 1");
  if (!(options.tol > 0.0)) throw Error(ErrorKind::invalid_input, "tol must be > 0");
  model0.validate();
  const Table phi = emission_log_table(model0, obs);

  FitReport report{model0, {}, 0, false, options};
  report.log_likelihood_trace.reserve(options.max_iters);
  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    Reestimation step = reestimate(report.model, phi);
    report.model = std::move(step.model);
    report.log_likelihood_trace.push_back(step.log_likelihood);
    report.iterations = iter + 1;
    const auto& trace = report.log_likelihood_trace;
    if (trace.size() >= 2 && std::abs(trace.back() - trace[trace.size() - 2]) < options.tol) {
      report.converged = true;
      break;
    }
  }
  return report;
}

}  // namespace lmsc
