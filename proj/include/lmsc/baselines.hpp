#pragma once

// Amplitude-threshold state classification (optionally on a moving-average
// filtered trace), empirical chain estimation from labels, and label scoring.
// These are the reference methods Baum-Welch is compared against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lmsc/distributions.hpp"
#include "lmsc/error.hpp"
#include "lmsc/markov.hpp"

namespace lmsc {

/// States are ordered by ascending amplitude: a sample r is labeled k
/// (0-based) when thresholds[k-1] <= r < thresholds[k]. A sample equal to a
/// threshold goes to the upper state.
struct ThresholdClassifier {
  std::vector<double> thresholds;
  std::size_t filter_span = 1;

  std::size_t states() const noexcept { return thresholds.size() + 1; }

  void validate() const {
    if (filter_span < 1) throw Error(ErrorKind::invalid_input, "filter span must be >= 1");
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      if (!std::isfinite(thresholds[k])) throw Error(ErrorKind::invalid_input, "threshold must be finite");
      if (k > 0 && !(thresholds[k] > thresholds[k - 1])) {
        throw Error(ErrorKind::invalid_input, "thresholds must be strictly increasing");
      }
    }
  }
};

/// Minimum-error threshold between two equal-variance Gaussians with priors.
inline double optimal_threshold(double mu1, double mu2, double sigma, double p1, double p2) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::invalid_input, "sigma must be > 0");
  if (!(p1 > 0.0 && p2 > 0.0) || std::abs(p1 + p2 - 1.0) > 1e-9) {
    throw Error(ErrorKind::invalid_input, "priors must be positive and sum to 1");
  }
  if (mu1 == mu2) throw Error(ErrorKind::degenerate_separation, "means coincide");
  if (mu1 > mu2) throw Error(ErrorKind::invalid_input, "expected mu1 < mu2");
  return 0.5 * (mu1 + mu2) + sigma * sigma * std::log(p1 / p2) / (mu2 - mu1);
}

/// p1 * P(r >= tau | f1) + p2 * P(r < tau | f2), integrated numerically.
inline double average_error_probability(double tau, const EmissionDistribution& f1,
                                        const EmissionDistribution& f2, double p1, double p2) {
  validate(f1);
  validate(f2);
  if (std::isnan(tau)) throw Error(ErrorKind::invalid_input, "threshold is NaN");
  if (p1 < 0.0 || p2 < 0.0 || std::abs(p1 + p2 - 1.0) > 1e-9) {
    throw Error(ErrorKind::invalid_input, "priors must be non-negative and sum to 1");
  }
  const double inf = std::numeric_limits<double>::infinity();
  const double mass1 = probability_mass(f1, -inf, inf);
  const double mass2 = probability_mass(f2, -inf, inf);
  if (mass1 < 0.999 || mass2 < 0.999) {
    throw Error(ErrorKind::integration_coverage, "quadrature does not capture the densities");
  }
  const double pe = p1 * probability_mass(f1, tau, inf) + p2 * probability_mass(f2, -inf, tau);
  return std::clamp(pe, 0.0, 1.0);
}

/// Centered moving average that keeps length n by shrinking the window at
/// the edges. Odd spans cover [t - (s-1)/2, t + (s-1)/2]; even spans cover
/// [t - s/2, t + s/2 - 1].
inline std::vector<double> moving_average(std::span<const double> obs, std::size_t span) {
  const std::size_t n = obs.size();
  if (span < 1) throw Error(ErrorKind::invalid_input, "span must be >= 1");
  if (span > n) throw Error(ErrorKind::invalid_input, "span exceeds sequence length");
  if (span == 1) return {obs.begin(), obs.end()};

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t t = 0; t < n; ++t) prefix[t + 1] = prefix[t] + obs[t];
  const std::size_t back = span / 2;
  const std::size_t ahead = span % 2 == 1 ? span / 2 : span / 2 - 1;
  std::vector<double> out(n);
  for (std::size_t t = 0; t < n; ++t) {
    const std::size_t lo = t >= back ? t - back : 0;
    const std::size_t hi = std::min(n - 1, t + ahead);
    out[t] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
  }
  return out;
}

inline StatePath classify(const ThresholdClassifier& classifier, std::span<const double> obs) {
  classifier.validate();
  const std::vector<double> filtered = moving_average(obs, classifier.filter_span);
  StatePath path(filtered.size());
  const auto& cuts = classifier.thresholds;
  for (std::size_t t = 0; t < filtered.size(); ++t) {
    path[t] = static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), filtered[t]) - cuts.begin());
  }
  return path;
}

struct LabelEstimate {
  MarkovChain chain;
  std::vector<bool> unvisited;  // rows with no outgoing transition, set uniform
};

/// Transition counts and state frequencies of a labeled path.
inline LabelEstimate estimate_from_labels(const StatePath& path, std::size_t m) {
  if (m == 0) throw Error(ErrorKind::invalid_input, "state count must be >= 1");
  if (path.size() < 2) throw Error(ErrorKind::invalid_input, "label path needs at least two samples");
  Table counts(m, m, 0.0);
  std::vector<double> visits(m, 0.0);
  for (std::size_t t = 0; t < path.size(); ++t) {
    if (path[t] >= m) throw Error(ErrorKind::invalid_input, "label out of range");
    visits[path[t]] += 1.0;
    if (t + 1 < path.size()) counts(path[t], path[t + 1]) += 1.0;
  }
  LabelEstimate est{MarkovChain{Table(m, m), std::vector<double>(m)}, std::vector<bool>(m, false)};
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = counts.row(i);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    est.unvisited[i] = total == 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      est.chain.transition(i, j) = total == 0.0 ? 1.0 / static_cast<double>(m) : row[j] / total;
    }
    est.chain.initial[i] = visits[i] / static_cast<double>(path.size());
  }
  return est;
}

inline double labeling_error_share(const StatePath& truth, const StatePath& estimate) {
  if (truth.size() != estimate.size()) throw Error(ErrorKind::invalid_input, "paths differ in length");
  if (truth.empty()) throw Error(ErrorKind::invalid_input, "paths are empty");
  std::size_t wrong = 0;
  for (std::size_t t = 0; t < truth.size(); ++t) wrong += truth[t] != estimate[t] ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(truth.size());
}

/// Thresholds for m states cut at mixture quantiles so that the fraction of
/// samples falling in each band equals that component's weight. Components
/// are ranked by mean amplitude; `state_of_rank[k]` maps band k back to the
/// component index.
struct QuantileCuts {
  std::vector<double> thresholds;
  std::vector<std::size_t> state_of_rank;
};

inline double mixture_cdf(std::span<const double> weights, std::span<const EmissionDistribution> dists,
                          double r) {
  const double inf = std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (std::size_t k = 0; k < dists.size(); ++k) acc += weights[k] * probability_mass(dists[k], -inf, r);
  return acc;
}

inline QuantileCuts quantile_thresholds(std::span<const double> weights,
                                        std::span<const EmissionDistribution> dists) {
  validate_weights(weights, dists.size(), "mixture weights");
  for (const auto& d : dists) validate(d);
  const std::size_t m = dists.size();
  QuantileCuts cuts;
  cuts.state_of_rank.resize(m);
  std::iota(cuts.state_of_rank.begin(), cuts.state_of_rank.end(), std::size_t{0});
  std::vector<double> means(m);
  for (std::size_t k = 0; k < m; ++k) means[k] = mean(dists[k]);
  std::stable_sort(cuts.state_of_rank.begin(), cuts.state_of_rank.end(),
                   [&](std::size_t a, std::size_t b) { return means[a] < means[b]; });

  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& d : dists) {
    const auto [a, b] = support_extent(d);
    lo = std::min(lo, a);
    hi = std::max(hi, b);
  }
  double cumulative = 0.0;
  for (std::size_t rank = 0; rank + 1 < m; ++rank) {
    cumulative += weights[cuts.state_of_rank[rank]];
    double a = cuts.thresholds.empty() ? lo : cuts.thresholds.back();
    double b = hi;
    for (int iter = 0; iter < 200 && b - a > 1e-12 * std::max(1.0, std::abs(b)); ++iter) {
      const double mid = 0.5 * (a + b);
      (mixture_cdf(weights, dists, mid) < cumulative ? a : b) = mid;
    }
    double cut = 0.5 * (a + b);
    if (!cuts.thresholds.empty() && !(cut > cuts.thresholds.back())) {
      cut = std::nextafter(cuts.thresholds.back(), std::numeric_limits<double>::infinity());
    }
    cuts.thresholds.push_back(cut);
  }
  return cuts;
}

/// Maps band labels from a quantile classifier back to component indices.
inline StatePath relabel(const StatePath& path, std::span<const std::size_t> state_of_rank) {
  StatePath out(path.size());
  for (std::size_t t = 0; t < path.size(); ++t) out[t] = state_of_rank[path[t]];
  return out;
}

}  // namespace lmsc
