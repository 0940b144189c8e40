#pragma once

// Experiment harness behind the lmsc command-line tool.
//
//   sweep     two-state Gaussian benchmark: Baum-Welch against threshold
//             classifiers over a grid of state-1 means
//   pipeline  histogram -> annealed mixture fit -> Baum-Welch -> dwell times,
//             on a measured trace or on the built-in synthetic trace
//   simulate, fit-bw, baseline, curve-fit   the individual stages
//
// Configs are JSON objects with "schema": 1. Every result carries the hash
// of the effective config (after command-line overrides, excluding the
// worker count) and the master seed. Per-task seeds are derived from the
// master seed, so outputs do not depend on the number of workers.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "lmsc/baselines.hpp"
#include "lmsc/distributions.hpp"
#include "lmsc/error.hpp"
#include "lmsc/fitting.hpp"
#include "lmsc/hmm.hpp"
#include "lmsc/markov.hpp"
#include "lmsc/preprocess.hpp"
#include "lmsc/seed.hpp"
#include "lmsc/serialize.hpp"

namespace lmsc {

// ---------------------------------------------------------------------------
// Configuration

struct BwSettings {
  std::size_t max_iters = 100;
  double tol = 1e-6;
  std::optional<double> init_self_transition;  // default 1/m: fully uniform P
};

struct BaselineSettings {
  std::vector<std::size_t> spans{1, 10, 20};
  std::vector<double> thresholds;  // empty: derive from the model
};

struct SweepSettings {
  std::vector<double> mu1{0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  double mu2 = 1.0;
  double sigma = 0.2;
  Table transition = Table::from_rows({{0.950, 0.050}, {0.025, 0.975}});
};

struct CurveFitSettings {
  std::vector<Family> families{Family::rayleigh, Family::lognormal, Family::rice};
  std::size_t bins = 200;
  std::size_t restarts = 4;
  SaConfig sa;
  std::optional<double> objective_ceiling;
};

/// Three-state land-mobile reference model: blockage (Rayleigh), shadowing
/// (lognormal) and line of sight (Rice), one state step per meter.
inline HmmModel default_synthetic_model() {
  const Table p = Table::from_rows({{0.960, 0.025, 0.015},   // blockage
                                    {0.110, 0.730, 0.160},   // shadowing
                                    {0.012, 0.028, 0.960}});  // line of sight
  MarkovChain chain{p, std::vector<double>(3, 1.0 / 3.0)};
  chain.initial = stationary_distribution(chain);
  return HmmModel{chain, {Rayleigh{0.12}, Lognormal{std::log(0.45), 0.35}, Rice{0.80, 0.15}}};
}

/// Trace generator standing in for drive-test data. The hidden chain steps
/// once per `cell_m` meters; each cell is sampled `samples_per_cell` times.
/// The first sample of a cell is a fresh draw and later ones repeat their
/// predecessor with `hold_probability`, giving correlated fast fading whose
/// per-state marginal is exact.
struct SyntheticTraceSettings {
  HmmModel model = default_synthetic_model();
  std::size_t cells = 200000;
  double cell_m = 1.0;
  std::size_t samples_per_cell = 4;
  double hold_probability = 0.7;
};

struct PipelineSettings {
  std::optional<std::string> trace_path;
  std::optional<SyntheticTraceSettings> synthetic;
  double spacing_m = 1.0;
  std::vector<std::size_t> baseline_spans{1, 10};
  std::size_t min_run = 1;  // threshold label runs shorter than this are merged
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t n = 100000;
  std::size_t workers = 1;
  std::optional<HmmModel> model;
  std::optional<std::string> observations;
  std::optional<std::string> trace;
  bool trace_in_db = false;
  BwSettings bw;
  BaselineSettings baseline;
  SweepSettings sweep;
  CurveFitSettings curve_fit;
  PipelineSettings pipeline;
  json effective;  // hashed form
  std::string hash;
};

namespace detail {

inline void check_keys(const json& j, const char* context, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(ErrorKind::config, std::string(context) + ": expected an object");
  std::set<std::string> names(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!names.count(key)) throw Error(ErrorKind::config, std::string(context) + ": unknown field '" + key + "'");
  }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const char* context) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorKind::config, std::string(context) + ": field '" + key + "' has the wrong type");
  }
}

inline std::size_t get_count(const json& j, const char* key, std::size_t fallback, const char* context) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
    throw Error(ErrorKind::config, std::string(context) + ": '" + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

inline std::vector<std::size_t> count_array(const json& j, const char* context) {
  std::vector<std::size_t> out;
  if (!j.is_array()) throw Error(ErrorKind::config, std::string(context) + ": expected an array");
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1) {
      throw Error(ErrorKind::config, std::string(context) + ": expected positive integers");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

inline SaConfig sa_from_json(const json& j) {
  check_keys(j, "curve_fit.sa",
             {"initial_temperature", "cooling_factor", "steps_per_temperature", "min_temperature", "proposal_scales",
              "seed", "retry_budget"});
  SaConfig sa;
  if (j.contains("initial_temperature")) sa.initial_temperature = get_or<double>(j, "initial_temperature", 0, "sa");
  if (j.contains("min_temperature")) sa.min_temperature = get_or<double>(j, "min_temperature", 0, "sa");
  sa.cooling_factor = get_or<double>(j, "cooling_factor", sa.cooling_factor, "sa");
  sa.steps_per_temperature = get_count(j, "steps_per_temperature", sa.steps_per_temperature, "sa");
  sa.retry_budget = get_count(j, "retry_budget", sa.retry_budget, "sa");
  sa.seed = get_or<std::uint64_t>(j, "seed", sa.seed, "sa");
  if (j.contains("proposal_scales")) {
    const json& s = j.at("proposal_scales");
    check_keys(s, "sa.proposal_scales", {"location", "scale", "log_location", "log_scale", "weight"});
    sa.proposal_scales.location = get_or<double>(s, "location", 0.0, "proposal_scales");
    sa.proposal_scales.scale = get_or<double>(s, "scale", 0.0, "proposal_scales");
    sa.proposal_scales.log_location = get_or<double>(s, "log_location", 0.0, "proposal_scales");
    sa.proposal_scales.log_scale = get_or<double>(s, "log_scale", 0.0, "proposal_scales");
    sa.proposal_scales.weight = get_or<double>(s, "weight", 0.0, "proposal_scales");
  }
  try {
    sa.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::config, e.what());
  }
  return sa;
}

}  // namespace detail

/// Parses and validates a schema-1 config. `seed_override` replaces "seed".
inline ExperimentConfig parse_config(json j, std::optional<std::uint64_t> seed_override = {},
                                     std::optional<std::size_t> workers_override = {}) {
  if (!j.is_object()) throw Error(ErrorKind::config, "config must be a JSON object");
  detail::check_keys(j, "config",
                     {"schema", "mode", "seed", "n", "workers", "model", "observations", "trace", "trace_in_db", "bw",
                      "baseline", "sweep", "curve_fit", "pipeline"});
  if (!j.contains("schema") || j.at("schema") != 1) throw Error(ErrorKind::config, "config must declare \"schema\": 1");
  if (seed_override) j["seed"] = *seed_override;

  ExperimentConfig cfg;
  cfg.seed = detail::get_or<std::uint64_t>(j, "seed", cfg.seed, "config");
  cfg.n = detail::get_count(j, "n", cfg.n, "config");
  cfg.workers = workers_override.value_or(detail::get_count(j, "workers", cfg.workers, "config"));
  if (cfg.n < 1) throw Error(ErrorKind::config, "n must be >= 1");
  if (cfg.workers < 1) cfg.workers = 1;
  if (j.contains("model")) cfg.model = model_from_json(j.at("model"));
  if (j.contains("observations")) cfg.observations = detail::get_or<std::string>(j, "observations", "", "config");
  if (j.contains("trace")) cfg.trace = detail::get_or<std::string>(j, "trace", "", "config");
  cfg.trace_in_db = detail::get_or<bool>(j, "trace_in_db", false, "config");

  if (j.contains("bw")) {
    const json& b = j.at("bw");
    detail::check_keys(b, "bw", {"max_iters", "tol", "init_self_transition"});
    cfg.bw.max_iters = detail::get_count(b, "max_iters", cfg.bw.max_iters, "bw");
    cfg.bw.tol = detail::get_or<double>(b, "tol", cfg.bw.tol, "bw");
    if (b.contains("init_self_transition")) {
      cfg.bw.init_self_transition = detail::get_or<double>(b, "init_self_transition", 0.5, "bw");
      const double s = *cfg.bw.init_self_transition;
      if (!(s >= 0.0 && s < 1.0)) throw Error(ErrorKind::config, "bw.init_self_transition must lie in [0, 1)");
    }
    if (cfg.bw.max_iters < 1 || !(cfg.bw.tol > 0.0)) {
      throw Error(ErrorKind::config, "bw needs max_iters >= 1 and tol > 0");
    }
  }
  if (j.contains("baseline")) {
    const json& b = j.at("baseline");
    detail::check_keys(b, "baseline", {"spans", "thresholds"});
    if (b.contains("spans")) cfg.baseline.spans = detail::count_array(b.at("spans"), "baseline.spans");
    if (b.contains("thresholds")) cfg.baseline.thresholds = detail::number_array(b.at("thresholds"), "baseline.thresholds");
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    detail::check_keys(s, "sweep", {"mu1", "mu2", "sigma", "transition"});
    if (s.contains("mu1")) cfg.sweep.mu1 = detail::number_array(s.at("mu1"), "sweep.mu1");
    cfg.sweep.mu2 = detail::get_or<double>(s, "mu2", cfg.sweep.mu2, "sweep");
    cfg.sweep.sigma = detail::get_or<double>(s, "sigma", cfg.sweep.sigma, "sweep");
    if (s.contains("transition")) cfg.sweep.transition = matrix_from_json(s.at("transition"), "sweep.transition");
    if (cfg.sweep.transition.rows() != 2) throw Error(ErrorKind::config, "sweep.transition must be 2 x 2");
    if (!(cfg.sweep.sigma > 0.0)) throw Error(ErrorKind::config, "sweep.sigma must be > 0");
    for (double mu : cfg.sweep.mu1) {
      if (!(mu < cfg.sweep.mu2)) throw Error(ErrorKind::config, "sweep.mu1 values must be below mu2");
    }
  }
  if (j.contains("curve_fit")) {
    const json& c = j.at("curve_fit");
    detail::check_keys(c, "curve_fit", {"families", "bins", "restarts", "sa", "objective_ceiling"});
    if (c.contains("families")) {
      cfg.curve_fit.families.clear();
      if (!c.at("families").is_array()) throw Error(ErrorKind::config, "curve_fit.families must be an array");
      for (const auto& f : c.at("families")) {
        try {
          cfg.curve_fit.families.push_back(parse_family(f.get<std::string>()));
        } catch (const std::exception& e) {
          throw Error(ErrorKind::config, std::string("curve_fit.families: ") + e.what());
        }
      }
      if (cfg.curve_fit.families.empty()) throw Error(ErrorKind::config, "curve_fit.families is empty");
    }
    cfg.curve_fit.bins = detail::get_count(c, "bins", cfg.curve_fit.bins, "curve_fit");
    cfg.curve_fit.restarts = detail::get_count(c, "restarts", cfg.curve_fit.restarts, "curve_fit");
    if (cfg.curve_fit.bins < 1 || cfg.curve_fit.restarts < 1) {
      throw Error(ErrorKind::config, "curve_fit needs bins >= 1 and restarts >= 1");
    }
    if (c.contains("sa")) cfg.curve_fit.sa = detail::sa_from_json(c.at("sa"));
    if (c.contains("objective_ceiling")) {
      cfg.curve_fit.objective_ceiling = detail::get_or<double>(c, "objective_ceiling", 0.0, "curve_fit");
    }
  }
  if (j.contains("pipeline")) {
    const json& p = j.at("pipeline");
    detail::check_keys(p, "pipeline", {"trace", "synthetic", "spacing_m", "baseline_spans", "min_run"});
    if (p.contains("trace")) cfg.pipeline.trace_path = detail::get_or<std::string>(p, "trace", "", "pipeline");
    if (p.contains("synthetic")) {
      const json& s = p.at("synthetic");
      detail::check_keys(s, "pipeline.synthetic", {"model", "cells", "cell_m", "samples_per_cell", "hold_probability"});
      SyntheticTraceSettings syn;
      if (s.contains("model")) syn.model = model_from_json(s.at("model"));
      syn.cells = detail::get_count(s, "cells", syn.cells, "pipeline.synthetic");
      syn.cell_m = detail::get_or<double>(s, "cell_m", syn.cell_m, "pipeline.synthetic");
      syn.samples_per_cell = detail::get_count(s, "samples_per_cell", syn.samples_per_cell, "pipeline.synthetic");
      syn.hold_probability = detail::get_or<double>(s, "hold_probability", syn.hold_probability, "pipeline.synthetic");
      if (syn.cells < 2 || syn.samples_per_cell < 1 || !(syn.cell_m > 0.0) ||
          !(syn.hold_probability >= 0.0 && syn.hold_probability <= 1.0)) {
        throw Error(ErrorKind::config, "pipeline.synthetic has out-of-range values");
      }
      cfg.pipeline.synthetic = syn;
    }
    cfg.pipeline.spacing_m = detail::get_or<double>(p, "spacing_m", cfg.pipeline.spacing_m, "pipeline");
    if (!(cfg.pipeline.spacing_m > 0.0)) throw Error(ErrorKind::config, "pipeline.spacing_m must be > 0");
    if (p.contains("baseline_spans")) {
      cfg.pipeline.baseline_spans = detail::count_array(p.at("baseline_spans"), "pipeline.baseline_spans");
    }
    cfg.pipeline.min_run = detail::get_count(p, "min_run", cfg.pipeline.min_run, "pipeline");
  }

  cfg.effective = j;
  cfg.effective.erase("workers");
  cfg.hash = config_hash(cfg.effective);
  return cfg;
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepRow {
  std::string method;
  double mu1 = 0.0;
  double bhattacharyya = 0.0;
  double p12_hat = 0.0;
  double p21_hat = 0.0;
  double p1_hat = 0.0;
  double error_share = 0.0;
  std::size_t iterations = 0;  // Baum-Welch only
  bool converged = false;      // Baum-Welch only
  std::string status = "ok";
  std::string config_hash;
  std::uint64_t seed = 0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepResult {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<SweepRow> rows;

  friend bool operator==(const SweepResult&, const SweepResult&) = default;
};

/// Everything computed for one grid point, for callers that need more than
/// the summary rows.
struct SweepPoint {
  std::vector<SweepRow> rows;
  Simulation simulation;
  FitReport bw;
  PosteriorTables posteriors;  // under the fitted model
  double threshold = 0.0;
};

inline std::string threshold_method_name(std::size_t span) { return "T" + std::to_string(span); }

inline SweepPoint evaluate_sweep_point(const SweepSettings& sweep, const BwSettings& bw,
                                       const std::vector<std::size_t>& spans, double mu1, std::size_t n,
                                       std::uint64_t seed) {
  MarkovChain truth{sweep.transition, {0.5, 0.5}};
  truth.initial = stationary_distribution(truth);
  const std::vector<EmissionDistribution> emissions{Gaussian{mu1, sweep.sigma}, Gaussian{sweep.mu2, sweep.sigma}};
  const double distance = bhattacharyya(emissions[0], emissions[1]);

  SweepPoint point;
  Rng rng(seed);
  point.simulation = simulate(truth, emissions, n, rng);
  const auto& obs = point.simulation.observations.values;
  const auto& states = point.simulation.states;

  const HmmModel start{uniform_chain(2, bw.init_self_transition.value_or(0.5)), emissions};
  point.bw = fit(start, obs, {bw.max_iters, bw.tol});
  point.posteriors = infer(point.bw.model, obs);
  const auto& fitted = point.bw.model.chain;
  SweepRow bw_row{"BW", mu1, distance, fitted.transition(0, 1), fitted.transition(1, 0),
                  stationary_distribution(fitted)[0], labeling_error_share(states, decode(point.posteriors.gamma)),
                  point.bw.iterations, point.bw.converged, "ok", "", 0};
  point.rows.push_back(bw_row);

  // Threshold methods know the true priors, as a preceding curve fit would supply.
  point.threshold = optimal_threshold(mu1, sweep.mu2, sweep.sigma, truth.initial[0], truth.initial[1]);
  for (std::size_t span : spans) {
    const StatePath labels = classify(ThresholdClassifier{{point.threshold}, span}, obs);
    const LabelEstimate est = estimate_from_labels(labels, 2);
    point.rows.push_back(SweepRow{threshold_method_name(span), mu1, distance, est.chain.transition(0, 1),
                                  est.chain.transition(1, 0), est.chain.initial[0],
                                  labeling_error_share(states, labels), 0, false, "ok", "", 0});
  }
  for (auto& row : point.rows) row.seed = seed;
  return point;
}

inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  const auto& grid = cfg.sweep.mu1;
  std::vector<std::vector<SweepRow>> per_point(grid.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t g = next++; g < grid.size(); g = next++) {
      const std::uint64_t seed = derive_seed(cfg.seed, g);
      try {
        per_point[g] = evaluate_sweep_point(cfg.sweep, cfg.bw, cfg.baseline.spans, grid[g], cfg.n, seed).rows;
      } catch (const std::exception& e) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        per_point[g].push_back(SweepRow{"BW", grid[g], nan, nan, nan, nan, nan, 0, false,
                                        std::string("failed: ") + e.what(), "", seed});
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(cfg.workers, grid.size()); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  SweepResult result{cfg.hash, cfg.seed, {}};
  for (auto& rows : per_point) {
    for (auto& row : rows) {
      row.config_hash = cfg.hash;
      result.rows.push_back(std::move(row));
    }
  }
  auto rank = [](const std::string& method) {
    return method == "BW" ? 0 : 1 + std::stoul(method.substr(1));
  };
  std::stable_sort(result.rows.begin(), result.rows.end(), [&](const SweepRow& a, const SweepRow& b) {
    return a.mu1 != b.mu1 ? a.mu1 < b.mu1 : rank(a.method) < rank(b.method);
  });
  return result;
}

// ---------------------------------------------------------------------------
// Measurement pipeline

struct MethodSummary {
  std::string method;
  MarkovChain chain;
  std::vector<double> state_probabilities;
  std::vector<double> durations_samples;  // 1 / (1 - p_ii); infinite for absorbing rows
  std::vector<double> durations_m;
};

struct PipelineResult {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t raw_samples = 0;
  std::size_t samples = 0;
  double spacing_m = 1.0;
  std::vector<Family> families;
  SaResult curve_fit;
  FitReport bw;
  std::vector<MethodSummary> methods;  // BW first, then threshold methods
  std::vector<std::string> warnings;
  std::optional<std::vector<double>> truth_stationary;  // synthetic traces only
};

struct SyntheticTrace {
  MeasurementTrace trace;
  StatePath cell_states;
};

inline SyntheticTrace synthetic_trace(const SyntheticTraceSettings& s, Rng& rng) {
  s.model.validate();
  const Simulation cells = simulate(s.model.chain, s.model.emissions, s.cells, rng);
  SyntheticTrace out;
  out.trace.id = "synthetic";
  out.cell_states = cells.states;
  const double step = s.cell_m / static_cast<double>(s.samples_per_cell);
  std::bernoulli_distribution hold(s.hold_probability);
  for (std::size_t k = 0; k < s.cells; ++k) {
    const auto& emission = s.model.emissions[cells.states[k]];
    double value = cells.observations.values[k];
    for (std::size_t j = 0; j < s.samples_per_cell; ++j) {
      if (j > 0 && !hold(rng)) value = sample(emission, rng);
      out.trace.positions.push_back(static_cast<double>(k) * s.cell_m + static_cast<double>(j) * step);
      out.trace.amplitudes.push_back(value);
    }
  }
  return out;
}

inline MethodSummary summarize(std::string method, MarkovChain chain, std::vector<double> probabilities,
                               double spacing_m) {
  MethodSummary s{std::move(method), std::move(chain), std::move(probabilities), {}, {}};
  for (std::size_t i = 0; i < s.chain.states(); ++i) {
    const double stay = s.chain.transition(i, i);
    const double d = stay < 1.0 ? 1.0 / (1.0 - stay) : std::numeric_limits<double>::infinity();
    s.durations_samples.push_back(d);
    s.durations_m.push_back(d * spacing_m);
  }
  return s;
}

/// Runs the three-stage workflow on a down-sampled observation sequence.
inline PipelineResult analyze_observations(const ObservationSequence& obs, const ExperimentConfig& cfg) {
  obs.validate();
  PipelineResult result;
  result.config_hash = cfg.hash;
  result.seed = cfg.seed;
  result.samples = obs.size();
  result.spacing_m = obs.spacing_m > 0.0 ? obs.spacing_m : cfg.pipeline.spacing_m;
  result.families = cfg.curve_fit.families;

  const EmpiricalPdf hist = empirical_pdf(obs.values, cfg.curve_fit.bins);
  SaConfig sa = cfg.curve_fit.sa;
  sa.seed = derive_seed(cfg.seed, 1000 + sa.seed);
  result.curve_fit = fit_mixture_sa(hist, cfg.curve_fit.families, sa, cfg.curve_fit.restarts);
  if (cfg.curve_fit.objective_ceiling && result.curve_fit.objective > *cfg.curve_fit.objective_ceiling) {
    result.warnings.push_back("curve-fit objective " + format_double(result.curve_fit.objective) +
                              " exceeds ceiling " + format_double(*cfg.curve_fit.objective_ceiling));
  }
  const MixtureModel& mix = result.curve_fit.mixture;
  const std::size_t m = mix.components.size();

  const HmmModel start =
      model_from_mixture(mix, cfg.bw.init_self_transition.value_or(1.0 / static_cast<double>(m)));
  result.bw = fit(start, obs.values, {cfg.bw.max_iters, cfg.bw.tol});
  if (!result.bw.converged) result.warnings.push_back("Baum-Welch stopped at max_iters before converging");
  std::vector<double> bw_probabilities;
  try {
    bw_probabilities = stationary_distribution(result.bw.model.chain);
  } catch (const Error&) {
    bw_probabilities = result.bw.model.chain.initial;
    result.warnings.push_back("fitted chain has no unique stationary distribution");
  }
  result.methods.push_back(summarize("BW", result.bw.model.chain, bw_probabilities, result.spacing_m));

  const QuantileCuts cuts = quantile_thresholds(mix.weights, mix.components);
  for (std::size_t span : cfg.pipeline.baseline_spans) {
    if (span > obs.size()) continue;
    StatePath labels = relabel(classify(ThresholdClassifier{cuts.thresholds, span}, obs.values), cuts.state_of_rank);
    labels = merge_short_runs(labels, cfg.pipeline.min_run);
    LabelEstimate est = estimate_from_labels(labels, m);
    std::vector<double> freq = est.chain.initial;
    result.methods.push_back(summarize(threshold_method_name(span), std::move(est.chain), freq, result.spacing_m));
  }
  return result;
}

inline PipelineResult run_pipeline(const ExperimentConfig& cfg) {
  MeasurementTrace trace;
  std::optional<std::vector<double>> truth;
  const std::optional<std::string> path = cfg.pipeline.trace_path ? cfg.pipeline.trace_path : cfg.trace;
  if (path) {
    trace = load_trace(*path);
    if (cfg.trace_in_db) trace.amplitudes = db_to_linear(trace.amplitudes);
  } else {
    const SyntheticTraceSettings settings = cfg.pipeline.synthetic.value_or(SyntheticTraceSettings{});
    Rng rng(derive_seed(cfg.seed, 0));
    trace = synthetic_trace(settings, rng).trace;
    truth = stationary_distribution(settings.model.chain);
  }
  if (trace.size() == 0) throw Error(ErrorKind::invalid_input, "trace is empty");
  const ObservationSequence obs = downsample_by_distance(trace, cfg.pipeline.spacing_m);
  PipelineResult result = analyze_observations(obs, cfg);
  result.raw_samples = trace.size();
  result.truth_stationary = truth;
  return result;
}

// ---------------------------------------------------------------------------
// Output

inline json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_or_nan(const json& v) {
  return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

inline json to_json(const SweepRow& row) {
  return json{{"method", row.method},
              {"mu1", row.mu1},
              {"bhattacharyya", nullable(row.bhattacharyya)},
              {"p12_hat", nullable(row.p12_hat)},
              {"p21_hat", nullable(row.p21_hat)},
              {"p1_hat", nullable(row.p1_hat)},
              {"error_share", nullable(row.error_share)},
              {"iterations", row.iterations},
              {"converged", row.converged},
              {"status", row.status},
              {"config_hash", row.config_hash},
              {"seed", row.seed}};
}

inline SweepRow sweep_row_from_json(const json& j) {
  SweepRow row;
  row.method = j.at("method").get<std::string>();
  row.mu1 = j.at("mu1").get<double>();
  row.bhattacharyya = number_or_nan(j.at("bhattacharyya"));
  row.p12_hat = number_or_nan(j.at("p12_hat"));
  row.p21_hat = number_or_nan(j.at("p21_hat"));
  row.p1_hat = number_or_nan(j.at("p1_hat"));
  row.error_share = number_or_nan(j.at("error_share"));
  row.iterations = j.at("iterations").get<std::size_t>();
  row.converged = j.at("converged").get<bool>();
  row.status = j.at("status").get<std::string>();
  row.config_hash = j.at("config_hash").get<std::string>();
  row.seed = j.at("seed").get<std::uint64_t>();
  return row;
}

inline json to_json(const SweepResult& result) {
  json rows = json::array();
  for (const auto& r : result.rows) rows.push_back(to_json(r));
  return json{{"kind", "sweep"}, {"config_hash", result.config_hash}, {"seed", result.seed}, {"rows", rows}};
}

inline SweepResult sweep_result_from_json(const json& j) {
  SweepResult result{j.at("config_hash").get<std::string>(), j.at("seed").get<std::uint64_t>(), {}};
  for (const auto& r : j.at("rows")) result.rows.push_back(sweep_row_from_json(r));
  return result;
}

namespace detail {

// Empty for NaN or infinite values, so failed rows parse as missing data.
inline std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace detail

inline std::string sweep_csv(const SweepResult& result) {
  using detail::csv_number;
  std::string out =
      "method,mu1,bhattacharyya,p12_hat,p1_hat,error_share,p21_hat,iterations,converged,status,config_hash,seed\n";
  for (const auto& r : result.rows) {
    out += r.method + ',' + csv_number(r.mu1) + ',' + csv_number(r.bhattacharyya) + ',' + csv_number(r.p12_hat) +
           ',' + csv_number(r.p1_hat) + ',' + csv_number(r.error_share) + ',' + csv_number(r.p21_hat) + ',' +
           std::to_string(r.iterations) + ',' + (r.converged ? "1" : "0") + ',' + detail::csv_field(r.status) + ',' +
           r.config_hash + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

namespace detail {

inline std::string fixed(double v, int precision = 2) {
  if (!std::isfinite(v)) return "-";
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(precision);
  ss << v;
  return ss.str();
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

}  // namespace detail

/// Fixed-width tables: one block per quantity, rows by ascending mu1
/// (descending Bhattacharyya distance), one column per method.
inline std::string sweep_table(const SweepResult& result) {
  std::vector<std::string> methods;
  std::map<double, std::map<std::string, const SweepRow*>> by_mu;  // keyed by mu1
  for (const auto& r : result.rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    by_mu[r.mu1][r.method] = &r;
  }
  std::string out = "config " + result.config_hash + ", seed " + std::to_string(result.seed) + "\n";
  auto table = [&](const char* title, double SweepRow::*field, int precision) {
    out += std::string("\n") + title + "\n" + detail::pad("B", 6) + detail::pad("mu2-mu1", 9);
    for (const auto& m : methods) out += detail::pad(m, 8);
    out += '\n';
    for (const auto& [key, row] : by_mu) {
      const SweepRow* any = row.begin()->second;
      out += detail::pad(detail::fixed(any->bhattacharyya), 6);
      out += detail::pad(detail::fixed(any->mu1), 9);
      for (const auto& m : methods) {
        auto it = row.find(m);
        out += detail::pad(it == row.end() ? "-" : detail::fixed(it->second->*field, precision), 8);
      }
      out += '\n';
    }
  };
  table("p1_hat", &SweepRow::p1_hat, 2);
  table("p12_hat", &SweepRow::p12_hat, 3);
  table("error_share", &SweepRow::error_share, 3);
  return out;
}

inline json to_json(const MethodSummary& s) {
  json durations_samples = json::array();
  json durations_m = json::array();
  for (double d : s.durations_samples) durations_samples.push_back(nullable(d));
  for (double d : s.durations_m) durations_m.push_back(nullable(d));
  return json{{"method", s.method},
              {"chain", to_json(s.chain)},
              {"state_probabilities", s.state_probabilities},
              {"mean_durations_samples", durations_samples},
              {"mean_durations_m", durations_m}};
}

inline json to_json(const PipelineResult& r) {
  json families = json::array();
  for (Family f : r.families) families.push_back(std::string(family_name(f)));
  json methods = json::array();
  for (const auto& m : r.methods) methods.push_back(to_json(m));
  json out{{"kind", "pipeline"},
           {"config_hash", r.config_hash},
           {"seed", r.seed},
           {"raw_samples", r.raw_samples},
           {"samples", r.samples},
           {"spacing_m", r.spacing_m},
           {"families", families},
           {"curve_fit",
            {{"mixture", to_json(r.curve_fit.mixture)},
             {"objective", r.curve_fit.objective},
             {"objective_kind", "mean squared density error at bin centers"},
             {"initial_objective", r.curve_fit.initial_objective},
             {"initial_temperature", r.curve_fit.initial_temperature},
             {"proposals", r.curve_fit.proposals}}},
           {"bw", to_json(r.bw)},
           {"methods", methods},
           {"warnings", r.warnings}};
  if (r.truth_stationary) out["truth_stationary"] = *r.truth_stationary;
  return out;
}

inline std::string pipeline_csv(const PipelineResult& r) {
  std::string out = "method,state,family,p_hat,duration_samples,duration_m,config_hash\n";
  for (const auto& m : r.methods) {
    for (std::size_t i = 0; i < m.chain.states(); ++i) {
      out += m.method + ',' + std::to_string(i + 1) + ',' +
             std::string(i < r.families.size() ? family_name(r.families[i]) : "") + ',' +
             format_double(m.state_probabilities[i]) + ',' + format_double(m.durations_samples[i]) + ',' +
             format_double(m.durations_m[i]) + ',' + r.config_hash + '\n';
    }
  }
  return out;
}

inline std::string pipeline_table(const PipelineResult& r) {
  std::string out = "config " + r.config_hash + ", seed " + std::to_string(r.seed) + ", " +
                    std::to_string(r.samples) + " samples at " + detail::fixed(r.spacing_m) + " m\n\n";
  std::string header = detail::pad("", 10) + detail::pad("method", 8);
  for (std::size_t i = 0; i < r.families.size(); ++i) {
    header += detail::pad(std::to_string(i + 1) + ":" + std::string(family_name(r.families[i])), 13);
  }
  out += header + '\n';
  for (const char* quantity : {"p_i", "D_i [m]"}) {
    bool first = true;
    for (const auto& m : r.methods) {
      out += detail::pad(first ? quantity : "", 10) + detail::pad(m.method, 8);
      const bool probabilities = std::string(quantity) == "p_i";
      for (std::size_t i = 0; i < m.chain.states(); ++i) {
        out += detail::pad(detail::fixed(probabilities ? m.state_probabilities[i] : m.durations_m[i]), 13);
      }
      out += '\n';
      first = false;
    }
  }
  for (const auto& w : r.warnings) out += "warning: " + w + '\n';
  return out;
}

enum class OutputFormat { all, csv, json };

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  detail::write_file(path.string(), content);
}

inline void prepare_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::io, "cannot create '" + dir.string() + "': " + ec.message());
}

/// Writes sweep.csv and table.txt (csv) and report.json (json).
inline void emit_outputs(const SweepResult& result, const std::filesystem::path& dir, OutputFormat format) {
  prepare_out_dir(dir);
  if (format != OutputFormat::json) {
    write_text(dir / "sweep.csv", sweep_csv(result));
    write_text(dir / "table.txt", sweep_table(result));
  }
  if (format != OutputFormat::csv) write_text(dir / "report.json", to_json(result).dump(2) + "\n");
}

inline void emit_outputs(const PipelineResult& result, const std::filesystem::path& dir, OutputFormat format) {
  prepare_out_dir(dir);
  if (format != OutputFormat::json) {
    write_text(dir / "pipeline.csv", pipeline_csv(result));
    write_text(dir / "table.txt", pipeline_table(result));
  }
  if (format != OutputFormat::csv) write_text(dir / "report.json", to_json(result).dump(2) + "\n");
}

/// One `state` column of 1-based labels.
inline std::string labels_csv(const StatePath& path) {
  std::string out = "state\n";
  for (std::size_t s : path) out += std::to_string(s + 1) + '\n';
  return out;
}

/// Columns named by method, 1-based labels.
inline std::string labels_csv(const std::vector<std::pair<std::string, StatePath>>& columns) {
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c].first;
  out += '\n';
  const std::size_t n = columns.empty() ? 0 : columns.front().second.size();
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      out += (c ? "," : "") + std::to_string(columns[c].second[t] + 1);
    }
    out += '\n';
  }
  return out;
}

}  // namespace lmsc
