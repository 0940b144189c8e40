// lmsc: command-line front end for the channel-state estimation library.
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O or
// parse error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lmsc/experiment.hpp"

namespace fs = std::filesystem;
using namespace lmsc;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out_dir = "out";
  std::string format = "all";
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::io:
    case ErrorKind::parse: return 4;
    default: return 3;
  }
}

ExperimentConfig load_config(const Options& opt) {
  json j = json{{"schema", 1}};
  if (!opt.config_path.empty()) {
    const std::string text = detail::read_file(opt.config_path);
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::config, opt.config_path + ": " + e.what());
    }
  }
  return parse_config(j, opt.seed, opt.workers);
}

OutputFormat output_format(const std::string& name) {
  if (name == "csv") return OutputFormat::csv;
  if (name == "json") return OutputFormat::json;
  return OutputFormat::all;
}

// Model used when the config has none: the two-state Gaussian benchmark at
// the first grid point.
HmmModel configured_model(const ExperimentConfig& cfg) {
  if (cfg.model) return *cfg.model;
  MarkovChain chain{cfg.sweep.transition, {0.5, 0.5}};
  chain.initial = stationary_distribution(chain);
  const double mu1 = cfg.sweep.mu1.empty() ? 0.4 : cfg.sweep.mu1.front();
  return HmmModel{chain, {Gaussian{mu1, cfg.sweep.sigma}, Gaussian{cfg.sweep.mu2, cfg.sweep.sigma}}};
}

// Observations from "observations", else from "trace" down-sampled at
// pipeline.spacing_m, else simulated from the configured model.
struct Input {
  ObservationSequence obs;
  std::optional<StatePath> truth;
};

Input configured_observations(const ExperimentConfig& cfg) {
  if (cfg.observations) return {load_observations(*cfg.observations), std::nullopt};
  if (cfg.trace) {
    MeasurementTrace trace = load_trace(*cfg.trace);
    if (cfg.trace_in_db) trace.amplitudes = db_to_linear(trace.amplitudes);
    return {downsample_by_distance(trace, cfg.pipeline.spacing_m), std::nullopt};
  }
  const HmmModel model = configured_model(cfg);
  Rng rng(derive_seed(cfg.seed, 0));
  Simulation sim = simulate(model.chain, model.emissions, cfg.n, rng);
  return {std::move(sim.observations), std::move(sim.states)};
}

std::string chain_csv(const std::string& method, const MarkovChain& chain, const std::vector<double>& p,
                      const std::string& hash) {
  std::string out;
  for (std::size_t i = 0; i < chain.states(); ++i) {
    const double stay = chain.transition(i, i);
    const double d = stay < 1.0 ? 1.0 / (1.0 - stay) : std::numeric_limits<double>::infinity();
    out += method + ',' + std::to_string(i + 1) + ',' + format_double(p[i]) + ',' + format_double(d) + ',' + hash +
           '\n';
  }
  return out;
}

const char* chain_csv_header = "method,state,p_hat,duration_samples,config_hash\n";

void run_simulate(const ExperimentConfig& cfg, const fs::path& dir, OutputFormat format) {
  const HmmModel model = configured_model(cfg);
  Rng rng(derive_seed(cfg.seed, 0));
  const Simulation sim = simulate(model.chain, model.emissions, cfg.n, rng);
  prepare_out_dir(dir);
  if (format != OutputFormat::json) {
    save_observations(sim.observations.values, (dir / "observations.csv").string());
    write_text(dir / "states.csv", labels_csv(sim.states));
  }
  if (format != OutputFormat::csv) {
    json states = json::array();
    for (std::size_t s : sim.states) states.push_back(s + 1);
    const json report{{"kind", "simulate"},   {"config_hash", cfg.hash},
                      {"seed", cfg.seed},     {"model", to_json(model)},
                      {"observations", sim.observations.values}, {"states", states}};
    write_text(dir / "report.json", report.dump(2) + "\n");
  }
}

void run_fit_bw(const ExperimentConfig& cfg, const fs::path& dir, OutputFormat format) {
  const Input input = configured_observations(cfg);
  HmmModel start = configured_model(cfg);
  const std::size_t m = start.states();
  if (cfg.bw.init_self_transition || !cfg.model) {
    start.chain = uniform_chain(m, cfg.bw.init_self_transition.value_or(1.0 / static_cast<double>(m)));
  }
  const FitReport report = fit(start, input.obs.values, {cfg.bw.max_iters, cfg.bw.tol});
  const PosteriorTables post = infer(report.model, input.obs.values);
  const StatePath labels = decode(post.gamma);
  const std::vector<double> p = stationary_distribution(report.model.chain);

  prepare_out_dir(dir);
  if (format != OutputFormat::json) {
    write_text(dir / "fit.csv", chain_csv_header + chain_csv("BW", report.model.chain, p, cfg.hash));
    write_text(dir / "labels.csv", labels_csv(labels));
  }
  if (format != OutputFormat::csv) {
    json out{{"kind", "fit-bw"},
             {"config_hash", cfg.hash},
             {"seed", cfg.seed},
             {"samples", input.obs.size()},
             {"fit", to_json(report)},
             {"stationary", p},
             {"final_log_likelihood", post.log_likelihood}};
    if (input.truth) out["error_share"] = labeling_error_share(*input.truth, labels);
    write_text(dir / "report.json", out.dump(2) + "\n");
  }
  if (!report.converged) std::cerr << "warning: Baum-Welch stopped at max_iters before converging\n";
}

void run_baseline(const ExperimentConfig& cfg, const fs::path& dir, OutputFormat format) {
  const Input input = configured_observations(cfg);
  const HmmModel model = configured_model(cfg);
  const std::size_t m = model.states();
  std::vector<double> thresholds = cfg.baseline.thresholds;
  std::vector<std::size_t> state_of_rank(m);
  for (std::size_t k = 0; k < m; ++k) state_of_rank[k] = k;
  if (thresholds.empty()) {
    const std::vector<double> weights = stationary_distribution(model.chain);
    const bool gaussian_pair = m == 2 && std::holds_alternative<Gaussian>(model.emissions[0]) &&
                               std::holds_alternative<Gaussian>(model.emissions[1]) &&
                               std::get<Gaussian>(model.emissions[0]).sigma ==
                                   std::get<Gaussian>(model.emissions[1]).sigma &&
                               std::get<Gaussian>(model.emissions[0]).mu < std::get<Gaussian>(model.emissions[1]).mu;
    if (gaussian_pair) {
      const auto& a = std::get<Gaussian>(model.emissions[0]);
      const auto& b = std::get<Gaussian>(model.emissions[1]);
      thresholds = {optimal_threshold(a.mu, b.mu, a.sigma, weights[0], weights[1])};
    } else {
      QuantileCuts cuts = quantile_thresholds(weights, model.emissions);
      thresholds = std::move(cuts.thresholds);
      state_of_rank = std::move(cuts.state_of_rank);
    }
  } else if (thresholds.size() + 1 != m) {
    throw Error(ErrorKind::config, "baseline.thresholds needs one value fewer than the state count");
  }

  std::vector<std::pair<std::string, StatePath>> columns;
  std::string summary = chain_csv_header;
  json methods = json::array();
  for (std::size_t span : cfg.baseline.spans) {
    const std::string name = threshold_method_name(span);
    StatePath labels = relabel(classify(ThresholdClassifier{thresholds, span}, input.obs.values), state_of_rank);
    const LabelEstimate est = estimate_from_labels(labels, m);
    summary += chain_csv(name, est.chain, est.chain.initial, cfg.hash);
    json entry{{"method", name}, {"chain", to_json(est.chain)}, {"state_probabilities", est.chain.initial}};
    if (input.truth) entry["error_share"] = labeling_error_share(*input.truth, labels);
    methods.push_back(entry);
    columns.emplace_back(name, std::move(labels));
  }
  prepare_out_dir(dir);
  if (format != OutputFormat::json) {
    write_text(dir / "baseline.csv", summary);
    write_text(dir / "labels.csv", labels_csv(columns));
  }
  if (format != OutputFormat::csv) {
    const json out{{"kind", "baseline"}, {"config_hash", cfg.hash}, {"seed", cfg.seed},
                   {"thresholds", thresholds}, {"methods", methods}};
    write_text(dir / "report.json", out.dump(2) + "\n");
  }
}

// Amplitudes for the mixture fit. Without any configured input this is the
// synthetic fading trace the pipeline uses, since the default two-Gaussian
// benchmark would put mass below zero.
ObservationSequence curve_fit_input(const ExperimentConfig& cfg) {
  if (cfg.observations || cfg.trace || cfg.model) return configured_observations(cfg).obs;
  if (cfg.pipeline.trace_path) {
    MeasurementTrace trace = load_trace(*cfg.pipeline.trace_path);
    if (cfg.trace_in_db) trace.amplitudes = db_to_linear(trace.amplitudes);
    return downsample_by_distance(trace, cfg.pipeline.spacing_m);
  }
  Rng rng(derive_seed(cfg.seed, 0));
  const auto synthetic = synthetic_trace(cfg.pipeline.synthetic.value_or(SyntheticTraceSettings{}), rng);
  return downsample_by_distance(synthetic.trace, cfg.pipeline.spacing_m);
}

void run_curve_fit(const ExperimentConfig& cfg, const fs::path& dir, OutputFormat format) {
  ObservationSequence obs = curve_fit_input(cfg);
  const EmpiricalPdf hist = empirical_pdf(obs.values, cfg.curve_fit.bins);
  SaConfig sa = cfg.curve_fit.sa;
  sa.seed = derive_seed(cfg.seed, 1000 + sa.seed);
  const SaResult result = fit_mixture_sa(hist, cfg.curve_fit.families, sa, cfg.curve_fit.restarts);
  if (cfg.curve_fit.objective_ceiling && result.objective > *cfg.curve_fit.objective_ceiling) {
    std::cerr << "warning: curve-fit objective " << result.objective << " exceeds ceiling\n";
  }
  prepare_out_dir(dir);
  if (format != OutputFormat::json) {
    std::string csv = "center,empirical,fitted,config_hash\n";
    for (std::size_t b = 0; b < hist.bins(); ++b) {
      csv += format_double(hist.center(b)) + ',' + format_double(hist.density[b]) + ',' +
             format_double(result.mixture.pdf(hist.center(b))) + ',' + cfg.hash + '\n';
    }
    write_text(dir / "curve_fit.csv", csv);
  }
  if (format != OutputFormat::csv) {
    const json out{{"kind", "curve-fit"},
                   {"config_hash", cfg.hash},
                   {"seed", cfg.seed},
                   {"mixture", to_json(result.mixture)},
                   {"objective", result.objective},
                   {"initial_objective", result.initial_objective},
                   {"initial_temperature", result.initial_temperature},
                   {"proposals", result.proposals}};
    write_text(dir / "report.json", out.dump(2) + "\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hidden-Markov channel-state estimation from amplitude traces"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  std::size_t workers = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config (schema 1)")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "master seed, overrides the config");
    sub->add_option("--out-dir", opt.out_dir, "output directory")->capture_default_str();
    sub->add_option("--workers", workers, "concurrent jobs")->check(CLI::PositiveNumber);
    sub->add_option("--format", opt.format, "csv, json, or both when omitted")->check(CLI::IsMember({"csv", "json"}));
  };
  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "draw a state path and observations from the model"},
      {"fit-bw", "Baum-Welch fit of the model to observations"},
      {"baseline", "threshold classification with moving-average filters"},
      {"sweep", "two-state benchmark over the mu1 grid"},
      {"curve-fit", "annealed mixture fit to the amplitude histogram"},
      {"pipeline", "curve fit, Baum-Welch and dwell times on a trace"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) opt.seed = seed;
  if (sub->count("--workers")) opt.workers = workers;
  const std::string command = sub->get_name();
  const fs::path dir = opt.out_dir;
  const OutputFormat format = output_format(opt.format);

  try {
    const ExperimentConfig cfg = load_config(opt);
    if (command == "simulate") {
      run_simulate(cfg, dir, format);
    } else if (command == "fit-bw") {
      run_fit_bw(cfg, dir, format);
    } else if (command == "baseline") {
      run_baseline(cfg, dir, format);
    } else if (command == "sweep") {
      const SweepResult result = run_sweep(cfg);
      emit_outputs(result, dir, format);
      std::cout << sweep_table(result);
      for (const auto& r : result.rows) {
        if (r.status != "ok") {
          std::cerr << "mu1=" << r.mu1 << ": " << r.status << '\n';
          return 3;
        }
      }
    } else if (command == "curve-fit") {
      run_curve_fit(cfg, dir, format);
    } else {
      const PipelineResult result = run_pipeline(cfg);
      emit_outputs(result, dir, format);
      std::cout << pipeline_table(result);
    }
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
