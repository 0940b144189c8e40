#pragma once

// JSON forms of the model types. Distributions are tagged objects such as
// {"type": "rice", "nu": 1.0, "sigma": 0.15}; chains are
// {"transition": [[...], ...], "initial": [...]} with row-major rows.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmsc/distributions.hpp"
#include "lmsc/error.hpp"
#include "lmsc/fitting.hpp"
#include "lmsc/hmm.hpp"
#include "lmsc/markov.hpp"

namespace lmsc {

using json = nlohmann::json;

namespace detail {

inline const json& require(const json& j, const char* key, const char* context) {
  if (!j.is_object() || !j.contains(key)) {
    throw Error(ErrorKind::config, std::string(context) + ": missing field '" + key + "'");
  }
  return j.at(key);
}

inline double require_number(const json& j, const char* key, const char* context) {
  const json& v = require(j, key, context);
  if (!v.is_number()) throw Error(ErrorKind::config, std::string(context) + ": '" + key + "' must be a number");
  return v.get<double>();
}

inline std::vector<double> number_array(const json& j, const char* context) {
  if (!j.is_array()) throw Error(ErrorKind::config, std::string(context) + ": expected an array");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw Error(ErrorKind::config, std::string(context) + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

inline json to_json(const EmissionDistribution& d) {
  return std::visit(detail::overloaded{
                        [](const Gaussian& g) { return json{{"type", "gaussian"}, {"mu", g.mu}, {"sigma", g.sigma}}; },
                        [](const Rayleigh& g) { return json{{"type", "rayleigh"}, {"sigma", g.sigma}}; },
                        [](const Rice& g) { return json{{"type", "rice"}, {"nu", g.nu}, {"sigma", g.sigma}}; },
                        [](const Lognormal& g) {
                          return json{{"type", "lognormal"}, {"mu_log", g.mu_log}, {"sigma_log", g.sigma_log}};
                        },
                    },
                    d);
}

inline EmissionDistribution distribution_from_json(const json& j) {
  constexpr const char* ctx = "distribution";
  const json& type = detail::require(j, "type", ctx);
  if (!type.is_string()) throw Error(ErrorKind::config, "distribution: 'type' must be a string");
  EmissionDistribution d;
  try {
    switch (parse_family(type.get<std::string>())) {
      case Family::gaussian:
        d = Gaussian{detail::require_number(j, "mu", ctx), detail::require_number(j, "sigma", ctx)};
        break;
      case Family::rayleigh: d = Rayleigh{detail::require_number(j, "sigma", ctx)}; break;
      case Family::rice:
        d = Rice{detail::require_number(j, "nu", ctx), detail::require_number(j, "sigma", ctx)};
        break;
      case Family::lognormal:
        d = Lognormal{detail::require_number(j, "mu_log", ctx), detail::require_number(j, "sigma_log", ctx)};
        break;
    }
    validate(d);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    throw Error(ErrorKind::config, e.what());
  }
  return d;
}

inline json to_json(const MarkovChain& chain) {
  return json{{"transition", chain.transition.to_rows()}, {"initial", chain.initial}};
}

inline Table matrix_from_json(const json& j, const char* context) {
  if (!j.is_array()) throw Error(ErrorKind::config, std::string(context) + ": expected an array of rows");
  std::vector<std::vector<double>> rows;
  for (const auto& r : j) rows.push_back(detail::number_array(r, context));
  for (const auto& r : rows) {
    if (r.size() != rows.size()) throw Error(ErrorKind::config, std::string(context) + ": matrix must be square");
  }
  return Table::from_rows(rows);
}

inline MarkovChain chain_from_json(const json& j) {
  MarkovChain chain{matrix_from_json(detail::require(j, "transition", "chain"), "chain.transition"), {}};
  const std::size_t m = chain.transition.rows();
  chain.initial.assign(m, m == 0 ? 0.0 : 1.0 / static_cast<double>(m));
  try {
    // Without explicit initial probabilities the chain starts in steady state.
    chain.initial = j.contains("initial") ? detail::number_array(j.at("initial"), "chain.initial")
                                          : stationary_distribution(chain);
    chain.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("chain: ") + e.what());
  }
  return chain;
}

inline json to_json(const HmmModel& model) {
  json emissions = json::array();
  for (const auto& e : model.emissions) emissions.push_back(to_json(e));
  return json{{"chain", to_json(model.chain)}, {"emissions", emissions}};
}

inline std::vector<EmissionDistribution> emissions_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw Error(ErrorKind::config, "emissions: expected a non-empty array");
  std::vector<EmissionDistribution> out;
  for (const auto& e : j) out.push_back(distribution_from_json(e));
  return out;
}

inline HmmModel model_from_json(const json& j) {
  HmmModel model{chain_from_json(detail::require(j, "chain", "model")),
                 emissions_from_json(detail::require(j, "emissions", "model"))};
  if (model.emissions.size() != model.chain.states()) {
    throw Error(ErrorKind::config, "model: emission count differs from state count");
  }
  return model;
}

/// {"components": [{"weight": w, "type": ..., <params>}, ...]}
inline json to_json(const MixtureModel& mix) {
  json components = json::array();
  for (std::size_t k = 0; k < mix.components.size(); ++k) {
    json c = to_json(mix.components[k]);
    c["weight"] = mix.weights[k];
    components.push_back(c);
  }
  return json{{"components", components}};
}

inline MixtureModel mixture_from_json(const json& j) {
  const json& comps = detail::require(j, "components", "mixture");
  if (!comps.is_array() || comps.empty()) throw Error(ErrorKind::config, "mixture: expected components");
  MixtureModel mix;
  for (const auto& c : comps) {
    mix.weights.push_back(detail::require_number(c, "weight", "mixture component"));
    mix.components.push_back(distribution_from_json(c));
  }
  try {
    mix.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("mixture: ") + e.what());
  }
  return mix;
}

/// Emissions from the mixture components, p_i from the mixture weights and a
/// transition matrix with `self_transition` on the diagonal and uniform
/// off-diagonal mass.
inline HmmModel model_from_mixture(const MixtureModel& mix, double self_transition) {
  mix.validate();
  return HmmModel{uniform_chain(mix.components.size(), self_transition, mix.weights), mix.components};
}

inline json to_json(const FitReport& report) {
  return json{{"chain", to_json(report.model.chain)},
              {"emissions", to_json(report.model).at("emissions")},
              {"log_likelihood_trace", report.log_likelihood_trace},
              {"iterations", report.iterations},
              {"converged", report.converged},
              {"max_iters", report.options.max_iters},
              {"tol", report.options.tol}};
}

/// FNV-1a over the compact dump (keys are sorted, so the dump is canonical).
inline std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lmsc
