#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "channel.hpp"
#include "frontier.hpp"
#include "model.hpp"
#include "stopping.hpp"

/// @file config.hpp
/// @brief Run configuration for the command-line tool: JSON loading with
///        strict key checking, declarative stopping-model specs, initial
///        distribution selectors, and atomic text output.

namespace restless {

using ojson = nlohmann::ordered_json;

/// Everything a subcommand run depends on. A JSON config file and command
/// line flags both populate this; flags win where both are given.
struct RunConfig {
  std::string model = "channel";  // "channel" or "stopping"
  Real p = 0.2;
  Real q = 0.3;
  Real beta = 0.8;
  std::string spec;  // stopping model description file

  int grid = 201;
  Real tol = 1e-8;
  int horizon = 0;  // 0 derives the horizon from tol
  int lambda_count = 33;
  int pairs = 200;
  int intervals = 20;
  unsigned seed = 12345;
  Real epsilon = 1e-4;  // indifference band of the cross-check

  std::string dist = "uniform";
  std::string out;
  std::string svg;
  bool strict = false;

  friend bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.model == b.model && a.p == b.p && a.q == b.q && a.beta == b.beta &&
           a.spec == b.spec && a.grid == b.grid && a.tol == b.tol &&
           a.horizon == b.horizon && a.lambda_count == b.lambda_count &&
           a.pairs == b.pairs && a.intervals == b.intervals && a.seed == b.seed &&
           a.epsilon == b.epsilon && a.dist == b.dist && a.out == b.out &&
           a.svg == b.svg && a.strict == b.strict;
  }
};

namespace detail {

/// Rejects keys outside the allowed set so configuration typos fail loudly
/// instead of silently falling back to defaults.
inline void require_keys(const nlohmann::json& obj,
                         std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!obj.is_object()) {
    throw std::invalid_argument("config: " + where + " must be a JSON object");
  }
  for (const auto& item : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return item.key() == k; });
    if (!known) {
      throw std::invalid_argument("config: unknown key '" + item.key() + "' in " +
                                  where);
    }
  }
}

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& into) {
  if (obj.contains(key)) into = obj.at(key).get<T>();
}

/// Converts the JSON library's type and lookup errors into configuration
/// errors, so a wrong field type reports like any other invalid input.
template <typename Fn>
auto json_guard(const std::string& where, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(where + ": " + e.what());
  }
}

}  // namespace detail

inline void validate_config(const RunConfig& cfg) {
  if (cfg.model != "channel" && cfg.model != "stopping") {
    throw std::invalid_argument("config: model must be 'channel' or 'stopping', got '" +
                                cfg.model + "'");
  }
  if (!(cfg.tol > 0.0)) {
    throw std::invalid_argument("config: tol must be positive");
  }
  if (cfg.grid < 3) {
    throw std::invalid_argument("config: grid must be at least 3 points");
  }
  if (cfg.horizon < 0) {
    throw std::invalid_argument("config: horizon must be nonnegative");
  }
  if (cfg.lambda_count < 1) {
    throw std::invalid_argument("config: lambda_count must be at least 1");
  }
  if (cfg.pairs < 0 || cfg.intervals < 0) {
    throw std::invalid_argument("config: pairs and intervals must be nonnegative");
  }
  if (!(cfg.epsilon > 0.0)) {
    throw std::invalid_argument("config: epsilon must be positive");
  }
  if (cfg.model == "channel") {
    if (!(cfg.beta >= 0.0 && cfg.beta < 1.0)) {
      throw std::invalid_argument("config: beta must lie in [0, 1)");
    }
    if (!(cfg.p > 0.0 && cfg.p < 1.0) || !(cfg.q > 0.0 && cfg.q < 1.0)) {
      throw std::invalid_argument("config: p and q must lie in (0, 1)");
    }
  }
  if (cfg.model == "stopping" && cfg.spec.empty()) {
    throw std::invalid_argument("config: stopping model requires a spec file");
  }
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  detail::require_keys(j,
                       {"model", "p", "q", "beta", "spec", "grid", "tol", "horizon",
                        "lambda_count", "pairs", "intervals", "seed", "epsilon",
                        "dist", "out", "svg", "strict"},
                       "config");
  RunConfig cfg;
  detail::json_guard("config", [&] {
    detail::read_field(j, "model", cfg.model);
    detail::read_field(j, "p", cfg.p);
    detail::read_field(j, "q", cfg.q);
    detail::read_field(j, "beta", cfg.beta);
    detail::read_field(j, "spec", cfg.spec);
    detail::read_field(j, "grid", cfg.grid);
    detail::read_field(j, "tol", cfg.tol);
    detail::read_field(j, "horizon", cfg.horizon);
    detail::read_field(j, "lambda_count", cfg.lambda_count);
    detail::read_field(j, "pairs", cfg.pairs);
    detail::read_field(j, "intervals", cfg.intervals);
    detail::read_field(j, "seed", cfg.seed);
    detail::read_field(j, "epsilon", cfg.epsilon);
    detail::read_field(j, "dist", cfg.dist);
    detail::read_field(j, "out", cfg.out);
    detail::read_field(j, "svg", cfg.svg);
    detail::read_field(j, "strict", cfg.strict);
  });
  validate_config(cfg);
  return cfg;
}

/// The effective configuration a report embeds. Reloading this object
/// through config_from_json reproduces the RunConfig exactly.
inline ojson config_to_json(const RunConfig& cfg) {
  ojson j;
  j["model"] = cfg.model;
  if (cfg.model == "channel") {
    j["p"] = cfg.p;
    j["q"] = cfg.q;
    j["beta"] = cfg.beta;
  } else {
    j["spec"] = cfg.spec;
  }
  j["grid"] = cfg.grid;
  j["tol"] = cfg.tol;
  j["horizon"] = cfg.horizon;
  j["lambda_count"] = cfg.lambda_count;
  j["pairs"] = cfg.pairs;
  j["intervals"] = cfg.intervals;
  j["seed"] = cfg.seed;
  j["epsilon"] = cfg.epsilon;
  j["dist"] = cfg.dist;
  j["out"] = cfg.out;
  j["svg"] = cfg.svg;
  j["strict"] = cfg.strict;
  return j;
}

inline nlohmann::json parse_json_file(const std::string& path,
                                      const std::string& what) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument(what + ": cannot open " + path);
  }
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(what + ": " + path + ": " + e.what());
  }
}

inline RunConfig load_config(const std::string& path) {
  return config_from_json(parse_json_file(path, "config"));
}

namespace detail {

/// Declarative scalar field: a constant, an affine map, or a piecewise
/// linear table with clamped ends.
inline std::function<Real(Real)> scalar_field(const nlohmann::json& j,
                                              const std::string& where) {
  require_keys(j, {"kind", "value", "slope", "intercept", "x", "y"}, where);
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") {
    const Real v = j.at("value").get<Real>();
    return [v](Real) { return v; };
  }
  if (kind == "linear") {
    const Real slope = j.value("slope", 1.0);
    const Real intercept = j.value("intercept", 0.0);
    return [slope, intercept](Real x) { return slope * x + intercept; };
  }
  if (kind == "table") {
    const auto xs = j.at("x").get<std::vector<Real>>();
    const auto ys = j.at("y").get<std::vector<Real>>();
    if (xs.size() < 2 || xs.size() != ys.size()) {
      throw std::invalid_argument("config: " + where +
                                  " table needs matching x/y with 2+ entries");
    }
    if (!std::is_sorted(xs.begin(), xs.end())) {
      throw std::invalid_argument("config: " + where + " table x must be sorted");
    }
    return [xs, ys](Real x) {
      if (x <= xs.front()) return ys.front();
      if (x >= xs.back()) return ys.back();
      const auto it = std::upper_bound(xs.begin(), xs.end(), x);
      const std::size_t i = static_cast<std::size_t>(it - xs.begin());
      const Real t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
      return ys[i - 1] + t * (ys[i] - ys[i - 1]);
    };
  }
  throw std::invalid_argument("config: " + where + " kind must be constant, linear, or table");
}

/// Declarative active kernel: a deterministic reset, the two-point recovery
/// kernel of the transmission model, or a fixed finite mixture.
inline TransitionKernel kernel_field(const nlohmann::json& j,
                                     const std::string& where) {
  require_keys(j, {"kind", "to", "prob", "p", "q"}, where);
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "reset") {
    const Real to = j.at("to").get<Real>();
    return FiniteSupportKernel{[to](Real) { return SupportAtoms{{to, 1.0}}; }};
  }
  if (kind == "channel") {
    ChannelParams params{j.at("p").get<Real>(), j.at("q").get<Real>(), 0.0};
    return channel_project(params).kernel1;
  }
  if (kind == "mix") {
    const auto to = j.at("to").get<std::vector<Real>>();
    const auto prob = j.at("prob").get<std::vector<Real>>();
    if (to.empty() || to.size() != prob.size()) {
      throw std::invalid_argument("config: " + where +
                                  " mix needs matching to/prob lists");
    }
    Real total = 0.0;
    for (Real pr : prob) {
      if (!(pr >= 0.0)) {
        throw std::invalid_argument("config: " + where + " mix probability < 0");
      }
      total += pr;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("config: " + where + " mix probabilities sum to " +
                                  std::to_string(total));
    }
    return FiniteSupportKernel{[to, prob](Real) {
      SupportAtoms atoms;
      for (std::size_t i = 0; i < to.size(); ++i) atoms.push_back({to[i], prob[i]});
      return atoms;
    }};
  }
  throw std::invalid_argument("config: " + where + " kind must be reset, channel, or mix");
}

}  // namespace detail

/// Loads a stopping model description:
/// { "beta": 0.8, "reward": {...}, "cost": {...}, "kernel": {...},
///   "lower": 0, "upper": 1, "bound_M": 1 }
/// where reward/cost are scalar fields and kernel is an active kernel spec.
inline StoppingSpec load_stopping_spec(const std::string& path) {
  const auto j = parse_json_file(path, "stopping spec");
  detail::require_keys(
      j, {"beta", "reward", "cost", "kernel", "lower", "upper", "bound_M"},
      "stopping spec");
  StoppingSpec spec;
  detail::json_guard("stopping spec", [&] {
    spec.beta = j.at("beta").get<Real>();
    spec.active_reward = detail::scalar_field(j.at("reward"), "reward");
    spec.active_cost = detail::scalar_field(j.at("cost"), "cost");
    spec.active_kernel = detail::kernel_field(j.at("kernel"), "kernel");
    spec.lower = j.value("lower", 0.0);
    spec.upper = j.value("upper", 1.0);
    spec.bound_M = j.value("bound_M", 1.0);
  });
  if (!(spec.lower < spec.upper)) {
    throw std::invalid_argument("stopping spec: lower must be below upper");
  }
  return spec;
}

/// Initial distribution selector: "uniform" over the grid, "pointmass:x",
/// or a path to a JSON file {"states": [...], "probs": [...]}.
inline Distribution parse_distribution(const std::string& selector,
                                       const std::vector<Real>& grid) {
  if (selector == "uniform") return uniform_distribution(grid);
  const std::string prefix = "pointmass:";
  if (selector.rfind(prefix, 0) == 0) {
    const std::string arg = selector.substr(prefix.size());
    std::size_t used = 0;
    Real x = 0.0;
    try {
      x = std::stod(arg, &used);
    } catch (const std::exception&) {
      throw std::invalid_argument("dist: cannot parse point mass '" + arg + "'");
    }
    if (used != arg.size()) {
      throw std::invalid_argument("dist: cannot parse point mass '" + arg + "'");
    }
    return point_mass(x);
  }
  const auto j = parse_json_file(selector, "dist");
  detail::require_keys(j, {"states", "probs"}, "dist");
  Distribution p;
  detail::json_guard("dist", [&] {
    p.states = j.at("states").get<std::vector<Real>>();
    p.probs = j.at("probs").get<std::vector<Real>>();
  });
  p.check();
  return p;
}

/// Writes text through a temporary file renamed into place, so a report
/// path never holds a partially written file.
inline void atomic_write_text(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write " + tmp);
    }
    out << body;
    if (!out.flush()) {
      throw std::runtime_error("write failed for " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("cannot move output into " + path);
  }
}

}  // namespace restless
