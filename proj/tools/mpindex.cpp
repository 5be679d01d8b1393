#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "restless/bellman.hpp"
#include "restless/channel.hpp"
#include "restless/config.hpp"
#include "restless/frontier.hpp"
#include "restless/metrics.hpp"
#include "restless/model.hpp"
#include "restless/pcl.hpp"
#include "restless/report_json.hpp"
#include "restless/stopping.hpp"

using namespace restless;

namespace {

DiscountedProject build_model(const RunConfig& cfg) {
  if (cfg.model == "channel") {
    return channel_project(ChannelParams{cfg.p, cfg.q, cfg.beta});
  }
  return stopping_project(load_stopping_spec(cfg.spec));
}

/// Horizon for the requested tolerance. A short bootstrap pass estimates the
/// index scale and the floor of the marginal resource metric; both only
/// tighten the certificate, so an over-estimate here costs iterations, not
/// correctness.
int resolve_horizon(const DiscountedProject& project, const RunConfig& cfg) {
  if (cfg.horizon > 0) return cfg.horizon;
  const int probe_points = std::min(cfg.grid, 33);
  const auto probe_states = linspace(project.lower, project.upper, probe_points);
  const auto probe = mp_index_curve(project, probe_states, 40);
  Real m_cap = 1.0;
  Real w_max = 0.0;
  for (std::size_t i = 0; i < probe_states.size(); ++i) {
    if (std::isfinite(probe.values[i])) {
      m_cap = std::max(m_cap, std::abs(probe.values[i]));
    }
    w_max = std::max(w_max, project.weight(probe_states[i]));
  }
  const Real g_lower = std::max(probe.g_lower, Real(1e-9));
  return horizon_for_tolerance(project, cfg.tol, g_lower, m_cap, w_max);
}

void require_out(const RunConfig& cfg) {
  if (cfg.out.empty()) {
    throw std::invalid_argument("--out (or config key \"out\") is required");
  }
}

int run_index(const RunConfig& cfg) {
  require_out(cfg);
  const auto project = build_model(cfg);
  const auto grid = linspace(project.lower, project.upper, cfg.grid);
  const int horizon = resolve_horizon(project, cfg);
  const auto curve = mp_index_curve(project, grid, horizon);
  atomic_write_text(cfg.out, index_csv(curve));
  const bool ok = curve.undefined_states.empty();
  std::cout << "index: " << grid.size() << " states, horizon " << horizon
            << ", max error bound " << detail::format_real(curve.max_error_bound());
  if (!ok) {
    std::cout << ", index undefined at " << curve.undefined_states.size()
              << " states";
  }
  std::cout << " -> " << cfg.out << '\n';
  return ok ? 0 : 1;
}

int run_check(const RunConfig& cfg) {
  require_out(cfg);
  ojson doc;
  doc["schema"] = 1;
  doc["command"] = "check";
  doc["effective_config"] = config_to_json(cfg);
  try {
    const auto project = build_model(cfg);
    const auto grid = linspace(project.lower, project.upper, cfg.grid);
    const int horizon = resolve_horizon(project, cfg);
    doc.update(report_context(cfg, project, horizon));

    const auto validation = validate_assumptions(project, grid);
    doc["assumptions"] = to_json(validation);

    const auto table =
        compute_metrics(project, grid, standard_thresholds(grid), horizon);
    const auto curve = mp_index(table);

    // The integral identities see every jump of G(x, .) only when the
    // threshold partition contains the forward orbit of each sampled state;
    // over a bare grid their residuals carry first-order partition error.
    // They therefore run on a small state bench whose reachable closure
    // forms the partition, while PCLI1 and PCLI2 keep full-grid coverage.
    std::vector<Real> bench_states;
    for (std::size_t i = 1; i <= 9; ++i) {
      bench_states.push_back(grid[i * (grid.size() - 1) / 10]);
    }
    bench_states.erase(std::unique(bench_states.begin(), bench_states.end()),
                       bench_states.end());
    auto partition = reachable_breakpoints(project, bench_states);
    std::erase_if(partition,
                  [&](Real v) { return v < bench_states.front(); });
    const auto bench_table = compute_metrics(
        project, bench_states, standard_thresholds(partition), horizon);
    const auto bench_curve = mp_index_curve(project, partition, horizon);

    std::mt19937 rng(cfg.seed);
    std::uniform_int_distribution<std::size_t> pick_point(
        0, partition.size() - 1);
    std::vector<std::pair<Real, Real>> intervals;
    while (partition.size() > 1 &&
           intervals.size() < static_cast<std::size_t>(cfg.intervals)) {
      const std::size_t a = pick_point(rng);
      const std::size_t b = pick_point(rng);
      if (a == b) continue;
      intervals.emplace_back(partition[std::min(a, b)],
                             partition[std::max(a, b)]);
    }

    // The always-passive policy has identically zero metrics, so identity
    // sweeps draw from every other threshold column.
    std::vector<std::pair<Real, ExtendedThreshold>> sample_pairs;
    std::uniform_int_distribution<std::size_t> pick_state(
        0, bench_states.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_col(
        0, bench_table.thresholds.size() - 2);
    for (int i = 0; i < cfg.pairs; ++i) {
      sample_pairs.emplace_back(bench_states[pick_state(rng)],
                                bench_table.thresholds[pick_col(rng)]);
    }

    std::vector<Real> lambdas;
    try {
      lambdas = lambda_sweep(curve, static_cast<std::size_t>(cfg.lambda_count));
    } catch (const std::invalid_argument&) {
      // No finite index values anywhere; PCLI1 reports that failure itself.
    }

    PCLOptions options;
    options.strict = cfg.strict;
    auto report = run_pcl_checks(bench_table, bench_curve, intervals,
                                 sample_pairs, lambdas, options);
    report.pcli1 = check_pcli1(table, options.model_floor);
    report.pcli2 = check_pcli2(curve);
    report.grid_meta = std::to_string(grid.size()) +
                       " grid states; identity bench " + report.grid_meta;
    doc["pcl"] = to_json(report);
    doc["dual_prices"] = lambdas;

    const bool ok = validation.pass && report.pass();
    doc["pass"] = ok;
    atomic_write_text(cfg.out, doc.dump(2) + "\n");
    std::cout << (ok ? "check: pass" : "check: FAIL") << " (horizon " << horizon
              << ", " << report.grid_meta << ") -> " << cfg.out << '\n';
    return ok ? 0 : 1;
  } catch (const model_error& e) {
    doc["assumption_failure"] = e.what();
    doc["pass"] = false;
    atomic_write_text(cfg.out, doc.dump(2) + "\n");
    std::cout << "check: FAIL (assumption): " << e.what() << " -> " << cfg.out
              << '\n';
    return 1;
  }
}

int run_bellman(const RunConfig& cfg) {
  require_out(cfg);
  const auto project = build_model(cfg);
  const auto grid = linspace(project.lower, project.upper, cfg.grid);
  const int horizon = resolve_horizon(project, cfg);
  const auto curve = mp_index_curve(project, grid, horizon);
  const auto lambdas = lambda_sweep(curve, static_cast<std::size_t>(cfg.lambda_count));
  const auto cross = indexability_crosscheck(curve, project, lambdas, cfg.epsilon);

  ojson doc;
  doc["schema"] = 1;
  doc["command"] = "bellman";
  doc.update(report_context(cfg, project, horizon));
  doc["crosscheck"] = to_json(cross);
  doc["pass"] = cross.pass();
  atomic_write_text(cfg.out, doc.dump(2) + "\n");
  std::cout << (cross.pass() ? "bellman: pass" : "bellman: FAIL") << " ("
            << lambdas.size() << " prices, " << grid.size() << " states) -> "
            << cfg.out << '\n';
  return cross.pass() ? 0 : 1;
}

int run_frontier(const RunConfig& cfg) {
  require_out(cfg);
  const auto project = build_model(cfg);
  const auto grid = linspace(project.lower, project.upper, cfg.grid);
  const int horizon = resolve_horizon(project, cfg);
  const auto dist = parse_distribution(cfg.dist, grid);
  const auto points =
      performance_points(project, dist, standard_thresholds(grid), horizon);
  const auto hull = upper_hull(points);
  emit_frontier(hull, points, cfg.out, FrontierFormat::csv);
  if (!cfg.svg.empty()) {
    emit_frontier(hull, points, cfg.svg, FrontierFormat::svg);
  }
  std::cout << "frontier: " << points.size() << " points, " << hull.size()
            << " hull vertices -> " << cfg.out;
  if (!cfg.svg.empty()) std::cout << ", " << cfg.svg;
  std::cout << '\n';
  return 0;
}

struct EvalFlags {
  std::vector<Real> xs;
  std::vector<Real> zs;
  bool below = false;
  bool above = false;
  bool zminus = false;
};

int run_eval(const RunConfig& cfg, EvalFlags ev) {
  const auto project = build_model(cfg);
  std::sort(ev.xs.begin(), ev.xs.end());
  ev.xs.erase(std::unique(ev.xs.begin(), ev.xs.end()), ev.xs.end());
  std::sort(ev.zs.begin(), ev.zs.end());
  ev.zs.erase(std::unique(ev.zs.begin(), ev.zs.end()), ev.zs.end());

  std::vector<ExtendedThreshold> thresholds;
  if (ev.below) thresholds.push_back(ExtendedThreshold::below_all());
  for (Real z : ev.zs) {
    if (ev.zminus) thresholds.push_back(ExtendedThreshold::at_left(z));
    thresholds.push_back(ExtendedThreshold::at(z));
  }
  if (ev.above) thresholds.push_back(ExtendedThreshold::above_all());
  if (thresholds.empty()) {
    throw std::invalid_argument("eval: no thresholds requested (--z/--below/--above)");
  }

  const int horizon = resolve_horizon(project, cfg);
  const auto table = compute_metrics(project, ev.xs, thresholds, horizon);
  std::ostringstream os;
  export_metrics_csv(table, os);
  if (cfg.out.empty()) {
    std::cout << os.str();
  } else {
    atomic_write_text(cfg.out, os.str());
    std::cout << "eval: " << ev.xs.size() << " states x " << thresholds.size()
              << " thresholds -> " << cfg.out << '\n';
  }
  return 0;
}

/// Binds the shared flags of one subcommand. Values land in `v`; resolve()
/// starts from the config file (when given) and overrides with any flag the
/// user actually passed.
struct Binder {
  RunConfig v;
  std::string config_path;
  CLI::Option* model = nullptr;
  CLI::Option* p = nullptr;
  CLI::Option* q = nullptr;
  CLI::Option* beta = nullptr;
  CLI::Option* spec = nullptr;
  CLI::Option* grid = nullptr;
  CLI::Option* tol = nullptr;
  CLI::Option* horizon = nullptr;
  CLI::Option* lambda_count = nullptr;
  CLI::Option* pairs = nullptr;
  CLI::Option* intervals = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* epsilon = nullptr;
  CLI::Option* dist = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* svg = nullptr;
  CLI::Option* strict = nullptr;

  void attach_common(CLI::App* cmd) {
    cmd->add_option("--config", config_path,
                    "JSON config file; explicit flags override its values");
    model = cmd->add_option("--model", v.model, "model family: channel or stopping");
    p = cmd->add_option("--p", v.p, "channel: failure probability of the good state");
    q = cmd->add_option("--q", v.q, "channel: recovery probability of the bad state");
    beta = cmd->add_option("--beta", v.beta, "discount factor in [0, 1)");
    spec = cmd->add_option("--spec", v.spec, "stopping model description file (JSON)");
    grid = cmd->add_option("--grid", v.grid, "number of state grid points");
    tol = cmd->add_option("--tol", v.tol, "target certified index error");
    horizon = cmd->add_option("--horizon", v.horizon,
                              "fixed evaluation horizon (0 derives it from --tol)");
    out = cmd->add_option("--out", v.out, "output file path");
  }

  void attach_check(CLI::App* cmd) {
    lambda_count = cmd->add_option("--lambdas", v.lambda_count,
                                   "number of prices for the dual sweep");
    pairs = cmd->add_option("--pairs", v.pairs,
                            "random state/threshold pairs for identity sweeps");
    intervals = cmd->add_option("--intervals", v.intervals,
                                "random threshold intervals for integral checks");
    seed = cmd->add_option("--seed", v.seed, "seed for the sampled pairs and intervals");
    strict = cmd->add_flag("--strict", v.strict,
                           "treat indeterminate identity results as failures");
  }

  void attach_bellman(CLI::App* cmd) {
    lambda_count = cmd->add_option("--lambdas", v.lambda_count,
                                   "number of prices in the sweep");
    epsilon = cmd->add_option("--epsilon", v.epsilon,
                              "indifference band around each price");
  }

  void attach_frontier(CLI::App* cmd) {
    dist = cmd->add_option("--dist", v.dist,
                           "initial distribution: uniform, pointmass:x, or file.json");
    svg = cmd->add_option("--svg", v.svg, "also write an SVG plot to this path");
  }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    auto take = [](const CLI::Option* opt, auto& dst, const auto& src) {
      if (opt != nullptr && opt->count() > 0) dst = src;
    };
    take(model, cfg.model, v.model);
    take(p, cfg.p, v.p);
    take(q, cfg.q, v.q);
    take(beta, cfg.beta, v.beta);
    take(spec, cfg.spec, v.spec);
    take(grid, cfg.grid, v.grid);
    take(tol, cfg.tol, v.tol);
    take(horizon, cfg.horizon, v.horizon);
    take(lambda_count, cfg.lambda_count, v.lambda_count);
    take(pairs, cfg.pairs, v.pairs);
    take(intervals, cfg.intervals, v.intervals);
    take(seed, cfg.seed, v.seed);
    take(epsilon, cfg.epsilon, v.epsilon);
    take(dist, cfg.dist, v.dist);
    take(out, cfg.out, v.out);
    take(svg, cfg.svg, v.svg);
    take(strict, cfg.strict, v.strict);
    validate_config(cfg);
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Threshold-policy metrics, marginal-productivity index, and "
               "indexability verification for discounted restless bandit projects"};
  app.require_subcommand(1);

  Binder b_index, b_check, b_bellman, b_frontier, b_eval;
  EvalFlags ev;

  CLI::App* cmd_index = app.add_subcommand(
      "index", "Compute the index curve on a grid and write x,m_star,err_bound CSV");
  b_index.attach_common(cmd_index);

  CLI::App* cmd_check = app.add_subcommand(
      "check", "Verify indexability conditions and identities; write a JSON report");
  b_check.attach_common(cmd_check);
  b_check.attach_check(cmd_check);

  CLI::App* cmd_bellman = app.add_subcommand(
      "bellman", "Cross-check the index against independent value iteration");
  b_bellman.attach_common(cmd_bellman);
  b_bellman.attach_bellman(cmd_bellman);

  CLI::App* cmd_frontier = app.add_subcommand(
      "frontier", "Compute the resource-reward point cloud and its upper hull");
  b_frontier.attach_common(cmd_frontier);
  b_frontier.attach_frontier(cmd_frontier);

  CLI::App* cmd_eval = app.add_subcommand(
      "eval", "Evaluate F, G, f, g at explicit states and thresholds");
  b_eval.attach_common(cmd_eval);
  cmd_eval->add_option("--x", ev.xs, "states to evaluate")->required();
  cmd_eval->add_option("--z", ev.zs, "finite thresholds to evaluate");
  cmd_eval->add_flag("--zminus", ev.zminus, "also evaluate the left-limit policies");
  cmd_eval->add_flag("--below", ev.below, "include the always-active policy");
  cmd_eval->add_flag("--above", ev.above, "include the always-passive policy");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << '\n';
    return 2;
  }

  try {
    if (cmd_index->parsed()) return run_index(b_index.resolve());
    if (cmd_check->parsed()) return run_check(b_check.resolve());
    if (cmd_bellman->parsed()) return run_bellman(b_bellman.resolve());
    if (cmd_frontier->parsed()) return run_frontier(b_frontier.resolve());
    if (cmd_eval->parsed()) return run_eval(b_eval.resolve(), ev);
    std::cerr << "error: no subcommand\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const model_error& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
