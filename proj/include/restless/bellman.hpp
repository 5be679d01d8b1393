#pragma once

#include <cmath>
#include <functional>
#include <future>
#include <limits>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "metrics.hpp"
#include "model.hpp"

/// @file bellman.hpp
/// @brief Independent solver for the resource-priced control problem: value
///        iteration on V = max_a { r(x,a) - lambda c(x,a) + beta E_a[V] },
///        optimal action sets from the final action gap, and cross-checks of
///        the index curve against the actions the solved problem prefers.
///
/// Nothing here reads a MetricsTable to produce a value function; the two
/// computations meet only in the cross-check comparisons, which is what
/// makes the agreement between them evidence rather than tautology.

namespace restless {

/// Thrown when value iteration reaches its iteration cap before the update
/// norm falls below the requested tolerance.
struct convergence_error : std::runtime_error {
  Real residual;
  convergence_error(const std::string& what, Real r)
      : std::runtime_error(what), residual(r) {}
};

/// Converged solve of the priced problem at one resource price.
struct LambdaSolution {
  Real lambda = 0.0;
  std::vector<Real> states;      // evaluation grid, as requested
  std::vector<Real> values;      // V at the evaluation grid
  std::vector<Real> action_gap;  // one-step active-minus-passive value
  std::vector<Real> weights;     // w at the evaluation grid
  Real residual = 0.0;           // weighted sup-norm of the final update
  Real certified_error = 0.0;    // residual * gamma / (1 - gamma), w-norm
  Real max_contraction_ratio = 0.0;
  int iterations = 0;

  /// Certified pointwise bound on the action-gap error: both one-step
  /// evaluations inherit at most gamma times the fixed-point error.
  Real gap_error_bound() const {
    Real wmax = 1.0;
    for (Real w : weights) wmax = std::max(wmax, w);
    return 2.0 * certified_error * wmax;
  }
};

namespace detail {

/// Reachable closure of the seed states under both kernels, interned by
/// exact floating-point value. The closure must be complete for the sweep
/// to be well defined, so expansion runs to a fixed point or the budget.
struct BellmanGraph {
  std::vector<Real> nodes;
  std::vector<Real> reward0, reward1, cost0, cost1, weight;
  // Flattened successor lists per action: [offsets[i], offsets[i+1]) edges.
  std::vector<std::size_t> offsets0, offsets1;
  std::vector<std::pair<int, Real>> edges0, edges1;
};

inline BellmanGraph build_bellman_graph(const DiscountedProject& project,
                                        const std::vector<Real>& seeds,
                                        std::size_t node_budget) {
  const auto& k0 = std::get<FiniteSupportKernel>(project.kernel0);
  const auto& k1 = std::get<FiniteSupportKernel>(project.kernel1);

  BellmanGraph g;
  std::unordered_map<Real, int> index;
  auto intern = [&](Real x) -> int {
    auto [it, inserted] = index.try_emplace(x, static_cast<int>(g.nodes.size()));
    if (inserted) {
      g.nodes.push_back(x);
      if (g.nodes.size() > node_budget) {
        throw resource_limit_error(
            "value_iteration: reachable closure exceeded node budget",
            g.nodes.size());
      }
    }
    return it->second;
  };

  for (Real x : seeds) intern(x);
  // nodes grows while scanning; index-based loop keeps iterators valid.
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const Real x = g.nodes[i];
    for (const auto& [y, prob] : k0.support(x)) {
      if (prob > 0.0) intern(y);
    }
    for (const auto& [y, prob] : k1.support(x)) {
      if (prob > 0.0) intern(y);
    }
  }

  const std::size_t n = g.nodes.size();
  g.reward0.resize(n);
  g.reward1.resize(n);
  g.cost0.resize(n);
  g.cost1.resize(n);
  g.weight.resize(n);
  g.offsets0.assign(n + 1, 0);
  g.offsets1.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Real x = g.nodes[i];
    g.reward0[i] = project.reward(x, 0);
    g.reward1[i] = project.reward(x, 1);
    g.cost0[i] = project.cost(x, 0);
    g.cost1[i] = project.cost(x, 1);
    g.weight[i] = project.weight(x);
    for (const auto& [y, prob] : k0.support(x)) {
      if (prob > 0.0) g.edges0.emplace_back(index.at(y), prob);
    }
    g.offsets0[i + 1] = g.edges0.size();
    for (const auto& [y, prob] : k1.support(x)) {
      if (prob > 0.0) g.edges1.emplace_back(index.at(y), prob);
    }
    g.offsets1[i + 1] = g.edges1.size();
  }
  return g;
}

inline int default_iteration_cap(Real gamma, Real lambda, Real bound_M, Real tol) {
  if (gamma <= 0.0) return 16;
  const Real first_update = (1.0 + std::abs(lambda)) * bound_M;
  if (first_update <= tol) return 16;
  const int needed =
      static_cast<int>(std::ceil(std::log(tol / first_update) / std::log(gamma)));
  return std::max(needed, 0) + 64;
}

}  // namespace detail

/// Solves V = max_a { r(x,a) - lambda c(x,a) + beta E_a[V] } by successive
/// approximation from V = 0, stopping when the weighted sup-norm update
/// falls below tol. The fixed-point error is then at most
/// tol * gamma / (1 - gamma) in w-norm. Finite-support kernels are solved on
/// the exact reachable closure of the evaluation grid; quadrature kernels are
/// solved on their node grid with values interpolated to the grid.
inline LambdaSolution value_iteration(const DiscountedProject& project, Real lambda,
                                      const std::vector<Real>& states, Real tol,
                                      int max_iterations = 0,
                                      std::size_t node_budget = kDefaultNodeBudget) {
  if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be > 0");
  if (states.empty()) {
    throw std::invalid_argument("value_iteration: empty state grid");
  }
  const bool finite0 = std::holds_alternative<FiniteSupportKernel>(project.kernel0);
  const bool finite1 = std::holds_alternative<FiniteSupportKernel>(project.kernel1);
  if (finite0 != finite1) {
    throw model_error("value_iteration: kernels must share one representation");
  }

  const Real beta = project.discount;
  const Real gamma = project.rate_gamma;
  const int cap = max_iterations > 0
                      ? max_iterations
                      : detail::default_iteration_cap(gamma, lambda,
                                                      project.bound_M, tol);

  LambdaSolution sol;
  sol.lambda = lambda;
  sol.states = states;

  // Iterate on the solve grid, then read out the requested states.
  std::vector<Real> solve_nodes;
  std::function<Real(std::size_t, const std::vector<Real>&, int)> one_step;

  detail::BellmanGraph graph;
  std::vector<std::vector<Real>> w0, w1;  // quadrature weight rows
  if (finite0) {
    graph = detail::build_bellman_graph(project, states, node_budget);
    solve_nodes = graph.nodes;
    one_step = [&](std::size_t i, const std::vector<Real>& v, int action) {
      const auto& offsets = action == 0 ? graph.offsets0 : graph.offsets1;
      const auto& edges = action == 0 ? graph.edges0 : graph.edges1;
      Real expect = 0.0;
      for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e) {
        expect += edges[e].second * v[static_cast<std::size_t>(edges[e].first)];
      }
      const Real reward = action == 0 ? graph.reward0[i] : graph.reward1[i];
      const Real cost = action == 0 ? graph.cost0[i] : graph.cost1[i];
      return reward - lambda * cost + beta * expect;
    };
  } else {
    const auto& q0 = std::get<QuadratureKernel>(project.kernel0);
    const auto& q1 = std::get<QuadratureKernel>(project.kernel1);
    if (q0.nodes != q1.nodes) {
      throw model_error("value_iteration: quadrature kernels need one node grid");
    }
    solve_nodes = q0.nodes;
    const std::size_t n = solve_nodes.size();
    w0.assign(n, std::vector<Real>(n));
    w1.assign(n, std::vector<Real>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        w0[i][j] = q0.weight(solve_nodes[i], solve_nodes[j]);
        w1[i][j] = q1.weight(solve_nodes[i], solve_nodes[j]);
      }
    }
    one_step = [&](std::size_t i, const std::vector<Real>& v, int action) {
      const auto& row = action == 0 ? w0[i] : w1[i];
      Real expect = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) expect += row[j] * v[j];
      const Real x = solve_nodes[i];
      return project.reward(x, action) - lambda * project.cost(x, action) +
             beta * expect;
    };
  }

  const std::size_t n = solve_nodes.size();
  std::vector<Real> node_weight(n);
  for (std::size_t i = 0; i < n; ++i) {
    node_weight[i] = finite0 ? graph.weight[i] : project.weight(solve_nodes[i]);
  }

  std::vector<Real> v(n, 0.0), next(n, 0.0);
  Real residual = std::numeric_limits<Real>::infinity();
  Real prev_residual = std::numeric_limits<Real>::infinity();
  int iter = 0;
  Real vscale = 1.0;
  while (true) {
    ++iter;
    Real update = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = std::max(one_step(i, v, 0), one_step(i, v, 1));
      update = std::max(update, std::abs(next[i] - v[i]) / node_weight[i]);
      vscale = std::max(vscale, std::abs(next[i]));
    }
    v.swap(next);
    prev_residual = residual;
    residual = update;
    // Contraction evidence, tracked while updates dominate rounding noise:
    // each sweep perturbs entries by O(eps * vscale), so ratios of residuals
    // below that scale say nothing about the operator.
    if (std::isfinite(prev_residual) && prev_residual > 1e-5 * vscale &&
        prev_residual > 0.0) {
      sol.max_contraction_ratio =
          std::max(sol.max_contraction_ratio, residual / prev_residual);
    }
    if (residual <= tol) break;
    if (iter >= cap) {
      throw convergence_error(
          "value_iteration: iteration cap " + std::to_string(cap) +
              " reached with residual " + std::to_string(residual),
          residual);
    }
  }
  sol.iterations = iter;
  sol.residual = residual;
  sol.certified_error = gamma < 1.0 ? residual * gamma / (1.0 - gamma)
                                    : std::numeric_limits<Real>::infinity();

  // Read out the requested states: exact rows for finite support, clamped
  // linear interpolation on the quadrature node grid.
  auto value_of = [&](Real x) -> Real {
    if (finite0) {
      for (std::size_t i = 0; i < n; ++i) {
        if (solve_nodes[i] == x) return v[i];
      }
      throw std::invalid_argument("value_iteration: state missing from closure");
    }
    if (x <= solve_nodes.front()) return v.front();
    if (x >= solve_nodes.back()) return v.back();
    const auto it = std::upper_bound(solve_nodes.begin(), solve_nodes.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - solve_nodes.begin());
    const Real t = (x - solve_nodes[j - 1]) / (solve_nodes[j] - solve_nodes[j - 1]);
    return (1.0 - t) * v[j - 1] + t * v[j];
  };

  const Real value_cap = (1.0 + std::abs(lambda)) * project.m_gamma();
  for (Real x : states) {
    const Real w = project.weight(x);
    Real value;
    Real gap;
    if (finite0) {
      // Requested states seeded the closure, so the lookup cannot miss.
      std::size_t row = 0;
      while (solve_nodes[row] != x) ++row;
      value = v[row];
      gap = one_step(row, v, 1) - one_step(row, v, 0);
    } else {
      value = value_of(x);
      auto q_gap = [&](int action) {
        const auto& qk = std::get<QuadratureKernel>(project.kernel(action));
        Real expect = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          expect += qk.weight(x, solve_nodes[j]) * v[j];
        }
        return project.reward(x, action) - lambda * project.cost(x, action) +
               beta * expect;
      };
      gap = q_gap(1) - q_gap(0);
    }
    if (std::abs(value) > value_cap * w + sol.certified_error * w + 1e-9) {
      throw model_error("value_iteration: value bound violated at x=" +
                        std::to_string(x));
    }
    sol.values.push_back(value);
    sol.action_gap.push_back(gap);
    sol.weights.push_back(w);
  }
  return sol;
}

/// Partition of the evaluation grid by the sign of the action gap, with a
/// dead band of half-width epsilon around zero.
struct ActionSets {
  std::vector<Real> active;       // gap > epsilon
  std::vector<Real> passive;      // gap < -epsilon
  std::vector<Real> indifferent;  // |gap| <= epsilon
  Real epsilon = 0.0;
};

/// Splits states by preferred action. A negative epsilon requests the
/// default band, ten times the certified gap error.
inline ActionSets optimal_action_sets(const LambdaSolution& solution,
                                      Real epsilon = -1.0) {
  ActionSets sets;
  sets.epsilon = epsilon >= 0.0 ? epsilon : 10.0 * solution.gap_error_bound();
  for (std::size_t i = 0; i < solution.states.size(); ++i) {
    const Real gap = solution.action_gap[i];
    if (gap > sets.epsilon) {
      sets.active.push_back(solution.states[i]);
    } else if (gap < -sets.epsilon) {
      sets.passive.push_back(solution.states[i]);
    } else {
      sets.indifferent.push_back(solution.states[i]);
    }
  }
  return sets;
}

/// One disagreement between the index curve and the solved problem.
struct CrossCheckFailure {
  Real lambda = 0.0;
  Real x = 0.0;
  int expected = 0;  // action the index predicts
  int got = 0;       // -1 when the solve left the state indifferent
};

struct CrossCheckReport {
  std::vector<Real> lambdas;
  std::vector<Real> agreements;  // matched fraction per price, in [0, 1]
  Real indifference_band = 0.0;
  std::vector<CrossCheckFailure> failures;

  bool pass() const {
    for (Real a : agreements) {
      if (a < 1.0) return false;
    }
    return true;
  }
};

/// For each price, solves the priced problem independently and checks that
/// states where the index clears the price by more than the band are active
/// in the solve, and states below it are passive. Solves run concurrently;
/// the project callbacks must tolerate concurrent const calls.
inline CrossCheckReport indexability_crosscheck(const IndexCurve& curve,
                                                const DiscountedProject& project,
                                                const std::vector<Real>& lambdas,
                                                Real epsilon, Real tol = 1e-10) {
  if (!(epsilon >= 0.0)) {
    throw std::invalid_argument("indexability_crosscheck: epsilon must be >= 0");
  }
  CrossCheckReport report;
  report.lambdas = lambdas;
  report.indifference_band = epsilon;

  std::vector<std::future<LambdaSolution>> solves;
  solves.reserve(lambdas.size());
  for (Real lambda : lambdas) {
    solves.push_back(std::async(std::launch::async, [&, lambda] {
      return value_iteration(project, lambda, curve.states, tol);
    }));
  }

  for (std::size_t s = 0; s < solves.size(); ++s) {
    const LambdaSolution sol = solves[s].get();
    const auto sets = optimal_action_sets(sol);
    std::size_t considered = 0, matched = 0;
    for (std::size_t i = 0; i < curve.states.size(); ++i) {
      const Real margin = curve.values[i] - sol.lambda;
      if (!std::isfinite(margin) || std::abs(margin) <= epsilon) continue;
      ++considered;
      const int expected = margin > 0.0 ? 1 : 0;
      const Real gap = sol.action_gap[i];
      const int got = gap > sets.epsilon ? 1 : gap < -sets.epsilon ? 0 : -1;
      if (got == expected) {
        ++matched;
      } else {
        report.failures.push_back({sol.lambda, curve.states[i], expected, got});
      }
    }
    report.agreements.push_back(
        considered == 0 ? 1.0
                        : static_cast<Real>(matched) / static_cast<Real>(considered));
  }
  return report;
}

/// Thresholds whose policy the price lambda cannot improve upon: every
/// passive state's marginal ratio sits at or below lambda and every active
/// state's at or above it, within the certified ratio errors.
struct ThresholdSet {
  std::vector<ExtendedThreshold> thresholds;
  // Set when the index range says a threshold should exist but none passed.
  bool flagged_inconsistent = false;
};

inline ThresholdSet optimal_threshold_set(Real lambda, const MetricsTable& table,
                                          const IndexCurve& curve,
                                          Real g_floor = 1e-9) {
  ThresholdSet out;
  for (std::size_t j = 0; j < table.thresholds.size(); ++j) {
    const auto& threshold = table.thresholds[j];
    Real sup_passive = -std::numeric_limits<Real>::infinity();
    Real inf_active = std::numeric_limits<Real>::infinity();
    bool usable = true;
    for (std::size_t i = 0; i < table.states.size(); ++i) {
      const Real g = table.g[i][j];
      if (!(std::abs(g) > g_floor)) {
        usable = false;
        break;
      }
      const Real m = table.f[i][j] / g;
      const Real err =
          table.error_fg * table.weights[i] * (1.0 + std::abs(m)) / std::abs(g);
      if (threshold.active(table.states[i])) {
        inf_active = std::min(inf_active, m + err);
      } else {
        sup_passive = std::max(sup_passive, m - err);
      }
    }
    if (usable && sup_passive <= lambda && lambda <= inf_active) {
      out.thresholds.push_back(threshold);
    }
  }

  if (out.thresholds.empty() && !curve.values.empty()) {
    Real lo = std::numeric_limits<Real>::infinity();
    Real hi = -std::numeric_limits<Real>::infinity();
    for (Real m : curve.values) {
      if (std::isfinite(m)) {
        lo = std::min(lo, m);
        hi = std::max(hi, m);
      }
    }
    const Real band = curve.max_error_bound();
    if (lambda >= lo - band && lambda <= hi + band) out.flagged_inconsistent = true;
  }
  return out;
}

/// Evenly spaced prices spanning the sampled index range padded by the given
/// fraction on each side.
inline std::vector<Real> lambda_sweep(const IndexCurve& curve, std::size_t count = 33,
                                      Real pad = 0.1) {
  Real lo = std::numeric_limits<Real>::infinity();
  Real hi = -std::numeric_limits<Real>::infinity();
  for (Real m : curve.values) {
    if (std::isfinite(m)) {
      lo = std::min(lo, m);
      hi = std::max(hi, m);
    }
  }
  if (!(lo <= hi)) {
    throw std::invalid_argument("lambda_sweep: curve has no finite values");
  }
  const Real range = hi > lo ? hi - lo : std::max(Real(1), std::abs(hi));
  return linspace(lo - pad * range, hi + pad * range, count);
}

}  // namespace restless
