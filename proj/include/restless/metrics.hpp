#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "model.hpp"

/// @file metrics.hpp
/// @brief Finite-horizon threshold-policy performance metrics F_k, G_k,
///        marginal metrics f_k, g_k, and the marginal-productivity index
///        m*_k(x) = f_k(x,x)/g_k(x,x), all with certified geometric error
///        bounds inherited from the contraction rate gamma.
///
/// The recursions are
///   F_0(x, z) = r(x, a_z(x)),
///   F_{k+1}(x, z) = r(x, a_z(x)) + beta * E[F_k(X', z) | x, a_z(x)],
///   f_{k+1}(x, z) = Delta_a { r(x, a) + beta * E[F_k(X', z) | x, a] },
/// with a_z the deterministic action of the threshold policy, and the same
/// shape for G_k, g_k with the cost in place of the reward. The w-norm error
/// certificates are M_gamma*gamma^k for F_k, G_k and 2*M_gamma*gamma^k for
/// f_k, g_k, where M_gamma = M/(1-gamma).

namespace restless {

constexpr std::size_t kDefaultNodeBudget = 200000;

/// F, G, f, g on a state x threshold grid at a fixed horizon.
struct MetricsTable {
  std::vector<Real> states;                   // sorted ascending
  std::vector<ExtendedThreshold> thresholds;  // sorted by policy inclusiveness
  int horizon = 0;
  std::vector<std::vector<Real>> F, G, f, g;  // [state index][threshold index]
  Real bound_Mgamma = 0.0;
  Real error_FG = 0.0;  // M_gamma * gamma^k, a w-norm bound
  Real error_fg = 0.0;  // 2 * M_gamma * gamma^k
  std::vector<Real> weights;  // w(x) per state, for pointwise bounds

  int state_row(Real x) const {
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (states[i] == x) return static_cast<int>(i);
    }
    return -1;
  }
  int threshold_column(const ExtendedThreshold& t) const {
    for (std::size_t j = 0; j < thresholds.size(); ++j) {
      if (thresholds[j] == t) return static_cast<int>(j);
    }
    return -1;
  }
};

/// Sampled index curve m*_k with per-state error bounds.
struct IndexCurve {
  std::vector<Real> states;        // strictly increasing
  std::vector<Real> values;        // m*_k(x) = f_k(x,x) / g_k(x,x)
  std::vector<Real> error_bounds;  // 2*M_gamma*gamma^k*w(x)*(1+|m*_k(x)|)/g_lower
  std::vector<int> undefined_states;  // rows where g_k(x,x) fell below the floor
  Real g_lower = 0.0;
  int horizon = 0;
  Real gamma_pow_k = 0.0;

  /// Piecewise-linear interpolation of the sampled curve, clamped at the ends.
  Real value_at(Real x) const {
    if (states.empty()) throw std::invalid_argument("IndexCurve: empty");
    if (x <= states.front()) return values.front();
    if (x >= states.back()) return values.back();
    auto it = std::upper_bound(states.begin(), states.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - states.begin());
    const Real x0 = states[j - 1], x1 = states[j];
    const Real t = (x - x0) / (x1 - x0);
    return (1.0 - t) * values[j - 1] + t * values[j];
  }
  Real max_error_bound() const {
    Real m = 0.0;
    for (Real e : error_bounds) m = std::max(m, e);
    return m;
  }
};

namespace detail {

/// Per-column result of the recursion at the requested states.
struct ColumnMetrics {
  std::vector<Real> F, G, f, g;
};

/// Value iteration over the exact reachable closure of a finite-support
/// kernel under one deterministic threshold policy.
///
/// The closure is seeded with the requested states at depth 0 plus their
/// one-step successors under both actions at depth 1 (the marginal metrics
/// need the horizon k-1 values there), then expanded through the policy
/// kernel to depth k. Discovery order is breadth-first, so the node array is
/// sorted by depth and iteration j only needs to update the prefix of nodes
/// with depth <= k - j.
inline ColumnMetrics finite_support_column(const DiscountedProject& project,
                                           const std::vector<Real>& requested,
                                           const ExtendedThreshold& threshold,
                                           int horizon,
                                           std::size_t node_budget) {
  const auto& pk0 = std::get<FiniteSupportKernel>(project.kernel0);
  const auto& pk1 = std::get<FiniteSupportKernel>(project.kernel1);

  std::vector<Real> nodes;
  std::vector<int> depth;
  std::unordered_map<Real, int> index;
  nodes.reserve(requested.size() * 4);

  auto intern = [&](Real x, int d) -> int {
    auto [it, inserted] = index.try_emplace(x, static_cast<int>(nodes.size()));
    if (inserted) {
      nodes.push_back(x);
      depth.push_back(d);
      if (nodes.size() > node_budget) {
        throw resource_limit_error(
            "compute_metrics: reachable closure exceeded node budget", nodes.size());
      }
    }
    return it->second;
  };

  std::vector<int> requested_idx(requested.size());
  for (std::size_t i = 0; i < requested.size(); ++i) {
    requested_idx[i] = intern(requested[i], 0);
  }
  // Both-action successors of the requested states, needed at horizon k-1.
  std::vector<std::vector<std::pair<int, Real>>> succ0(requested.size());
  std::vector<std::vector<std::pair<int, Real>>> succ1(requested.size());
  for (std::size_t i = 0; i < requested.size(); ++i) {
    for (const auto& [y, prob] : pk0.support(requested[i])) {
      succ0[i].emplace_back(intern(y, 1), prob);
    }
    for (const auto& [y, prob] : pk1.support(requested[i])) {
      succ1[i].emplace_back(intern(y, 1), prob);
    }
  }

  // Expand through the policy kernel, breadth-first.
  std::vector<std::vector<std::pair<int, Real>>> edges;
  edges.reserve(nodes.size());
  for (std::size_t head = 0; head < nodes.size(); ++head) {
    edges.emplace_back();
    if (depth[head] >= horizon) continue;  // values beyond this depth are unused
    const Real x = nodes[head];
    const auto& pk = threshold.active(x) ? pk1 : pk0;
    for (const auto& [y, prob] : pk.support(x)) {
      edges[head].emplace_back(intern(y, depth[head] + 1), prob);
    }
  }

  const std::size_t n = nodes.size();
  std::vector<Real> reward_here(n), cost_here(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int a = threshold.active(nodes[i]) ? 1 : 0;
    reward_here[i] = project.reward(nodes[i], a);
    cost_here[i] = project.cost(nodes[i], a);
  }

  // Number of nodes with depth <= d. Depths are nondecreasing along the
  // discovery order, so a prefix count suffices.
  auto prefix_for_depth = [&](int d) {
    std::size_t count = n;
    while (count > 0 && depth[count - 1] > d) --count;
    return count;
  };

  std::vector<Real> Fcur(n), Gcur(n), Fprev, Gprev;
  for (std::size_t i = 0; i < n; ++i) {
    Fcur[i] = reward_here[i];
    Gcur[i] = cost_here[i];
  }
  const Real beta = project.discount;
  for (int j = 1; j <= horizon; ++j) {
    Fprev = Fcur;
    Gprev = Gcur;
    const std::size_t limit = prefix_for_depth(horizon - j);
    for (std::size_t i = 0; i < limit; ++i) {
      Real ef = 0.0, eg = 0.0;
      for (const auto& [yi, prob] : edges[i]) {
        ef += prob * Fprev[yi];
        eg += prob * Gprev[yi];
      }
      Fcur[i] = reward_here[i] + beta * ef;
      Gcur[i] = cost_here[i] + beta * eg;
    }
  }

  ColumnMetrics out;
  const std::size_t m = requested.size();
  out.F.resize(m);
  out.G.resize(m);
  out.f.resize(m);
  out.g.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const int row = requested_idx[i];
    out.F[i] = Fcur[row];
    out.G[i] = Gcur[row];
    const Real x = requested[i];
    if (horizon == 0) {
      out.f[i] = project.reward(x, 1) - project.reward(x, 0);
      out.g[i] = project.cost(x, 1) - project.cost(x, 0);
    } else {
      Real ef0 = 0.0, eg0 = 0.0, ef1 = 0.0, eg1 = 0.0;
      for (const auto& [yi, prob] : succ0[i]) {
        ef0 += prob * Fprev[yi];
        eg0 += prob * Gprev[yi];
      }
      for (const auto& [yi, prob] : succ1[i]) {
        ef1 += prob * Fprev[yi];
        eg1 += prob * Gprev[yi];
      }
      out.f[i] = (project.reward(x, 1) + beta * ef1) - (project.reward(x, 0) + beta * ef0);
      out.g[i] = (project.cost(x, 1) + beta * eg1) - (project.cost(x, 0) + beta * eg0);
    }
  }
  return out;
}

/// Value iteration on the quadrature node grid. The node values determine
/// the recursion everywhere, so requested states off the grid are evaluated
/// by one extra application of the recursion step.
inline ColumnMetrics quadrature_column(const DiscountedProject& project,
                                       const std::vector<Real>& requested,
                                       const ExtendedThreshold& threshold,
                                       int horizon) {
  const auto& qk0 = std::get<QuadratureKernel>(project.kernel0);
  const auto& qk1 = std::get<QuadratureKernel>(project.kernel1);
  if (qk0.nodes != qk1.nodes) {
    throw model_error("compute_metrics: quadrature kernels must share one node grid");
  }
  const auto& nodes = qk0.nodes;
  const std::size_t n = nodes.size();
  const Real beta = project.discount;

  // Row of step weights from x under the kernel of the given action.
  auto weight_row = [&](Real x, int a) {
    const auto& qk = a == 0 ? qk0 : qk1;
    std::vector<Real> row(n);
    for (std::size_t mcol = 0; mcol < n; ++mcol) row[mcol] = qk.weight(x, nodes[mcol]);
    return row;
  };

  std::vector<std::vector<Real>> W(n);
  std::vector<Real> reward_here(n), cost_here(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int a = threshold.active(nodes[i]) ? 1 : 0;
    W[i] = weight_row(nodes[i], a);
    reward_here[i] = project.reward(nodes[i], a);
    cost_here[i] = project.cost(nodes[i], a);
  }

  std::vector<Real> Fcur(n), Gcur(n), Fprev(n), Gprev(n);
  for (std::size_t i = 0; i < n; ++i) {
    Fcur[i] = reward_here[i];
    Gcur[i] = cost_here[i];
  }
  for (int j = 1; j <= horizon; ++j) {
    Fprev = Fcur;
    Gprev = Gcur;
    for (std::size_t i = 0; i < n; ++i) {
      Real ef = 0.0, eg = 0.0;
      for (std::size_t mcol = 0; mcol < n; ++mcol) {
        ef += W[i][mcol] * Fprev[mcol];
        eg += W[i][mcol] * Gprev[mcol];
      }
      Fcur[i] = reward_here[i] + beta * ef;
      Gcur[i] = cost_here[i] + beta * eg;
    }
  }

  ColumnMetrics out;
  const std::size_t m = requested.size();
  out.F.resize(m);
  out.G.resize(m);
  out.f.resize(m);
  out.g.resize(m);
  auto final_at = [&](Real x, const std::vector<Real>& prev,
                      const std::vector<Real>& cur,
                      const std::function<Real(Real, int)>& stage) {
    // Nodes carry the final iterate directly; other states get one extra step.
    auto it = std::lower_bound(nodes.begin(), nodes.end(), x);
    if (it != nodes.end() && *it == x) {
      return cur[static_cast<std::size_t>(it - nodes.begin())];
    }
    const int a = threshold.active(x) ? 1 : 0;
    if (horizon == 0) return stage(x, a);
    const auto row = weight_row(x, a);
    Real e = 0.0;
    for (std::size_t mcol = 0; mcol < n; ++mcol) e += row[mcol] * prev[mcol];
    return stage(x, a) + beta * e;
  };
  for (std::size_t i = 0; i < m; ++i) {
    const Real x = requested[i];
    out.F[i] = final_at(x, Fprev, Fcur, project.reward);
    out.G[i] = final_at(x, Gprev, Gcur, project.cost);
    if (horizon == 0) {
      out.f[i] = project.reward(x, 1) - project.reward(x, 0);
      out.g[i] = project.cost(x, 1) - project.cost(x, 0);
    } else {
      Real ef[2] = {0.0, 0.0}, eg[2] = {0.0, 0.0};
      for (int a = 0; a < 2; ++a) {
        const auto row = weight_row(x, a);
        for (std::size_t mcol = 0; mcol < n; ++mcol) {
          ef[a] += row[mcol] * Fprev[mcol];
          eg[a] += row[mcol] * Gprev[mcol];
        }
      }
      out.f[i] = (project.reward(x, 1) + beta * ef[1]) -
                 (project.reward(x, 0) + beta * ef[0]);
      out.g[i] = (project.cost(x, 1) + beta * eg[1]) -
                 (project.cost(x, 0) + beta * eg[0]);
    }
  }
  return out;
}

inline ColumnMetrics metrics_column(const DiscountedProject& project,
                                    const std::vector<Real>& requested,
                                    const ExtendedThreshold& threshold,
                                    int horizon,
                                    std::size_t node_budget) {
  if (std::holds_alternative<FiniteSupportKernel>(project.kernel0) &&
      std::holds_alternative<FiniteSupportKernel>(project.kernel1)) {
    return finite_support_column(project, requested, threshold, horizon, node_budget);
  }
  if (std::holds_alternative<QuadratureKernel>(project.kernel0) &&
      std::holds_alternative<QuadratureKernel>(project.kernel1)) {
    return quadrature_column(project, requested, threshold, horizon);
  }
  throw model_error("compute_metrics: kernels must share one representation");
}

}  // namespace detail

/// Computes F_k, G_k, f_k, g_k at every (state, threshold) pair. States must
/// be sorted ascending and thresholds sorted by policy inclusiveness.
inline MetricsTable compute_metrics(const DiscountedProject& project,
                                    const std::vector<Real>& states,
                                    const std::vector<ExtendedThreshold>& thresholds,
                                    int horizon,
                                    std::size_t node_budget = kDefaultNodeBudget) {
  if (horizon < 0) throw std::invalid_argument("compute_metrics: horizon < 0");
  if (!std::is_sorted(states.begin(), states.end())) {
    throw std::invalid_argument("compute_metrics: states not sorted");
  }
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw std::invalid_argument("compute_metrics: thresholds not sorted");
  }

  MetricsTable table;
  table.states = states;
  table.thresholds = thresholds;
  table.horizon = horizon;
  table.bound_Mgamma = project.m_gamma();
  const Real decay = std::pow(project.rate_gamma, horizon);
  table.error_FG = table.bound_Mgamma * decay;
  table.error_fg = 2.0 * table.bound_Mgamma * decay;
  table.weights.resize(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    table.weights[i] = project.weight(states[i]);
  }

  const std::size_t rows = states.size();
  const std::size_t cols = thresholds.size();
  table.F.assign(rows, std::vector<Real>(cols, 0.0));
  table.G.assign(rows, std::vector<Real>(cols, 0.0));
  table.f.assign(rows, std::vector<Real>(cols, 0.0));
  table.g.assign(rows, std::vector<Real>(cols, 0.0));

  for (std::size_t j = 0; j < cols; ++j) {
    const auto column =
        detail::metrics_column(project, states, thresholds[j], horizon, node_budget);
    for (std::size_t i = 0; i < rows; ++i) {
      table.F[i][j] = column.F[i];
      table.G[i][j] = column.G[i];
      table.f[i][j] = column.f[i];
      table.g[i][j] = column.g[i];
    }
  }
  return table;
}

/// Ensures the marginal metrics f_k, g_k are present in the table. They are
/// produced together with F_k, G_k by compute_metrics, so this recomputes
/// them only if the table was built elsewhere without them.
inline MetricsTable marginal_metrics(const DiscountedProject& project,
                                     MetricsTable table,
                                     std::size_t node_budget = kDefaultNodeBudget) {
  const bool filled = !table.f.empty() && !table.f.front().empty();
  if (filled) return table;
  const MetricsTable fresh = compute_metrics(project, table.states, table.thresholds,
                                             table.horizon, node_budget);
  table.f = fresh.f;
  table.g = fresh.g;
  return table;
}

/// Conservative lower estimate of g over the evaluated grid: the smallest
/// g_k entry minus its pointwise error bound.
inline Real estimate_g_lower(const MetricsTable& table) {
  Real lo = std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < table.states.size(); ++i) {
    for (std::size_t j = 0; j < table.thresholds.size(); ++j) {
      lo = std::min(lo, table.g[i][j] - table.error_fg * table.weights[i]);
    }
  }
  return lo;
}

namespace detail {

inline IndexCurve index_curve_from_diagonal(const std::vector<Real>& states,
                                            const std::vector<Real>& fdiag,
                                            const std::vector<Real>& gdiag,
                                            const std::vector<Real>& weights,
                                            Real bound_Mgamma, Real gamma_pow_k,
                                            int horizon, Real g_lower, Real g_floor) {
  IndexCurve curve;
  curve.states = states;
  curve.horizon = horizon;
  curve.gamma_pow_k = gamma_pow_k;
  curve.g_lower = g_lower;
  curve.values.resize(states.size());
  curve.error_bounds.resize(states.size());
  const Real err_fg = 2.0 * bound_Mgamma * gamma_pow_k;
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (gdiag[i] <= g_floor) {
      curve.values[i] = std::numeric_limits<Real>::quiet_NaN();
      curve.error_bounds[i] = std::numeric_limits<Real>::infinity();
      curve.undefined_states.push_back(static_cast<int>(i));
      continue;
    }
    curve.values[i] = fdiag[i] / gdiag[i];
    const Real denom = g_lower > 0.0 ? g_lower : gdiag[i];
    curve.error_bounds[i] =
        err_fg * weights[i] * (1.0 + std::abs(curve.values[i])) / denom;
  }
  return curve;
}

}  // namespace detail

/// MP index from a table whose thresholds include the z-policy at every
/// state: m*_k(x) = f_k(x,x) / g_k(x,x). States where g_k(x,x) <= g_floor are
/// flagged undefined rather than divided.
inline IndexCurve mp_index(const MetricsTable& table, Real g_floor = 1e-9) {
  std::vector<Real> fdiag(table.states.size()), gdiag(table.states.size());
  for (std::size_t i = 0; i < table.states.size(); ++i) {
    const int j = table.threshold_column(ExtendedThreshold::at(table.states[i]));
    if (j < 0) {
      throw std::invalid_argument(
          "mp_index: table lacks the z-policy column at state " +
          std::to_string(table.states[i]));
    }
    fdiag[i] = table.f[i][static_cast<std::size_t>(j)];
    gdiag[i] = table.g[i][static_cast<std::size_t>(j)];
  }
  // gamma^k recovered from the stored certificate so the curve and the table
  // carry one consistent decay factor.
  const Real gamma_pow_k =
      table.bound_Mgamma > 0.0 ? table.error_FG / table.bound_Mgamma : 0.0;
  return detail::index_curve_from_diagonal(table.states, fdiag, gdiag, table.weights,
                                           table.bound_Mgamma, gamma_pow_k,
                                           table.horizon, estimate_g_lower(table),
                                           g_floor);
}

/// MP index sampled directly along the diagonal, one small recursion per
/// state. Avoids building the full state x threshold table when only the
/// curve is needed.
inline IndexCurve mp_index_curve(const DiscountedProject& project,
                                 const std::vector<Real>& states, int horizon,
                                 Real g_floor = 1e-9,
                                 std::size_t node_budget = kDefaultNodeBudget) {
  std::vector<Real> fdiag(states.size()), gdiag(states.size()), weights(states.size());
  const Real gamma_pow_k = std::pow(project.rate_gamma, horizon);
  const Real err_fg = 2.0 * project.m_gamma() * gamma_pow_k;
  Real g_min = std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::vector<Real> one{states[i]};
    const auto col = detail::metrics_column(project, one,
                                            ExtendedThreshold::at(states[i]), horizon,
                                            node_budget);
    fdiag[i] = col.f[0];
    gdiag[i] = col.g[0];
    weights[i] = project.weight(states[i]);
    g_min = std::min(g_min, col.g[0] - err_fg * weights[i]);
  }
  return detail::index_curve_from_diagonal(states, fdiag, gdiag, weights,
                                           project.m_gamma(), gamma_pow_k, horizon,
                                           g_min, g_floor);
}

/// Metrics of the z-minus policy (active on [z, u]) at the given states.
struct LeftLimitMetrics {
  std::vector<Real> F, G, f, g;
};

inline LeftLimitMetrics left_limit_metrics(const DiscountedProject& project,
                                           const std::vector<Real>& states, Real z,
                                           int horizon,
                                           std::size_t node_budget = kDefaultNodeBudget) {
  const auto col = detail::metrics_column(project, states,
                                          ExtendedThreshold::at_left(z), horizon,
                                          node_budget);
  return {col.F, col.G, col.f, col.g};
}

/// Smallest horizon k whose index error certificate
/// 2*M_gamma*gamma^k*w_max*(1+m_cap)/g_lower falls within tol.
inline int horizon_for_tolerance(const DiscountedProject& project, Real tol,
                                 Real g_lower, Real m_cap, Real w_max = 1.0) {
  if (tol <= 0.0) throw std::invalid_argument("horizon_for_tolerance: tol <= 0");
  if (g_lower <= 0.0) throw std::invalid_argument("horizon_for_tolerance: g_lower <= 0");
  const Real gamma = project.rate_gamma;
  if (gamma >= 1.0) {
    throw model_error("horizon_for_tolerance: rate_gamma >= 1, no convergence");
  }
  const Real scale = 2.0 * project.m_gamma() * w_max * (1.0 + m_cap) / g_lower;
  if (scale <= tol) return 0;
  if (gamma <= 0.0) return 1;
  // Logarithm estimate, then an integer scan to absorb rounding at the edge.
  int k = static_cast<int>(std::ceil(std::log(tol / scale) / std::log(gamma)));
  k = std::max(k, 0);
  while (k > 0 && scale * std::pow(gamma, k - 1) <= tol) --k;
  while (scale * std::pow(gamma, k) > tol) ++k;
  return k;
}

namespace detail {

inline std::string format_real(Real v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// CSV export, one row per (state, threshold) pair. The z field is empty for
/// the below/above extreme policies.
inline void export_metrics_csv(const MetricsTable& table, std::ostream& os) {
  os << "x,z,z_kind,F,G,f,g,k,err_FG,err_fg\n";
  for (std::size_t i = 0; i < table.states.size(); ++i) {
    for (std::size_t j = 0; j < table.thresholds.size(); ++j) {
      const auto& t = table.thresholds[j];
      os << detail::format_real(table.states[i]) << ',';
      if (t.kind == ExtendedThreshold::Kind::finite) os << detail::format_real(t.z);
      os << ',' << t.kind_label() << ',' << detail::format_real(table.F[i][j]) << ','
         << detail::format_real(table.G[i][j]) << ','
         << detail::format_real(table.f[i][j]) << ','
         << detail::format_real(table.g[i][j]) << ',' << table.horizon << ','
         << detail::format_real(table.error_FG) << ','
         << detail::format_real(table.error_fg) << '\n';
    }
  }
}

/// Standard threshold grid: the z and z-minus policies at every breakpoint
/// plus the two extreme policies.
inline std::vector<ExtendedThreshold> standard_thresholds(
    const std::vector<Real>& breakpoints) {
  std::vector<ExtendedThreshold> out;
  out.reserve(breakpoints.size() * 2 + 2);
  out.push_back(ExtendedThreshold::below_all());
  for (Real z : breakpoints) {
    out.push_back(ExtendedThreshold::at_left(z));
    out.push_back(ExtendedThreshold::at(z));
  }
  out.push_back(ExtendedThreshold::above_all());
  return out;
}

}  // namespace restless
