#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "metrics.hpp"
#include "model.hpp"

/// @file pcl.hpp
/// @brief Numerical verification of the three index-policy certification
///        conditions and their identity-level consequences:
///          PCLI1: the marginal resource metric g stays positive;
///          PCLI2: the index curve is monotone nondecreasing (continuity is
///                 assessed as evidence, never proved);
///          PCLI3: metric increments decompose as Lebesgue-Stieltjes
///                 integrals of the index against the resource metric,
///                 F(x,z2) - F(x,z1) = integral of m* dG(x,.) over (z1,z2].
///        Also covered: the Volterra-type integral identities linking
///        m(x,z) to the index, the sign identity
///        sgn(m(x,z) - m*(z)) = sgn(m*(x) - m*(z)), feasibility margins of
///        the dual witness built from min{m*, lambda}, and detection of the
///        piecewise-constant structure of G(x,.).

namespace restless {

/// A cadlag step function sampled on a sorted breakpoint grid: the value at
/// each point together with its left limit, so jumps are representable
/// exactly.
struct SteppedFunction {
  std::vector<Real> points;
  std::vector<Real> values;       // phi(t_i)
  std::vector<Real> left_values;  // phi(t_i-)

  std::size_t size() const { return points.size(); }

  int find(Real t) const {
    const auto it = std::lower_bound(points.begin(), points.end(), t);
    if (it == points.end() || *it != t) return -1;
    return static_cast<int>(it - points.begin());
  }

  void validate() const {
    if (points.size() != values.size() || points.size() != left_values.size()) {
      throw std::invalid_argument("SteppedFunction: size mismatch");
    }
    if (!std::is_sorted(points.begin(), points.end())) {
      throw std::invalid_argument("SteppedFunction: breakpoints not sorted");
    }
  }
};

/// Lebesgue-Stieltjes integral of `integrand` against the stepped
/// integrator over the half-open interval (z1, z2].
///
/// Each consecutive breakpoint pair contributes
///   integrand(t_i) * (left(t_i) - value(t_{i-1}))     continuous increment
///   integrand(t_i) * (value(t_i) - left(t_i))         jump at t_i
/// so a jump sitting exactly on a breakpoint is integrated exactly; a jump
/// interior to a cell is attributed to the cell's right endpoint and the
/// error refines away as the partition is refined. The jump at z1 is outside
/// the interval, the jump at z2 inside.
template <typename Integrand>
Real ls_integral(const SteppedFunction& integrator, Integrand&& integrand, Real z1,
                 Real z2) {
  integrator.validate();
  if (z1 > z2) throw std::invalid_argument("ls_integral: z1 > z2");
  const int i1 = integrator.find(z1);
  const int i2 = integrator.find(z2);
  if (i1 < 0 || i2 < 0) {
    throw std::invalid_argument("ls_integral: interval endpoint is not a breakpoint");
  }
  Real total = 0.0;
  for (int i = i1 + 1; i <= i2; ++i) {
    const Real phi = integrand(integrator.points[i]);
    total += phi * (integrator.left_values[i] - integrator.values[i - 1]);
    total += phi * (integrator.values[i] - integrator.left_values[i]);
  }
  return total;
}

/// Integral of a cadlag piecewise-constant integrand against a continuous
/// integrator over the partition cells between a and b: each cell evaluates
/// the integrand at its left endpoint (the cell's constant under the cadlag
/// convention) times the integrator increment. Exact when the partition
/// contains every jump of the integrand and the integrator is continuous,
/// in which case the interval's endpoint inclusion is immaterial.
template <typename Integrand, typename Integrator>
Real curve_integral(const std::vector<Real>& points, Real a, Real b,
                    Integrand&& integrand, Integrator&& integrator) {
  if (!std::is_sorted(points.begin(), points.end())) {
    throw std::invalid_argument("curve_integral: partition not sorted");
  }
  if (a > b) throw std::invalid_argument("curve_integral: a > b");
  const auto ia = std::lower_bound(points.begin(), points.end(), a);
  const auto ib = std::lower_bound(points.begin(), points.end(), b);
  if (ia == points.end() || *ia != a || ib == points.end() || *ib != b) {
    throw std::invalid_argument("curve_integral: interval endpoint not in partition");
  }
  Real total = 0.0;
  Real prev_value = integrator(a);
  for (auto it = ia + 1; it <= ib; ++it) {
    const Real cur_value = integrator(*it);
    total += integrand(*(it - 1)) * (cur_value - prev_value);
    prev_value = cur_value;
  }
  return total;
}

/// G(x, .) of one table row as a stepped function over the finite
/// thresholds: the z column provides the value, the z-minus column the left
/// limit. Both columns must be present for every finite breakpoint.
inline SteppedFunction resource_profile(const MetricsTable& table, Real x) {
  const int row = table.state_row(x);
  if (row < 0) {
    throw std::invalid_argument("resource_profile: state not in table");
  }
  std::map<Real, std::pair<const Real*, const Real*>> columns;  // z -> (value, left)
  for (std::size_t j = 0; j < table.thresholds.size(); ++j) {
    const auto& t = table.thresholds[j];
    if (t.kind != ExtendedThreshold::Kind::finite) continue;
    auto& slot = columns[t.z];
    (t.left_limit ? slot.second : slot.first) = &table.G[row][j];
  }
  SteppedFunction out;
  out.points.reserve(columns.size());
  for (const auto& [z, slot] : columns) {
    if (!slot.first || !slot.second) {
      throw std::invalid_argument(
          "resource_profile: breakpoint lacks a z or z-minus column at z=" +
          std::to_string(z));
    }
    out.points.push_back(z);
    out.values.push_back(*slot.first);
    out.left_values.push_back(*slot.second);
  }
  return out;
}

struct PCLI1Verdict {
  Real min_g = 0.0;        // certified: min over the grid of g_k - error_fg * w
  Real min_g_raw = 0.0;    // uncorrected minimum of g_k
  Real bound = 0.0;        // the subtracted error bound (w-norm)
  bool pass = false;
  Real model_floor = std::numeric_limits<Real>::quiet_NaN();  // optional reference
  bool meets_model_floor = true;
};

/// PCLI1: the marginal resource metric must stay strictly positive. The
/// verdict certifies positivity over the evaluated grid only. A model with
/// its own analytic floor can pass it as `model_floor`; the verdict then
/// also reports whether the certified minimum clears floor - bound.
inline PCLI1Verdict check_pcli1(
    const MetricsTable& table,
    Real model_floor = std::numeric_limits<Real>::quiet_NaN()) {
  PCLI1Verdict v;
  v.bound = table.error_fg;
  v.min_g_raw = std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < table.states.size(); ++i) {
    for (std::size_t j = 0; j < table.thresholds.size(); ++j) {
      v.min_g_raw = std::min(v.min_g_raw, table.g[i][j]);
    }
  }
  v.min_g = estimate_g_lower(table);
  v.pass = v.min_g > 0.0;
  v.model_floor = model_floor;
  if (std::isfinite(model_floor)) {
    v.meets_model_floor = v.min_g_raw >= model_floor - table.error_fg;
    v.pass = v.pass && v.meets_model_floor;
  }
  return v;
}

struct PCLI2Verdict {
  Real max_decrease = 0.0;      // largest adjacent decrease of the index
  Real max_jump_estimate = 0.0; // largest adjacent gap, continuity evidence
  Real tolerance = 0.0;         // 2 * max per-state error bound
  bool pass = false;
  std::vector<int> undefined_locations;
};

/// PCLI2: the sampled index curve must be monotone nondecreasing up to
/// twice the certification error. The adjacent-gap statistic quantifies
/// continuity evidence against a caller-supplied modulus budget; it never
/// fails the check by itself.
inline PCLI2Verdict check_pcli2(const IndexCurve& curve) {
  if (curve.states.size() < 3) {
    throw std::invalid_argument("check_pcli2: need at least 3 sampled states");
  }
  PCLI2Verdict v;
  v.undefined_locations = curve.undefined_states;
  v.tolerance = 2.0 * curve.max_error_bound();
  for (std::size_t i = 0; i + 1 < curve.values.size(); ++i) {
    const Real a = curve.values[i], b = curve.values[i + 1];
    if (!std::isfinite(a) || !std::isfinite(b)) continue;
    v.max_decrease = std::max(v.max_decrease, a - b);
    v.max_jump_estimate = std::max(v.max_jump_estimate, std::abs(b - a));
  }
  v.max_decrease = std::max(v.max_decrease, 0.0);
  v.pass = v.undefined_locations.empty() && v.max_decrease <= v.tolerance;
  return v;
}

struct PCLI3Verdict {
  Real max_residual = 0.0;
  int partitions = 0;          // partition points engaged across all intervals
  Real refinement_estimate = 0.0;
  Real c1 = 0.0, c2 = 0.0;     // tolerance constants, echoed
  Real tolerance = 0.0;        // c1 * error_FG + c2 * refinement_estimate
  bool pass = false;
};

/// PCLI3: for every table state x and each requested interval (z1, z2], the
/// metric increment F(x,z2) - F(x,z1) must equal the LS integral of the
/// index against G(x, .). The refinement estimate compares each integral
/// against its value on the half-coarsened partition, capturing the part of
/// the error the certificate cannot see.
inline PCLI3Verdict check_pcli3(const MetricsTable& table, const IndexCurve& curve,
                                const std::vector<std::pair<Real, Real>>& intervals,
                                Real c1 = 10.0, Real c2 = 1.0) {
  PCLI3Verdict v;
  v.c1 = c1;
  v.c2 = c2;

  std::vector<Real> breakpoints;
  for (const auto& t : table.thresholds) {
    if (t.kind == ExtendedThreshold::Kind::finite && !t.left_limit) {
      breakpoints.push_back(t.z);
    }
  }

  auto integrand = [&](Real t) { return curve.value_at(t); };

  std::vector<bool> engaged(breakpoints.size(), false);
  for (std::size_t i = 0; i < table.states.size(); ++i) {
    const Real x = table.states[i];
    const SteppedFunction profile = resource_profile(table, x);
    for (const auto& [z1, z2] : intervals) {
      const int j1 = table.threshold_column(ExtendedThreshold::at(z1));
      const int j2 = table.threshold_column(ExtendedThreshold::at(z2));
      if (j1 < 0 || j2 < 0) {
        throw std::invalid_argument(
            "check_pcli3: interval endpoint is not a table breakpoint");
      }
      const Real delta = table.F[i][static_cast<std::size_t>(j2)] -
                         table.F[i][static_cast<std::size_t>(j1)];
      const Real full = ls_integral(profile, integrand, z1, z2);
      v.max_residual = std::max(v.max_residual, std::abs(delta - full));

      // Half-coarsened partition: drop every other interior breakpoint.
      SteppedFunction coarse;
      const int i1 = profile.find(z1), i2 = profile.find(z2);
      for (int j = i1; j <= i2; ++j) {
        if (j != i1 && j != i2 && (j - i1) % 2 == 0) continue;
        coarse.points.push_back(profile.points[j]);
        coarse.values.push_back(profile.values[j]);
        coarse.left_values.push_back(profile.left_values[j]);
      }
      const Real halved = ls_integral(coarse, integrand, z1, z2);
      v.refinement_estimate =
          std::max(v.refinement_estimate, std::abs(full - halved));

      for (std::size_t b = 0; b < breakpoints.size(); ++b) {
        if (breakpoints[b] >= z1 && breakpoints[b] <= z2) engaged[b] = true;
      }
    }
  }
  v.partitions = static_cast<int>(std::count(engaged.begin(), engaged.end(), true));
  v.tolerance = c1 * table.error_FG + c2 * v.refinement_estimate;
  v.pass = v.max_residual <= v.tolerance;
  return v;
}

namespace detail {

inline std::pair<int, int> locate_pair(const MetricsTable& table, Real x,
                                       const ExtendedThreshold& z) {
  const int row = table.state_row(x);
  if (row < 0) throw std::invalid_argument("identity check: state not in table");
  const int col = table.threshold_column(z);
  if (col < 0) throw std::invalid_argument("identity check: threshold not in table");
  return {row, col};
}

/// Finite threshold breakpoints of the table (z-kind column positions).
inline std::vector<Real> finite_breakpoints(const MetricsTable& table) {
  std::vector<Real> out;
  for (const auto& t : table.thresholds) {
    if (t.kind == ExtendedThreshold::Kind::finite && !t.left_limit) {
      out.push_back(t.z);
    }
  }
  return out;
}

/// g(x, .) row lookup across the z-kind columns, keyed by breakpoint.
inline std::function<Real(Real)> marginal_row(const MetricsTable& table, int row) {
  return [&table, row](Real b) {
    const int col = table.threshold_column(ExtendedThreshold::at(b));
    if (col < 0) {
      throw std::invalid_argument("identity check: partition point lacks a column");
    }
    return table.g[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)];
  };
}

}  // namespace detail

/// Residual of the Volterra-type identity linking the marginal ratio
/// m(x,z) = f(x,z)/g(x,z) to the index curve:
///   x > z:        m(x,z) - m*(z) =  integral over (z,x)  of g(x,b)/g(x,z) m*(db)
///   x <= z:       m(x,z) - m*(z) = -integral over [x,z]  of g(x,b)/g(x,z) m*(db)
///   z below-all:  m(x,l-) - m*(l) = integral over [l,x)  of g(x,b)/g(x,l-) m*(db)
/// with l the lowest table state. The integrals are evaluated on the
/// table's breakpoint partition; exact when partitions cover every jump of
/// g(x, .) and the index is continuous.
inline Real volterra_residual(Real x, const ExtendedThreshold& z,
                              const MetricsTable& table, const IndexCurve& curve,
                              Real g_floor = 1e-9) {
  if (z.kind == ExtendedThreshold::Kind::above_all) {
    throw std::invalid_argument("volterra_residual: above-all threshold not covered");
  }
  const auto [row, col] = detail::locate_pair(table, x, z);
  const Real g_at = table.g[row][col];
  if (!(std::abs(g_at) > g_floor)) {
    throw model_error("volterra_residual: marginal resource below the floor at x=" +
                      std::to_string(x));
  }
  const Real m = table.f[row][col] / g_at;
  const auto points = detail::finite_breakpoints(table);
  const auto g_row = detail::marginal_row(table, row);
  auto ratio = [&](Real b) { return g_row(b) / g_at; };
  auto index_at = [&](Real t) { return curve.value_at(t); };

  if (z.kind == ExtendedThreshold::Kind::below_all) {
    const Real lo = table.states.front();
    const Real integral = curve_integral(points, lo, x, ratio, index_at);
    return std::abs(m - curve.value_at(lo) - integral);
  }
  if (x > z.z) {
    const Real integral = curve_integral(points, z.z, x, ratio, index_at);
    return std::abs(m - curve.value_at(z.z) - integral);
  }
  const Real integral = curve_integral(points, x, z.z, ratio, index_at);
  return std::abs(m - curve.value_at(z.z) + integral);
}

struct SignCheck {
  enum class Result { consistent, indeterminate, violation };
  Result result = Result::indeterminate;
  Real lhs = 0.0;  // m(x,z) - m*(z)
  Real rhs = 0.0;  // m*(x) - m*(z)
  Real tolerance = 0.0;
};

/// Sign identity: the marginal ratio exceeds the index at the threshold
/// exactly when the index at the state does. Values closer to zero than the
/// combined certification error cannot be signed and come back
/// indeterminate rather than failed.
inline SignCheck sign_consistency(Real x, const ExtendedThreshold& z,
                                  const MetricsTable& table, const IndexCurve& curve,
                                  Real g_floor = 1e-9) {
  const auto [row, col] = detail::locate_pair(table, x, z);
  const Real g_at = table.g[row][col];
  SignCheck check;
  if (!(std::abs(g_at) > g_floor)) {
    throw model_error("sign_consistency: marginal resource below the floor");
  }
  const Real m = table.f[row][col] / g_at;
  const Real z_ref = z.kind == ExtendedThreshold::Kind::below_all
                         ? table.states.front()
                         : z.z;
  const Real mz = curve.value_at(z_ref);
  const Real mx = curve.value_at(x);
  check.lhs = m - mz;
  check.rhs = mx - mz;

  // Error of the ratio plus the curve's own bounds at both evaluation points.
  const Real w = table.weights[static_cast<std::size_t>(row)];
  const Real ratio_err =
      table.error_fg * w * (1.0 + std::abs(m)) / std::abs(g_at);
  check.tolerance = ratio_err + 2.0 * curve.max_error_bound();

  if (std::abs(check.lhs) <= check.tolerance ||
      std::abs(check.rhs) <= check.tolerance) {
    check.result = SignCheck::Result::indeterminate;
  } else if ((check.lhs > 0.0) == (check.rhs > 0.0)) {
    check.result = SignCheck::Result::consistent;
  } else {
    check.result = SignCheck::Result::violation;
  }
  return check;
}

struct DualWitness {
  Real lambda = 0.0;
  std::vector<Real> margins;
  Real min_margin = 0.0;
  Real tolerance = 0.0;
  bool pass = false;
};

/// Feasibility margins of the dual witness assembled from the truncated
/// index psi_lambda = min{m*, lambda}:
///   margin(y) = f(y,l-) - integral over [l,y) of g(y,b) psi_lambda(db)
///               - g(y,l-) * psi_lambda(l).
/// Nonnegative margins certify feasibility at the evaluated states; for
/// lambda at or above the top of the index range the margins vanish, and
/// for lambda below the bottom they reduce to f(y,l-) - lambda g(y,l-).
inline DualWitness dual_witness_check(Real lambda, const std::vector<Real>& states,
                                      const MetricsTable& table,
                                      const IndexCurve& curve, Real tol_dual) {
  const int below = table.threshold_column(ExtendedThreshold::below_all());
  if (below < 0) {
    throw std::invalid_argument("dual_witness_check: below-all column required");
  }
  const auto points = detail::finite_breakpoints(table);
  if (points.empty() || points.front() != table.states.front()) {
    throw std::invalid_argument(
        "dual_witness_check: partition must start at the lowest state");
  }
  const Real lo = points.front();
  auto psi = [&](Real t) { return std::min(curve.value_at(t), lambda); };
  const Real eta = psi(lo);

  DualWitness out;
  out.lambda = lambda;
  out.tolerance = tol_dual;
  out.min_margin = std::numeric_limits<Real>::infinity();
  for (Real y : states) {
    const int row = table.state_row(y);
    if (row < 0) throw std::invalid_argument("dual_witness_check: state not in table");
    const auto g_row = detail::marginal_row(table, row);
    const Real integral = curve_integral(points, lo, y, g_row, psi);
    const Real margin = table.f[row][static_cast<std::size_t>(below)] - integral -
                        table.g[row][static_cast<std::size_t>(below)] * eta;
    out.margins.push_back(margin);
    out.min_margin = std::min(out.min_margin, margin);
  }
  out.pass = out.min_margin >= -tol_dual;
  return out;
}

struct GStructure {
  std::vector<std::pair<Real, Real>> constant_intervals;  // maximal, inclusive
  std::vector<Real> breakpoints;  // first grid point past each detected jump
  Real tolerance = 0.0;           // 2 * error_FG, the detection threshold
};

/// Scans G(x, .) over the z grid and splits it into maximal runs constant
/// to within twice the certification error, reporting the complementary
/// jump locations. Countable-orbit structure is only defined for
/// finite-support kernels.
inline GStructure detect_piecewise_constant_G(const DiscountedProject& project,
                                              Real x, const std::vector<Real>& z_grid,
                                              int horizon,
                                              std::size_t node_budget = kDefaultNodeBudget) {
  if (!std::holds_alternative<FiniteSupportKernel>(project.kernel0) ||
      !std::holds_alternative<FiniteSupportKernel>(project.kernel1)) {
    throw model_error(
        "detect_piecewise_constant_G: countable-orbit analysis requires "
        "finite-support kernels");
  }
  if (z_grid.size() < 2 || !std::is_sorted(z_grid.begin(), z_grid.end())) {
    throw std::invalid_argument("detect_piecewise_constant_G: need a sorted z grid");
  }
  std::vector<ExtendedThreshold> thresholds;
  thresholds.reserve(z_grid.size());
  for (Real z : z_grid) thresholds.push_back(ExtendedThreshold::at(z));
  const auto table = compute_metrics(project, {x}, thresholds, horizon, node_budget);

  GStructure out;
  out.tolerance = 2.0 * table.error_FG;
  std::size_t run_start = 0;
  for (std::size_t j = 1; j < z_grid.size(); ++j) {
    if (std::abs(table.G[0][j] - table.G[0][j - 1]) > out.tolerance) {
      out.constant_intervals.emplace_back(z_grid[run_start], z_grid[j - 1]);
      out.breakpoints.push_back(z_grid[j]);
      run_start = j;
    }
  }
  out.constant_intervals.emplace_back(z_grid[run_start], z_grid.back());
  return out;
}

/// One identity sweep summarized for the report.
struct IdentityResult {
  std::string name;
  Real max_residual = 0.0;
  Real tolerance = 0.0;
  bool pass = false;
};

struct PCLReport {
  int schema = 1;
  PCLI1Verdict pcli1;
  PCLI2Verdict pcli2;
  PCLI3Verdict pcli3;
  std::vector<IdentityResult> identities;
  std::string grid_meta;
  bool strict = false;

  bool pass() const {
    if (!(pcli1.pass && pcli2.pass && pcli3.pass)) return false;
    for (const auto& id : identities) {
      if (!id.pass) return false;
    }
    return true;
  }
};

struct PCLOptions {
  Real c1 = 10.0;                 // PCLI3 certificate multiplier
  Real c2 = 1.0;                  // PCLI3 refinement multiplier
  Real g_floor = 1e-9;
  Real tol_volterra_scale = 10.0; // x error_fg
  Real tol_dual_scale = 10.0;     // x error_fg
  bool strict = false;
  Real model_floor = std::numeric_limits<Real>::quiet_NaN();
};

/// Forward closure of `states` under both action kernels, clipped to the
/// project's state interval, sorted and exactly deduplicated.
///
/// z -> G(x, z) jumps exactly where z crosses a state reachable from x, so a
/// threshold partition containing this closure is jump-complete for every
/// x in `states`: the Lebesgue-Stieltjes sums behind the integral identities
/// pick up every jump, and their residuals stay at certification scale
/// instead of inheriting first-order partition error. Quadrature kernels
/// confine one step to their node grid, so the closure is nodes plus seeds.
/// Throws resource_limit_error when a finite-support closure exceeds
/// `node_budget` states.
inline std::vector<Real> reachable_breakpoints(const DiscountedProject& project,
                                               const std::vector<Real>& states,
                                               std::size_t node_budget = 20000) {
  if (states.empty()) {
    throw std::invalid_argument("reachable_breakpoints: states is empty");
  }
  std::vector<Real> closure;
  if (std::holds_alternative<QuadratureKernel>(project.kernel0) ||
      std::holds_alternative<QuadratureKernel>(project.kernel1)) {
    closure = states;
    for (const TransitionKernel* kernel : {&project.kernel0, &project.kernel1}) {
      if (const auto* qk = std::get_if<QuadratureKernel>(kernel)) {
        closure.insert(closure.end(), qk->nodes.begin(), qk->nodes.end());
      } else {
        throw model_error(
            "reachable_breakpoints: kernels mix quadrature and finite support");
      }
    }
  } else {
    const auto& k0 = std::get<FiniteSupportKernel>(project.kernel0);
    const auto& k1 = std::get<FiniteSupportKernel>(project.kernel1);
    std::unordered_set<Real> seen(states.begin(), states.end());
    closure.assign(seen.begin(), seen.end());
    for (std::size_t head = 0; head < closure.size(); ++head) {
      const Real x = closure[head];
      for (const FiniteSupportKernel* kernel : {&k0, &k1}) {
        for (const auto& [y, prob] : kernel->support(x)) {
          if (!(prob > 0.0)) continue;
          if (seen.insert(y).second) {
            if (closure.size() >= node_budget) {
              throw resource_limit_error(
                  "reachable_breakpoints: closure exceeded node budget",
                  closure.size());
            }
            closure.push_back(y);
          }
        }
      }
    }
  }
  std::erase_if(closure, [&](Real v) {
    return !(v >= project.lower && v <= project.upper);
  });
  std::sort(closure.begin(), closure.end());
  closure.erase(std::unique(closure.begin(), closure.end()), closure.end());
  return closure;
}

/// Runs the full battery over a prepared table and curve: the three
/// certification checks, the Volterra identity and sign identity over the
/// supplied (state, threshold) pairs, and the dual witness over the
/// supplied prices. Indeterminate sign results fail only in strict mode.
inline PCLReport run_pcl_checks(
    const MetricsTable& table, const IndexCurve& curve,
    const std::vector<std::pair<Real, Real>>& intervals,
    const std::vector<std::pair<Real, ExtendedThreshold>>& pairs,
    const std::vector<Real>& lambdas, const PCLOptions& options = {}) {
  PCLReport report;
  report.strict = options.strict;
  report.pcli1 = check_pcli1(table, options.model_floor);
  report.pcli2 = check_pcli2(curve);
  report.pcli3 = check_pcli3(table, curve, intervals, options.c1, options.c2);

  // Residuals inherit error from both the table and the curve; the
  // certification scale is whichever source dominates.
  const Real cert_scale = std::max(table.error_fg, curve.max_error_bound());
  IdentityResult volterra{"volterra", 0.0, options.tol_volterra_scale * cert_scale,
                          true};
  IdentityResult sign{"sign-consistency", 0.0, 0.0, true};
  Real indeterminate = 0.0;
  for (const auto& [x, z] : pairs) {
    volterra.max_residual = std::max(
        volterra.max_residual, volterra_residual(x, z, table, curve, options.g_floor));
    const auto check = sign_consistency(x, z, table, curve, options.g_floor);
    if (check.result == SignCheck::Result::violation) sign.max_residual += 1.0;
    if (check.result == SignCheck::Result::indeterminate) indeterminate += 1.0;
  }
  volterra.pass = volterra.max_residual <= volterra.tolerance;
  if (options.strict) sign.max_residual += indeterminate;
  sign.pass = sign.max_residual == 0.0;
  report.identities.push_back(volterra);
  report.identities.push_back(sign);

  IdentityResult dual{"dual-witness", 0.0, options.tol_dual_scale * cert_scale,
                      true};
  for (Real lambda : lambdas) {
    const auto witness =
        dual_witness_check(lambda, table.states, table, curve, dual.tolerance);
    dual.max_residual = std::max(dual.max_residual, -witness.min_margin);
    dual.pass = dual.pass && witness.pass;
  }
  dual.max_residual = std::max(dual.max_residual, 0.0);
  report.identities.push_back(dual);

  report.grid_meta = std::to_string(table.states.size()) + " states x " +
                     std::to_string(table.thresholds.size()) +
                     " thresholds, horizon " + std::to_string(table.horizon) +
                     ", err_FG " + detail::format_real(table.error_FG) +
                     ", pairs " + std::to_string(pairs.size()) +
                     (indeterminate > 0.0
                          ? ", indeterminate signs " +
                                std::to_string(static_cast<long>(indeterminate))
                          : "");
  return report;
}

}  // namespace restless
