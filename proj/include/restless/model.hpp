#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

/// @file model.hpp
/// @brief Core abstractions for discounted two-action projects on a real
///        state interval: transition kernels, reward and cost structure,
///        threshold policies, and sampled validation of the standing
///        model assumptions.

namespace restless {

using Real = double;

/// Thrown when a model violates a structural requirement, such as
/// non-finite data at a grid point or invalid parameters.
struct model_error : std::runtime_error {
  explicit model_error(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a computation exceeds a configured resource budget.
struct resource_limit_error : std::runtime_error {
  std::size_t node_count;
  resource_limit_error(const std::string& what, std::size_t count)
      : std::runtime_error(what), node_count(count) {}
};

/// Atom list of a finite-support transition step: (next state, probability).
using SupportAtoms = std::vector<std::pair<Real, Real>>;

/// Transition kernel with countable support per source state.
///
/// The support callback must be deterministic: repeated calls with the same
/// source state must return bitwise-identical atoms, because downstream
/// recursions key reachable states by exact floating-point value.
struct FiniteSupportKernel {
  std::function<SupportAtoms(Real)> support;
};

/// Transition kernel given by quadrature nodes and a weight function.
/// weight(x, node) is the probability mass the step from x assigns to the
/// node; weights are nonnegative and sum to one within 1e-9 per source state.
struct QuadratureKernel {
  std::vector<Real> nodes;  // strictly increasing, inside the state interval
  std::function<Real(Real, Real)> weight;
};

using TransitionKernel = std::variant<FiniteSupportKernel, QuadratureKernel>;

/// Expectation of `values` after one kernel step from x.
/// FiniteSupport kernels give the exact weighted sum; quadrature kernels give
/// the quadrature sum over the node grid.
template <typename ValueFn>
Real kernel_expectation(const TransitionKernel& kernel, Real x, ValueFn&& values) {
  Real total = 0.0;
  if (const auto* fs = std::get_if<FiniteSupportKernel>(&kernel)) {
    for (const auto& [y, prob] : fs->support(x)) {
      const Real v = values(y);
      if (!std::isfinite(v)) {
        throw model_error("kernel_expectation: value not finite at support point " +
                          std::to_string(y));
      }
      total += prob * v;
    }
  } else {
    const auto& qk = std::get<QuadratureKernel>(kernel);
    for (Real node : qk.nodes) {
      const Real v = values(node);
      if (!std::isfinite(v)) {
        throw model_error("kernel_expectation: value not finite at node " +
                          std::to_string(node));
      }
      total += qk.weight(x, node) * v;
    }
  }
  return total;
}

/// A threshold in the extended reals.
///
/// Finite thresholds come in two flavours distinguished by `left_limit`:
///   - left_limit = false is the z-policy, active exactly on (z, u];
///   - left_limit = true is the z-minus policy, active exactly on [z, u].
/// below_all is active everywhere and above_all is active nowhere.
struct ExtendedThreshold {
  enum class Kind { below_all, finite, above_all };

  Kind kind = Kind::finite;
  Real z = 0.0;             // meaningful only for Kind::finite
  bool left_limit = false;  // meaningful only for Kind::finite

  static ExtendedThreshold below_all() { return {Kind::below_all, 0.0, false}; }
  static ExtendedThreshold above_all() { return {Kind::above_all, 0.0, false}; }
  /// The z-policy: activate iff the state strictly exceeds z.
  static ExtendedThreshold at(Real z) { return {Kind::finite, z, false}; }
  /// The z-minus policy: activate iff the state weakly exceeds z.
  static ExtendedThreshold at_left(Real z) { return {Kind::finite, z, true}; }

  /// Deterministic action of this threshold policy at state x.
  bool active(Real x) const {
    switch (kind) {
      case Kind::below_all: return true;
      case Kind::above_all: return false;
      case Kind::finite: return left_limit ? x >= z : x > z;
    }
    return false;
  }

  /// Ordering mirrors inclusiveness of the active region: a z-minus policy
  /// behaves like a threshold infinitesimally below z, so it sorts first.
  friend bool operator<(const ExtendedThreshold& a, const ExtendedThreshold& b) {
    auto rank = [](const ExtendedThreshold& t) {
      return t.kind == Kind::below_all ? 0 : t.kind == Kind::finite ? 1 : 2;
    };
    if (rank(a) != rank(b)) return rank(a) < rank(b);
    if (a.kind != Kind::finite) return false;
    if (a.z != b.z) return a.z < b.z;
    return a.left_limit && !b.left_limit;
  }
  friend bool operator==(const ExtendedThreshold& a, const ExtendedThreshold& b) {
    if (a.kind != b.kind) return false;
    if (a.kind != Kind::finite) return true;
    return a.z == b.z && a.left_limit == b.left_limit;
  }

  /// Kind tag used in CSV exports: z, zminus, below, above.
  std::string kind_label() const {
    switch (kind) {
      case Kind::below_all: return "below";
      case Kind::above_all: return "above";
      case Kind::finite: return left_limit ? "zminus" : "z";
    }
    return "?";
  }

  std::string describe() const {
    if (kind == Kind::below_all) return "below_all";
    if (kind == Kind::above_all) return "above_all";
    return "z=" + std::to_string(z) + (left_limit ? "-" : "");
  }
};

/// A randomized threshold policy. alpha is the weight on the z-policy branch,
/// so at the threshold state itself action 1 is taken with probability
/// 1 - alpha; away from the threshold the two branches agree.
struct ThresholdPolicy {
  ExtendedThreshold threshold;
  Real alpha = 1.0;

  /// Pure deterministic policy for a threshold (alpha chosen so the mix
  /// degenerates onto the given variant).
  static ThresholdPolicy pure(const ExtendedThreshold& t) {
    return {t, t.kind == ExtendedThreshold::Kind::finite && t.left_limit ? 0.0 : 1.0};
  }
};

/// Probability that the policy takes action 1 at state x.
inline Real policy_action_probability(const ThresholdPolicy& policy, Real x) {
  const auto& t = policy.threshold;
  switch (t.kind) {
    case ExtendedThreshold::Kind::below_all: return 1.0;
    case ExtendedThreshold::Kind::above_all: return 0.0;
    case ExtendedThreshold::Kind::finite:
      if (x > t.z) return 1.0;
      if (x < t.z) return 0.0;
      return 1.0 - policy.alpha;
  }
  return 0.0;
}

/// A discounted two-action project on the state interval [lower, upper].
///
/// Standing assumptions validated on sample grids:
///   (i)  0 <= cost(x,0) < cost(x,1);
///   (ii) max(|reward(x,a)|, cost(x,a)) <= bound_M * weight(x) and
///        discount * E[weight(X')|x,a] <= rate_gamma * weight(x),
/// with weight >= 1, bound_M > 0 and discount <= rate_gamma < 1.
struct DiscountedProject {
  Real lower = 0.0;
  Real upper = 1.0;
  std::function<Real(Real, int)> reward;  // r(x, a)
  std::function<Real(Real, int)> cost;    // c(x, a)
  TransitionKernel kernel0;               // passive transition
  TransitionKernel kernel1;               // active transition
  Real discount = 0.0;                    // beta in [0, 1)
  std::function<Real(Real)> weight;       // w(x) >= 1
  Real bound_M = 1.0;                     // M > 0
  Real rate_gamma = 0.0;                  // gamma in [beta, 1)

  const TransitionKernel& kernel(int action) const {
    return action == 0 ? kernel0 : kernel1;
  }

  /// M / (1 - gamma), the w-norm bound on the infinite-horizon metrics.
  Real m_gamma() const { return bound_M / (1.0 - rate_gamma); }
};

/// One validated assumption with its worst-case margin over the sample grid.
/// For non-strict assumptions pass means margin >= -1e-12; assumptions that
/// are strict inequalities require margin > 0 and say so in their note.
struct AssumptionCheck {
  std::string name;
  Real margin = 0.0;
  bool pass = false;
  std::string note;
};

struct ValidationReport {
  std::vector<AssumptionCheck> checks;
  std::size_t sample_count = 0;
  bool pass = false;

  std::string summary() const {
    std::string s = pass ? "pass" : "FAIL";
    s += " (sampled at " + std::to_string(sample_count) + " points)";
    for (const auto& c : checks) {
      if (!c.pass) s += "; failed: " + c.name;
    }
    return s;
  }
};

namespace detail {

inline void require_finite(Real v, const std::string& what, Real x) {
  if (!std::isfinite(v)) {
    throw model_error("validate_assumptions: " + what + " not finite at x=" +
                      std::to_string(x));
  }
}

/// Worst normalization defect and worst negative mass of a kernel over the
/// grid. Returns (max |sum - 1|, min single probability).
inline std::pair<Real, Real> kernel_normalization(const TransitionKernel& kernel,
                                                  const std::vector<Real>& states) {
  Real worst_defect = 0.0;
  Real min_mass = 0.0;
  for (Real x : states) {
    Real sum = 0.0;
    if (const auto* fs = std::get_if<FiniteSupportKernel>(&kernel)) {
      for (const auto& [y, prob] : fs->support(x)) {
        (void)y;
        sum += prob;
        min_mass = std::min(min_mass, prob);
      }
    } else {
      const auto& qk = std::get<QuadratureKernel>(kernel);
      for (Real node : qk.nodes) {
        const Real wgt = qk.weight(x, node);
        sum += wgt;
        min_mass = std::min(min_mass, wgt);
      }
    }
    worst_defect = std::max(worst_defect, std::abs(sum - 1.0));
  }
  return {worst_defect, min_mass};
}

}  // namespace detail

/// Checks the standing assumptions on the supplied grid and reports the
/// worst-case margin of each. Margins are sampled evidence, not proof.
inline ValidationReport validate_assumptions(const DiscountedProject& project,
                                             const std::vector<Real>& states) {
  if (states.empty()) {
    throw std::invalid_argument("validate_assumptions: empty state grid");
  }
  for (Real x : states) {
    if (x < project.lower || x > project.upper) {
      throw std::invalid_argument("validate_assumptions: state " + std::to_string(x) +
                                  " outside [lower, upper]");
    }
  }

  ValidationReport report;
  report.sample_count = states.size();

  auto add = [&](std::string name, Real margin, bool pass, std::string note = "") {
    report.checks.push_back({std::move(name), margin, pass, std::move(note)});
  };

  const Real beta = project.discount;
  const Real gamma = project.rate_gamma;
  add("discount in [0,1)", std::min(beta, 1.0 - beta), beta >= 0.0 && beta < 1.0);
  add("discount <= rate_gamma < 1", std::min(gamma - beta, 1.0 - gamma),
      gamma >= beta && gamma < 1.0, "upper end strict");
  add("bound_M > 0", project.bound_M, project.bound_M > 0.0, "strict");

  Real weight_margin = std::numeric_limits<Real>::infinity();
  Real cost0_margin = std::numeric_limits<Real>::infinity();
  Real cost_gap_margin = std::numeric_limits<Real>::infinity();
  Real growth_margin = std::numeric_limits<Real>::infinity();
  Real drift_margin = std::numeric_limits<Real>::infinity();

  for (Real x : states) {
    const Real w = project.weight(x);
    detail::require_finite(w, "weight", x);
    weight_margin = std::min(weight_margin, w - 1.0);

    const Real c0 = project.cost(x, 0);
    const Real c1 = project.cost(x, 1);
    detail::require_finite(c0, "cost(.,0)", x);
    detail::require_finite(c1, "cost(.,1)", x);
    cost0_margin = std::min(cost0_margin, c0);
    cost_gap_margin = std::min(cost_gap_margin, c1 - c0);

    for (int a = 0; a < 2; ++a) {
      const Real r = project.reward(x, a);
      detail::require_finite(r, "reward", x);
      const Real c = project.cost(x, a);
      growth_margin = std::min(growth_margin,
                               project.bound_M * w - std::max(std::abs(r), c));
      const Real drift =
          beta * kernel_expectation(project.kernel(a), x,
                                    [&](Real y) { return project.weight(y); });
      drift_margin = std::min(drift_margin, gamma * w - drift);
    }
  }

  constexpr Real kSlack = 1e-12;
  add("weight >= 1", weight_margin, weight_margin >= -kSlack);
  add("cost(x,0) >= 0", cost0_margin, cost0_margin >= -kSlack);
  add("cost(x,0) < cost(x,1)", cost_gap_margin, cost_gap_margin > 0.0, "strict");
  add("max(|r|,c) <= M*w", growth_margin, growth_margin >= -kSlack);
  add("beta*E[w] <= gamma*w", drift_margin, drift_margin >= -kSlack);

  for (int a = 0; a < 2; ++a) {
    const auto [defect, min_mass] =
        detail::kernel_normalization(project.kernel(a), states);
    const bool quad = std::holds_alternative<QuadratureKernel>(project.kernel(a));
    const Real tol = quad ? 1e-9 : 1e-12;
    const std::string label = "kernel" + std::to_string(a);
    add(label + " masses sum to 1", tol - defect, defect <= tol,
        quad ? "quadrature tolerance 1e-9" : "finite-support tolerance 1e-12");
    add(label + " masses nonnegative", min_mass, min_mass >= -kSlack);
  }

  report.pass = std::all_of(report.checks.begin(), report.checks.end(),
                            [](const AssumptionCheck& c) { return c.pass; });
  return report;
}

/// Evenly spaced grid of n points spanning [lo, hi].
inline std::vector<Real> linspace(Real lo, Real hi, std::size_t n) {
  if (n < 2) throw std::invalid_argument("linspace: need at least 2 points");
  std::vector<Real> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = lo + (hi - lo) * static_cast<Real>(i) / static_cast<Real>(n - 1);
  }
  out.front() = lo;
  out.back() = hi;
  return out;
}

}  // namespace restless
