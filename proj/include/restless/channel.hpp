#pragma once

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "metrics.hpp"
#include "model.hpp"

/// @file channel.hpp
/// @brief Belief-state project for transmission over a two-state
///        Gilbert-Elliott channel. The state x in [0,1] is the posterior
///        probability that the channel is good. The passive action leaves
///        the belief to drift deterministically, x -> h(x) = q + rho*x; the
///        active action resolves it to q + rho (success, probability x) or
///        q (failure). Rewards r(x,a) = a*x, costs c(x,a) = a.
///
/// Closed-form threshold metrics and the index are available in four
/// threshold regimes separated by q, h_inf = q/(1-rho) and q + rho. The
/// regime with q <= z < h_inf needs four auxiliary constants per orbit cell;
/// these carry no printed formula and are evaluated by the metrics recursion
/// at a horizon certified to reach near machine precision.

namespace restless {

struct ChannelParams {
  Real p = 0.2;   // good-to-bad transition probability
  Real q = 0.3;   // bad-to-good transition probability
  Real beta = 0.8;

  Real rho() const { return 1.0 - p - q; }
  Real h_inf() const { return q / (1.0 - rho()); }

  void check() const {
    if (!(p > 0.0 && p < 1.0) || !(q > 0.0 && q < 1.0)) {
      throw model_error("channel: p and q must lie in (0,1)");
    }
    if (rho() <= 0.0) {
      throw model_error("channel: positive correlation required, 1 - p - q > 0");
    }
    if (!(beta >= 0.0 && beta < 1.0)) {
      throw model_error("channel: discount must lie in [0,1)");
    }
  }

  friend bool operator==(const ChannelParams& a, const ChannelParams& b) {
    return a.p == b.p && a.q == b.q && a.beta == b.beta;
  }
};

/// One-step passive drift of the belief.
inline Real channel_drift(const ChannelParams& params, Real x) {
  return params.q + params.rho() * x;
}

struct IterateResult {
  Real value = 0.0;
  bool in_range = false;  // whether the iterate lies in [0,1]
};

/// t-step forward belief drift h_t(x) = h_inf - (h_inf - x) * rho^t.
inline IterateResult forward_iterate(const ChannelParams& params, Real x, int t) {
  if (t < 0) throw std::invalid_argument("forward_iterate: t < 0");
  const Real h = params.h_inf();
  const Real v = h - (h - x) * std::pow(params.rho(), t);
  return {v, v >= 0.0 && v <= 1.0};
}

/// t-step backward drift h_{-t}(z) = h_inf - (h_inf - z) * rho^{-t}. Escapes
/// [0,1] once t exceeds the orbit depth of z, hence the in-range flag.
inline IterateResult backward_iterate(const ChannelParams& params, Real z, int t) {
  if (t < 0) throw std::invalid_argument("backward_iterate: t < 0");
  const Real h = params.h_inf();
  const Real v = h - (h - z) * std::pow(params.rho(), -t);
  return {v, v >= 0.0 && v <= 1.0};
}

/// The channel as a discounted project on [0,1] with w = 1, M = 1 and
/// contraction rate equal to the discount.
inline DiscountedProject channel_project(const ChannelParams& params) {
  params.check();
  DiscountedProject project;
  project.lower = 0.0;
  project.upper = 1.0;
  project.reward = [](Real x, int a) { return a == 1 ? x : 0.0; };
  project.cost = [](Real, int a) { return a == 1 ? 1.0 : 0.0; };
  const Real q = params.q;
  const Real rho = params.rho();
  project.kernel0 = FiniteSupportKernel{
      [q, rho](Real x) { return SupportAtoms{{q + rho * x, 1.0}}; }};
  project.kernel1 = FiniteSupportKernel{[q, rho](Real x) {
    return SupportAtoms{{q + rho, x}, {q, 1.0 - x}};
  }};
  project.discount = params.beta;
  project.weight = [](Real) { return 1.0; };
  project.bound_M = 1.0;
  project.rate_gamma = params.beta;
  return project;
}

struct ChannelMetrics {
  Real F = 0.0, G = 0.0, f = 0.0, g = 0.0;
};

namespace detail {

/// Closed-form evaluator with a per-parameter cache for the auxiliary
/// constants of the middle regime. The cache is keyed by the orbit cell
/// index t and written once per t.
class ChannelForms {
 public:
  explicit ChannelForms(const ChannelParams& params)
      : params_(params), project_(channel_project(params)) {
    // Horizon pushing the metric certificate M_gamma*gamma^k near the
    // round-off floor, so cached constants never dominate comparisons.
    const Real m_gamma = project_.m_gamma();
    const Real target = 1e-14;
    sub_horizon_ = 1;
    while (m_gamma * std::pow(params_.beta, sub_horizon_) > target &&
           sub_horizon_ < 4000) {
      ++sub_horizon_;
    }
  }

  const ChannelParams& params() const { return params_; }

  /// Orbit cell of a threshold in [q, h_inf): the unique t >= 1 with
  /// h_{t-1}(q) <= z < h_t(q). Located by logarithm, then fixed by an
  /// integer scan so one-ulp boundary cases resolve toward the lower cell.
  int locate_cell(Real z) const {
    const Real h = params_.h_inf();
    const Real rho = params_.rho();
    const Real ratio = (h - z) / (h - params_.q);
    int t = 1;
    if (ratio > 0.0 && ratio < 1.0) {
      t = static_cast<int>(std::floor(std::log(ratio) / std::log(rho))) + 1;
      t = std::max(t, 1);
    }
    while (t > 1 && forward_iterate(params_, params_.q, t - 1).value > z) --t;
    while (forward_iterate(params_, params_.q, t).value <= z) ++t;
    return t;
  }

  /// First passive exit step of x over threshold z: smallest s >= 1 with
  /// h_s(x) > z, for x <= z < h_inf.
  int locate_exit(Real x, Real z) const {
    const Real h = params_.h_inf();
    const Real rho = params_.rho();
    const Real ratio = (h - z) / (h - x);
    int s = 1;
    if (ratio > 0.0 && ratio < 1.0) {
      s = static_cast<int>(std::floor(std::log(ratio) / std::log(rho))) + 1;
      s = std::max(s, 1);
    }
    while (s > 1 && forward_iterate(params_, x, s - 1).value > z) --s;
    while (forward_iterate(params_, x, s).value <= z) ++s;
    return s;
  }

  /// Auxiliary constants (F at q, F at q+rho, G at q, G at q+rho) for the
  /// threshold cell t, i.e. the infinite-horizon metrics at threshold
  /// h_{t-1}(q), where G(.,.) is constant across the cell.
  const std::array<Real, 4>& cell_constants(int t) const {
    auto it = cache_.find(t);
    if (it != cache_.end()) return it->second;
    // The cell edge must be produced by the same one-step drift arithmetic
    // the recursion applies internally: the orbit state at time t-1 has to
    // compare equal to the threshold, not sit one ulp across it.
    Real z = params_.q;
    for (int j = 1; j < t; ++j) z = channel_drift(params_, z);
    const std::vector<Real> pts{params_.q, params_.q + params_.rho()};
    const auto col = metrics_column(project_, pts, ExtendedThreshold::at(z),
                                    sub_horizon_, kDefaultNodeBudget);
    return cache_.emplace(t, std::array<Real, 4>{col.F[0], col.F[1], col.G[0],
                                                 col.G[1]})
        .first->second;
  }

  ChannelMetrics metrics(Real x, Real z) const {
    const Real q = params_.q;
    const Real rho = params_.rho();
    const Real beta = params_.beta;
    const Real h = params_.h_inf();
    ChannelMetrics out;

    if (z < q) {
      const Real active = x > z ? 1.0 : 0.0;
      out.F = (beta * (q + (1.0 - beta) * rho * x) +
               (1.0 - beta) * (1.0 - beta * rho) * x * active) /
              ((1.0 - beta) * (1.0 - beta * rho));
      out.G = (beta + (1.0 - beta) * active) / (1.0 - beta);
      out.f = x;
      out.g = 1.0;
      return out;
    }

    if (z < h) {
      const int t = locate_cell(z);
      const auto& cc = cell_constants(t);
      const Real Fq = cc[0], Fqr = cc[1], Gq = cc[2], Gqr = cc[3];
      const Real hx = channel_drift(params_, x);
      if (x > z) {
        out.F = x + beta * (x * Fqr + (1.0 - x) * Fq);
        out.f = x - beta * (hx + beta * hx * Fqr + beta * (1.0 - hx) * Fq -
                            x * Fqr - (1.0 - x) * Fq);
        out.G = 1.0 + beta * (x * Gqr + (1.0 - x) * Gq);
        out.g = 1.0 - beta * (1.0 + beta * hx * Gqr + beta * (1.0 - hx) * Gq -
                              x * Gqr - (1.0 - x) * Gq);
      } else {
        const int s = locate_exit(x, z);
        const Real hs = forward_iterate(params_, x, s).value;
        const Real bs1 = std::pow(beta, s - 1);  // beta^(s-1)
        const Real bs = bs1 * beta;
        out.F = bs * (hs + beta * hs * Fqr + beta * (1.0 - hs) * Fq);
        out.f = x - beta * (bs1 * (hs + beta * hs * Fqr +
                                   beta * (1.0 - hs) * Fq) -
                            x * Fqr - (1.0 - x) * Fq);
        out.G = bs * (1.0 + beta * hs * Gqr + beta * (1.0 - hs) * Gq);
        out.g = 1.0 - beta * (bs1 * (1.0 + beta * hs * Gqr +
                                     beta * (1.0 - hs) * Gq) -
                              x * Gqr - (1.0 - x) * Gq);
      }
      return out;
    }

    const Real qr = q + rho;
    if (z < qr) {
      const Real denom = 1.0 - beta * qr;
      const Real hx = channel_drift(params_, x);
      const Real active = x > z ? 1.0 : 0.0;
      const Real drift_up = hx > z ? 1.0 : 0.0;
      out.F = x / denom * active;
      out.G = (1.0 - beta * (qr - x)) / denom * active;
      out.f = x / denom * (1.0 - drift_up) +
              ((1.0 - beta * rho) * x - beta * q) / denom * drift_up;
      out.g = (1.0 - beta * (qr - x)) / denom * (1.0 - drift_up) +
              (1.0 - beta + beta * ((1.0 - beta * rho) * x - beta * q) / denom) *
                  drift_up;
      return out;
    }

    const Real active = x > z ? 1.0 : 0.0;
    out.F = x * active;
    out.G = active;
    out.f = x;
    out.g = 1.0;
    return out;
  }

  Real index(Real x) const {
    const Real q = params_.q;
    const Real qr = q + params_.rho();
    const Real h = params_.h_inf();
    const Real beta = params_.beta;
    if (x < q) return x;
    if (x < h) {
      // Diagonal of the middle regime: the passive side with exit step 1.
      const ChannelMetrics m = metrics(x, x);
      if (std::abs(m.g) <= 1e-12) {
        throw model_error("channel index: marginal resource vanished at x=" +
                          std::to_string(x));
      }
      return m.f / m.g;
    }
    if (x < qr) return x / (1.0 - beta * (qr - x));
    return x;
  }

 private:
  ChannelParams params_;
  DiscountedProject project_;
  int sub_horizon_ = 0;
  mutable std::map<int, std::array<Real, 4>> cache_;
};

/// Shared evaluator so grid sweeps with identical parameters reuse the
/// cached cell constants.
inline const ChannelForms& channel_forms(const ChannelParams& params) {
  thread_local std::unique_ptr<ChannelForms> forms;
  if (!forms || !(forms->params() == params)) {
    forms = std::make_unique<ChannelForms>(params);
  }
  return *forms;
}

}  // namespace detail

/// Closed-form F, G, f, g of the z-policy at (x, z).
inline ChannelMetrics channel_closed_form_metrics(const ChannelParams& params, Real x,
                                                  Real z) {
  params.check();
  return detail::channel_forms(params).metrics(x, z);
}

/// Closed-form index m*(x).
inline Real channel_closed_form_index(const ChannelParams& params, Real x) {
  params.check();
  return detail::channel_forms(params).index(x);
}

/// Conservative superset of the thresholds where G(x, .) can jump, clipped
/// to [lo, hi]: the forward orbit of x, the forward orbit of q, and the
/// fixed markers h_inf, q, q + rho, x. The true jump set of G(x, .) is
/// contained in the closure of this family.
inline std::vector<Real> channel_breakpoints(const ChannelParams& params, Real x,
                                             Real lo, Real hi) {
  params.check();
  std::vector<Real> pts;
  auto push_orbit = [&](Real start) {
    Real v = start;
    const Real h = params.h_inf();
    for (int t = 0; t < 400; ++t) {
      pts.push_back(v);
      const Real next = channel_drift(params, v);
      if (std::abs(next - h) < 1e-16 || next == v) break;
      v = next;
    }
  };
  push_orbit(x);
  push_orbit(params.q);
  pts.push_back(params.h_inf());
  pts.push_back(params.q + params.rho());
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  std::vector<Real> out;
  for (Real v : pts) {
    if (v >= lo && v <= hi && v >= 0.0 && v <= 1.0) out.push_back(v);
  }
  return out;
}

}  // namespace restless
