#pragma once

#include <utility>

#include "channel.hpp"
#include "model.hpp"

/// @file stopping.hpp
/// @brief Optimal-stopping specialization: the passive action freezes the
///        state and earns nothing, so a project is described entirely by its
///        active reward, active cost and active kernel. Under any threshold
///        policy the state below the threshold never moves, which forces
///        F(x, z) = G(x, z) = 0 for x <= z and makes the index expressible
///        as a ratio of plain metrics, m*(x) = F(x, x-)/G(x, x-).

namespace restless {

struct StoppingSpec {
  std::function<Real(Real)> active_reward;  // r(x, 1)
  std::function<Real(Real)> active_cost;    // c(x, 1), strictly positive
  TransitionKernel active_kernel;
  Real beta = 0.0;
  Real lower = 0.0;
  Real upper = 1.0;
  std::function<Real(Real)> weight;  // defaults to 1 when absent
  Real bound_M = 1.0;
  Real rate_gamma = 0.0;  // defaults to beta when <= 0
};

/// Builds the project: zero passive reward and cost, identity passive
/// transition. The active cost is guarded at evaluation time so a
/// nonpositive cost surfaces as a model error instead of a zero division
/// downstream.
inline DiscountedProject stopping_project(const StoppingSpec& spec) {
  if (!(spec.beta >= 0.0 && spec.beta < 1.0)) {
    throw model_error("stopping: discount must lie in [0,1)");
  }
  DiscountedProject project;
  project.lower = spec.lower;
  project.upper = spec.upper;
  const auto reward1 = spec.active_reward;
  const auto cost1 = spec.active_cost;
  project.reward = [reward1](Real x, int a) { return a == 1 ? reward1(x) : 0.0; };
  project.cost = [cost1](Real x, int a) -> Real {
    if (a == 0) return 0.0;
    const Real c = cost1(x);
    if (!(c > 0.0)) {
      throw model_error("stopping: active cost must be positive, got " +
                        std::to_string(c) + " at x=" + std::to_string(x));
    }
    return c;
  };
  project.kernel0 =
      FiniteSupportKernel{[](Real x) { return SupportAtoms{{x, 1.0}}; }};
  project.kernel1 = spec.active_kernel;
  project.discount = spec.beta;
  project.weight = spec.weight ? spec.weight : [](Real) { return 1.0; };
  project.bound_M = spec.bound_M;
  project.rate_gamma = spec.rate_gamma > 0.0 ? spec.rate_gamma : spec.beta;
  return project;
}

/// Stopping project driven by the channel's active kernel with identity
/// reward and unit cost.
inline DiscountedProject stopping_from_channel(const ChannelParams& params) {
  params.check();
  StoppingSpec spec;
  spec.active_reward = [](Real x) { return x; };
  spec.active_cost = [](Real) { return 1.0; };
  const Real q = params.q;
  const Real rho = params.rho();
  spec.active_kernel = FiniteSupportKernel{[q, rho](Real x) {
    return SupportAtoms{{q + rho, x}, {q, 1.0 - x}};
  }};
  spec.beta = params.beta;
  spec.bound_M = 1.0;
  spec.rate_gamma = params.beta;
  return stopping_project(spec);
}

}  // namespace restless
