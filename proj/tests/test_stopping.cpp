/// @file test_stopping.cpp
/// @brief Stopping specialization: frozen passive dynamics, degenerate
///        metrics below the threshold and the ratio identity for the index.

#include <catch2/catch_amalgamated.hpp>

#include "restless/metrics.hpp"
#include "restless/stopping.hpp"

using namespace restless;

namespace {
const ChannelParams kParams{0.2, 0.3, 0.8};
}

TEST_CASE("stopping project freezes the passive state at zero reward and cost") {
  const auto prj = stopping_from_channel(kParams);
  CHECK(prj.reward(0.4, 0) == 0.0);
  CHECK(prj.cost(0.4, 0) == 0.0);
  CHECK(prj.reward(0.4, 1) == 0.4);
  CHECK(prj.cost(0.4, 1) == 1.0);
  const auto& frozen = std::get<FiniteSupportKernel>(prj.kernel0);
  const auto atoms = frozen.support(0.37);
  REQUIRE(atoms.size() == 1);
  CHECK(atoms[0].first == 0.37);
  CHECK(atoms[0].second == 1.0);

  const auto report = validate_assumptions(prj, linspace(0.0, 1.0, 51));
  CHECK(report.pass);
}

TEST_CASE("states at or below the threshold accrue exactly nothing") {
  const auto prj = stopping_from_channel(kParams);
  const std::vector<Real> states{0.1, 0.3, 0.5};
  const auto table = compute_metrics(prj, states, {ExtendedThreshold::at(0.5)}, 60);
  for (std::size_t i = 0; i < states.size(); ++i) {
    CHECK(table.F[i][0] == 0.0);
    CHECK(table.G[i][0] == 0.0);
  }
}

TEST_CASE("undiscounted index is the stage ratio") {
  StoppingSpec spec;
  spec.active_reward = [](Real x) { return x * x; };
  spec.active_cost = [](Real x) { return 1.0 + x; };
  spec.active_kernel =
      FiniteSupportKernel{[](Real) { return SupportAtoms{{0.5, 1.0}}; }};
  spec.beta = 0.0;
  spec.bound_M = 2.0;
  const auto prj = stopping_project(spec);
  const auto states = linspace(0.1, 0.9, 9);
  const auto curve = mp_index_curve(prj, states, 1);
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Real x = states[i];
    CHECK(curve.values[i] == Catch::Approx(x * x / (1.0 + x)).margin(1e-15));
  }
}

TEST_CASE("index equals the metric ratio of the left-limit policy") {
  const auto prj = stopping_from_channel(kParams);
  for (Real x : {0.25, 0.47, 0.62, 0.85}) {
    const int k = 80;
    // Left-limit policy value from x: one activation then the z-policy.
    const auto left = left_limit_metrics(prj, {x}, x, k);
    const auto diag = compute_metrics(prj, {x}, {ExtendedThreshold::at(x)}, k);
    REQUIRE(left.G[0] > 0.0);
    REQUIRE(diag.g[0][0] > 0.0);

    // The active step leaves x and the frozen dynamics never return, so the
    // two policies produce identical continuation values.
    CHECK(left.F[0] == Catch::Approx(diag.f[0][0]).margin(1e-14));
    CHECK(left.G[0] == Catch::Approx(diag.g[0][0]).margin(1e-14));

    const Real ratio_metrics = left.F[0] / left.G[0];
    const Real ratio_marginals = diag.f[0][0] / diag.g[0][0];
    CHECK(ratio_metrics == Catch::Approx(ratio_marginals).margin(1e-12));
  }
}

TEST_CASE("marginal resource of a stopping project is bounded below") {
  // g(x, z) = c(x,1) + beta * G(h(x), z) - beta * G(x, z) >= (1-beta) * min c
  // because G never exceeds max c / (1 - beta) under unit costs.
  const auto prj = stopping_from_channel(kParams);
  const auto states = linspace(0.0, 1.0, 21);
  const auto thresholds =
      standard_thresholds(std::vector<Real>(states.begin(), states.end()));
  const auto table = compute_metrics(prj, states, thresholds, 80);
  const Real floor = (1.0 - kParams.beta) * 1.0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (std::size_t j = 0; j < thresholds.size(); ++j) {
      CHECK(table.g[i][j] >= floor - 2.0 * table.error_fg);
    }
  }
}

TEST_CASE("nonpositive active cost surfaces as a model error") {
  StoppingSpec spec;
  spec.active_reward = [](Real x) { return x; };
  spec.active_cost = [](Real x) { return x - 0.5; };  // nonpositive below 0.5
  spec.active_kernel =
      FiniteSupportKernel{[](Real) { return SupportAtoms{{0.9, 1.0}}; }};
  spec.beta = 0.5;
  const auto prj = stopping_project(spec);
  CHECK(prj.cost(0.8, 1) == Catch::Approx(0.3));
  CHECK_THROWS_AS(prj.cost(0.2, 1), model_error);

  StoppingSpec bad = spec;
  bad.beta = 1.0;
  CHECK_THROWS_AS(stopping_project(bad), model_error);
}
