#pragma once

#include <string>

#include <json.hpp>

#include "bellman.hpp"
#include "config.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "pcl.hpp"

/// @file report_json.hpp
/// @brief JSON views of verification reports and the index-curve CSV format.
///        Every report embeds the tolerances, horizon, and discount decay it
///        was produced with, so each verdict is self-describing.

namespace restless {

inline ojson to_json(const ValidationReport& report) {
  ojson j;
  j["pass"] = report.pass;
  j["sample_count"] = report.sample_count;
  ojson checks = ojson::array();
  for (const auto& c : report.checks) {
    ojson item;
    item["name"] = c.name;
    item["margin"] = c.margin;
    item["pass"] = c.pass;
    if (!c.note.empty()) item["note"] = c.note;
    checks.push_back(item);
  }
  j["checks"] = checks;
  return j;
}

inline ojson to_json(const PCLReport& report) {
  ojson j;
  j["schema"] = report.schema;

  ojson p1;
  p1["pass"] = report.pcli1.pass;
  p1["min_g"] = report.pcli1.min_g;
  p1["min_g_raw"] = report.pcli1.min_g_raw;
  p1["error_bound"] = report.pcli1.bound;
  if (!std::isnan(report.pcli1.model_floor)) {
    p1["model_floor"] = report.pcli1.model_floor;
    p1["meets_model_floor"] = report.pcli1.meets_model_floor;
  }
  j["pcli1"] = p1;

  ojson p2;
  p2["pass"] = report.pcli2.pass;
  p2["max_decrease"] = report.pcli2.max_decrease;
  p2["max_jump_estimate"] = report.pcli2.max_jump_estimate;
  p2["tolerance"] = report.pcli2.tolerance;
  p2["undefined_locations"] = report.pcli2.undefined_locations;
  j["pcli2"] = p2;

  ojson p3;
  p3["pass"] = report.pcli3.pass;
  p3["max_residual"] = report.pcli3.max_residual;
  p3["tolerance"] = report.pcli3.tolerance;
  p3["partitions"] = report.pcli3.partitions;
  p3["refinement_estimate"] = report.pcli3.refinement_estimate;
  p3["c1"] = report.pcli3.c1;
  p3["c2"] = report.pcli3.c2;
  j["pcli3"] = p3;

  ojson ids = ojson::array();
  for (const auto& id : report.identities) {
    ojson item;
    item["name"] = id.name;
    item["max_residual"] = id.max_residual;
    item["tolerance"] = id.tolerance;
    item["pass"] = id.pass;
    ids.push_back(item);
  }
  j["identities"] = ids;
  j["grid"] = report.grid_meta;
  j["strict"] = report.strict;
  j["pass"] = report.pass();
  return j;
}

inline ojson to_json(const CrossCheckReport& report) {
  ojson j;
  j["lambdas"] = report.lambdas;
  j["agreements"] = report.agreements;
  j["indifference_band"] = report.indifference_band;
  ojson fails = ojson::array();
  for (const auto& f : report.failures) {
    ojson item;
    item["lambda"] = f.lambda;
    item["x"] = f.x;
    item["expected"] = f.expected;
    item["got"] = f.got;
    fails.push_back(item);
  }
  j["failures"] = fails;
  j["pass"] = report.pass();
  return j;
}

/// Context block shared by all reports: what was computed and how tightly.
inline ojson report_context(const RunConfig& cfg, const DiscountedProject& project,
                            int horizon) {
  ojson j;
  j["effective_config"] = config_to_json(cfg);
  j["horizon"] = horizon;
  j["rate_gamma"] = project.rate_gamma;
  j["gamma_pow_k"] = std::pow(project.rate_gamma, horizon);
  j["bound_M_gamma"] = project.m_gamma();
  return j;
}

/// Index curve CSV: one row per state with the certified error bound.
inline std::string index_csv(const IndexCurve& curve) {
  std::string out = "x,m_star,err_bound\n";
  for (std::size_t i = 0; i < curve.states.size(); ++i) {
    out += detail::format_real(curve.states[i]);
    out += ',';
    out += detail::format_real(curve.values[i]);
    out += ',';
    out += detail::format_real(curve.error_bounds[i]);
    out += '\n';
  }
  return out;
}

}  // namespace restless
