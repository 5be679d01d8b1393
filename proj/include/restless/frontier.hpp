#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "metrics.hpp"
#include "model.hpp"

/// @file frontier.hpp
/// @brief Achievable resource-reward boundary for an initial distribution:
///        threshold-policy performance points (G, F), their concave upper
///        hull, the shadow-price identity along hull jump segments, the
///        limit-ratio characterization of the index, and CSV/SVG export.

namespace restless {

/// Discrete initial distribution on a sorted state grid.
struct Distribution {
  std::vector<Real> states;  // strictly increasing
  std::vector<Real> probs;   // nonnegative, sums to one

  void check() const {
    if (states.empty() || states.size() != probs.size()) {
      throw std::invalid_argument("Distribution: states and probs must align");
    }
    for (std::size_t i = 1; i < states.size(); ++i) {
      if (!(states[i - 1] < states[i])) {
        throw std::invalid_argument("Distribution: states must be increasing");
      }
    }
    Real total = 0.0;
    for (Real p : probs) {
      if (!(p >= 0.0)) {
        throw std::invalid_argument("Distribution: negative probability");
      }
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("Distribution: probabilities sum to " +
                                  std::to_string(total));
    }
  }
};

inline Distribution uniform_distribution(const std::vector<Real>& grid) {
  Distribution p;
  p.states = grid;
  p.probs.assign(grid.size(), 1.0 / static_cast<Real>(grid.size()));
  p.check();
  return p;
}

inline Distribution point_mass(Real x) {
  Distribution p;
  p.states = {x};
  p.probs = {1.0};
  return p;
}

/// One threshold policy's expected performance under the initial
/// distribution: G is the discounted resource usage, F the reward.
struct FrontierPoint {
  ExtendedThreshold threshold;
  Real G = 0.0;
  Real F = 0.0;

  friend bool operator==(const FrontierPoint& a, const FrontierPoint& b) {
    return a.threshold == b.threshold && a.G == b.G && a.F == b.F;
  }
};

/// Mixes the distribution through a metrics table:
/// F(p, z) = sum_x p(x) F(x, z) and likewise for G, for every requested
/// threshold. Exactness of the mixture is what makes discrete p the right
/// representation here.
inline std::vector<FrontierPoint> performance_points(
    const DiscountedProject& project, const Distribution& p,
    const std::vector<ExtendedThreshold>& thresholds, int horizon,
    std::size_t node_budget = kDefaultNodeBudget) {
  p.check();
  const auto table = compute_metrics(project, p.states, thresholds, horizon,
                                     node_budget);
  std::vector<FrontierPoint> points;
  points.reserve(thresholds.size());
  for (std::size_t j = 0; j < table.thresholds.size(); ++j) {
    FrontierPoint pt;
    pt.threshold = table.thresholds[j];
    for (std::size_t i = 0; i < table.states.size(); ++i) {
      pt.G += p.probs[i] * table.G[i][j];
      pt.F += p.probs[i] * table.F[i][j];
    }
    points.push_back(pt);
  }
  return points;
}

/// Convex combination of a threshold pair's points; the randomized policy
/// mixing the two pure policies with weight alpha on the first achieves it.
inline FrontierPoint mixed_point(const FrontierPoint& a, const FrontierPoint& b,
                                 Real alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("mixed_point: alpha outside [0, 1]");
  }
  FrontierPoint out;
  out.threshold = a.threshold;
  out.G = alpha * a.G + (1.0 - alpha) * b.G;
  out.F = alpha * a.F + (1.0 - alpha) * b.F;
  return out;
}

namespace detail {

/// Cross product of (a - o) and (b - o) in the G-F plane; negative for a
/// right turn, which is what a concave upper envelope keeps.
inline Real hull_cross(const FrontierPoint& o, const FrontierPoint& a,
                       const FrontierPoint& b) {
  return (a.G - o.G) * (b.F - o.F) - (a.F - o.F) * (b.G - o.G);
}

}  // namespace detail

/// Vertices of the concave upper envelope of the point cloud in the G-F
/// plane, sorted by increasing G. Points collinear to within 1e-12 of the
/// coordinate scale are merged into their enclosing segment. A cloud with a
/// single distinct G value degenerates to its highest point.
inline std::vector<FrontierPoint> upper_hull(std::vector<FrontierPoint> points) {
  if (points.size() < 2) {
    throw std::invalid_argument("upper_hull: need at least 2 points");
  }
  std::sort(points.begin(), points.end(),
            [](const FrontierPoint& a, const FrontierPoint& b) {
              if (a.G != b.G) return a.G < b.G;
              return a.F > b.F;
            });
  // One point per distinct G: only the highest can touch the upper envelope.
  std::vector<FrontierPoint> filtered;
  for (const auto& pt : points) {
    if (filtered.empty() || filtered.back().G != pt.G) filtered.push_back(pt);
  }
  if (filtered.size() == 1) return filtered;

  Real scale = 0.0;
  for (const auto& pt : filtered) {
    scale = std::max(scale, std::max(std::abs(pt.G), std::abs(pt.F)));
  }
  const Real tol = 1e-12 * std::max(Real(1), scale * scale);

  std::vector<FrontierPoint> hull;
  for (const auto& pt : filtered) {
    while (hull.size() >= 2 &&
           detail::hull_cross(hull[hull.size() - 2], hull.back(), pt) >= -tol) {
      hull.pop_back();
    }
    hull.push_back(pt);
  }
  return hull;
}

/// Shadow-price identity along the hull: a segment joining the two policies
/// of one finite threshold has slope (F(p,z-) - F(p,z)) / (G(p,z-) - G(p,z)),
/// and that slope must equal the index at z.
struct ShadowPriceReport {
  Real max_deviation = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // jump segments narrower than the floor
};

inline ShadowPriceReport shadow_price_check(const std::vector<FrontierPoint>& hull,
                                            const IndexCurve& curve,
                                            Real dG_floor = 1e-6) {
  ShadowPriceReport report;
  for (std::size_t i = 1; i < hull.size(); ++i) {
    const auto& a = hull[i - 1];
    const auto& b = hull[i];
    const bool pair =
        a.threshold.kind == ExtendedThreshold::Kind::finite &&
        b.threshold.kind == ExtendedThreshold::Kind::finite &&
        a.threshold.z == b.threshold.z && !a.threshold.left_limit &&
        b.threshold.left_limit;
    if (!pair) continue;
    const Real dG = b.G - a.G;
    if (!(dG > dG_floor)) {
      ++report.skipped;
      continue;
    }
    const Real slope = (b.F - a.F) / dG;
    report.max_deviation = std::max(
        report.max_deviation, std::abs(slope - curve.value_at(a.threshold.z)));
    ++report.checked;
  }
  return report;
}

/// Difference-quotient convergence toward the index at z0:
/// (F(p, z0+delta) - F(p, z0)) / (G(p, z0+delta) - G(p, z0)) for a shrinking
/// list of deltas. Quotients whose denominator falls below the certification
/// noise are skipped rather than reported.
struct RNDerivativeReport {
  Real z0 = 0.0;
  Real m_star = 0.0;               // index reference at z0
  std::vector<Real> deltas;        // the deltas that produced a quotient
  std::vector<Real> ratios;
  std::vector<Real> deviations;    // |ratio - m_star|
  std::size_t skipped = 0;
  bool monotone_trend = false;     // deviations nonincreasing as delta shrinks
};

inline RNDerivativeReport rn_derivative_check(const DiscountedProject& project,
                                              const Distribution& p, Real z0,
                                              std::vector<Real> deltas, int horizon,
                                              std::size_t node_budget =
                                                  kDefaultNodeBudget) {
  p.check();
  if (deltas.empty()) {
    throw std::invalid_argument("rn_derivative_check: empty delta list");
  }
  std::sort(deltas.begin(), deltas.end());
  for (Real d : deltas) {
    if (!(d > 0.0)) {
      throw std::invalid_argument("rn_derivative_check: deltas must be positive");
    }
  }
  if (z0 < project.lower || z0 + deltas.back() > project.upper) {
    throw std::invalid_argument(
        "rn_derivative_check: probe window leaves the state interval");
  }

  std::vector<ExtendedThreshold> thresholds{ExtendedThreshold::at(z0)};
  for (Real d : deltas) thresholds.push_back(ExtendedThreshold::at(z0 + d));
  const auto points = performance_points(project, p, thresholds, horizon,
                                         node_budget);

  RNDerivativeReport report;
  report.z0 = z0;
  {
    const auto curve = mp_index_curve(project, {z0}, horizon);
    report.m_star = curve.values[0];
  }

  Real wbar = 0.0;
  for (std::size_t i = 0; i < p.states.size(); ++i) {
    wbar += p.probs[i] * project.weight(p.states[i]);
  }
  const Real gamma_pow_k = std::pow(project.rate_gamma, horizon);
  const Real noise = 2.0 * project.m_gamma() * gamma_pow_k * wbar + 1e-13;

  // Report in shrinking-delta order so the quotient sequence reads as a
  // limit toward the index.
  const auto& base = points[0];
  for (std::size_t d = deltas.size(); d-- > 0;) {
    const auto& probe = points[d + 1];
    const Real dG = base.G - probe.G;  // G decreases in z
    if (!(std::abs(dG) > noise)) {
      ++report.skipped;
      continue;
    }
    const Real ratio = (base.F - probe.F) / dG;
    report.deltas.push_back(deltas[d]);
    report.ratios.push_back(ratio);
    report.deviations.push_back(std::abs(ratio - report.m_star));
  }
  report.monotone_trend =
      !report.deviations.empty() &&
      std::is_sorted(report.deviations.rbegin(), report.deviations.rend());
  return report;
}

enum class FrontierFormat { csv, svg };

namespace detail {

inline bool frontier_on_hull(const FrontierPoint& pt,
                             const std::vector<FrontierPoint>& hull) {
  for (const auto& v : hull) {
    if (v == pt) return true;
  }
  return false;
}

inline std::string frontier_csv(const std::vector<FrontierPoint>& hull,
                                const std::vector<FrontierPoint>& points) {
  std::string out = "z,kind,G,F,on_hull\n";
  for (const auto& pt : points) {
    if (pt.threshold.kind == ExtendedThreshold::Kind::finite) {
      out += format_real(pt.threshold.z);
    }
    out += ',';
    out += pt.threshold.kind_label();
    out += ',';
    out += format_real(pt.G);
    out += ',';
    out += format_real(pt.F);
    out += ',';
    out += frontier_on_hull(pt, hull) ? "true" : "false";
    out += '\n';
  }
  return out;
}

inline std::string frontier_svg(const std::vector<FrontierPoint>& hull,
                                const std::vector<FrontierPoint>& points) {
  Real g_lo = std::numeric_limits<Real>::infinity(), g_hi = -g_lo;
  Real f_lo = g_lo, f_hi = -g_lo;
  for (const auto& pt : points) {
    g_lo = std::min(g_lo, pt.G);
    g_hi = std::max(g_hi, pt.G);
    f_lo = std::min(f_lo, pt.F);
    f_hi = std::max(f_hi, pt.F);
  }
  const Real g_span = g_hi > g_lo ? g_hi - g_lo : Real(1);
  const Real f_span = f_hi > f_lo ? f_hi - f_lo : Real(1);

  const double width = 640.0, height = 480.0, margin = 56.0;
  auto sx = [&](Real g) {
    return margin + (g - g_lo) / g_span * (width - 2.0 * margin);
  };
  auto sy = [&](Real f) {
    return height - margin - (f - f_lo) / f_span * (height - 2.0 * margin);
  };
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  auto label = [](Real v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::string(buf);
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
         "viewBox=\"0 0 640 480\">\n";
  svg += "<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  // Axes with end tick labels.
  svg += "<line x1=\"" + num(margin) + "\" y1=\"" + num(height - margin) +
         "\" x2=\"" + num(width - margin) + "\" y2=\"" + num(height - margin) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(margin) + "\" y1=\"" + num(height - margin) +
         "\" x2=\"" + num(margin) + "\" y2=\"" + num(margin) +
         "\" stroke=\"black\"/>\n";
  svg += "<text x=\"" + num(width / 2.0) + "\" y=\"" + num(height - 12.0) +
         "\" text-anchor=\"middle\" font-size=\"16\">G(z)</text>\n";
  svg += "<text x=\"16\" y=\"" + num(height / 2.0) +
         "\" text-anchor=\"middle\" font-size=\"16\" transform=\"rotate(-90 16 " +
         num(height / 2.0) + ")\">F(z)</text>\n";
  svg += "<text x=\"" + num(margin) + "\" y=\"" + num(height - margin + 18.0) +
         "\" text-anchor=\"middle\" font-size=\"11\">" + label(g_lo) + "</text>\n";
  svg += "<text x=\"" + num(width - margin) + "\" y=\"" +
         num(height - margin + 18.0) + "\" text-anchor=\"middle\" font-size=\"11\">" +
         label(g_hi) + "</text>\n";
  svg += "<text x=\"" + num(margin - 6.0) + "\" y=\"" + num(height - margin) +
         "\" text-anchor=\"end\" font-size=\"11\">" + label(f_lo) + "</text>\n";
  svg += "<text x=\"" + num(margin - 6.0) + "\" y=\"" + num(margin + 4.0) +
         "\" text-anchor=\"end\" font-size=\"11\">" + label(f_hi) + "</text>\n";

  svg += "<polyline fill=\"none\" stroke=\"#1a6fb0\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < hull.size(); ++i) {
    if (i) svg += ' ';
    svg += num(sx(hull[i].G)) + ',' + num(sy(hull[i].F));
  }
  svg += "\"/>\n";
  for (const auto& pt : points) {
    svg += "<circle cx=\"" + num(sx(pt.G)) + "\" cy=\"" + num(sy(pt.F)) +
           "\" r=\"2\" fill=\"#444444\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace detail

/// Writes the point cloud and hull to path as CSV (columns z, kind, G, F,
/// on_hull) or as a deterministic SVG plot. The write goes through a
/// temporary file renamed into place so readers never observe a partial
/// file.
inline void emit_frontier(const std::vector<FrontierPoint>& hull,
                          const std::vector<FrontierPoint>& points,
                          const std::string& path, FrontierFormat format) {
  if (hull.empty()) throw std::invalid_argument("emit_frontier: empty hull");
  if (points.empty()) throw std::invalid_argument("emit_frontier: empty point set");
  const std::string body = format == FrontierFormat::csv
                               ? detail::frontier_csv(hull, points)
                               : detail::frontier_svg(hull, points);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("emit_frontier: cannot write " + tmp);
    }
    out << body;
    if (!out.flush()) {
      throw std::runtime_error("emit_frontier: write failed for " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error("emit_frontier: cannot move output into " + path);
  }
}

}  // namespace restless
