#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shapeline/kernels.hpp"
#include "shapeline/modulus.hpp"
#include "shapeline/periodic.hpp"
#include "shapeline/poly.hpp"
#include "shapeline/spline.hpp"
#include "shapeline/threads.hpp"

namespace shapeline {

// An experiment plan that cannot be run as written (bad sizes, unknown
// function ids, odd inflection lists).  Maps to a usage error, not a
// failed study.
struct PlanError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace verify {

// ---------------------------------------------------------------------------
// Deterministic coefficient stream for the conforming family.

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double unit_coefficient(std::uint64_t& state) {
  return 2.0 * (static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53) -
         1.0;
}

// Finite trigonometric sum c0 + sum a_k cos(kx) + b_k sin(kx).
struct TrigPoly {
  double c0 = 0.0;
  std::vector<double> a, b;  // index k-1 holds the degree-k pair

  double value(double x) const {
    double acc = c0;
    for (std::size_t k = 1; k <= a.size(); ++k) {
      double kk = static_cast<double>(k);
      acc += a[k - 1] * std::cos(kk * x) + b[k - 1] * std::sin(kk * x);
    }
    return acc;
  }
  double d2(double x) const {
    double acc = 0.0;
    for (std::size_t k = 1; k <= a.size(); ++k) {
      double kk = static_cast<double>(k);
      acc -= kk * kk *
             (a[k - 1] * std::cos(kk * x) + b[k - 1] * std::sin(kk * x));
    }
    return acc;
  }
};

// Uniform-grid projection; exact when f is a trigonometric polynomial of
// degree < points/2.
inline TrigPoly project_trig(const std::function<double(double)>& f,
                             int degree, int points) {
  TrigPoly out;
  out.a.assign(static_cast<std::size_t>(degree), 0.0);
  out.b.assign(static_cast<std::size_t>(degree), 0.0);
  double mean = 0.0;
  for (int i = 0; i < points; ++i) {
    double x = -pi + two_pi * static_cast<double>(i) / points;
    double v = f(x);
    mean += v;
    for (int k = 1; k <= degree; ++k) {
      out.a[static_cast<std::size_t>(k) - 1] += v * std::cos(k * x);
      out.b[static_cast<std::size_t>(k) - 1] += v * std::sin(k * x);
    }
  }
  out.c0 = mean / points;
  for (int k = 1; k <= degree; ++k) {
    out.a[static_cast<std::size_t>(k) - 1] *= 2.0 / points;
    out.b[static_cast<std::size_t>(k) - 1] *= 2.0 / points;
  }
  return out;
}

// Member of the conforming family: f'' = Pi * g with g a small positive
// trigonometric perturbation of 1.  g is corrected along Pi so that f''
// has zero mean, which makes the usual mean-fixing constant exactly zero
// and keeps the curvature product Pi^2 * g nonnegative by construction.
// Membership is still re-checked by the caller through the precheck.
inline core::PeriodicFunction conforming_member(const core::InflectionSet& Y,
                                                std::uint64_t seed) {
  const int s = static_cast<int>(Y.size() / 2);
  const int deg_g = 2;
  const int points = 64 * (s + 3);
  std::uint64_t state = seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL;
  double c1 = unit_coefficient(state), s1 = unit_coefficient(state);
  double c2 = unit_coefficient(state), s2 = unit_coefficient(state);

  double eps = 0.35;
  TrigPoly f2;
  for (int attempt = 0; attempt < 40; ++attempt, eps *= 0.5) {
    auto graw = [&](double x) {
      return 1.0 + eps * (c1 * std::cos(x) + s1 * std::sin(x) +
                          0.5 * c2 * std::cos(2 * x) +
                          0.5 * s2 * std::sin(2 * x));
    };
    double num = 0.0, den = 0.0;
    for (int i = 0; i < points; ++i) {
      double x = -pi + two_pi * static_cast<double>(i) / points;
      double p = Y.Pi(x);
      num += p * graw(x);
      den += p * p;
    }
    double t = num / den;
    auto g = [&](double x) { return graw(x) - t * Y.Pi(x); };
    double gmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
      double x = -pi + two_pi * static_cast<double>(i) / points;
      gmin = std::min(gmin, g(x));
    }
    if (gmin < 0.05) continue;
    f2 = project_trig([&](double x) { return Y.Pi(x) * g(x); }, s + deg_g,
                      points);
    f2.c0 = 0.0;  // zero mean holds analytically; drop projection dust
    break;
  }
  if (f2.a.empty())
    throw PlanError("conforming member construction failed for seed " +
                    std::to_string(seed));

  TrigPoly f;
  f.a.resize(f2.a.size());
  f.b.resize(f2.b.size());
  for (std::size_t k = 1; k <= f2.a.size(); ++k) {
    double kk = static_cast<double>(k);
    f.a[k - 1] = -f2.a[k - 1] / (kk * kk);
    f.b[k - 1] = -f2.b[k - 1] / (kk * kk);
  }
  std::string id = "conforming-" + std::to_string(seed);
  return core::PeriodicFunction(
      id, [f](double x) { return f.value(x); },
      [f](double x) { return f.d2(x); });
}

// Registry lookup: the fixed names plus "conforming-<seed>".
inline core::PeriodicFunction resolve_function(const std::string& id,
                                               const core::InflectionSet& Y) {
  const std::string prefix = "conforming-";
  if (id.rfind(prefix, 0) == 0) {
    std::uint64_t seed = 0;
    try {
      seed = std::stoull(id.substr(prefix.size()));
    } catch (const std::exception&) {
      throw std::invalid_argument("bad conforming seed in id: " + id);
    }
    return conforming_member(Y, seed);
  }
  return core::PeriodicFunction::from_name(id);
}

// ---------------------------------------------------------------------------
// Coconvexity precheck.

struct PrecheckResult {
  bool pass = false;
  double worst = 0.0;    // most negative f''*Pi seen
  double worst_x = 0.0;
  double tol = 0.0;
  double scale = 0.0;    // max |f''*Pi|
  std::size_t checked = 0;
  std::size_t violations = 0;
  std::vector<double> locations;  // first few failing x
};

// Central second differences of f against the sign pattern of Pi.  The
// step is fixed; the tolerance absorbs roundoff of order eps/step^2.
inline PrecheckResult precheck_coconvex(const std::function<double(double)>& f,
                                        const core::InflectionSet& Y,
                                        int grid = 2048) {
  if (grid < 16) throw PlanError("precheck grid must have at least 16 points");
  PrecheckResult out;
  const double e = 4e-3;
  std::vector<double> prod(static_cast<std::size_t>(grid));
  double fmax = 0.0;
  for (int i = 0; i < grid; ++i) {
    double x = -pi + two_pi * static_cast<double>(i) / grid;
    double d2 = (-f(x - 2 * e) + 16 * f(x - e) - 30 * f(x) + 16 * f(x + e) -
                 f(x + 2 * e)) /
                (12 * e * e);
    prod[static_cast<std::size_t>(i)] = d2 * Y.Pi(x);
    fmax = std::max(fmax, std::abs(f(x)));
    out.scale = std::max(out.scale, std::abs(prod[static_cast<std::size_t>(i)]));
  }
  out.tol = std::max(1e-6 * out.scale, 1e-8 * std::max(1.0, fmax));
  out.checked = prod.size();
  out.worst = std::numeric_limits<double>::infinity();
  for (int i = 0; i < grid; ++i) {
    double x = -pi + two_pi * static_cast<double>(i) / grid;
    double v = prod[static_cast<std::size_t>(i)];
    if (v < out.worst) {
      out.worst = v;
      out.worst_x = x;
    }
    if (v < -out.tol) {
      ++out.violations;
      if (out.locations.size() < 16) out.locations.push_back(x);
    }
  }
  out.pass = out.violations == 0;
  return out;
}

// ---------------------------------------------------------------------------
// Envelope constant fitting.

enum class BoundKind {
  step_gap,          // |chi - t|      <= C * gamma^p
  step_slope_upper,  // h |t'|         <= C * gamma^p
  step_slope_lower,  // h |t'|         >= c * gamma^p
  ramp_gap,          // |(x-xj)+ - tau| <= C * h * gamma^p
};

inline const char* bound_name(BoundKind k) {
  switch (k) {
    case BoundKind::step_gap: return "step gap";
    case BoundKind::step_slope_upper: return "step slope upper";
    case BoundKind::step_slope_lower: return "step slope lower";
    case BoundKind::ramp_gap: return "ramp gap";
  }
  return "?";
}

inline bool is_lower_bound(BoundKind k) {
  return k == BoundKind::step_slope_lower;
}

struct BoundSample {
  double lhs = 0.0;       // measured left side, already nonnegative
  double envelope = 0.0;  // gamma power times any fixed scaling
};

// Smallest C (largest c for lower bounds) making the inequality hold on
// the sample set.  All-zero sample sets fit C = 0: trivially satisfied.
inline double fit_constant(BoundKind kind,
                           const std::vector<BoundSample>& samples) {
  bool any = false;
  double hi = 0.0;
  double lo = std::numeric_limits<double>::infinity();
  for (const BoundSample& s : samples) {
    if (s.envelope <= 0.0) {
      if (s.lhs > 0.0)
        throw std::invalid_argument("positive sample with empty envelope");
      continue;
    }
    if (s.lhs != 0.0 || is_lower_bound(kind)) any = true;
    double r = s.lhs / s.envelope;
    hi = std::max(hi, r);
    lo = std::min(lo, r);
  }
  if (!any) return 0.0;
  return is_lower_bound(kind) ? lo : hi;
}

struct FitLine {
  std::string name;
  double constant = 0.0;
  int gamma_power = 0;
  bool lower = false;
  bool trivial = false;      // fitted from an all-zero sample set
  std::size_t samples = 0;
  std::string grid_note;     // where the samples came from
};

// Harvests the four kernel envelopes over the knots that keep distance 20
// from every inflection point (distance 10 when the grid is too coarse
// for 20).  Empty when even that tier is empty.
inline std::vector<FitLine> collect_kernel_constants(
    const core::InflectionSet& Y, std::int64_t n, int samples_per_window = 512,
    std::size_t max_knots = 12, int b_override = 0) {
  std::vector<FitLine> out;
  core::DyadicGrid g{static_cast<int>(n)};
  core::NeighborhoodIndex idx(g, Y);
  int tier = 20;
  std::vector<std::int64_t> js = idx.H(tier);
  if (js.empty()) {
    tier = 10;
    js = idx.H(tier);
  }
  if (js.empty()) return out;
  std::size_t stride = std::max<std::size_t>(1, js.size() / max_knots);
  std::vector<std::int64_t> picked;
  for (std::size_t q = 0; q < js.size(); q += stride) picked.push_back(js[q]);

  kernels::KernelParams kp;
  kp.b = b_override > 0 ? b_override : static_cast<int>(Y.size() / 2) + 2;
  if (kp.b < static_cast<int>(Y.size() / 2) + 2)
    throw PlanError("kernel exponent must be at least s+2 for the envelopes");
  kernels::PlainFamily fam(g, Y, kp);
  const int s2 = static_cast<int>(Y.size());
  const int p_step = 2 * kp.b - s2 - 1;
  const int p_hi = 2 * kp.b - s2;
  const int p_lo = 2 * kp.b + s2;
  const int p_ramp = 2 * (kp.b - s2 / 2 - 1);

  std::vector<BoundSample> sg, shi, slo, sramp;
  for (std::int64_t j : picked) {
    const kernels::CumulativeTable& ct = fam.t(j);
    double xj = g.x(j);
    double alpha = fam.tau_alpha(j);
    const kernels::CumulativeTable& up = fam.t(j + 10);
    const kernels::CumulativeTable& dn = fam.t(j - 10);
    for (int q = 0; q <= samples_per_window; ++q) {
      double x = xj - pi + two_pi * static_cast<double>(q) / samples_per_window;
      double gamma = core::gamma_weight(g, j, x);
      double d = ct.derivative(x);
      sg.push_back({std::abs(core::chi(x, xj) - ct.value(x)),
                    kernels::ipow(gamma, p_step)});
      shi.push_back({g.h * std::abs(d), kernels::ipow(gamma, p_hi)});
      bool off = true;
      for (std::size_t i = 0; i < Y.size(); ++i) {
        auto [lo, hi] = idx.window(i, 10);
        for (int k = -1; k <= 1; ++k) {
          double xs = x + two_pi * k;
          if (xs > lo && xs < hi) off = false;
        }
      }
      if (off)
        slo.push_back({g.h * std::abs(d), kernels::ipow(gamma, p_lo)});
      double base = xj - pi;
      double tau = alpha * (up.prefix(x) - up.prefix(base)) +
                   (1.0 - alpha) * (dn.prefix(x) - dn.prefix(base));
      double ramp = x > xj ? x - xj : 0.0;
      sramp.push_back(
          {std::abs(ramp - tau), g.h * kernels::ipow(gamma, p_ramp)});
    }
  }

  std::ostringstream note;
  note << picked.size() << " knots at tier " << tier << ", "
       << (samples_per_window + 1) << " points per window, n=" << n;
  auto push = [&](BoundKind k, const std::vector<BoundSample>& s, int p) {
    FitLine l;
    l.name = bound_name(k);
    l.constant = fit_constant(k, s);
    l.gamma_power = p;
    l.lower = is_lower_bound(k);
    l.trivial = l.constant == 0.0;
    l.samples = s.size();
    l.grid_note = note.str();
    out.push_back(std::move(l));
  };
  push(BoundKind::step_gap, sg, p_step);
  push(BoundKind::step_slope_upper, shi, p_hi);
  push(BoundKind::step_slope_lower, slo, p_lo);
  push(BoundKind::ramp_gap, sramp, p_ramp);
  return out;
}

// ---------------------------------------------------------------------------
// Study plan and report.

struct ExperimentPlan {
  std::vector<std::string> function_ids = {"neg-sin"};
  std::vector<double> y_points = {0.0, -pi};
  std::vector<std::int64_t> ns = {64, 128};
  int grid = 2048;             // sup-norm sample density per period
  int m1 = 2, m2 = 4;          // refinement multipliers for the poly stage
  bool calibrate = false;      // escalate multipliers until solves are clean
  int max_m2 = 16;
  enum class Artifacts { spline, poly, both } artifacts = Artifacts::both;
  bool allow_small_n = false;  // permit n at or below the coarse threshold
  bool fit_constants = true;
  double ratio_cap = 2.0;      // allowed spread of error/modulus across n
  double sign_tol = 1e-8;
  std::uint64_t seed = 1;
};

inline const char* artifacts_name(ExperimentPlan::Artifacts a) {
  switch (a) {
    case ExperimentPlan::Artifacts::spline: return "spline";
    case ExperimentPlan::Artifacts::poly: return "poly";
    case ExperimentPlan::Artifacts::both: return "both";
  }
  return "?";
}

// The coarse threshold: below it the excluded tiers eat the whole grid and
// the headline statements are vacuous, so plans must opt in explicitly.
inline void validate_plan(const ExperimentPlan& p,
                          const core::InflectionSet& Y) {
  if (p.function_ids.empty()) throw PlanError("plan lists no functions");
  if (p.ns.empty()) throw PlanError("plan lists no grid sizes");
  if (p.grid < 64) throw PlanError("sample density must be at least 64");
  if (p.ratio_cap < 1.0) throw PlanError("ratio cap must be at least 1");
  int coarse = core::min_n_for(Y, 30);
  for (std::int64_t n : p.ns) {
    if (n <= 0) throw PlanError("grid sizes must be positive");
    if (!p.allow_small_n && n <= coarse)
      throw PlanError("n=" + std::to_string(n) +
                      " is at or below the coarse threshold " +
                      std::to_string(coarse) +
                      " for these inflection points; raise n or allow "
                      "small sizes explicitly");
  }
  poly::LevelConfig lc;
  lc.n = 16;
  lc.m1 = p.m1;
  lc.m2 = p.m2;
  lc.validate();
}

struct CheckLine {
  std::string name;
  double value = 0.0;
  double tol = 0.0;
  bool pass = true;
};

struct Cell {
  std::string fid;
  std::int64_t n = 0;
  bool conforming = true;
  bool spline_built = false;
  bool poly_built = false;
  bool fallback = false;          // degree-zero stand-in below the poly gate
  int m1 = 0, m2 = 0;             // multipliers actually used
  double err_spline = 0.0;
  double err_poly = 0.0;
  double omega4 = 0.0;
  double ratio_spline = 0.0;
  double ratio_poly = 0.0;
  std::size_t spline_outside_violations = 0;
  std::size_t spline_jump_violations = 0;
  double spline_worst = 0.0;
  long poly_outside_violations = 0;
  long poly_a_violations = 0;
  long poly_b_violations = 0;
  double poly_outside_worst = 0.0;
  double poly_inside_worst = 0.0;
  double poly_a_worst = 0.0;
  double poly_b_worst = 0.0;
  double periodicity = 0.0;
  std::size_t clamp_events = 0;
  double runtime_ms = 0.0;        // excluded from canonical serialization
  std::vector<CheckLine> checks;
  std::vector<std::string> notes;

  bool ok() const {
    for (const CheckLine& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

struct SlopeLine {
  std::string fid;
  std::string artifact;
  double slope = 0.0;
  double ratio_spread = 0.0;  // max/min of error over modulus, zeros dropped
  std::size_t points = 0;
  bool all_zero = false;      // every error at the noise floor
};

struct Report {
  std::vector<std::string> function_ids;
  std::vector<double> y_points;
  std::vector<std::int64_t> ns;
  int grid = 0;
  int m1 = 0, m2 = 0;
  bool calibrated = false;
  std::string artifacts;
  bool allow_small_n = false;
  double ratio_cap = 0.0;
  double sign_tol = 0.0;
  std::uint64_t seed = 0;
  std::vector<CheckLine> prechecks;   // one per function
  std::vector<Cell> cells;
  std::vector<SlopeLine> slopes;
  std::vector<CheckLine> global_checks;
  std::vector<FitLine> constants;
  double total_runtime_ms = 0.0;      // excluded from canonical serialization
  bool failed = false;

  std::size_t failed_checks() const {
    std::size_t k = 0;
    for (const CheckLine& c : prechecks) k += !c.pass;
    for (const Cell& cell : cells)
      for (const CheckLine& c : cell.checks) k += !c.pass;
    for (const CheckLine& c : global_checks) k += !c.pass;
    return k;
  }
};

namespace detail {

inline double sup_error(const std::function<double(double)>& f,
                        const std::function<double(double)>& approx,
                        int grid) {
  double worst = 0.0;
  for (int i = 0; i <= grid; ++i) {
    double x = -pi + two_pi * static_cast<double>(i) / grid;
    worst = std::max(worst, std::abs(f(x) - approx(x)));
  }
  return worst;
}

inline double lsq_slope(const std::vector<double>& lx,
                        const std::vector<double>& ly) {
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(lx.size());
  my /= static_cast<double>(lx.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    num += (lx[i] - mx) * (ly[i] - my);
    den += (lx[i] - mx) * (lx[i] - mx);
  }
  return num / den;
}

}  // namespace detail

// Runs the full grid of (function, n) cells.  Cells are independent and
// run under the worker pool; the merge below them is single threaded.
// A failed check marks the report failed but never stops the study.
inline Report run_study(const ExperimentPlan& plan) {
  auto t0 = std::chrono::steady_clock::now();
  core::InflectionSet Y = core::InflectionSet::from_points(plan.y_points);
  validate_plan(plan, Y);

  Report rep;
  rep.function_ids = plan.function_ids;
  for (std::size_t i = 0; i < Y.size(); ++i) rep.y_points.push_back(Y.y(i));
  rep.ns = plan.ns;
  rep.grid = plan.grid;
  rep.m1 = plan.m1;
  rep.m2 = plan.m2;
  rep.calibrated = plan.calibrate;
  rep.artifacts = artifacts_name(plan.artifacts);
  rep.allow_small_n = plan.allow_small_n;
  rep.ratio_cap = plan.ratio_cap;
  rep.sign_tol = plan.sign_tol;
  rep.seed = plan.seed;

  std::vector<core::PeriodicFunction> fs;
  for (const std::string& id : plan.function_ids)
    fs.push_back(resolve_function(id, Y));

  std::vector<PrecheckResult> pre(fs.size());
  for (std::size_t i = 0; i < fs.size(); ++i) {
    pre[i] = precheck_coconvex(fs[i], Y, plan.grid);
    CheckLine c{"input coconvexity precheck: " + fs[i].name(),
                pre[i].worst, pre[i].tol, pre[i].pass};
    rep.prechecks.push_back(c);
  }

  const int spline_min = core::min_n_for(Y, 3);
  const int poly_min = core::min_n_for(Y, 2);
  const bool want_spline = plan.artifacts != ExperimentPlan::Artifacts::poly;
  const bool want_poly = plan.artifacts != ExperimentPlan::Artifacts::spline;

  rep.cells.resize(fs.size() * plan.ns.size());
  core::parallel_for(
      std::int64_t{0}, static_cast<std::int64_t>(rep.cells.size()),
      [&](std::int64_t ci_) {
        auto ci = static_cast<std::size_t>(ci_);
        auto cell_start = std::chrono::steady_clock::now();
        std::size_t fi = ci / plan.ns.size();
        std::int64_t n = plan.ns[ci % plan.ns.size()];
        const core::PeriodicFunction& f = fs[fi];
        Cell& cell = rep.cells[ci];
        cell.fid = f.name();
        cell.n = n;
        cell.conforming = pre[fi].pass;
        cell.m1 = plan.m1;
        cell.m2 = plan.m2;
        try {

        cell.omega4 = core::modulus_periodic(f, 4, pi / static_cast<double>(n));
        double fscale = 0.0;
        for (int q = 0; q < 256; ++q)
          fscale = std::max(fscale, std::abs(f(-pi + two_pi * q / 256.0)));
        const double err_floor = 1e-10 * std::max(1.0, fscale);
        const double omega_floor = 1e-12 * std::max(1.0, fscale);

        auto ratio_check = [&](double err, double om, const char* label,
                               double& ratio_out) {
          if (om > omega_floor) {
            ratio_out = err / om;
            return;
          }
          // Flat input: the modulus vanishes, so the error must too.
          ratio_out = 0.0;
          cell.checks.push_back({std::string(label) +
                                     ": error vanishes with the modulus",
                                 err, err_floor, err <= err_floor});
        };

        if (want_spline) {
          if (n >= spline_min) {
            spline::SplineModel sm = spline::build_spline(f, Y, static_cast<int>(n));
            cell.spline_built = true;
            cell.err_spline = detail::sup_error(
                f, [&](double x) { return sm.value(x); }, plan.grid);
            ratio_check(cell.err_spline, cell.omega4, "spline", cell.ratio_spline);
            spline::VerifyOptions vo;
            vo.tol_rel = plan.sign_tol;
            spline::SignReport sr = spline::verify_spline_shape(sm, vo);
            cell.spline_outside_violations = sr.violations;
            cell.spline_jump_violations = sr.jump_violations;
            cell.spline_worst = sr.worst;
            cell.checks.push_back(
                {"spline curvature pattern off bands", sr.worst,
                 vo.tol_rel * std::max(1.0, sr.scale), sr.violations == 0});
            cell.checks.push_back({"spline anchor slope jumps ordered",
                                   sr.worst_jump,
                                   vo.tol_rel * std::max(1.0, sr.scale),
                                   sr.jump_violations == 0});
          } else {
            cell.notes.push_back("spline skipped: needs n >= " +
                                 std::to_string(spline_min));
          }
        }

        if (want_poly) {
          if (n >= poly_min) {
            poly::LevelConfig lc;
            lc.n = n;
            lc.m1 = plan.m1;
            lc.m2 = plan.m2;
            std::shared_ptr<poly::PolyModel> pm;
            poly::PolyReport pr;
            if (plan.calibrate) {
              poly::CalibrationResult cal =
                  poly::calibrate(f, Y, lc, nullptr, plan.max_m2);
              pm = cal.model;
              pr = cal.report;
              cell.m1 = cal.used.m1;
              cell.m2 = cal.used.m2;
              cell.checks.push_back(
                  {"poly normalization solves interior",
                   static_cast<double>(pm ? pm->clamps().size() : 1), 0.0,
                   cal.success});
            } else {
              pm = std::make_shared<poly::PolyModel>(f, Y, lc);
              pr = poly::verify_poly_shape(*pm);
            }
            if (pm) {
              cell.poly_built = true;
              cell.err_poly = detail::sup_error(
                  f, [&](double x) { return pm->value(x); }, plan.grid);
              ratio_check(cell.err_poly, cell.omega4, "poly", cell.ratio_poly);
              cell.poly_outside_violations = pr.outside_violations;
              cell.poly_a_violations = pr.a_violations;
              cell.poly_b_violations = pr.b_violations;
              cell.poly_outside_worst = pr.outside_worst;
              cell.poly_inside_worst = pr.inside_worst;
              cell.poly_a_worst = pr.a_worst;
              cell.poly_b_worst = pr.b_worst;
              cell.periodicity = pr.periodicity_worst;
              cell.clamp_events = pr.clamp_events;
              cell.checks.push_back({"poly curvature pattern off bands",
                                     pr.outside_worst, pr.tol_main,
                                     pr.outside_violations == 0});
              cell.checks.push_back({"poly knot block nonnegative",
                                     pr.a_worst, pr.tol_a,
                                     pr.a_violations == 0});
              cell.checks.push_back({"poly edge block nonnegative off bands",
                                     pr.b_worst, pr.tol_b,
                                     pr.b_violations == 0});
              cell.checks.push_back(
                  {"poly full period closure", pr.periodicity_worst,
                   1e-7 * std::max(1.0, pr.value_scale),
                   pr.periodicity_worst <= 1e-7 * std::max(1.0, pr.value_scale)});
            }
          } else {
            poly::PolyModel pm = poly::fallback_whitney(f, n, Y);
            cell.poly_built = true;
            cell.fallback = true;
            cell.err_poly = detail::sup_error(
                f, [&](double x) { return pm.value(x); }, plan.grid);
            double cert = 3.0 * core::modulus_periodic(f, 4, 4.0 * pi);
            cell.checks.push_back({"fallback within its modulus certificate",
                                   cell.err_poly, cert,
                                   cell.err_poly <= cert});
            ratio_check(cell.err_poly, cell.omega4, "poly", cell.ratio_poly);
            cell.notes.push_back("poly fallback: needs n >= " +
                                 std::to_string(poly_min));
          }
        }

        } catch (const std::exception& e) {
          // Construction failures become failing checks so a broken cell
          // never takes down the rest of the study.
          cell.checks.push_back({"cell construction completed", 0.0, 0.0,
                                 false});
          cell.notes.push_back(e.what());
        }
        cell.runtime_ms =
            std::chrono::duration<double, std::milli>(
                std::chrono::steady_clock::now() - cell_start)
                .count();
      });

  // Merge: slopes and ratio spreads per function and artifact.
  for (std::size_t fi = 0; fi < fs.size(); ++fi) {
    for (const char* art : {"spline", "poly"}) {
      bool is_spline = std::string(art) == "spline";
      if (is_spline && !want_spline) continue;
      if (!is_spline && !want_poly) continue;
      std::vector<double> lns, lerrs, ratios;
      double fscale = 0.0;
      std::size_t built = 0;
      for (const Cell& cell : rep.cells) {
        if (cell.fid != fs[fi].name()) continue;
        bool b = is_spline ? cell.spline_built : cell.poly_built;
        if (!b || cell.fallback) continue;
        ++built;
        double err = is_spline ? cell.err_spline : cell.err_poly;
        double ratio = is_spline ? cell.ratio_spline : cell.ratio_poly;
        fscale = std::max(fscale, err);
        if (ratio > 0.0) ratios.push_back(ratio);
        if (err > 0.0) {
          lns.push_back(std::log(static_cast<double>(cell.n)));
          lerrs.push_back(std::log(err));
        }
      }
      if (built < 2) continue;
      SlopeLine sl;
      sl.fid = fs[fi].name();
      sl.artifact = art;
      sl.points = lns.size();
      sl.all_zero = ratios.empty();
      if (!ratios.empty()) {
        double rmax = *std::max_element(ratios.begin(), ratios.end());
        double rmin = *std::min_element(ratios.begin(), ratios.end());
        sl.ratio_spread = rmax / rmin;
        rep.global_checks.push_back(
            {sl.fid + " " + art + ": error to modulus spread within cap",
             sl.ratio_spread, plan.ratio_cap,
             sl.ratio_spread <= plan.ratio_cap});
      } else {
        rep.global_checks.push_back(
            {sl.fid + " " + art + ": flat input, zero column accepted",
             0.0, 0.0, true});
      }
      if (lns.size() >= 2) sl.slope = detail::lsq_slope(lns, lerrs);
      if (lns.size() >= 3) {
        rep.global_checks.push_back(
            {sl.fid + " " + art + ": decay slope in the fourth order window",
             sl.slope, 0.5, sl.slope >= -4.5 && sl.slope <= -3.5});
      }
      rep.slopes.push_back(sl);
    }
  }

  if (plan.fit_constants) {
    for (std::int64_t n : plan.ns) {
      std::vector<FitLine> lines = collect_kernel_constants(Y, n);
      for (FitLine& l : lines) rep.constants.push_back(std::move(l));
    }
    for (const FitLine& l : rep.constants) {
      if (l.lower)
        rep.global_checks.push_back(
            {"lower envelope constant positive (" + l.grid_note + ")",
             l.constant, 0.0, l.trivial || l.constant > 0.0});
    }
  }

  rep.failed = rep.failed_checks() > 0;
  rep.total_runtime_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
  return rep;
}

}  // namespace verify
}  // namespace shapeline
