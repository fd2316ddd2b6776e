#pragma once

// Jackson-kernel machinery.  A sharply peaked even power of
// sin(n u/2)/sin(u/2) with bumps at two neighbouring knots is integrated
// against the sine product and normalized, giving smooth step-like objects
// t_j; integrating those again gives ramp-like tau_j.  A reference family
// built with no inflection points, plus one correction object per
// inflection point, yields the corrected families that interpolate the
// exact step/ramp data at every inflection point.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "shapeline/periodic.hpp"
#include "shapeline/table.hpp"
#include "shapeline/threads.hpp"

namespace shapeline::kernels {

using core::DriftPoly;
using core::DyadicGrid;
using core::InflectionSet;
using core::NeighborhoodIndex;
using core::StructuredTable;

struct KernelParams {
  int b = 3;                   // half exponent; the kernel power is 2b
  int samples_per_cell = 256;  // quadrature nodes per grid cell
  int bbar() const { return b + 3; }  // exponent of the reference family
};

inline double ipow(double v, int p) {
  double r = 1.0;
  while (p > 0) {
    if (p & 1) r *= v;
    v *= v;
    p >>= 1;
  }
  return r;
}

// (sin(n u/2)/sin(u/2))^{2b}; removable singularities at u = 2 pi k.
inline double bump_pow(int n, double u, int b) {
  double s = std::sin(0.5 * u);
  if (std::abs(s) < 1e-12) return ipow(static_cast<double>(n), 2 * b);
  return ipow(std::sin(0.5 * n * u) / s, 2 * b);
}

// Kernel with bumps anchored at x(j) and x(j-1).
inline double J(const DyadicGrid& g, std::int64_t j, int b, double x) {
  return bump_pow(g.n, x - g.x(j), b) + bump_pow(g.n, x - g.x(j - 1), b);
}

// Representative of x in the half-open window (c-pi, c+pi].
inline double window_rep(double c, double x) {
  return x - two_pi * std::ceil((x - (c + pi)) / two_pi);
}

// Normalized cumulative of J*Pi over the window centred at x(j), held with
// two levels of prefix integrals (both based at x(j)-pi).
struct CumulativeTable {
  std::int64_t j = 0;
  double xj = 0.0;
  int b = 0;
  double denom = 0.0;  // window integral of J*Pi
  DyadicGrid g;
  InflectionSet Y;
  StructuredTable val, pfx, pfx2;

  double value(double x) const { return val(x); }
  double prefix(double x) const { return pfx(x); }
  double prefix2(double x) const { return pfx2(x); }
  double derivative(double x) const {
    return J(g, j, b, x) * Y.Pi(x) / denom;
  }
};

inline CumulativeTable build_cumulative(const DyadicGrid& g,
                                        const InflectionSet& Y,
                                        std::int64_t j,
                                        const KernelParams& kp) {
  CumulativeTable out;
  out.j = j;
  out.xj = g.x(j);
  out.b = kp.b;
  out.g = g;
  out.Y = Y;
  std::int64_t N = static_cast<std::int64_t>(kp.samples_per_cell) * g.n;
  if (N % 2 != 0) ++N;
  const double a = out.xj - pi;
  const double step = two_pi / static_cast<double>(N);
  std::vector<double> q(static_cast<std::size_t>(N) + 1);
  core::parallel_for(0, N + 1, [&](std::int64_t i) {
    double x = a + step * static_cast<double>(i);
    q[static_cast<std::size_t>(i)] = J(g, j, kp.b, x) * Y.Pi(x);
  });
  q.back() = q.front();  // periodic integrand; make the seam exact
  std::vector<double> P = core::cumulative_nodes(q, step);
  out.denom = P.back();
  double mass = 0.0;
  for (double v : q) mass += std::abs(v);
  mass *= step;
  if (std::abs(out.denom) < 1e-8 * std::max(mass, 1e-300))
    throw DegenerateDenominator(
        "window integral of the weighted kernel nearly cancels at j=" +
        std::to_string(j));
  std::vector<double> tv(P.size());
  for (std::size_t i = 0; i < P.size(); ++i) tv[i] = P[i] / out.denom;
  DriftPoly lin = DriftPoly::linear(-a / two_pi, 1.0 / two_pi);
  out.val = StructuredTable(out.xj, lin, tv, 1e-8);
  out.pfx = out.val.prefix_integral();
  out.pfx2 = out.pfx.prefix_integral();
  return out;
}

// Reference family: no inflection points, exponent bbar, translation
// invariant, so one table centred at x(0)=0 serves every shift.
struct SmoothBase {
  DyadicGrid g;
  CumulativeTable t0;
  StructuredTable p3;  // third prefix of the base step

  static SmoothBase build(const DyadicGrid& g, const KernelParams& kp) {
    KernelParams ref = kp;
    ref.b = kp.bbar();
    SmoothBase out{g, build_cumulative(g, InflectionSet{}, 0, ref), {}};
    out.p3 = out.t0.pfx2.prefix_integral();
    return out;
  }

  double value(std::int64_t j, double x) const { return t0.value(x - g.x(j)); }
  double prefix(std::int64_t j, double x) const {  // from x(j)-pi
    return t0.prefix(x - g.x(j));
  }
  double prefix2(std::int64_t j, double x) const {
    return t0.prefix2(x - g.x(j));
  }
  double prefix3(std::int64_t j, double x) const {
    return p3(x - g.x(j));
  }
  double derivative(std::int64_t j, double x) const {
    return t0.derivative(x - g.x(j));
  }
};

// Everything attached to one inflection point: the displaced point set used
// for the sign transfer, the two-point reduced set, the auxiliary
// cumulative built on it, and the correction object with its prefixes.
struct PointCorrection {
  std::int64_t ji = 0;
  double y = 0.0;
  double ystar = 0.0;
  InflectionSet Ystar;
  InflectionSet Ybreve;
  CumulativeTable tbreve;
  StructuredTable that, thatP, thatPP;
  double pi_at_xj = 0.0;  // Pi(x(ji), Ystar)
  double divisor = 0.0;   // that(y)
};

struct InflectionCorrections {
  DyadicGrid g;
  KernelParams kp;
  InflectionSet Y;
  NeighborhoodIndex idx;
  SmoothBase smooth;
  std::vector<PointCorrection> pts;

  static InflectionCorrections build(const DyadicGrid& g,
                                     const InflectionSet& Y,
                                     const KernelParams& kp) {
    InflectionCorrections out{g, kp, Y, NeighborhoodIndex(g, Y),
                              SmoothBase::build(g, kp), {}};
    KernelParams ref = kp;
    ref.b = kp.bbar();
    for (std::size_t i = 0; i < Y.size(); ++i) {
      PointCorrection pc;
      pc.ji = out.idx.j_of(i);
      pc.y = Y.points()[i];
      // Displace y_i to the far edge of its tier-20 window, alternating
      // sides so the sign transfer keeps the right orientation.
      pc.ystar = (i % 2 == 0) ? g.x(pc.ji + 21) : g.x(pc.ji - 20);
      pc.Ystar = Y.with_replaced(i, pc.ystar);
      pc.Ybreve = InflectionSet::from_points({pc.y, pc.y - pi});
      pc.tbreve = build_cumulative(g, pc.Ybreve, pc.ji - 10, ref);
      pc.pi_at_xj = pc.Ystar.Pi(g.x(pc.ji));
      if (std::abs(pc.pi_at_xj) < 1e-12)
        throw DegenerateDenominator("sign-transfer factor vanishes at knot");

      const double center = g.x(pc.ji);
      std::int64_t N = static_cast<std::int64_t>(kp.samples_per_cell) * g.n;
      if (N % 2 != 0) ++N;
      const double a = center - pi;
      const double step = two_pi / static_cast<double>(N);
      std::vector<double> v(static_cast<std::size_t>(N) + 1);
      core::parallel_for(0, N + 1, [&](std::int64_t q) {
        double x = a + step * static_cast<double>(q);
        double diff = out.smooth.value(pc.ji + 10, x) - pc.tbreve.value(x);
        v[static_cast<std::size_t>(q)] =
            diff * pc.Ystar.Pi(x) / pc.pi_at_xj;
      });
      pc.that = StructuredTable(center, DriftPoly{}, v, 1e-6);
      pc.thatP = pc.that.prefix_integral();
      pc.thatPP = pc.thatP.prefix_integral();
      pc.divisor = pc.that(pc.y);
      if (std::abs(pc.divisor) < 1e-12)
        throw DivisorTooSmall("correction object vanishes at its own point");
      out.pts.push_back(std::move(pc));
    }
    return out;
  }

  // Analytic derivative of the correction object i at x.
  double that_derivative(std::size_t i, double x) const {
    const PointCorrection& pc = pts[i];
    double diff = smooth.value(pc.ji + 10, x) - pc.tbreve.value(x);
    double ddiff = smooth.derivative(pc.ji + 10, x) - pc.tbreve.derivative(x);
    return (ddiff * pc.Ystar.Pi(x) + diff * pc.Ystar.Pi_derivative(x)) /
           pc.pi_at_xj;
  }
};

// Corrected families built on the reference family plus the corrections:
// value/prefix evaluation of t~ and tau~ with per-knot coefficient vectors.
struct CorrectedFamily {
  const InflectionCorrections* corr = nullptr;
  double alpha = 0.5;
  double Iplus = 0.0, Iminus = 0.0;

  explicit CorrectedFamily(const InflectionCorrections& c) : corr(&c) {
    const double sh = 10.0 * c.g.h;
    const CumulativeTable& t0 = c.smooth.t0;
    Iplus = t0.prefix(pi + sh) - t0.prefix(-pi + sh);
    Iminus = t0.prefix(pi - sh) - t0.prefix(-pi - sh);
    double lever = Iplus - Iminus;
    if (std::abs(lever) < 1e-12)
      throw DegenerateDenominator("two-sided ramp lever vanished");
    alpha = (pi - Iminus) / lever;
    if (alpha < -1e-6 || alpha > 1.0 + 1e-6)
      throw AlphaOutOfRange("ramp mixing weight " + std::to_string(alpha));
  }

  const DyadicGrid& grid() const { return corr->g; }

  // Uncorrected two-sided ramp of the reference family; 0 at x(j)-pi and
  // exactly pi at x(j)+pi by the choice of alpha.
  double tau_smooth(std::int64_t j, double x) const {
    const CumulativeTable& t0 = corr->smooth.t0;
    const double sh = 10.0 * grid().h;
    double w = x - grid().x(j);
    return alpha * (t0.prefix(w + sh) - t0.prefix(-pi + sh)) +
           (1.0 - alpha) * (t0.prefix(w - sh) - t0.prefix(-pi - sh));
  }

  // Integral of tau_smooth(j, .) from base to x.
  double tau_smooth_prefix(std::int64_t j, double base, double x) const {
    const CumulativeTable& t0 = corr->smooth.t0;
    const double sh = 10.0 * grid().h;
    double w = x - grid().x(j), wb = base - grid().x(j);
    double up = t0.prefix2(w + sh) - t0.prefix2(wb + sh) -
                t0.prefix(-pi + sh) * (x - base);
    double dn = t0.prefix2(w - sh) - t0.prefix2(wb - sh) -
                t0.prefix(-pi - sh) * (x - base);
    return alpha * up + (1.0 - alpha) * dn;
  }

  // Interpolation coefficients: the corrected step must hit the windowed
  // step data chi_j at every inflection point.
  std::vector<double> step_coefficients(std::int64_t j) const {
    std::vector<double> out(corr->pts.size());
    double xj = grid().x(j);
    for (std::size_t i = 0; i < corr->pts.size(); ++i) {
      const PointCorrection& pc = corr->pts[i];
      double yr = window_rep(xj, pc.y);
      double target = yr > xj ? 1.0 : 0.0;
      out[i] = (target - corr->smooth.value(j, yr)) / pc.divisor;
    }
    return out;
  }

  // Same for the ramp: target (y - x_j)_+ in window coordinates.
  std::vector<double> ramp_coefficients(std::int64_t j) const {
    std::vector<double> out(corr->pts.size());
    double xj = grid().x(j);
    for (std::size_t i = 0; i < corr->pts.size(); ++i) {
      const PointCorrection& pc = corr->pts[i];
      double yr = window_rep(xj, pc.y);
      double target = yr > xj ? yr - xj : 0.0;
      out[i] = (target - tau_smooth(j, yr)) / pc.divisor;
    }
    return out;
  }

  double t_corrected(std::int64_t j, double x,
                     const std::vector<double>& cs) const {
    double v = corr->smooth.value(j, x);
    for (std::size_t i = 0; i < cs.size(); ++i)
      v += cs[i] * corr->pts[i].that(x);
    return v;
  }

  double t_corrected_prefix(std::int64_t j, double base, double x,
                            const std::vector<double>& cs) const {
    double v = corr->smooth.prefix(j, x) - corr->smooth.prefix(j, base);
    for (std::size_t i = 0; i < cs.size(); ++i)
      v += cs[i] * (corr->pts[i].thatP(x) - corr->pts[i].thatP(base));
    return v;
  }

  double tau_corrected(std::int64_t j, double x,
                       const std::vector<double>& cs) const {
    double v = tau_smooth(j, x);
    for (std::size_t i = 0; i < cs.size(); ++i)
      v += cs[i] * corr->pts[i].that(x);
    return v;
  }

  double tau_corrected_prefix(std::int64_t j, double base, double x,
                              const std::vector<double>& cs) const {
    double v = tau_smooth_prefix(j, base, x);
    for (std::size_t i = 0; i < cs.size(); ++i)
      v += cs[i] * (corr->pts[i].thatP(x) - corr->pts[i].thatP(base));
    return v;
  }

  // Iterated integral of tau_smooth(j, .): from base to x of its own
  // prefix from base.
  double tau_smooth_prefix2(std::int64_t j, double base, double x) const {
    const SmoothBase& sb = corr->smooth;
    const CumulativeTable& t0 = sb.t0;
    const double sh = 10.0 * grid().h;
    double w = x - grid().x(j), wb = base - grid().x(j);
    double span = x - base;
    double up = sb.p3(w + sh) - sb.p3(wb + sh) - t0.prefix2(wb + sh) * span -
                t0.prefix(-pi + sh) * 0.5 * span * span;
    double dn = sb.p3(w - sh) - sb.p3(wb - sh) - t0.prefix2(wb - sh) * span -
                t0.prefix(-pi - sh) * 0.5 * span * span;
    return alpha * up + (1.0 - alpha) * dn;
  }

  double t_corrected_prefix2(std::int64_t j, double base, double x,
                             const std::vector<double>& cs) const {
    const SmoothBase& sb = corr->smooth;
    double span = x - base;
    double v =
        sb.prefix2(j, x) - sb.prefix2(j, base) - sb.prefix(j, base) * span;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const PointCorrection& pc = corr->pts[i];
      v += cs[i] * (pc.thatPP(x) - pc.thatPP(base) - pc.thatP(base) * span);
    }
    return v;
  }

  double tau_corrected_prefix2(std::int64_t j, double base, double x,
                               const std::vector<double>& cs) const {
    double span = x - base;
    double v = tau_smooth_prefix2(j, base, x);
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const PointCorrection& pc = corr->pts[i];
      v += cs[i] * (pc.thatPP(x) - pc.thatPP(base) - pc.thatP(base) * span);
    }
    return v;
  }
};

// Plain single-level family with its two-sided ramps; tables are built on
// demand and cached per knot.
struct PlainFamily {
  DyadicGrid g;
  InflectionSet Y;
  KernelParams kp;
  std::map<std::int64_t, CumulativeTable> cache;

  PlainFamily(const DyadicGrid& g_, const InflectionSet& Y_,
              const KernelParams& kp_)
      : g(g_), Y(Y_), kp(kp_) {}

  const CumulativeTable& t(std::int64_t j) {
    auto it = cache.find(j);
    if (it == cache.end())
      it = cache.emplace(j, build_cumulative(g, Y, j, kp)).first;
    return it->second;
  }

  // alpha solved from tau_j(x_j + pi) = pi.
  double tau_alpha(std::int64_t j, bool validate = true) {
    const CumulativeTable& up = t(j + 10);
    const CumulativeTable& dn = t(j - 10);
    double xj = g.x(j);
    double Ip = up.prefix(xj + pi) - up.prefix(xj - pi);
    double Im = dn.prefix(xj + pi) - dn.prefix(xj - pi);
    double lever = Ip - Im;
    if (std::abs(lever) < 1e-12)
      throw DegenerateDenominator("two-sided ramp lever vanished");
    double a = (pi - Im) / lever;
    if (validate && (a < -1e-6 || a > 1.0 + 1e-6))
      throw AlphaOutOfRange("ramp mixing weight " + std::to_string(a) +
                            " at j=" + std::to_string(j));
    return a;
  }

  double tau(std::int64_t j, double x, bool validate = true) {
    double a = tau_alpha(j, validate);
    const CumulativeTable& up = t(j + 10);
    const CumulativeTable& dn = t(j - 10);
    double base = g.x(j) - pi;
    return a * (up.prefix(x) - up.prefix(base)) +
           (1.0 - a) * (dn.prefix(x) - dn.prefix(base));
  }
};

// Pointwise structure scan of one plain cumulative: the signed derivative
// product that must stay nonnegative, and the three envelope ratios
// reported as fitted constants.
struct StructureScan {
  double min_signed = std::numeric_limits<double>::infinity();
  double scale = 0.0;  // max |t'| seen
  double c_step = 0.0;      // |chi - t| against gamma^{2b-2s-1}
  double c_deriv_hi = 0.0;  // h|t'| against gamma^{2b-2s}
  double c_deriv_lo = std::numeric_limits<double>::infinity();
  // h|t'| against gamma^{2b+2s}, off the tier-10 windows
};

inline StructureScan scan_structure(const CumulativeTable& ct,
                                    const NeighborhoodIndex& idx,
                                    int samples = 4096) {
  StructureScan out;
  const DyadicGrid& g = ct.g;
  const auto s2 = static_cast<int>(ct.Y.size());
  double pixj = ct.Y.Pi(g.x(ct.j));
  for (int q = 0; q <= samples; ++q) {
    double x = ct.xj - pi + two_pi * static_cast<double>(q) / samples;
    double d = ct.derivative(x);
    double gamma = core::gamma_weight(g, ct.j, x);
    out.scale = std::max(out.scale, std::abs(d));
    out.min_signed = std::min(out.min_signed, d * ct.Y.Pi(x) * pixj);
    double step_gap = std::abs(core::chi(x, ct.xj) - ct.value(x));
    out.c_step = std::max(out.c_step,
                          step_gap / ipow(gamma, 2 * ct.b - s2 - 1));
    out.c_deriv_hi =
        std::max(out.c_deriv_hi,
                 g.h * std::abs(d) / ipow(gamma, 2 * ct.b - s2));
    bool off = true;
    for (std::size_t i = 0; i < ct.Y.size(); ++i) {
      auto [lo, hi] = idx.window(i, 10);
      for (int k = -1; k <= 1; ++k) {
        double xs = x + two_pi * k;
        if (xs > lo && xs < hi) off = false;
      }
    }
    if (off)
      out.c_deriv_lo =
          std::min(out.c_deriv_lo,
                   g.h * std::abs(d) / ipow(gamma, 2 * ct.b + s2));
  }
  return out;
}

}  // namespace shapeline::kernels
