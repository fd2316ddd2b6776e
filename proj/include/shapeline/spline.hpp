#pragma once

// Shape-constrained cubic spline on the dyadic grid.  Each knot j picks one of
// the one-sided pieces (or a blend of two) according to the signs of the local
// divided differences; the spline is the boundary cubic plus the weighted sum
// of the picked pieces.  A region decomposition of the far-from-inflection
// index runs drives the sign verifier.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "shapeline/divdiff.hpp"
#include "shapeline/periodic.hpp"
#include "shapeline/psi.hpp"

namespace shapeline::spline {

enum class Tag { D0, D1, D2, D3, D4a, D4b, D5 };

struct Selection {
  Tag tag = Tag::D0;
  double alpha = 1.0;       // weight of the nu=1 piece when tag == D3
  bool incomplete = false;  // comparison pattern matched none of the rules
  int owner = -1;           // inflection index that claimed j when D4a/D4b
  std::vector<std::pair<int, double>> parts;  // (nu, weight), weight != 0
};

struct Classified {
  Tag tag;
  double alpha;
  bool incomplete;
};

// Pure decision rule.  Fp, F0, Fm are the second differences at j+1, j, j-1;
// phi_pi is Phi_j multiplied by the inflection product at x_j.  The uncovered
// ordering |Fp| <= |F0| >= |Fm| (and a vanishing blend denominator) fall back
// to the middle-anchored piece.
inline Classified classify(double Fp, double F0, double Fm, double phi_pi) {
  if (phi_pi <= 0.0) return {Tag::D0, 1.0, false};
  double ap = std::abs(Fp), a0 = std::abs(F0), am = std::abs(Fm);
  if (ap > a0 && a0 >= am) return {Tag::D1, 1.0, false};
  if (ap <= a0 && a0 < am) return {Tag::D2, 1.0, false};
  if (ap > a0 && a0 < am) {
    double den = Fp + Fm;
    if (std::abs(den) <= 1e-12 * (ap + am)) return {Tag::D0, 1.0, true};
    return {Tag::D3, Fp / den, false};
  }
  return {Tag::D0, 1.0, true};
}

inline Selection select_psi(const core::DyadicGrid& g,
                            const core::NeighborhoodIndex& idx,
                            const core::InflectionSet& Y,
                            const core::DividedDifferenceTable& dd,
                            std::int64_t j) {
  Selection s;
  if (idx.in_H(j, 2)) {
    Classified c =
        classify(dd.F(j + 1), dd.F(j), dd.F(j - 1), dd.Phi(j) * Y.Pi(g.x(j)));
    s.tag = c.tag;
    s.alpha = c.alpha;
    s.incomplete = c.incomplete;
    switch (c.tag) {
      case Tag::D0:
        s.parts = {{2, 1.0}};
        break;
      case Tag::D1:
        s.parts = {{1, 1.0}};
        break;
      case Tag::D2:
        s.parts = {{3, 1.0}};
        break;
      case Tag::D3:
        s.parts = {{1, c.alpha}, {3, 1.0 - c.alpha}};
        break;
      default:
        break;
    }
  } else {
    auto owner = idx.owner_of(j, 2);
    if (!owner)
      throw std::logic_error("knot outside H_2 has no owning inflection point");
    s.owner = static_cast<int>(*owner);
    const double yrep = g.x(idx.j_of(*owner) + 5);
    auto Yt = Y.with_replaced(*owner, yrep);
    // Each product factor is 4pi-periodic in its point, so pulling the
    // replacement back into (-pi, pi] flips the product sign once per wrap.
    double r = core::reduce_angle(yrep);
    if (r == pi) r = -pi;
    const double orient = (r == yrep) ? 1.0 : -1.0;
    if (dd.Phi(j) * Yt.Pi(g.x(j)) * orient <= 0.0) {
      s.tag = Tag::D4a;
      s.parts = {{2, 1.0}};
    } else {
      s.tag = Tag::D4b;
      s.parts = {{1, 1.0}};
    }
  }
  return s;
}

// Interpolating spline with no shape constraints: boundary cubic plus the full
// knot cubics.  Reproduces any cubic exactly and interpolates f at each knot.
class TechnicalSpline {
 public:
  TechnicalSpline(std::function<double(double)> f, int n)
      : dd_(std::move(f), core::DyadicGrid(n), 8) {}

  const core::DividedDifferenceTable& dd() const { return dd_; }

  double value(double x) const {
    const core::DyadicGrid& g = dd_.grid();
    double xr = core::reduce_angle(x);
    double acc = dd_.local_cubic(g.n, xr);
    for (std::int64_t j = 3 - g.n; j <= g.n - 1; ++j)
      acc += 4.0 * g.h * dd_.Phi(j) * psi3(xr, g.x(j), g.h);
    return acc;
  }

  double operator()(double x) const { return value(x); }

 private:
  core::DividedDifferenceTable dd_;
};

class SplineModel {
 public:
  SplineModel(std::function<double(double)> f, const core::InflectionSet& Y,
              int n)
      : g_(n), Y_(Y), idx_(g_, Y_), dd_(std::move(f), g_, 8) {
    int need = core::min_n_for(Y_, 3);
    if (n < need)
      throw std::invalid_argument(
          "grid too coarse for the inflection set: n must be at least " +
          std::to_string(need));
    const std::int64_t lo = 3 - n, hi = n - 1;
    sel_.resize(static_cast<std::size_t>(hi - lo + 1));
    phi_.resize(sel_.size());
    for (std::int64_t j = lo; j <= hi; ++j) {
      Selection s = select_psi(g_, idx_, Y_, dd_, j);
      if (s.incomplete) incomplete_.push_back(j);
      if (s.tag == Tag::D3 && (s.alpha < 0.0 || s.alpha > 1.0))
        alpha_outside_.push_back(j);
      sel_[static_cast<std::size_t>(j - lo)] = std::move(s);
      phi_[static_cast<std::size_t>(j - lo)] = dd_.Phi(j);
    }
    pieces_.resize(static_cast<std::size_t>(2 * n - 1));  // k in [2-n, n]
    for (std::int64_t k = 2 - n; k <= n; ++k) {
      auto& slot = pieces_[static_cast<std::size_t>(k - (2 - n))];
      if (k == 2 - n) continue;  // identically zero boundary piece
      if (k == n) {
        slot.emplace_back(PsiPiece(g_, n, 1), 1.0);
        continue;
      }
      for (auto& [nu, w] : selection(k).parts)
        slot.emplace_back(PsiPiece(g_, k, nu), w);
    }
  }

  const core::DyadicGrid& grid() const { return g_; }
  const core::InflectionSet& inflections() const { return Y_; }
  const core::NeighborhoodIndex& index() const { return idx_; }
  const core::DividedDifferenceTable& dd() const { return dd_; }
  const std::vector<std::int64_t>& incomplete_knots() const {
    return incomplete_;
  }
  const std::vector<std::int64_t>& blend_weights_outside() const {
    return alpha_outside_;
  }

  const Selection& selection(std::int64_t j) const {
    return sel_.at(static_cast<std::size_t>(j - (3 - g_.n)));
  }

  // Selected combination at knot k, defined for k in [2-n, n] with the
  // boundary conventions (bottom identically zero, top the full knot cubic).
  double psiv(std::int64_t k, double x) const {
    double acc = 0.0;
    for (auto& [p, w] : slot(k))
      acc += w * p.value(x);
    return acc;
  }

  double psid1(std::int64_t k, double x, Side s = Side::plus) const {
    double acc = 0.0;
    for (auto& [p, w] : slot(k))
      acc += w * p.d1(x, s);
    return acc;
  }

  double psid2(std::int64_t k, double x, Side s = Side::plus) const {
    double acc = 0.0;
    for (auto& [p, w] : slot(k))
      acc += w * p.d2(x, s);
    return acc;
  }

  double value(double x) const {
    double xr = core::reduce_angle(x);
    double acc = dd_.local_cubic(g_.n, xr);
    for (std::int64_t j = 3 - g_.n; j <= g_.n - 1; ++j)
      acc += 4.0 * g_.h * phi(j) * psiv(j, xr);
    return acc;
  }

  double operator()(double x) const { return value(x); }

  double derivative(double x, Side s = Side::plus) const {
    double xr = core::reduce_angle(x);
    double acc = dd_.local_cubic_d1(g_.n, xr);
    for (std::int64_t j = 3 - g_.n; j <= g_.n - 1; ++j)
      acc += 4.0 * g_.h * phi(j) * psid1(j, xr, s);
    return acc;
  }

  double second(double x, Side s = Side::plus) const {
    double xr = core::reduce_angle(x);
    double acc = dd_.local_cubic_d2(g_.n, xr);
    for (std::int64_t j = 3 - g_.n; j <= g_.n - 1; ++j)
      acc += 4.0 * g_.h * phi(j) * psid2(j, xr, s);
    return acc;
  }

  // Alternative summation-by-parts form of the same spline; used as a
  // cross-check of the piecewise assembly.
  double value27(double x) const {
    double xr = core::reduce_angle(x);
    const std::int64_t n = g_.n;
    const double th = 3.0 * g_.h;
    double acc = dd_.boundary_linear(xr);
    acc += dd_.F(n) * ((xr - g_.x(n)) * (xr - g_.x(n - 1)) -
                       (psiv(n, xr) - psiv(n - 1, xr)) / th);
    for (std::int64_t j = 3 - n; j <= n - 1; ++j)
      acc += dd_.F(j) *
             (psiv(j + 1, xr) - 2.0 * psiv(j, xr) + psiv(j - 1, xr)) / th;
    acc += dd_.F(2 - n) * psiv(3 - n, xr) / th;
    return acc;
  }

  // Exact jump of S' at the knot x_k: pieces anchored there come from knots
  // k, k+1, k+2 with piece indices 1, 2, 3 respectively.
  double derivative_jump(std::int64_t k) const {
    double acc = 0.0;
    for (std::int64_t j = k; j <= k + 2; ++j) {
      if (j < 3 - g_.n || j > g_.n - 1) continue;
      int nu = static_cast<int>(j - k + 1);
      for (auto& [p, w] : slot(j))
        if (p.nu() == nu) acc += 4.0 * g_.h * phi(j) * w * p.hh();
    }
    return acc;
  }

  // Second derivative of the centred difference of selected pieces at knot j.
  double A2(std::int64_t j, double x, Side s = Side::plus) const {
    return (psid2(j + 1, x, s) - 2.0 * psid2(j, x, s) + psid2(j - 1, x, s)) /
           (3.0 * g_.h);
  }

 private:
  const std::vector<std::pair<PsiPiece, double>>& slot(std::int64_t k) const {
    return pieces_.at(static_cast<std::size_t>(k - (2 - g_.n)));
  }

  double phi(std::int64_t j) const {
    return phi_.at(static_cast<std::size_t>(j - (3 - g_.n)));
  }

  core::DyadicGrid g_;
  core::InflectionSet Y_;
  core::NeighborhoodIndex idx_;
  core::DividedDifferenceTable dd_;
  std::vector<Selection> sel_;
  std::vector<double> phi_;
  std::vector<std::vector<std::pair<PsiPiece, double>>> pieces_;
  std::vector<std::int64_t> incomplete_, alpha_outside_;
};

inline SplineModel build_spline(const core::PeriodicFunction& f,
                                const core::InflectionSet& Y, int n) {
  return SplineModel([f](double x) { return f(x); }, Y, n);
}

inline TechnicalSpline build_technical_spline(const core::PeriodicFunction& f,
                                              int n) {
  return TechnicalSpline([f](double x) { return f(x); }, n);
}

// One maximal run of consecutive H_3 indices, walked circularly.  members
// holds canonical representatives in [1-n, n] in run order; [lo, hi] is the
// contiguous union of the cells I_j over the run (hi = x(begin-1)), which may
// extend past -pi when the run wraps around the index seam.
struct Region {
  std::int64_t begin = 0;
  std::int64_t length = 0;
  std::vector<std::int64_t> members;
  double lo = 0.0, hi = 0.0;
  double sigma = 0.0;  // sign of the inflection product on the region
};

class RegionDecomposition {
 public:
  RegionDecomposition(const core::DyadicGrid& g,
                      const core::NeighborhoodIndex& idx,
                      const core::InflectionSet& Y)
      : g_(g) {
    const std::int64_t n = g.n, N = 2 * n;
    std::vector<char> flag(static_cast<std::size_t>(N));
    std::int64_t start = -1;
    for (std::int64_t t = 0; t < N; ++t) {
      flag[static_cast<std::size_t>(t)] = idx.in_H(1 - n + t, 3) ? 1 : 0;
      if (!flag[static_cast<std::size_t>(t)] && start < 0) start = t;
    }
    if (start < 0)
      throw std::logic_error("no excluded knots: inflection set is empty");
    std::int64_t t = start;
    while (t < start + N) {
      while (t < start + N && !flag[static_cast<std::size_t>(t % N)]) ++t;
      if (t >= start + N) break;
      Region r;
      std::int64_t first = t;
      while (t < start + N && flag[static_cast<std::size_t>(t % N)]) {
        r.members.push_back(1 - n + (t % N));
        ++t;
      }
      r.begin = 1 - n + (first % N);
      r.length = t - first;
      r.hi = g.x(r.begin - 1);
      r.lo = r.hi - static_cast<double>(r.length) * g.h;
      double mid = core::reduce_angle(0.5 * (r.lo + r.hi));
      r.sigma = Y.Pi(mid) >= 0.0 ? 1.0 : -1.0;
      regions_.push_back(std::move(r));
    }
  }

  const std::vector<Region>& regions() const { return regions_; }
  const core::DyadicGrid& grid() const { return g_; }

 private:
  core::DyadicGrid g_;
  std::vector<Region> regions_;
};

inline RegionDecomposition decompose_regions(const SplineModel& m) {
  return RegionDecomposition(m.grid(), m.index(), m.inflections());
}

struct VerifyOptions {
  int samples_per_cell = 48;
  double tol_rel = 1e-9;
};

struct SignReport {
  double scale = 0.0;  // max |S''| over the period
  std::size_t checked = 0, violations = 0;
  double worst = std::numeric_limits<double>::infinity();  // min S''*Pi/scale
  double worst_x = 0.0;
  std::size_t jump_checked = 0, jump_violations = 0;
  double worst_jump = std::numeric_limits<double>::infinity();
  double worst_jump_x = 0.0;
  std::size_t case_checked = 0, case_violations = 0;
  double worst_case = std::numeric_limits<double>::infinity();
  double worst_case_x = 0.0;
  std::size_t curvature_sign_violations = 0;   // Phi_j Pi(x_j) > 0 on a run
  std::size_t anchor_order_violations = 0;     // anchors not monotone in j
  std::size_t regions = 0;
  std::size_t skipped_boundary_knots = 0;

  bool ok() const { return violations == 0 && jump_violations == 0; }
};

inline SignReport verify_spline_shape(const SplineModel& m,
                                      VerifyOptions opt = {}) {
  const core::DyadicGrid& g = m.grid();
  const std::int64_t n = g.n;
  SignReport rep;

  double max_abs_phi = 0.0, max_abs_f = 0.0;
  for (std::int64_t j = 3 - n; j <= n - 1; ++j)
    max_abs_phi = std::max(max_abs_phi, std::abs(m.dd().Phi(j)));
  for (std::int64_t j = 2 - n; j <= n; ++j)
    max_abs_f = std::max(max_abs_f, std::abs(m.dd().F(j)));

  const int K = std::max(2, opt.samples_per_cell);
  for (std::int64_t j = 1 - n; j <= n; ++j) {
    double a = g.x(j), b = g.x(j - 1);
    rep.scale = std::max(rep.scale, std::abs(m.second(a, Side::plus)));
    rep.scale = std::max(rep.scale, std::abs(m.second(b, Side::minus)));
    for (int t = 1; t < K; ++t) {
      double x = a + (b - a) * t / K;
      rep.scale = std::max(rep.scale, std::abs(m.second(x)));
    }
  }

  const double tol = opt.tol_rel * rep.scale;
  auto check_point = [&](double x, Side s) {
    double v = m.second(x, s) * m.inflections().Pi(x);
    ++rep.checked;
    if (v < -tol) ++rep.violations;
    if (rep.scale > 0.0 && v / rep.scale < rep.worst) {
      rep.worst = v / rep.scale;
      rep.worst_x = x;
    }
  };
  for (std::int64_t j = 1 - n; j <= n; ++j) {
    if (!m.index().in_H(j, 3)) continue;
    double a = g.x(j), b = g.x(j - 1);
    check_point(a, Side::plus);
    check_point(b, Side::minus);
    for (int t = 1; t < K; ++t)
      check_point(a + (b - a) * t / K, Side::plus);
  }

  RegionDecomposition regions(g, m.index(), m.inflections());
  rep.regions = regions.regions().size();
  double jump_scale = std::max(24.0 * g.h * g.h * g.h * max_abs_phi, 1e-30);
  double case_scale = std::max(6.0 * max_abs_f, 1e-30);

  for (const Region& r : regions.regions()) {
    std::set<std::int64_t> anchor_knots;
    for (std::int64_t j : r.members) {
      if (j < 3 - n || j > n - 1) {
        ++rep.skipped_boundary_knots;
        continue;
      }
      for (auto& [nu, w] : m.selection(j).parts)
        if (w != 0.0) anchor_knots.insert(j - (nu - 1));
    }
    for (std::int64_t k : anchor_knots) {
      double jump = r.sigma * m.derivative_jump(k);
      ++rep.jump_checked;
      if (jump < -opt.tol_rel * jump_scale) ++rep.jump_violations;
      if (jump / jump_scale < rep.worst_jump) {
        rep.worst_jump = jump / jump_scale;
        rep.worst_jump_x = g.x(k);
      }
    }

    for (std::size_t t = 0; t < r.members.size(); ++t) {
      std::int64_t j = r.members[t];
      if (j < 3 - n || j > n - 1) continue;

      double phipi = m.dd().Phi(j) * m.inflections().Pi(g.x(j));
      if (phipi > opt.tol_rel * max_abs_phi) ++rep.curvature_sign_violations;

      if (t > 0 && r.members[t - 1] == j - 1 && j - 1 >= 3 - n) {
        auto max_nu = [&](std::int64_t jj) {
          int v = 1;
          for (auto& [nu, w] : m.selection(jj).parts)
            if (w != 0.0) v = std::max(v, nu);
          return v;
        };
        auto min_nu = [&](std::int64_t jj) {
          int v = 3;
          for (auto& [nu, w] : m.selection(jj).parts)
            if (w != 0.0) v = std::min(v, nu);
          return v;
        };
        if (max_nu(j) > min_nu(j - 1) + 1) ++rep.anchor_order_violations;
      }

      // Local four-term curvature block on the case bracket.
      const Selection& sel = m.selection(j);
      double a1 = g.x(j), a2 = a1 + g.h, a3 = a1 + 2.0 * g.h;
      double blo, bhi;
      switch (sel.tag) {
        case Tag::D1:
          blo = a1, bhi = a2;
          break;
        case Tag::D2:
          blo = a2, bhi = a3;
          break;
        default:
          blo = a1, bhi = a3;
          break;
      }
      double Fp = m.dd().F(j + 1), F0 = m.dd().F(j), Fm = m.dd().F(j - 1);
      for (int q = 1; q <= K; ++q) {
        double x = blo + (bhi - blo) * q / K;
        Side s = (q == K) ? Side::minus : Side::plus;
        double ab = (m.psid2(j + 1, x, s) - m.psid2(j, x, s)) / (3.0 * g.h);
        double au = (m.psid2(j, x, s) - m.psid2(j - 1, x, s)) / (3.0 * g.h);
        double v = r.sigma *
                   (2.0 * Fp - Fp * ab + F0 * ab - F0 * au + Fm * au);
        ++rep.case_checked;
        if (v < -opt.tol_rel * case_scale) ++rep.case_violations;
        if (v / case_scale < rep.worst_case) {
          rep.worst_case = v / case_scale;
          rep.worst_case_x = x;
        }
      }
    }
  }
  return rep;
}

inline void verify_or_throw(const SplineModel& m, VerifyOptions opt = {}) {
  SignReport rep = verify_spline_shape(m, opt);
  if (!rep.ok()) {
    std::string msg = "spline curvature sign check failed: ";
    if (rep.violations > 0)
      msg += std::to_string(rep.violations) + " sample violations, worst " +
             std::to_string(rep.worst) + " at x=" + std::to_string(rep.worst_x);
    else
      msg += std::to_string(rep.jump_violations) +
             " derivative jump violations, worst " +
             std::to_string(rep.worst_jump) +
             " at x=" + std::to_string(rep.worst_jump_x);
    throw SignViolation(msg);
  }
}

}  // namespace shapeline::spline
