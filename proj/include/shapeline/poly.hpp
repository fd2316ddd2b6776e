#pragma once
// Smooth counterpart of the one-sided cubic layer.  Each selected piece gets
// an integral function psi built from kernel families on two refined grids
// (n1 = 2*m1*n with exponent b1, n2 = 2*m2*n1 with exponent b2); the full
// approximant adds 4h*Phi_j*psi_j over a complete period of knots on top of
// the local cubic at the top knot, which makes the sum exactly 2pi-periodic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "kernels.hpp"
#include "modulus.hpp"
#include "spline.hpp"

namespace shapeline::poly {

using shapeline::pi;
using shapeline::two_pi;

struct LevelConfig {
  std::int64_t n = 16;
  int m1 = 2;   // first refinement multiplier
  int m2 = 4;   // second refinement multiplier
  int spc1 = 128;  // quadrature nodes per cell at level n1
  int spc2 = 64;   // quadrature nodes per cell at level n2

  void validate() const {
    if (n < 1) throw std::invalid_argument("n must be positive");
    if (m1 < 2 || m2 < 2)
      throw std::invalid_argument("level multipliers must be at least 2");
    if (m1 * m2 < 6)
      throw std::invalid_argument("combined refinement m1*m2 must be at least 6");
  }

  std::int64_t n1() const { return 2 * static_cast<std::int64_t>(m1) * n; }
  std::int64_t n2() const { return 2 * static_cast<std::int64_t>(m2) * n1(); }
  double h() const { return pi / static_cast<double>(n); }
  double h1() const { return pi / static_cast<double>(n1()); }
  double h2() const { return pi / static_cast<double>(n2()); }

  // Kernel exponents from the number of inflection points (2s of them).
  int b1(std::size_t points) const { return static_cast<int>(points / 2) + 2; }
  int b2(std::size_t points) const {
    return 3 * (static_cast<int>(points / 2) + 1);
  }

  // Level-n1 index of the anchor a_nu = d_j + (nu-2)h, and the level-n2
  // index of the same point.  n1 is a multiple of 2n, so anchors are knots.
  std::int64_t j_nu(std::int64_t j, int nu) const {
    return 2 * static_cast<std::int64_t>(m1) * (j - nu + 1);
  }
  std::int64_t j_star(std::int64_t k) const {
    return 2 * static_cast<std::int64_t>(m2) * k;
  }
};

struct ClampEvent {
  std::int64_t j = 0;
  int nu = 0;
  std::string parameter;  // "alpha" or "beta"
  double solved = 0.0;    // value before clamping
};

// Kernel tables for one effective inflection set, shared by every piece that
// uses that set.  Holds raw pointers into itself (CorrectedFamily), so it
// lives on the heap and never moves.
struct FamilyBundle {
  core::DyadicGrid g1, g2;
  kernels::InflectionCorrections corr2;
  kernels::CorrectedFamily fam2;
  kernels::PlainFamily plain2, plain1;

  FamilyBundle(const core::InflectionSet& Yeff, const LevelConfig& lc)
      : g1(static_cast<int>(lc.n1())),
        g2(static_cast<int>(lc.n2())),
        corr2(kernels::InflectionCorrections::build(
            g2, Yeff,
            kernels::KernelParams{lc.b2(Yeff.size()), lc.spc2})),
        fam2(corr2),
        plain2(g2, Yeff, kernels::KernelParams{lc.b2(Yeff.size()), lc.spc2}),
        plain1(g1, Yeff, kernels::KernelParams{lc.b1(Yeff.size()), lc.spc1}) {}

  FamilyBundle(const FamilyBundle&) = delete;
  FamilyBundle& operator=(const FamilyBundle&) = delete;
};

// Endpoint values the normalization solves must reach at x = d_j + pi.
inline double phi_target(int nu, double h) {
  if (nu == 2) return 3.0 * pi * pi - 0.5 * h * h;
  return 3.0 * (pi * pi - h * h);
}
inline double psi_target(double h) { return pi * (pi * pi - h * h); }

// One smooth piece: phi is 6 times the running integral of a corrected ramp
// plus weighted corrected steps (nu = 1, 3) or minus h^2/12 times averaged
// step derivatives with a solved bump coefficient (nu = 2); psi integrates
// phi once more and adds the three-kernel smoothing block weighted by hh.
struct PhiPsi {
  std::int64_t j = 0;
  int nu = 2;
  double weight = 1.0;
  double h = 0.0, dj = 0.0, base = 0.0;
  double ht = 0.0, hh = 0.0;
  std::int64_t jn = 0, jns = 0, jp = 0, jm = 0, j5p = 0, j5m = 0;
  const kernels::CorrectedFamily* fam = nullptr;
  const kernels::CumulativeTable* tp = nullptr;
  const kernels::CumulativeTable* tm = nullptr;
  const kernels::CumulativeTable* tmid = nullptr;
  const kernels::CumulativeTable* t5p = nullptr;
  const kernels::CumulativeTable* t5m = nullptr;
  std::vector<double> ramp_c, step_p, step_m;
  double alpha = 0.5, gamma2 = 0.0, beta = 0.5;

  double phi(double x) const {
    if (nu == 2) {
      double v = fam->tau_corrected_prefix(jns, base, x, ramp_c);
      v -= h * h / 24.0 *
           ((t5p->value(x) - t5p->value(base)) +
            (t5m->value(x) - t5m->value(base)));
      v += gamma2 * ((t5p->prefix(x) - t5p->prefix(base)) -
                     (t5m->prefix(x) - t5m->prefix(base)));
      return 6.0 * v;
    }
    double v = fam->tau_corrected_prefix(jns, base, x, ramp_c) +
               ht * (alpha * fam->t_corrected_prefix(jp, base, x, step_p) +
                     (1.0 - alpha) *
                         fam->t_corrected_prefix(jm, base, x, step_m));
    return 6.0 * v;
  }

  double phi_d(double x) const {
    if (nu == 2) {
      double v = fam->tau_corrected(jns, x, ramp_c);
      v -= h * h / 24.0 * (t5p->derivative(x) + t5m->derivative(x));
      v += gamma2 * (t5p->value(x) - t5m->value(x));
      return 6.0 * v;
    }
    return 6.0 * (fam->tau_corrected(jns, x, ramp_c) +
                  ht * (alpha * fam->t_corrected(jp, x, step_p) +
                        (1.0 - alpha) * fam->t_corrected(jm, x, step_m)));
  }

  double phi_prefix(double x) const {
    double span = x - base;
    if (nu == 2) {
      double v = fam->tau_corrected_prefix2(jns, base, x, ramp_c);
      v -= h * h / 24.0 *
           ((t5p->prefix(x) - t5p->prefix(base) - t5p->value(base) * span) +
            (t5m->prefix(x) - t5m->prefix(base) - t5m->value(base) * span));
      v += gamma2 *
           ((t5p->prefix2(x) - t5p->prefix2(base) - t5p->prefix(base) * span) -
            (t5m->prefix2(x) - t5m->prefix2(base) - t5m->prefix(base) * span));
      return 6.0 * v;
    }
    double v =
        fam->tau_corrected_prefix2(jns, base, x, ramp_c) +
        ht * (alpha * fam->t_corrected_prefix2(jp, base, x, step_p) +
              (1.0 - alpha) * fam->t_corrected_prefix2(jm, base, x, step_m));
    return 6.0 * v;
  }

  double psi(double x) const {
    double block = beta * (tp->prefix(x) - tp->prefix(base)) +
                   (tmid->prefix(x) - tmid->prefix(base)) +
                   (1.0 - beta) * (tm->prefix(x) - tm->prefix(base));
    return phi_prefix(x) + hh * block;
  }

  double psi_d1(double x) const {
    double block = beta * tp->value(x) + tmid->value(x) +
                   (1.0 - beta) * tm->value(x);
    return phi(x) + hh * block;
  }

  double psi_d2(double x) const {
    double block = beta * tp->derivative(x) + tmid->derivative(x) +
                   (1.0 - beta) * tm->derivative(x);
    return phi_d(x) + hh * block;
  }
};

namespace detail {
inline double clamp01(double v, std::int64_t j, int nu, const char* which,
                      std::vector<ClampEvent>* log) {
  if (v >= 0.0 && v <= 1.0) return v;
  if (v >= -1e-9 && v <= 1.0 + 1e-9)  // roundoff, not a containment failure
    return std::clamp(v, 0.0, 1.0);
  if (log) log->push_back({j, nu, which, v});
  return std::clamp(v, 0.0, 1.0);
}
}  // namespace detail

inline PhiPsi make_phi_psi(FamilyBundle& fb, const LevelConfig& lc,
                           std::int64_t j, int nu,
                           std::vector<ClampEvent>* clamp_log = nullptr) {
  if (nu < 1 || nu > 3)
    throw std::invalid_argument("piece index must be 1..3");
  PhiPsi p;
  p.j = j;
  p.nu = nu;
  p.fam = &fb.fam2;
  p.h = lc.h();
  p.dj = -static_cast<double>(j - 1) * p.h;
  p.base = p.dj - pi;
  p.ht = (nu == 1) ? -p.h : (nu == 3) ? p.h : 0.0;
  p.hh = (nu == 2) ? -0.25 * p.h * p.h : p.h * p.h;
  p.jn = lc.j_nu(j, nu);
  p.jns = lc.j_star(p.jn);
  p.jp = lc.j_star(p.jn + 1);
  p.jm = lc.j_star(p.jn - 1);
  p.ramp_c = fb.fam2.ramp_coefficients(p.jns);
  if (nu == 2) {
    p.j5p = lc.j_star(p.jn + 5);
    p.j5m = lc.j_star(p.jn - 5);
    p.t5p = &fb.plain2.t(p.j5p);
    p.t5m = &fb.plain2.t(p.j5m);
  } else {
    p.step_p = fb.fam2.step_coefficients(p.jp);
    p.step_m = fb.fam2.step_coefficients(p.jm);
  }
  p.tp = &fb.plain2.t(p.jp);
  p.tm = &fb.plain2.t(p.jm);
  p.tmid = &fb.plain1.t(p.jn);

  const double end = p.dj + pi;
  if (nu == 2) {
    // The derivative block integrates to exactly 1 over any full window, so
    // the endpoint is tuned by the bump coefficient on t5p - t5m instead.
    double a0 = p.phi(end);
    double lever = 6.0 * ((p.t5p->prefix(end) - p.t5p->prefix(p.base)) -
                          (p.t5m->prefix(end) - p.t5m->prefix(p.base)));
    if (std::abs(lever) < 1e-9)
      throw DegenerateDenominator("stepped-pair lever vanished at j=" +
                                  std::to_string(j));
    p.gamma2 = (phi_target(2, p.h) - a0) / lever;
  } else {
    p.alpha = 0.0;
    double a0 = p.phi(end);
    p.alpha = 1.0;
    double a1 = p.phi(end);
    double lever = a1 - a0;
    if (std::abs(lever) < 1e-12 * std::max(1.0, std::abs(a0)))
      throw DegenerateDenominator("corrected-step lever vanished at j=" +
                                  std::to_string(j));
    p.alpha = detail::clamp01((phi_target(nu, p.h) - a0) / lever, j, nu,
                              "alpha", clamp_log);
  }
  {
    p.beta = 0.0;
    double b0 = p.psi(end);
    p.beta = 1.0;
    double b1 = p.psi(end);
    double lever = b1 - b0;
    if (std::abs(lever) < 1e-12 * std::max(1.0, std::abs(b0)))
      throw DegenerateDenominator("smoothing lever vanished at j=" +
                                  std::to_string(j));
    p.beta = detail::clamp01((psi_target(p.h) - b0) / lever, j, nu, "beta",
                             clamp_log);
  }
  return p;
}

// Trigonometric-class approximant: the local cubic anchored at the top knot
// plus 4h*Phi_j*psi_j summed over every knot of one period.  A constant mode
// carries the degree-zero fallback with its modulus certificate.
class PolyModel {
 public:
  PolyModel(std::function<double(double)> f, const core::InflectionSet& Y,
            LevelConfig lc)
      : lc_(lc),
        g_(static_cast<int>(lc.n)),
        Y_(Y),
        idx_(g_, Y_),
        dd_(std::move(f), g_, 8) {
    lc_.validate();
    std::int64_t need = core::min_n_for(Y_, 2);
    if (lc_.n < need)
      throw std::invalid_argument(
          "grid too coarse for the inflection set: n must be at least " +
          std::to_string(need) + "; use the constant fallback below that");
    bundles_.push_back(std::make_unique<FamilyBundle>(Y_, lc_));
    owner_bundle_.assign(Y_.size(), -1);

    const std::int64_t lo = 1 - lc_.n;
    const std::size_t count = static_cast<std::size_t>(2 * lc_.n);
    sel_.resize(count);
    coef_.resize(count);
    pieces_.resize(count);
    for (std::int64_t j = lo; j <= lc_.n; ++j) {
      const std::size_t k = static_cast<std::size_t>(j - lo);
      spline::Selection s = spline::select_psi(g_, idx_, Y_, dd_, j);
      coef_[k] = 4.0 * g_.h * dd_.Phi(j);
      if (coef_[k] != 0.0) {
        FamilyBundle* fb = bundles_.front().get();
        if (s.owner >= 0) fb = bundle_for_owner(s.owner);
        for (auto& [nu, w] : s.parts) {
          PhiPsi p = make_phi_psi(*fb, lc_, j, nu, &clamps_);
          p.weight = w;
          pieces_[k].push_back(std::move(p));
        }
      }
      sel_[k] = std::move(s);
    }
  }

  static PolyModel constant_fallback(std::function<double(double)> f,
                                     std::int64_t n,
                                     const core::InflectionSet& Y = {}) {
    return PolyModel(ConstantTag{}, std::move(f), n, Y);
  }

  double value(double x) const {
    if (constant_) return c0_;
    double acc = dd_.local_cubic(lc_.n + 1, x);
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      if (coef_[k] == 0.0) continue;
      double s = 0.0;
      for (const PhiPsi& p : pieces_[k]) s += p.weight * p.psi(x);
      acc += coef_[k] * s;
    }
    return acc;
  }

  double derivative(double x) const {
    if (constant_) return 0.0;
    double acc = dd_.local_cubic_d1(lc_.n + 1, x);
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      if (coef_[k] == 0.0) continue;
      double s = 0.0;
      for (const PhiPsi& p : pieces_[k]) s += p.weight * p.psi_d1(x);
      acc += coef_[k] * s;
    }
    return acc;
  }

  double second(double x) const {
    if (constant_) return 0.0;
    double acc = dd_.local_cubic_d2(lc_.n + 1, x);
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      if (coef_[k] == 0.0) continue;
      acc += coef_[k] * psi_sum_d2_row(k, x);
    }
    return acc;
  }

  double operator()(double x) const { return value(x); }

  // Weighted psi combination at one knot, and the cubic base, exposed for
  // the sign decomposition.
  double psi_sum(std::int64_t j, double x) const {
    double s = 0.0;
    for (const PhiPsi& p : row(j)) s += p.weight * p.psi(x);
    return s;
  }
  double psi_sum_d2(std::int64_t j, double x) const {
    return psi_sum_d2_row(index_of(j), x);
  }
  double base_d2(double x) const {
    return constant_ ? 0.0 : dd_.local_cubic_d2(lc_.n + 1, x);
  }

  double coefficient(std::int64_t j) const { return coef_.at(index_of(j)); }
  const spline::Selection& selection(std::int64_t j) const {
    return sel_.at(index_of(j));
  }
  const std::vector<PhiPsi>& pieces(std::int64_t j) const {
    return pieces_.at(index_of(j));
  }

  const LevelConfig& levels() const { return lc_; }
  const core::DyadicGrid& grid() const { return g_; }
  const core::InflectionSet& inflections() const { return Y_; }
  const core::NeighborhoodIndex& index() const { return idx_; }
  const core::DividedDifferenceTable& dd() const { return dd_; }
  const std::vector<ClampEvent>& clamps() const { return clamps_; }

  bool constant_mode() const { return constant_; }
  double certificate() const { return certificate_; }

 private:
  struct ConstantTag {};

  PolyModel(ConstantTag, std::function<double(double)> f, std::int64_t n,
            const core::InflectionSet& Y)
      : lc_(),
        g_(static_cast<int>(std::max<std::int64_t>(n, 1))),
        Y_(Y),
        idx_(),
        dd_(f, g_, 8),
        constant_(true) {
    lc_.n = std::max<std::int64_t>(n, 1);
    c0_ = f(0.0);
    certificate_ = 3.0 * core::modulus_periodic(f, 4, 4.0 * pi);
  }

  std::size_t index_of(std::int64_t j) const {
    return static_cast<std::size_t>(j - (1 - lc_.n));
  }
  const std::vector<PhiPsi>& row(std::int64_t j) const {
    return pieces_.at(index_of(j));
  }
  double psi_sum_d2_row(std::size_t k, double x) const {
    double s = 0.0;
    for (const PhiPsi& p : pieces_[k]) s += p.weight * p.psi_d2(x);
    return s;
  }

  FamilyBundle* bundle_for_owner(int i) {
    int& slot = owner_bundle_.at(static_cast<std::size_t>(i));
    if (slot < 0) {
      auto Yt = Y_.with_replaced(static_cast<std::size_t>(i),
                                 g_.x(idx_.j_of(static_cast<std::size_t>(i)) + 5));
      bundles_.push_back(std::make_unique<FamilyBundle>(Yt, lc_));
      slot = static_cast<int>(bundles_.size()) - 1;
    }
    return bundles_[static_cast<std::size_t>(slot)].get();
  }

  LevelConfig lc_;
  core::DyadicGrid g_;
  core::InflectionSet Y_;
  core::NeighborhoodIndex idx_;
  core::DividedDifferenceTable dd_;
  std::vector<std::unique_ptr<FamilyBundle>> bundles_;
  std::vector<int> owner_bundle_;
  std::vector<spline::Selection> sel_;
  std::vector<double> coef_;
  std::vector<std::vector<PhiPsi>> pieces_;
  std::vector<ClampEvent> clamps_;
  bool constant_ = false;
  double c0_ = 0.0;
  double certificate_ = 0.0;
};

inline PolyModel build_poly(std::function<double(double)> f,
                            const core::InflectionSet& Y, LevelConfig lc) {
  return PolyModel(std::move(f), Y, lc);
}

inline PolyModel fallback_whitney(std::function<double(double)> f,
                                  std::int64_t n,
                                  const core::InflectionSet& Y = {}) {
  return PolyModel::constant_fallback(std::move(f), n, Y);
}

struct PolyVerifyOptions {
  int samples = 4096;        // uniform scan points over one period
  double tol_rel = 1e-8;     // violation threshold relative to block scale
  int periodicity_probes = 257;
  unsigned seed = 0;         // reserved for randomized probe placement
};

struct PolyReport {
  double scale = 0.0;  // max |P'' Pi| over the scan
  double tol_main = 0.0, tol_a = 0.0, tol_b = 0.0;
  long outside_checked = 0, inside_checked = 0;
  long outside_violations = 0, inside_violations = 0;
  double outside_worst = 0.0, outside_worst_x = 0.0, inside_worst = 0.0;
  long a_checked = 0, a_violations = 0;
  double a_scale = 0.0, a_worst = 0.0, a_worst_x = 0.0;
  long b_checked = 0, b_violations = 0;
  double b_scale = 0.0, b_worst = 0.0, b_worst_x = 0.0;
  bool consistency_checked = false;
  double consistency_worst = 0.0;  // |P''Pi - (A+B+C)|, diagnostic only
  double periodicity_worst = 0.0;
  double value_scale = 0.0;
  std::size_t clamp_events = 0;

  bool ok() const {
    return outside_violations == 0 && a_violations == 0 &&
           b_violations == 0 &&
           periodicity_worst <= 1e-7 * std::max(1.0, value_scale);
  }
};

// Scans P''*Pi outside the excluded neighborhoods of the inflection points,
// the nonnegative block A (knots inside H_2) everywhere, and the block B
// (remaining knots) outside its one-sided bands.  Each knot's cap is the
// one-sided cubic combination evaluated at the window representative, which
// keeps the blocks 2pi-periodic.  When a spline over the same data is given,
// the worst gap of the three-block decomposition against P''*Pi is reported
// as a diagnostic; boundary knots and the seam slivers use different
// conventions on the two sides, so the gap is small but not zero.
inline PolyReport verify_poly_shape(const PolyModel& m,
                                    const spline::SplineModel* sp = nullptr,
                                    PolyVerifyOptions opt = {}) {
  PolyReport r;
  r.clamp_events = m.clamps().size();
  if (m.constant_mode()) return r;  // zero second derivative throughout

  const core::DyadicGrid& g = m.grid();
  const core::InflectionSet& Y = m.inflections();
  const core::NeighborhoodIndex& idx = m.index();
  const std::int64_t n = g.n;
  const double h = g.h;

  struct Row {
    std::int64_t j;
    double dj;
    double coef;
    bool in_h2;
    std::vector<std::pair<spline::PsiPiece, double>> caps;
  };
  std::vector<Row> rows;
  rows.reserve(static_cast<std::size_t>(2 * n));
  for (std::int64_t j = 1 - n; j <= n; ++j) {
    Row row{j, g.x(j - 1), m.coefficient(j), idx.in_H(j, 2), {}};
    if (row.coef != 0.0)
      for (auto& [nu, w] : m.selection(j).parts)
        row.caps.emplace_back(spline::PsiPiece(g, j, nu), w);
    rows.push_back(std::move(row));
  }

  std::vector<double> band(Y.size());
  for (std::size_t i = 0; i < Y.size(); ++i)
    band[i] = (Y.points()[i] - g.x(idx.j_of(i))) + 5.0 * h;

  const int M = opt.samples;
  std::vector<double> xs(static_cast<std::size_t>(M));
  std::vector<double> pv(xs.size()), av(xs.size()), bv(xs.size()),
      cv(xs.size(), 0.0);
  for (int q = 0; q < M; ++q)
    xs[static_cast<std::size_t>(q)] =
        -pi + two_pi * (static_cast<double>(q) + 0.5) / static_cast<double>(M);

  for (std::size_t q = 0; q < xs.size(); ++q) {
    const double x = xs[q];
    const double Pix = Y.Pi(x);
    double p2 = m.base_d2(x);
    double A = 0.0, B = 0.0;
    for (const Row& row : rows) {
      if (row.coef == 0.0) continue;
      double d2 = m.psi_sum_d2(row.j, x);
      p2 += row.coef * d2;
      double w = x - two_pi * std::round((x - row.dj) / two_pi);
      double d2w = (w == x) ? d2 : m.psi_sum_d2(row.j, w);
      double cap = 0.0;
      for (auto& [piece, wgt] : row.caps)
        cap += wgt * piece.d2(w, spline::Side::plus);
      double term = row.coef * (d2w - cap) * Pix;
      (row.in_h2 ? A : B) += term;
    }
    pv[q] = p2 * Pix;
    av[q] = A;
    bv[q] = B;
    if (sp != nullptr)
      cv[q] = sp->second(core::reduce_angle(x), spline::Side::plus) * Pix;
    r.scale = std::max(r.scale, std::abs(pv[q]));
    r.a_scale = std::max(r.a_scale, std::abs(A));
    r.b_scale = std::max(r.b_scale, std::abs(B));
  }

  r.tol_main = opt.tol_rel * r.scale;
  r.tol_a = std::max(opt.tol_rel * r.a_scale, 1e-10 * std::max(1.0, r.scale));
  r.tol_b = std::max(opt.tol_rel * r.b_scale, 1e-10 * std::max(1.0, r.scale));

  for (std::size_t q = 0; q < xs.size(); ++q) {
    const double x = xs[q];
    bool near_y = false, in_b_band = false;
    for (std::size_t i = 0; i < Y.size(); ++i) {
      double th = core::reduce_angle(x - Y.points()[i]);
      if (th > -h && th < h) near_y = true;
      if (th > -band[i] && th < 0.0) in_b_band = true;
    }
    if (near_y) {
      ++r.inside_checked;
      if (pv[q] < -r.tol_main) {
        ++r.inside_violations;
        r.inside_worst = std::min(r.inside_worst, pv[q]);
      }
    } else {
      ++r.outside_checked;
      if (pv[q] < r.outside_worst) {
        r.outside_worst = pv[q];
        r.outside_worst_x = x;
      }
      if (pv[q] < -r.tol_main) ++r.outside_violations;
    }
    ++r.a_checked;
    if (av[q] < r.a_worst) {
      r.a_worst = av[q];
      r.a_worst_x = x;
    }
    if (av[q] < -r.tol_a) ++r.a_violations;
    if (!in_b_band) {
      ++r.b_checked;
      if (bv[q] < r.b_worst) {
        r.b_worst = bv[q];
        r.b_worst_x = x;
      }
      if (bv[q] < -r.tol_b) ++r.b_violations;
    }
    if (sp != nullptr) {
      r.consistency_checked = true;
      r.consistency_worst =
          std::max(r.consistency_worst, std::abs(pv[q] - (av[q] + bv[q] + cv[q])));
    }
  }

  const int K = std::max(2, opt.periodicity_probes);
  for (int q = 0; q < K; ++q) {
    double x = -pi + two_pi * static_cast<double>(q) / static_cast<double>(K);
    double v = m.value(x);
    r.value_scale = std::max(r.value_scale, std::abs(v));
    r.periodicity_worst =
        std::max(r.periodicity_worst, std::abs(m.value(x + two_pi) - v));
  }
  return r;
}

struct CalibrationAttempt {
  int m1 = 0, m2 = 0;
  bool built = false;
  bool shape_ok = false;
  std::size_t clamp_events = 0;
  std::string error;
};

struct CalibrationResult {
  bool success = false;
  LevelConfig used;
  PolyReport report;
  std::shared_ptr<PolyModel> model;
  std::vector<CalibrationAttempt> attempts;
};

// Escalation ladder over the refinement multipliers: rebuild and re-verify
// until the normalization solves stay inside [0,1] and every sign scan is
// clean, or the allowed m2 is exhausted.
inline CalibrationResult calibrate(std::function<double(double)> f,
                                   const core::InflectionSet& Y,
                                   LevelConfig base,
                                   const spline::SplineModel* sp = nullptr,
                                   int max_m2 = 16,
                                   PolyVerifyOptions opt = {}) {
  CalibrationResult out;
  std::vector<std::pair<int, int>> ladder = {
      {base.m1, base.m2}, {2, 8}, {3, 8}, {4, 8}, {4, 16}};
  std::vector<std::pair<int, int>> plan;
  for (auto& [a, b] : ladder) {
    if (b > max_m2) continue;
    if (a * b < base.m1 * base.m2) continue;
    bool seen = false;
    for (auto& q : plan) seen = seen || (q.first == a && q.second == b);
    if (!seen) plan.emplace_back(a, b);
  }
  for (auto& [a, b] : plan) {
    LevelConfig lc = base;
    lc.m1 = a;
    lc.m2 = b;
    CalibrationAttempt at;
    at.m1 = a;
    at.m2 = b;
    try {
      auto model = std::make_shared<PolyModel>(f, Y, lc);
      PolyReport rep = verify_poly_shape(*model, sp, opt);
      at.built = true;
      at.shape_ok = rep.ok();
      at.clamp_events = model->clamps().size();
      out.attempts.push_back(at);
      if (rep.ok() && model->clamps().empty()) {
        out.success = true;
        out.used = lc;
        out.report = rep;
        out.model = std::move(model);
        return out;
      }
      out.used = lc;
      out.report = rep;
      out.model = std::move(model);
    } catch (const std::exception& e) {
      at.error = e.what();
      out.attempts.push_back(at);
    }
  }
  return out;
}

}  // namespace shapeline::poly
