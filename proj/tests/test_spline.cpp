#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "shapeline/modulus.hpp"
#include "shapeline/spline.hpp"

using namespace shapeline;
using namespace shapeline::core;
using namespace shapeline::spline;
using Catch::Approx;

namespace {

double neg_sin(double x) { return -std::sin(x); }

// Cumulative Simpson prefix over equally spaced samples; odd nodes use the
// standard half-panel correction.
std::vector<double> prefix(const std::vector<double>& q, double step) {
  std::vector<double> P(q.size(), 0.0);
  for (std::size_t i = 2; i < q.size(); i += 2)
    P[i] = P[i - 2] + step * (q[i - 2] + 4.0 * q[i - 1] + q[i]) / 3.0;
  for (std::size_t i = 1; i < q.size(); i += 2) {
    if (i + 1 < q.size())
      P[i] = P[i - 1] + step * (5.0 * q[i - 1] + 8.0 * q[i] - q[i + 1]) / 12.0;
    else
      P[i] = P[i - 1] + step * (q[i - 1] + q[i]) / 2.0;
  }
  return P;
}

double sup_error(const SplineModel& m, const std::function<double(double)>& f,
                 int samples = 4096) {
  double worst = 0.0;
  for (int i = 0; i <= samples; ++i) {
    double x = -pi + two_pi * i / samples;
    worst = std::max(worst, std::abs(f(x) - m.value(x)));
  }
  return worst;
}

}  // namespace

TEST_CASE("pieces match the truncated knot cubic") {
  DyadicGrid g(16);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ux(-4.0, 4.0);
  for (std::int64_t j : {-5L, 0L, 9L}) {
    for (int nu : {1, 2, 3}) {
      PsiPiece p(g, j, nu);
      CHECK(p.anchor() == Approx(g.x(j) + (nu - 1) * g.h));
      for (int t = 0; t < 200; ++t) {
        double x = ux(rng);
        double ref = psi3(x, g.x(j), g.h) * chi(x, p.anchor());
        CHECK(p.value(x) == Approx(ref).margin(1e-12));
      }
    }
  }
}

TEST_CASE("pieces agree with the knot cubic outside the cut interval") {
  DyadicGrid g(16);
  std::int64_t j = 3;
  for (int nu : {1, 2, 3}) {
    PsiPiece p(g, j, nu);
    double fitted = 0.0;
    for (int t = 0; t <= 4000; ++t) {
      double x = g.x(j) - 1.5 + t * (3.0 / 4000.0);
      double diff = std::abs(psi3(x, g.x(j), g.h) - p.value(x));
      if (x < g.x(j) || x > p.anchor()) {
        CHECK(diff == Approx(0.0).margin(1e-14));
      } else {
        fitted = std::max(fitted, diff);
      }
    }
    double h3 = g.h * g.h * g.h;
    CHECK(fitted <= 27.0 * h3);
    if (nu == 3) CHECK(fitted == Approx(2.0 / (3.0 * std::sqrt(3.0)) * h3).epsilon(1e-3));
  }
}

TEST_CASE("double integral form reproduces the closed form") {
  // The integrands jump at the anchor, so the quadrature integrates the two
  // smooth halves separately.  Everything left of the anchor vanishes.
  DyadicGrid g(16);
  std::int64_t j = -2;
  const double base = g.d(j) - pi;
  const int N = 1 << 14;
  const double span = 2.0 * pi;
  const double step = span / N;
  for (int nu : {1, 2, 3}) {
    PsiPiece p(g, j, nu);
    const double a = p.anchor();
    std::vector<double> inner(N + 1), outer(N + 1);
    for (int i = 0; i <= N; ++i) {
      double u = a + i * step;
      inner[i] = tpow(u - a, 1) + p.ht() * (i == 0 ? 1.0 : chi(u, a));
    }
    auto Pin = prefix(inner, step);
    for (int i = 0; i <= N; ++i)
      outer[i] = 6.0 * Pin[i] + p.hh();
    auto Pout = prefix(outer, step);
    CHECK(p.value(base + 0.5 * (a - base)) == 0.0);  // left of the anchor
    for (int i : {1, N / 5, N / 2, 4 * N / 5, N}) {
      double x = a + i * step;
      CHECK(Pout[i] == Approx(p.value(x)).margin(1e-8));
    }
  }
}

TEST_CASE("far-field curvature difference between neighbours is exactly 2") {
  DyadicGrid g(16);
  for (int nu1 : {1, 2, 3}) {
    for (int nu2 : {1, 2, 3}) {
      PsiPiece a(g, 5, nu1), b(g, 4, nu2);
      double start = std::max(a.anchor(), b.anchor());
      for (double x : {start + 1e-3, start + 0.7, start + 2.9}) {
        double v = (a.d2(x) - b.d2(x)) / (3.0 * g.h);
        CHECK(v == Approx(2.0).margin(1e-11));
      }
    }
  }
}

TEST_CASE("decision rule covers the published orderings") {
  auto c = classify(3.0, 2.0, 1.0, 0.0);
  CHECK(c.tag == Tag::D0);  // non-strict inequality keeps the middle anchor
  c = classify(3.0, 2.0, 1.0, 1.0);
  CHECK(c.tag == Tag::D1);
  c = classify(1.0, 2.0, 3.0, 1.0);
  CHECK(c.tag == Tag::D2);
  c = classify(3.0, 0.5, 1.0, 1.0);
  CHECK(c.tag == Tag::D3);
  CHECK(c.alpha == Approx(0.75));
  CHECK(c.alpha > 0.0);
  CHECK(c.alpha < 1.0);
  CHECK_FALSE(c.incomplete);
  c = classify(1.0, 2.0, 1.5, 1.0);  // |Fp| <= |F0| >= |Fm|: uncovered
  CHECK(c.tag == Tag::D0);
  CHECK(c.incomplete);
  c = classify(2.0, 0.5, -2.0, 1.0);  // blend denominator vanishes
  CHECK(c.tag == Tag::D0);
  CHECK(c.incomplete);
}

TEST_CASE("selection wiring for the convexity-matched sine") {
  auto Y = InflectionSet::from_points({0.0, -pi});
  SplineModel m(neg_sin, Y, 64);
  const auto& idx = m.index();
  std::size_t d0 = 0, d4 = 0;
  for (std::int64_t j = 3 - 64; j <= 63; ++j) {
    const auto& s = m.selection(j);
    if (idx.in_H(j, 2)) {
      CHECK(s.tag == Tag::D0);
      ++d0;
    } else {
      CHECK((s.tag == Tag::D4a || s.tag == Tag::D4b));
      CHECK(s.owner >= 0);
      ++d4;
    }
  }
  CHECK(d0 + d4 == 125);
  CHECK(m.incomplete_knots().empty());
  CHECK(m.blend_weights_outside().empty());
}

TEST_CASE("spline interpolates the data at every knot") {
  auto Y = InflectionSet::from_points({0.0, -pi});
  for (int n : {16, 64}) {
    SplineModel m(neg_sin, Y, n);
    for (std::int64_t k = -n; k <= n; ++k)
      CHECK(m.value(m.grid().x(k)) ==
            Approx(neg_sin(m.grid().x(k))).margin(1e-9));
  }
  auto f = PeriodicFunction::from_name("poly4-periodic");
  SplineModel m2([f](double x) { return f(x); },
                 InflectionSet::from_points({0.0, -pi}), 32);
  for (std::int64_t k = -32; k <= 32; ++k)
    CHECK(m2.value(m2.grid().x(k)) == Approx(f(m2.grid().x(k))).margin(1e-9));
}

TEST_CASE("technical spline interpolates and reproduces cubics") {
  TechnicalSpline s(neg_sin, 32);
  const auto& g = s.dd().grid();
  for (std::int64_t k = -32; k <= 32; ++k)
    CHECK(s.value(g.x(k)) == Approx(neg_sin(g.x(k))).margin(1e-10));

  auto cubic = [](double x) { return 0.25 * x * x * x - 0.8 * x * x + x - 2.0; };
  TechnicalSpline sc(cubic, 16);
  auto Y = InflectionSet::from_points({0.0, -pi});
  SplineModel mc(cubic, Y, 16);
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> ux(-pi, pi);
  for (int t = 0; t < 200; ++t) {
    double x = ux(rng);
    CHECK(sc.value(x) == Approx(cubic(x)).margin(1e-10 * 30.0));
    CHECK(mc.value(x) == Approx(cubic(x)).margin(1e-10 * 30.0));
  }
}

TEST_CASE("both spline representations agree") {
  auto Y = InflectionSet::from_points({0.0, -pi});
  auto f = PeriodicFunction::from_name("poly4-periodic");
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> ux(-pi, pi);

  SplineModel a(neg_sin, Y, 16);
  SplineModel b([f](double x) { return f(x); }, Y, 64);
  for (int t = 0; t < 1000; ++t) {
    double x = ux(rng);
    CHECK(a.value27(x) == Approx(a.value(x)).margin(1e-9));
    CHECK(b.value27(x) == Approx(b.value(x)).margin(1e-9));
  }
}

TEST_CASE("continuity and exact derivative jumps at the knots") {
  auto Y = InflectionSet::from_points({0.0, -pi});
  SplineModel m(neg_sin, Y, 32);
  const auto& g = m.grid();
  for (std::int64_t k : {-20L, -3L, 0L, 7L, 25L, 31L}) {
    double xk = g.x(k);
    CHECK(m.value(xk - 1e-9) == Approx(m.value(xk)).margin(1e-7));
    CHECK(m.value(xk + 1e-9) == Approx(m.value(xk)).margin(1e-7));
    double exact = m.derivative_jump(k);
    CHECK(m.derivative(xk, Side::plus) - m.derivative(xk, Side::minus) ==
          Approx(exact).margin(1e-12));
    double numeric = m.derivative(xk + 1e-7, Side::plus) -
                     m.derivative(xk - 1e-7, Side::minus);
    CHECK(numeric == Approx(exact).margin(1e-5));
  }
}

TEST_CASE("curvature is linear inside each cell") {
  auto Y = InflectionSet::from_points({0.0, -pi});
  SplineModel m(neg_sin, Y, 16);
  const auto& g = m.grid();
  for (std::int64_t j : {-10L, 1L, 8L, 15L}) {
    double a = g.x(j) + 0.1 * g.h, b = g.x(j - 1) - 0.1 * g.h;
    double mid = 0.5 * (a + b);
    double expect = 0.5 * (m.second(a) + m.second(b));
    CHECK(m.second(mid) == Approx(expect).margin(1e-9));
  }
}

TEST_CASE("centred piece differences vanish off their support") {
  auto Y = InflectionSet::from_points({0.0, -pi});
  SplineModel m(neg_sin, Y, 64);
  const auto& g = m.grid();
  for (std::int64_t j : {30L, -30L, 20L}) {
    auto span_min = [&](std::int64_t jj) {
      int v = 3;
      for (auto& [nu, w] : m.selection(jj).parts) v = std::min(v, nu);
      return g.x(jj) + (v - 1) * g.h;
    };
    auto span_max = [&](std::int64_t jj) {
      int v = 1;
      for (auto& [nu, w] : m.selection(jj).parts) v = std::max(v, nu);
      return g.x(jj) + (v - 1) * g.h;
    };
    double lo = span_min(j + 1), hi = span_max(j - 1);
    for (double x : {lo - 0.4, lo - 1e-6, hi + 1e-6, hi + 0.4, hi + 2.0}) {
      CHECK(m.A2(j, x, x <= lo ? Side::minus : Side::plus) ==
            Approx(0.0).margin(1e-10));
    }
  }
}

TEST_CASE("region decomposition for the two-point inflection set") {
  DyadicGrid g(64);
  auto Y = InflectionSet::from_points({0.0, -pi});
  NeighborhoodIndex idx(g, Y);
  RegionDecomposition rd(g, idx, Y);
  REQUIRE(rd.regions().size() == 2);

  const Region& r0 = rd.regions()[0];
  CHECK(r0.begin == -60);
  CHECK(r0.length == 58);
  CHECK(r0.lo == Approx(3 * g.h));
  CHECK(r0.hi == Approx(61 * g.h));
  CHECK(r0.sigma == 1.0);

  const Region& r1 = rd.regions()[1];
  CHECK(r1.begin == 4);
  CHECK(r1.length == 58);
  CHECK(r1.lo == Approx(-61 * g.h));
  CHECK(r1.hi == Approx(-3 * g.h));
  CHECK(r1.sigma == -1.0);

  // Region membership agrees with the union of cells over H_3.
  auto H3 = idx.H(3);
  std::mt19937 rng(53);
  std::uniform_real_distribution<double> ux(-pi, pi);
  for (int t = 0; t < 2000; ++t) {
    double u = ux(rng);
    bool in_cells = false;
    for (std::int64_t j : H3)
      if (u >= g.x(j) && u <= g.x(j - 1)) in_cells = true;
    bool in_regions = false;
    for (const Region& r : rd.regions())
      for (int k = -1; k <= 1; ++k) {
        double v = u + k * two_pi;
        if (v >= r.lo && v <= r.hi) in_regions = true;
      }
    if (std::abs(u - g.h * std::round(u / g.h)) > 1e-9)
      CHECK(in_cells == in_regions);
  }

  // The extended intervals stay clear of the innermost exclusion windows.
  for (const Region& r : rd.regions()) {
    for (std::size_t i = 0; i < Y.size(); ++i) {
      auto [wlo, whi] = idx.window(i, 1);
      for (int k = -1; k <= 1; ++k) {
        double lo = r.lo + k * two_pi, hi = r.hi + g.h + k * two_pi;
        bool overlaps = lo < whi - 1e-12 && hi > wlo + 1e-12 &&
                        std::min(hi, whi) - std::max(lo, wlo) > 1e-9;
        CHECK_FALSE(overlaps);
      }
    }
  }
}

TEST_CASE("sign verifier passes on convexity-matched targets") {
  auto Y = InflectionSet::from_points({0.0, -pi});
  for (int n : {16, 32, 64}) {
    SplineModel m(neg_sin, Y, n);
    SignReport rep = verify_spline_shape(m);
    INFO("n=" << n << " worst=" << rep.worst << " jump=" << rep.worst_jump
              << " case=" << rep.worst_case);
    CHECK(rep.ok());
    CHECK(rep.violations == 0);
    CHECK(rep.jump_violations == 0);
    CHECK(rep.case_violations == 0);
    CHECK(rep.curvature_sign_violations == 0);
    CHECK(rep.anchor_order_violations == 0);
    CHECK(rep.regions == 2);
    CHECK(rep.checked > 0);
    CHECK(rep.jump_checked > 0);
  }

  // A second target with the same inflection pattern; validated first.
  auto f2 = [](double x) { return -std::sin(x) - 0.05 * std::sin(2.0 * x); };
  auto Y2 = InflectionSet::from_points({0.0, -pi});
  for (int t = 0; t <= 512; ++t) {
    double x = -pi + two_pi * t / 512.0;
    double d2 = std::sin(x) + 0.2 * std::sin(2.0 * x);
    CHECK(d2 * Y2.Pi(x) >= -1e-12);
  }
  SplineModel m2(f2, Y2, 64);
  SignReport rep2 = verify_spline_shape(m2);
  CHECK(rep2.ok());
  CHECK(rep2.case_violations == 0);
}

TEST_CASE("verifier throw path carries the worst location") {
  auto Y = InflectionSet::from_points({0.0, -pi});
  // Convexity pattern deliberately opposite to the inflection product.
  SplineModel bad([](double x) { return std::sin(x); }, Y, 32);
  SignReport rep = verify_spline_shape(bad);
  CHECK_FALSE(rep.ok());
  CHECK_THROWS_AS(verify_or_throw(bad), SignViolation);
}

TEST_CASE("approximation error decays at fourth order") {
  auto Y = InflectionSet::from_points({0.0, -pi});
  std::vector<int> ns = {16, 32, 64, 128};
  std::vector<double> errs, ratios;
  for (int n : ns) {
    SplineModel m(neg_sin, Y, n);
    double e = sup_error(m, neg_sin);
    errs.push_back(e);
    double w = modulus_periodic(neg_sin, 4, pi / n);
    ratios.push_back(e / w);
  }
  double slope = (std::log(errs.back()) - std::log(errs.front())) /
                 (std::log(128.0) - std::log(16.0));
  INFO("errors " << errs[0] << " " << errs[1] << " " << errs[2] << " "
                 << errs[3] << " slope " << slope);
  CHECK(slope > -4.5);
  CHECK(slope < -3.5);
  double rmin = *std::min_element(ratios.begin(), ratios.end());
  double rmax = *std::max_element(ratios.begin(), ratios.end());
  CHECK(rmax <= 2.0 * rmin);
}

TEST_CASE("grid gate rejects too-coarse builds") {
  auto Y = InflectionSet::from_points({0.0, -pi});
  CHECK_THROWS_AS(SplineModel(neg_sin, Y, 8), std::invalid_argument);
}
