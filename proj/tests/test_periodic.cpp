#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "shapeline/periodic.hpp"

using namespace shapeline;
using namespace shapeline::core;
using Catch::Approx;

TEST_CASE("reduce_angle maps onto [-pi, pi] and keeps the endpoints") {
  CHECK(reduce_angle(pi) == pi);
  CHECK(reduce_angle(-pi) == -pi);
  CHECK(reduce_angle(0.0) == 0.0);
  CHECK(reduce_angle(3.0 * pi) == Approx(-pi));

  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ux(-pi, pi);
  std::uniform_int_distribution<int> uk(-5, 5);
  for (int t = 0; t < 200; ++t) {
    double x = ux(rng);
    int k = uk(rng);
    CHECK(reduce_angle(x) == Approx(x).margin(1e-15));
    CHECK(reduce_angle(x + two_pi * k) == Approx(x).margin(1e-12));
  }
}

TEST_CASE("step and truncated power conventions") {
  CHECK(chi(1.0, 1.0) == 0.0);
  CHECK(chi(1.0 + 1e-15, 1.0) == 1.0);
  CHECK(chi(0.0, 1.0) == 0.0);
  CHECK(tpow(-2.0, 3) == 0.0);
  CHECK(tpow(2.0, 3) == 8.0);
  CHECK(tpow(2.0, 0) == 1.0);
  CHECK(tpow(0.0, 1) == 0.0);
}

TEST_CASE("inflection set stores decreasing representatives in [-pi, pi)") {
  auto ys = InflectionSet::from_points({0.0, -pi});
  REQUIRE(ys.size() == 2);
  CHECK(ys.points()[0] == 0.0);
  CHECK(ys.points()[1] == -pi);

  // pi is identified with -pi.
  auto same = InflectionSet::from_points({pi, 0.0});
  CHECK(same.points()[0] == 0.0);
  CHECK(same.points()[1] == -pi);

  CHECK_THROWS_AS(InflectionSet::from_points({0.0}), std::invalid_argument);
  CHECK_THROWS_AS(InflectionSet::from_points({0.0, 0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(InflectionSet::from_points({0.5, 0.5 - two_pi}),
                  std::invalid_argument);
}

TEST_CASE("index wrap steps by 2*pi per period") {
  auto ys = InflectionSet::from_points({2.0, 1.0, -0.5, -2.5});
  for (std::int64_t i = -9; i <= 9; ++i) {
    CHECK(ys.y(i + 4) == Approx(ys.y(i) - two_pi));
  }
  CHECK(ys.y(0) == 2.0);
  CHECK(ys.y(3) == -2.5);
  CHECK(ys.y(4) == Approx(2.0 - two_pi));
  CHECK(ys.y(-1) == Approx(-2.5 + two_pi));
}

TEST_CASE("sine product for {0, -pi} collapses to sin(x)/2") {
  auto ys = InflectionSet::from_points({0.0, -pi});
  CHECK(ys.Pi(pi / 2) == Approx(0.5));
  CHECK(ys.Pi(-pi / 2) == Approx(-0.5));
  CHECK(ys.Pi(0.0) == Approx(0.0).margin(1e-16));
  CHECK(std::abs(ys.Pi(-pi)) < 1e-15);

  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ux(-pi, pi);
  for (int t = 0; t < 200; ++t) {
    double x = ux(rng);
    CHECK(ys.Pi(x) == Approx(0.5 * std::sin(x)).margin(1e-14));
    CHECK(ys.Pi_derivative(x) == Approx(0.5 * std::cos(x)).margin(1e-14));
  }
}

TEST_CASE("product derivative matches central differences") {
  auto ys = InflectionSet::from_points({2.0, 1.0, -0.5, -2.5});
  const double step = 1e-6;
  for (double x : {-3.0, -1.2, 0.0, 0.7, 2.9}) {
    double numeric = (ys.Pi(x + step) - ys.Pi(x - step)) / (2 * step);
    CHECK(ys.Pi_derivative(x) == Approx(numeric).margin(1e-8));
  }
}

TEST_CASE("minimal circular gap") {
  CHECK(InflectionSet::from_points({0.0, -pi}).min_gap() == Approx(pi));
  CHECK(InflectionSet::from_points({pi / 2, 0.0, -pi / 2, -pi}).min_gap() ==
        Approx(pi / 2));
  CHECK(InflectionSet{}.min_gap() == Approx(two_pi));
}

TEST_CASE("smallest admissible grid order") {
  auto ys = InflectionSet::from_points({0.0, -pi});
  CHECK(min_n_for(ys, 30) == 63);
  CHECK(min_n_for(ys, 2) == 7);
  CHECK(min_n_for(InflectionSet{}, 30) == 32);

  // Strictness and minimality at the returned order.
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> ux(-pi, pi);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> pts;
    for (int k = 0; k < 4; ++k) pts.push_back(ux(rng));
    InflectionSet y;
    try {
      y = InflectionSet::from_points(pts);
    } catch (const std::invalid_argument&) {
      continue;
    }
    for (int m : {1, 5, 30}) {
      int n = min_n_for(y, m);
      CHECK((2.0 * m + 2.0) * (pi / n) < y.min_gap());
      if (n > 1) CHECK((2.0 * m + 2.0) * (pi / (n - 1)) >= y.min_gap());
      CHECK(min_n_for(y, m + 1) >= n);
    }
  }
}

TEST_CASE("neighborhood anchors and exclusion windows at n=64") {
  DyadicGrid g(64);
  auto ys = InflectionSet::from_points({0.0, -pi});
  NeighborhoodIndex idx(g, ys);
  REQUIRE(idx.anchors().size() == 2);
  CHECK(idx.j_of(0) == 0);
  CHECK(idx.j_of(1) == 64);

  // Tier 3 around y=0 removes -2..3.
  CHECK_FALSE(idx.in_H(-2, 3));
  CHECK_FALSE(idx.in_H(0, 3));
  CHECK_FALSE(idx.in_H(3, 3));
  CHECK(idx.in_H(-3, 3));
  CHECK(idx.in_H(4, 3));

  // Around y=-pi the window wraps across the period seam.
  CHECK_FALSE(idx.in_H(62, 3));
  CHECK_FALSE(idx.in_H(64, 3));
  CHECK_FALSE(idx.in_H(-61, 3));
  CHECK_FALSE(idx.in_H(-64, 3));
  CHECK(idx.in_H(61, 3));
  CHECK(idx.in_H(-60, 3));

  auto H3 = idx.H(3);
  CHECK(H3.size() == 116);
  CHECK(H3.front() == -60);
  CHECK(H3.back() == 61);

  auto w = idx.window(0, 3);
  CHECK(w.first == Approx(-4 * g.h));
  CHECK(w.second == Approx(3 * g.h));
}

TEST_CASE("membership is equivalent to staying outside every window") {
  DyadicGrid g(32);
  auto ys = InflectionSet::from_points({1.1, -2.0});
  NeighborhoodIndex idx(g, ys);
  for (int m : {1, 2, 3, 10}) {
    for (std::int64_t j = 1 - g.n; j <= g.n; ++j) {
      bool outside = true;
      for (std::size_t i = 0; i < ys.size(); ++i) {
        auto [lo, hi] = idx.window(i, m);
        double xj = g.x(j);
        // Compare against every unreduced copy of the window.
        for (int k = -2; k <= 2; ++k) {
          double shifted = xj + two_pi * k;
          if (shifted > lo && shifted < hi) outside = false;
        }
      }
      CHECK(idx.in_H(j, m) == outside);
    }
  }
}

TEST_CASE("exclusion tiers are nested") {
  DyadicGrid g(64);
  auto ys = InflectionSet::from_points({0.9, -1.7});
  NeighborhoodIndex idx(g, ys);
  auto H1 = idx.H(1), H2 = idx.H(2), H3 = idx.H(3);
  CHECK(H3.size() < H2.size());
  CHECK(H2.size() < H1.size());
  for (auto j : H3) CHECK(idx.in_H(j, 2));
  for (auto j : H2) CHECK(idx.in_H(j, 1));
}

TEST_CASE("peaked weight: value at the cell midpoint and its antipode") {
  DyadicGrid g(16);
  for (std::int64_t j : {-3, 0, 5}) {
    double c = g.x(j) + g.h / 2;
    CHECK(gamma_weight(g, j, c) == 1.0);
    CHECK(gamma_weight(g, j, c + pi) == Approx(1.0 / 16.0));
  }
}

TEST_CASE("sum of squared weights stays below 6") {
  for (int n : {8, 16, 64}) {
    DyadicGrid g(n);
    for (double x : {0.3, 1.7, -2.9, pi, -pi}) {
      double s = 0.0;
      for (std::int64_t j = 1 - n; j <= n; ++j) {
        double w = gamma_weight(g, j, x);
        s += w * w;
      }
      CHECK(s < 6.0);
    }
  }
}

TEST_CASE("named targets expose matching analytic second derivatives") {
  for (const char* name : {"neg-sin", "const", "poly4-periodic"}) {
    auto f = PeriodicFunction::from_name(name);
    REQUIRE(f.has_d2());
    const double step = 1e-3;
    for (double x : {-2.6, -0.9, 0.0, 1.3, 3.0}) {
      double numeric = (f(x + step) - 2 * f(x) + f(x - step)) / (step * step);
      CHECK(f.d2(x) == Approx(numeric).margin(1e-5));
    }
    // Periodic by construction.
    CHECK(f(1.0 + two_pi) == Approx(f(1.0)).margin(1e-12));
  }
  CHECK(PeriodicFunction::from_name("neg-sin")(pi / 2) == Approx(-1.0));
  CHECK(PeriodicFunction::from_name("const")(0.4) == 1.0);
  CHECK_THROWS_AS(PeriodicFunction::from_name("nope"), std::invalid_argument);
}

TEST_CASE("sampled targets interpolate to fourth-order accuracy") {
  const int M = 256;
  std::vector<double> samples(M);
  for (int k = 0; k < M; ++k)
    samples[k] = -std::sin(-pi + two_pi * k / M);
  auto f = PeriodicFunction::from_samples(samples);
  CHECK_FALSE(f.has_d2());

  std::mt19937 rng(41);
  std::uniform_real_distribution<double> ux(-pi, pi);
  for (int t = 0; t < 300; ++t) {
    double x = ux(rng);
    CHECK(f(x) == Approx(-std::sin(x)).margin(1e-6));
    CHECK(f(x + two_pi) == Approx(f(x)).margin(1e-12));
  }
  CHECK_THROWS_AS(PeriodicFunction::from_samples(std::vector<double>(63, 0.0)),
                  std::invalid_argument);
}

TEST_CASE("sample files accept one value per line or trailing columns") {
  std::string path = "periodic_samples_tmp.csv";
  {
    std::ofstream out(path);
    for (int k = 0; k < 64; ++k) {
      double x = -pi + two_pi * k / 64;
      if (k % 2 == 0)
        out << x << "," << std::cos(x) << "\n";
      else
        out << std::cos(x) << "\n";
    }
  }
  auto f = PeriodicFunction::from_csv(path);
  CHECK(f(0.0) == Approx(1.0).margin(1e-4));
  CHECK(f(pi / 3) == Approx(0.5).margin(1e-4));
  std::remove(path.c_str());
  CHECK_THROWS_AS(PeriodicFunction::from_csv("missing_file_xyz.csv"),
                  std::invalid_argument);
}
