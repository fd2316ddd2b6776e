// Calibrate the smooth trigonometric-class approximant for -sin at n = 16.
// The default refinement multipliers clamp a normalization solve, so the
// escalation ladder runs until every sign scan is clean; the attempt log
// shows what it tried.

#include <shapeline/poly.hpp>

#include <cmath>
#include <cstdio>

using namespace shapeline;

int main() {
  auto f = [](double x) { return -std::sin(x); };
  auto Y = core::InflectionSet::from_points({0.0, -pi});

  poly::LevelConfig base;
  base.n = 16;
  auto cal = poly::calibrate(f, Y, base);

  for (const auto& at : cal.attempts)
    std::printf("tried (%d,%d): %s, %zu clamps%s%s\n", at.m1, at.m2,
                at.shape_ok ? "shape clean" : "shape broken", at.clamp_events,
                at.error.empty() ? "" : ", ", at.error.c_str());
  if (!cal.success) {
    std::printf("calibration exhausted\n");
    return 1;
  }

  const poly::PolyReport& rep = cal.report;
  std::printf("settled on (%d,%d)\n", cal.used.m1, cal.used.m2);
  std::printf("curvature scan off bands: %ld checked, %ld violations\n",
              rep.outside_checked, rep.outside_violations);
  std::printf("knot block floor %.3e, edge block floor %.3e\n", rep.a_worst,
              rep.b_worst);
  std::printf("period closure residual %.3e\n", rep.periodicity_worst);

  double err = 0.0;
  for (int i = 0; i <= 4096; ++i) {
    double x = -pi + two_pi * i / 4096.0;
    err = std::max(err, std::abs(f(x) - cal.model->value(x)));
  }
  std::printf("sup error %.6e\n", err);
  return 0;
}
