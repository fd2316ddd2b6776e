// Build the shape-constrained spline for a function that changes convexity
// at 0 and -pi, then print the error against the fourth modulus as the grid
// refines.  The ratio column should settle near a constant.
// f'' = sin(x)(1 + cos(x)/2) matches the sign of sin(x) everywhere, so f is
// admissible for this inflection set without being a plain sine.

#include <shapeline/modulus.hpp>
#include <shapeline/spline.hpp>

#include <cmath>
#include <cstdio>

using namespace shapeline;

int main() {
  auto f = [](double x) { return -std::sin(x) - std::sin(2.0 * x) / 16.0; };
  auto Y = core::InflectionSet::from_points({0.0, -pi});

  std::printf("%6s %14s %14s %10s %8s\n", "n", "sup error", "omega4(pi/n)",
              "ratio", "shape");
  for (int n : {16, 32, 64, 128}) {
    spline::SplineModel S(f, Y, n);
    double err = 0.0;
    for (int i = 0; i <= 4096; ++i) {
      double x = -pi + two_pi * i / 4096.0;
      err = std::max(err, std::abs(f(x) - S.value(x)));
    }
    double w = core::modulus_periodic(f, 4, pi / n);
    auto rep = spline::verify_spline_shape(S);
    std::printf("%6d %14.6e %14.6e %10.4f %8s\n", n, err, w, err / w,
                rep.ok() ? "clean" : "BROKEN");
  }
  return 0;
}
