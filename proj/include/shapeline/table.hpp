#pragma once

// Tabulated representation for the cumulative kernel objects: a low-degree
// polynomial drift plus a 2*pi-periodic remainder sampled on a uniform
// window.  Values anywhere on the line come out of drift(x) + six-point
// interpolation of the wrapped remainder, so the object stays evaluable far
// outside its sampling window and its periodic structure is exact by
// construction.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "shapeline/periodic.hpp"

namespace shapeline::core {

// Dense polynomial of degree <= 5 in the raw coordinate.
struct DriftPoly {
  std::array<double, 6> c{};  // c[k] multiplies x^k

  double operator()(double x) const {
    double acc = 0.0;
    for (int k = 5; k >= 0; --k) acc = acc * x + c[k];
    return acc;
  }

  double derivative(double x) const {
    double acc = 0.0;
    for (int k = 5; k >= 1; --k) acc = acc * x + k * c[k];
    return acc;
  }

  // Antiderivative vanishing at x0.  Throws if degree 5 is occupied.
  DriftPoly antiderivative(double x0) const {
    if (c[5] != 0.0)
      throw std::logic_error("drift degree limit reached");
    DriftPoly out;
    for (int k = 0; k <= 4; ++k) out.c[k + 1] = c[k] / (k + 1.0);
    out.c[0] = -out(x0);
    return out;
  }

  DriftPoly& operator+=(const DriftPoly& o) {
    for (int k = 0; k < 6; ++k) c[k] += o.c[k];
    return *this;
  }

  static DriftPoly constant(double v) {
    DriftPoly p;
    p.c[0] = v;
    return p;
  }

  static DriftPoly linear(double c0, double c1) {
    DriftPoly p;
    p.c[0] = c0;
    p.c[1] = c1;
    return p;
  }
};

// Cumulative integral over a uniform grid with q.front() == q.back()
// identified periodically: Simpson across even pairs, a four-point cubic
// rule for the odd nodes.  Exact for cubics.
inline std::vector<double> cumulative_nodes(const std::vector<double>& q,
                                            double step) {
  const auto N = static_cast<std::int64_t>(q.size()) - 1;
  auto wrap = [&](std::int64_t i) {
    i %= N;
    if (i < 0) i += N;
    return q[static_cast<std::size_t>(i)];
  };
  std::vector<double> P(q.size(), 0.0);
  for (std::int64_t i = 2; i <= N; i += 2) {
    auto z = static_cast<std::size_t>(i);
    P[z] = P[z - 2] + step * (q[z - 2] + 4.0 * q[z - 1] + q[z]) / 3.0;
  }
  for (std::int64_t i = 1; i <= N; i += 2) {
    auto z = static_cast<std::size_t>(i);
    P[z] = P[z - 1] + step *
                          (9.0 * q[z - 1] + 19.0 * q[z] - 5.0 * wrap(i + 1) +
                           wrap(i + 2)) /
                          24.0;
  }
  return P;
}

class StructuredTable {
 public:
  StructuredTable() = default;

  // node_values are samples of the full object on the N+1 uniform nodes of
  // [center-pi, center+pi]; the drift is peeled off here.  The remainder
  // must close up over the window (seam_tol guards construction bugs).
  StructuredTable(double center, DriftPoly drift,
                  const std::vector<double>& node_values,
                  double seam_tol = 1e-6)
      : center_(center), drift_(drift) {
    if (node_values.size() < 8 || node_values.size() % 2 == 0)
      throw std::invalid_argument("need an even interval count");
    periodic_.resize(node_values.size());
    const auto N = static_cast<std::int64_t>(node_values.size()) - 1;
    const double a = center_ - pi;
    const double step = two_pi / static_cast<double>(N);
    double scale = 0.0;
    for (std::int64_t i = 0; i <= N; ++i) {
      periodic_[static_cast<std::size_t>(i)] =
          node_values[static_cast<std::size_t>(i)] - drift_(a + step * i);
      scale = std::max(scale, std::abs(node_values[static_cast<std::size_t>(i)]));
    }
    double seam = std::abs(periodic_.back() - periodic_.front());
    if (seam > seam_tol * std::max(1.0, scale))
      throw std::logic_error("periodic remainder does not close up");
    periodic_.back() = periodic_.front();
  }

  double center() const { return center_; }
  const DriftPoly& drift() const { return drift_; }
  std::int64_t intervals() const {
    return static_cast<std::int64_t>(periodic_.size()) - 1;
  }

  double operator()(double x) const { return drift_(x) + wrapped(x); }

  // Periodic remainder alone (already wrapped).
  double remainder(double x) const { return wrapped(x); }

  // Antiderivative from the left window edge, same representation.  The
  // remainder mean migrates into the drift so the new remainder closes up.
  StructuredTable prefix_integral() const {
    const auto N = intervals();
    const double a = center_ - pi;
    const double step = two_pi / static_cast<double>(N);
    std::vector<double> P = cumulative_nodes(periodic_, step);
    const double mean = P.back() / two_pi;

    StructuredTable out;
    out.center_ = center_;
    out.drift_ = drift_.antiderivative(a);
    DriftPoly lin = DriftPoly::linear(-mean * a, mean);
    out.drift_ += lin;
    out.periodic_.resize(P.size());
    for (std::int64_t i = 0; i <= N; ++i) {
      auto z = static_cast<std::size_t>(i);
      out.periodic_[z] = P[z] - mean * (step * static_cast<double>(i));
    }
    out.periodic_.back() = out.periodic_.front();
    return out;
  }

 private:
  double at_periodic(std::int64_t i) const {
    const auto N = intervals();
    i %= N;
    if (i < 0) i += N;
    return periodic_[static_cast<std::size_t>(i)];
  }

  double wrapped(double x) const {
    const auto N = intervals();
    const double a = center_ - pi;
    double u = (x - a) / two_pi;
    double frac = u - std::floor(u);           // [0, 1)
    double t = frac * static_cast<double>(N);  // node units
    auto k = static_cast<std::int64_t>(std::floor(t));
    double s = t - static_cast<double>(k);
    // Six-point (quintic) Lagrange on node offsets -2..3.
    double acc = 0.0;
    for (int o = -2; o <= 3; ++o) {
      double w = 1.0;
      for (int m = -2; m <= 3; ++m)
        if (m != o) w *= (s - m) / static_cast<double>(o - m);
      acc += w * at_periodic(k + o);
    }
    return acc;
  }

  double center_ = 0.0;
  DriftPoly drift_;
  std::vector<double> periodic_;
};

}  // namespace shapeline::core
