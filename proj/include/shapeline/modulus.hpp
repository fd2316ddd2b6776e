#pragma once

// k-th modulus of smoothness, periodic and interval flavours, by direct
// maximisation of forward differences over sample grids.  The shift grid
// always contains the endpoint t, so monotone-in-shift suprema are exact up
// to the x resolution.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>

#include "shapeline/divdiff.hpp"
#include "shapeline/periodic.hpp"

namespace shapeline::core {

inline double forward_difference(const std::function<double(double)>& f,
                                 int k, double x, double delta) {
  double acc = 0.0;
  double binom = 1.0;
  // sum_{m=0..k} (-1)^{k-m} C(k,m) f(x + m*delta)
  for (int m = 0; m <= k; ++m) {
    double sign = ((k - m) % 2 == 0) ? 1.0 : -1.0;
    acc += sign * binom * f(x + m * delta);
    binom = binom * (k - m) / (m + 1.0);
  }
  return acc;
}

struct ModulusOptions {
  int x_samples = 1 << 14;
  int shift_samples = 64;
};

// sup over 0 < delta <= t, x in [-pi, pi] of |Delta_delta^k f(x)|.
inline double modulus_periodic(const std::function<double(double)>& f, int k,
                               double t, ModulusOptions opt = {}) {
  if (k < 1) throw std::invalid_argument("difference order must be >= 1");
  if (t < 0.0) throw std::invalid_argument("modulus argument must be >= 0");
  if (t == 0.0) return 0.0;
  double best = 0.0;
  for (int i = 1; i <= opt.shift_samples; ++i) {
    double delta = t * static_cast<double>(i) / opt.shift_samples;
    for (int q = 0; q < opt.x_samples; ++q) {
      double x = -pi + two_pi * static_cast<double>(q) / opt.x_samples;
      best = std::max(best, std::abs(forward_difference(f, k, x, delta)));
    }
  }
  return best;
}

// Interval variant: windows stay inside [a, b] (x + k*delta <= b).
inline double modulus_interval(const std::function<double(double)>& f, int k,
                               double t, double a, double b,
                               ModulusOptions opt = {}) {
  if (k < 1) throw std::invalid_argument("difference order must be >= 1");
  if (t < 0.0) throw std::invalid_argument("modulus argument must be >= 0");
  if (t == 0.0 || b <= a) return 0.0;
  double best = 0.0;
  for (int i = 1; i <= opt.shift_samples; ++i) {
    double delta = t * static_cast<double>(i) / opt.shift_samples;
    double span = b - a - k * delta;
    if (span < 0.0) continue;
    int nx = std::max(2, opt.x_samples / 8);
    for (int q = 0; q <= nx; ++q) {
      double x = a + span * static_cast<double>(q) / nx;
      best = std::max(best, std::abs(forward_difference(f, k, x, delta)));
    }
  }
  return best;
}

struct WhitneyCheck {
  double defect = 0.0;  // max |f - cubic interpolant| on [a, b]
  double bound = 0.0;   // tol_factor * omega_4(f, (b-a)/4, [a, b])
  bool ok = false;
};

// Four-point interpolation on [a, b] against the fourth modulus of f there.
inline WhitneyCheck whitney_check(const std::function<double(double)>& f,
                                  double a, double b,
                                  double tol_factor = 1.05,
                                  int samples = 2048) {
  WhitneyCheck out;
  for (int q = 0; q <= samples; ++q) {
    double x = a + (b - a) * static_cast<double>(q) / samples;
    double e = std::abs(f(x) - lagrange_cubic(f, a, b, x));
    out.defect = std::max(out.defect, e);
  }
  out.bound = tol_factor * modulus_interval(f, 4, (b - a) / 4.0, a, b);
  out.ok = out.defect <= out.bound;
  return out;
}

}  // namespace shapeline::core
