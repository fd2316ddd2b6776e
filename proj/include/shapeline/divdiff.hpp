#pragma once

// Divided differences on the uniform grid and the local cubic interpolation
// pieces built from them.  F(j) is the second difference over
// {x(j), x(j-1), x(j-2)}, Phi(j) the fourth over {x(j+1), ..., x(j-3)}.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "shapeline/periodic.hpp"

namespace shapeline::core {

// Cubic through the four equally spaced nodes a, a+(b-a)/3, b-(b-a)/3, b.
inline double lagrange_cubic(const std::function<double(double)>& f, double a,
                             double b, double x) {
  const double step = (b - a) / 3.0;
  double nodes[4] = {a, a + step, a + 2 * step, b};
  double vals[4] = {f(nodes[0]), f(nodes[1]), f(nodes[2]), f(nodes[3])};
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    double li = vals[i];
    for (int k = 0; k < 4; ++k)
      if (k != i) li *= (x - nodes[k]) / (nodes[i] - nodes[k]);
    acc += li;
  }
  return acc;
}

class DividedDifferenceTable {
 public:
  DividedDifferenceTable() = default;

  DividedDifferenceTable(std::function<double(double)> f, const DyadicGrid& g,
                         int margin = 8)
      : grid_(g), f_(std::move(f)), lo_(-g.n - margin), hi_(g.n + margin) {
    fv_.resize(static_cast<std::size_t>(hi_ - lo_ + 1));
    for (std::int64_t j = lo_; j <= hi_; ++j)
      fv_[idx(j)] = f_(grid_.x(j));
  }

  DividedDifferenceTable(const PeriodicFunction& f, const DyadicGrid& g,
                         int margin = 8)
      : DividedDifferenceTable([f](double x) { return f(x); }, g, margin) {}

  const DyadicGrid& grid() const { return grid_; }

  double value(std::int64_t j) const { return fv_.at(idx(j)); }

  // [x(j), x(j-1); f]
  double D1(std::int64_t j) const {
    return (value(j - 1) - value(j)) / grid_.h;
  }

  // [x(j), x(j-1), x(j-2); f]
  double F(std::int64_t j) const {
    const double h = grid_.h;
    return (value(j) - 2.0 * value(j - 1) + value(j - 2)) / (2.0 * h * h);
  }

  // [x(j+1), ..., x(j-3); f]
  double Phi(std::int64_t j) const {
    const double h = grid_.h;
    double d4 = value(j + 1) - 4.0 * value(j) + 6.0 * value(j - 1) -
                4.0 * value(j - 2) + value(j - 3);
    return d4 / (24.0 * h * h * h * h);
  }

  // (x - x(j))(x - x(j-1))(x - x(j-2))
  double C(std::int64_t j, double x) const {
    return (x - grid_.x(j)) * (x - grid_.x(j - 1)) * (x - grid_.x(j - 2));
  }

  // Newton-form cubic interpolating f at x(k), x(k-1), x(k-2), x(k-3).
  // Consecutive pieces satisfy p_{k-1} = p_k + 4h*Phi(k-1)*C(k-1, .).
  double local_cubic(std::int64_t k, double x) const {
    const DyadicGrid& g = grid_;
    double t0 = x - g.x(k), t1 = x - g.x(k - 1), t2 = x - g.x(k - 2);
    double dd3 = (F(k - 1) - F(k)) / (3.0 * g.h);
    return value(k) + D1(k) * t0 + F(k) * t0 * t1 + dd3 * t0 * t1 * t2;
  }

  double local_cubic_d1(std::int64_t k, double x) const {
    const DyadicGrid& g = grid_;
    double t0 = x - g.x(k), t1 = x - g.x(k - 1), t2 = x - g.x(k - 2);
    double dd3 = (F(k - 1) - F(k)) / (3.0 * g.h);
    return D1(k) + F(k) * (t0 + t1) +
           dd3 * (t0 * t1 + t0 * t2 + t1 * t2);
  }

  double local_cubic_d2(std::int64_t k, double x) const {
    const DyadicGrid& g = grid_;
    double t0 = x - g.x(k), t1 = x - g.x(k - 1), t2 = x - g.x(k - 2);
    double dd3 = (F(k - 1) - F(k)) / (3.0 * g.h);
    return 2.0 * F(k) + 2.0 * dd3 * (t0 + t1 + t2);
  }

  // Line through (x(n), f(x(n))) and (x(n-1), f(x(n-1))).
  double boundary_linear(double x) const {
    const std::int64_t n = grid_.n;
    return value(n) + D1(n) * (x - grid_.x(n));
  }

 private:
  std::size_t idx(std::int64_t j) const {
    if (j < lo_ || j > hi_)
      throw std::out_of_range("divided difference index out of range");
    return static_cast<std::size_t>(j - lo_);
  }

  DyadicGrid grid_;
  std::function<double(double)> f_;
  std::int64_t lo_ = 0, hi_ = -1;
  std::vector<double> fv_;
};

}  // namespace shapeline::core
