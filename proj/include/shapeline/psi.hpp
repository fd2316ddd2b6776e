#pragma once

// One-sided cubic pieces used by the shape-constrained spline.  Each piece is
// the truncated cubic (x-a)^3_+ + 3*ht*(x-a)^2_+ + hh*(x-a)_+ whose anchor a
// is one of three consecutive knots; equivalently it is the knot cubic
// (x-x_j)_+(x-x_{j-1})(x-x_{j-2}) cut off at the anchor.  The pieces are
// continuous but their first derivative jumps by hh at the anchor, so the
// derivative evaluators take an explicit side.

#include <cstdint>
#include <stdexcept>

#include "shapeline/periodic.hpp"

namespace shapeline::spline {

enum class Side { minus, plus };

// (x - c)_+ (x - c - h)(x - c - 2h)
inline double psi3(double x, double c, double h) {
  double u = x - c;
  if (u <= 0.0) return 0.0;
  return u * (u - h) * (u - 2.0 * h);
}

class PsiPiece {
 public:
  PsiPiece(const core::DyadicGrid& g, std::int64_t j, int nu)
      : j_(j), nu_(nu), h_(g.h), anchor_(g.x(j - (nu - 1))) {
    if (nu < 1 || nu > 3) throw std::invalid_argument("piece index must be 1..3");
    ht_ = (nu == 1) ? -h_ : (nu == 2) ? 0.0 : h_;
    hh_ = (nu == 2) ? -h_ * h_ : 2.0 * h_ * h_;
  }

  std::int64_t j() const { return j_; }
  int nu() const { return nu_; }
  double anchor() const { return anchor_; }
  double ht() const { return ht_; }
  double hh() const { return hh_; }

  double value(double x) const {
    double u = x - anchor_;
    if (u <= 0.0) return 0.0;
    return u * (u * u + 3.0 * ht_ * u + hh_);
  }

  double d1(double x, Side s = Side::plus) const {
    double u = x - anchor_;
    bool active = (s == Side::plus) ? (u >= 0.0) : (u > 0.0);
    if (!active) return 0.0;
    return 3.0 * u * u + 6.0 * ht_ * u + hh_;
  }

  double d2(double x, Side s = Side::plus) const {
    double u = x - anchor_;
    bool active = (s == Side::plus) ? (u >= 0.0) : (u > 0.0);
    if (!active) return 0.0;
    return 6.0 * u + 6.0 * ht_;
  }

 private:
  std::int64_t j_;
  int nu_;
  double h_, anchor_, ht_, hh_;
};

}  // namespace shapeline::spline
