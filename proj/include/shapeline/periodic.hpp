#pragma once

// Periodic-domain primitives: angle reduction, the inflection-point set and
// its sine product, the uniform dyadic grid, and the index sets that keep
// grid knots away from inflection points.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shapeline {

inline constexpr double pi = std::numbers::pi_v<double>;
inline constexpr double two_pi = 2.0 * std::numbers::pi_v<double>;

// Thrown when a quotient used to place a kernel correction has an
// untrustworthy magnitude.
struct DegenerateDenominator : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mixing weight for the two-sided cumulative kernel left [0,1] by more than
// the accepted slack.
struct AlphaOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Same as AlphaOutOfRange but for the second-stage mixing weight of the
// smooth piece assembly.
struct BetaOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Interpolation correction would divide by a value below the hard floor.
struct DivisorTooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A constructed object violates the sign constraint it is supposed to carry.
struct SignViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// The divided-difference ordering fell outside the enumerated selection
// cases; callers may downgrade this to a logged tie-break.
struct IncompleteCase : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace core {

// Maps x to the representative in [-pi, pi]; exact at the endpoints
// (reduce_angle(pi) == pi, reduce_angle(-pi) == -pi).
inline double reduce_angle(double x) { return std::remainder(x, two_pi); }

// Right-continuous-from-above step: 1 for x > a, else 0.
inline double chi(double x, double a) { return x > a ? 1.0 : 0.0; }

// (x)_+^k for small integer k.
inline double tpow(double x, int k) {
  if (x <= 0.0) return 0.0;
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

inline int sgn(double v) { return (v > 0.0) - (v < 0.0); }

// Uniform grid with step h = pi/n and knots x(j) = -j*h; j runs over
// [1-n, n] for one period, larger |j| continues the same spacing.
struct DyadicGrid {
  int n = 0;
  double h = 0.0;

  DyadicGrid() = default;
  explicit DyadicGrid(int n_) : n(n_), h(pi / n_) {
    if (n_ < 1) throw std::invalid_argument("grid order must be positive");
  }

  double x(std::int64_t j) const { return -static_cast<double>(j) * h; }
  // Right endpoint of the cell [x(j), x(j-1)] attached to knot j.
  double d(std::int64_t j) const { return x(j - 1); }
};

// Points where the target function changes convexity.  Stored strictly
// decreasing in [-pi, pi); an empty set means a globally convex target.
// Index arithmetic wraps with period 2s and a 2*pi shift per period.
class InflectionSet {
 public:
  InflectionSet() = default;

  static InflectionSet from_points(std::vector<double> pts) {
    InflectionSet set;
    for (double& p : pts) {
      p = reduce_angle(p);
      if (p == pi) p = -pi;
    }
    std::sort(pts.begin(), pts.end(), std::greater<>());
    if (pts.size() % 2 != 0)
      throw std::invalid_argument("inflection point count must be even");
    for (std::size_t k = 1; k < pts.size(); ++k)
      if (!(pts[k] < pts[k - 1]))
        throw std::invalid_argument("inflection points must be distinct");
    set.ys_ = std::move(pts);
    return set;
  }

  std::size_t size() const { return ys_.size(); }  // == 2s
  bool empty() const { return ys_.empty(); }
  const std::vector<double>& points() const { return ys_; }

  // y(i) for any integer index: stepping i by size() subtracts 2*pi.
  double y(std::int64_t i) const {
    const auto m = static_cast<std::int64_t>(ys_.size());
    std::int64_t q = i / m, r = i % m;
    if (r < 0) {
      r += m;
      q -= 1;
    }
    return ys_[static_cast<std::size_t>(r)] - two_pi * static_cast<double>(q);
  }

  // Product of sin((x - y_i)/2); positive immediately above ys[0].
  double Pi(double x) const {
    double p = 1.0;
    for (double yi : ys_) p *= std::sin(0.5 * (x - yi));
    return p;
  }

  double Pi_derivative(double x) const {
    double sum = 0.0;
    for (std::size_t k = 0; k < ys_.size(); ++k) {
      double term = 0.5 * std::cos(0.5 * (x - ys_[k]));
      for (std::size_t i = 0; i < ys_.size(); ++i)
        if (i != k) term *= std::sin(0.5 * (x - ys_[i]));
      sum += term;
    }
    return sum;
  }

  // Smallest circular distance between neighbouring points (2*pi if empty).
  double min_gap() const {
    if (ys_.empty()) return two_pi;
    double g = (ys_.back() + two_pi) - ys_.front();
    for (std::size_t k = 1; k < ys_.size(); ++k)
      g = std::min(g, ys_[k - 1] - ys_[k]);
    return g;
  }

  // Replaces the stored point at 0-based slot i (value is reduced the same
  // way as in from_points; ordering is re-established).
  InflectionSet with_replaced(std::size_t i, double value) const {
    std::vector<double> pts = ys_;
    pts.at(i) = value;
    return from_points(std::move(pts));
  }

 private:
  std::vector<double> ys_;
};

// For each inflection point, the knot index j_i with y_i in [x(j_i), x(j_i)+h).
// Membership j in H_m means knot x(j) stays outside every open window
// (x(j_i+m+1), x(j_i-m)); in index space that excludes j_i-m+1 .. j_i+m,
// taken circularly with period 2n.
class NeighborhoodIndex {
 public:
  NeighborhoodIndex() = default;

  NeighborhoodIndex(const DyadicGrid& grid, const InflectionSet& ys)
      : grid_(grid) {
    js_.reserve(ys.size());
    for (double yi : ys.points()) {
      double t = -yi / grid.h;
      // y_i sitting (up to rounding) on a knot belongs to that knot's cell.
      auto j = static_cast<std::int64_t>(std::ceil(t - 1e-9));
      js_.push_back(j);
    }
  }

  const std::vector<std::int64_t>& anchors() const { return js_; }
  std::int64_t j_of(std::size_t i) const { return js_.at(i); }

  bool in_H(std::int64_t j, int m) const {
    for (std::int64_t ji : js_) {
      std::int64_t d = wrap_signed(j - ji);
      if (d >= 1 - static_cast<std::int64_t>(m) && d <= m) return false;
    }
    return true;
  }

  // All members of H_m within the canonical window j in [1-n, n].
  std::vector<std::int64_t> H(int m) const {
    std::vector<std::int64_t> out;
    for (std::int64_t j = 1 - grid_.n; j <= grid_.n; ++j)
      if (in_H(j, m)) out.push_back(j);
    return out;
  }

  // Open window around y_i excluded at tier m, in unreduced grid coordinates.
  std::pair<double, double> window(std::size_t i, int m) const {
    std::int64_t ji = js_.at(i);
    return {grid_.x(ji + m + 1), grid_.x(ji - m)};
  }

  // The inflection point whose tier-m band excludes j, when there is one.
  std::optional<std::size_t> owner_of(std::int64_t j, int m) const {
    for (std::size_t i = 0; i < js_.size(); ++i) {
      std::int64_t d = wrap_signed(j - js_[i]);
      if (d >= 1 - static_cast<std::int64_t>(m) && d <= m) return i;
    }
    return std::nullopt;
  }

  const DyadicGrid& grid() const { return grid_; }

 private:
  // Signed circular distance reduced to (-n, n].
  std::int64_t wrap_signed(std::int64_t d) const {
    const std::int64_t p = 2 * static_cast<std::int64_t>(grid_.n);
    d %= p;
    if (d <= -grid_.n) d += p;
    if (d > grid_.n) d -= p;
    return d;
  }

  DyadicGrid grid_;
  std::vector<std::int64_t> js_;
};

// Smallest n whose step leaves every tier-m window strictly inside the gap
// between neighbouring inflection points: (2m+2)*(pi/n) < min_gap.
inline int min_n_for(const InflectionSet& ys, int m) {
  double gap = ys.min_gap();
  double bound = (2.0 * m + 2.0) * pi / gap;
  int n = static_cast<int>(std::floor(bound)) + 1;
  return std::max(n, 1);
}

// Peaked weight centred at the midpoint of cell j: min(1, 1/(n|sin(.)|)).
inline double gamma_weight(const DyadicGrid& grid, std::int64_t j, double x) {
  double center = grid.x(j) + 0.5 * grid.h;
  double v = std::abs(std::sin(0.5 * (x - center)));
  double nv = static_cast<double>(grid.n) * v;
  return nv > 1.0 ? 1.0 / nv : 1.0;
}

// 2*pi-periodic function with an optional analytic second derivative.
class PeriodicFunction {
 public:
  PeriodicFunction() = default;
  PeriodicFunction(std::string name, std::function<double(double)> f,
                   std::function<double(double)> d2 = nullptr)
      : name_(std::move(name)), f_(std::move(f)), d2_(std::move(d2)) {}

  double operator()(double x) const { return f_(x); }
  const std::string& name() const { return name_; }
  bool has_d2() const { return static_cast<bool>(d2_); }
  double d2(double x) const {
    if (!d2_) throw std::logic_error("second derivative not available");
    return d2_(x);
  }

  static PeriodicFunction from_name(const std::string& name) {
    if (name == "neg-sin")
      return {"neg-sin", [](double x) { return -std::sin(x); },
              [](double x) { return std::sin(x); }};
    if (name == "sin")
      return {"sin", [](double x) { return std::sin(x); },
              [](double x) { return -std::sin(x); }};
    if (name == "const")
      return {"const", [](double) { return 1.0; }, [](double) { return 0.0; }};
    if (name == "poly4-periodic")
      return {"poly4-periodic",
              [](double x) {
                return -1.5 * std::sin(x) - (11.0 / 32.0) * std::sin(2 * x) -
                       (1.0 / 18.0) * std::sin(3 * x) -
                       (1.0 / 256.0) * std::sin(4 * x);
              },
              [](double x) {
                return 1.5 * std::sin(x) + (11.0 / 8.0) * std::sin(2 * x) +
                       0.5 * std::sin(3 * x) + (1.0 / 16.0) * std::sin(4 * x);
              }};
    throw std::invalid_argument("unknown function name: " + name);
  }

  // Uniform samples over [-pi, pi), at least 64, evaluated by periodic
  // 4-point local cubic interpolation.  No second derivative is exposed.
  static PeriodicFunction from_samples(std::vector<double> samples,
                                       std::string name = "sampled") {
    if (samples.size() < 64)
      throw std::invalid_argument("need at least 64 samples");
    auto vals = std::make_shared<std::vector<double>>(std::move(samples));
    auto eval = [vals](double x) {
      const auto M = static_cast<std::int64_t>(vals->size());
      const double step = two_pi / static_cast<double>(M);
      double u = (reduce_angle(x) + pi) / step;
      auto k = static_cast<std::int64_t>(std::floor(u));
      double t = u - static_cast<double>(k);
      auto at = [&](std::int64_t idx) {
        idx %= M;
        if (idx < 0) idx += M;
        return (*vals)[static_cast<std::size_t>(idx)];
      };
      double fm1 = at(k - 1), f0 = at(k), f1 = at(k + 1), f2 = at(k + 2);
      // Lagrange cubic on nodes -1, 0, 1, 2 in local units.
      double lm1 = -t * (t - 1.0) * (t - 2.0) / 6.0;
      double l0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
      double l1 = -(t + 1.0) * t * (t - 2.0) / 2.0;
      double l2 = (t + 1.0) * t * (t - 1.0) / 6.0;
      return fm1 * lm1 + f0 * l0 + f1 * l1 + f2 * l2;
    };
    return {std::move(name), std::move(eval)};
  }

  // Reads one sample per line (last numeric field of each line); lines that
  // parse to nothing are skipped.
  static PeriodicFunction from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open sample file: " + path);
    std::vector<double> samples;
    std::string line;
    while (std::getline(in, line)) {
      for (char& c : line)
        if (c == ',' || c == ';' || c == '\t') c = ' ';
      std::istringstream row(line);
      double v, last = 0.0;
      bool any = false;
      while (row >> v) {
        last = v;
        any = true;
      }
      if (any) samples.push_back(last);
    }
    return from_samples(std::move(samples), "csv:" + path);
  }

 private:
  std::string name_;
  std::function<double(double)> f_;
  std::function<double(double)> d2_;
};

}  // namespace core
}  // namespace shapeline
