#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "bmix/errors.hpp"

namespace bmix {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Neumaier's variant of Kahan summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

template <class Range>
double compensated_sum(const Range& r) {
  CompensatedSum s;
  for (double x : r) s.add(x);
  return s.value();
}

inline double log1p_exp(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double normal_log_pdf(double x) {
  return -0.5 * x * x - 0.5 * std::log(2.0 * kPi);
}

namespace detail {

template <class F>
double gk_recurse(F& f, double a, double b, double rel_tol, double abs_tol,
                  unsigned depth, double& err, double& l1) {
  using boost::math::quadrature::gauss_kronrod;
  double e = 0.0, l = 0.0;
  const double v = gauss_kronrod<double, 61>::integrate(f, a, b, 0, 0.0, &e, &l);
  // The non-adaptive error estimate is reported on the reference interval.
  e *= 0.5 * (b - a);
  if (depth == 0 || e <= std::max(abs_tol, rel_tol * l) || !std::isfinite(v)) {
    err += e;
    l1 += l;
    return v;
  }
  const double mid = 0.5 * (a + b);
  return gk_recurse(f, a, mid, rel_tol, 0.5 * abs_tol, depth - 1, err, l1) +
         gk_recurse(f, mid, b, rel_tol, 0.5 * abs_tol, depth - 1, err, l1);
}

}  // namespace detail

// Adaptive Gauss-Kronrod (61 point) on [a, b]; either end may be infinite.
// Panels are accepted once their error estimate is below rel_tol times their
// L1 norm, so cancellation between panels does not force extra splitting.
// Throws NumericError when the final estimate misses the tolerance.
template <class F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-10,
                 double abs_tol = 0.0, unsigned max_depth = 18) {
  if (a == b) return 0.0;
  if (a > b) return -integrate(f, b, a, rel_tol, abs_tol, max_depth);
  std::function<double(double)> g;
  double lo = a, hi = b;
  if (std::isinf(a) && std::isinf(b)) {
    g = [&](double t) {
      const double d = 1.0 / (1.0 - t * t);
      return f(t * d) * (1.0 + t * t) * d * d;
    };
    lo = -1.0;
    hi = 1.0;
  } else if (std::isinf(b)) {
    g = [&](double t) {
      const double d = 1.0 / (1.0 - t);
      return f(a + t * d) * d * d;
    };
    lo = 0.0;
    hi = 1.0;
  } else if (std::isinf(a)) {
    g = [&](double t) {
      const double d = 1.0 / (1.0 - t);
      return f(b - t * d) * d * d;
    };
    lo = 0.0;
    hi = 1.0;
  } else {
    g = [&](double x) { return f(x); };
  }
  double err = 0.0, l1 = 0.0;
  const double value =
      detail::gk_recurse(g, lo, hi, rel_tol, abs_tol, max_depth, err, l1);
  if (!std::isfinite(value) || err > std::max(abs_tol, 100.0 * rel_tol * l1)) {
    std::ostringstream msg;
    msg << "quadrature did not converge on [" << a << ", " << b
        << "]: value " << value << ", error estimate " << err;
    throw NumericError(msg.str());
  }
  return value;
}

// Integral over consecutive panels [p0,p1], [p1,p2], ... The absolute
// tolerance of each panel is scaled from a first non-adaptive pass over all of
// them, so panels where the integrand is negligible are not refined.
template <class F>
double integrate_panels(F&& f, const std::vector<double>& points,
                        double rel_tol = 1e-10) {
  using boost::math::quadrature::gauss_kronrod;
  double total_l1 = 0.0;
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    double e = 0.0, l = 0.0;
    gauss_kronrod<double, 61>::integrate(f, points[i], points[i + 1], 0, 0.0, &e, &l);
    total_l1 += l;
  }
  const double abs_tol =
      rel_tol * total_l1 / static_cast<double>(std::max<std::size_t>(1, points.size()));
  CompensatedSum s;
  for (std::size_t i = 0; i + 1 < points.size(); ++i)
    s += integrate(f, points[i], points[i + 1], rel_tol, abs_tol);
  return s.value();
}

// Fixed 30-point Gauss-Legendre rule on [a, b].
template <class F>
double gauss_legendre(F&& f, double a, double b) {
  return boost::math::quadrature::gauss<double, 30>::integrate(
      [&](double x) { return f(x); }, a, b);
}

// Golden-section search for a minimum of a unimodal f on [a, b].
template <class F>
double golden_section_minimize(F&& f, double a, double b, double tol = 1e-10) {
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol * std::max(1.0, std::abs(a) + std::abs(b))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

// Root of a monotone f on [lo, hi] with f(lo), f(hi) of opposite sign.
template <class F>
double bisect(F&& f, double lo, double hi, double tol = 1e-14,
              int max_iter = 400) {
  double flo = f(lo);
  if (flo == 0.0) return lo;
  for (int i = 0; i < max_iter && hi - lo > tol * std::max(1.0, std::abs(lo));
       ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0) == (flo > 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Least-squares slope of y on x.
inline double ls_slope(const std::vector<double>& x,
                       const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return kNaN;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

inline std::vector<double> linspace(double a, double b, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) /
                                  static_cast<double>(n - 1);
  return out;
}

}  // namespace bmix
