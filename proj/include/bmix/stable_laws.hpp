#pragma once

// Stable-law numerics used by the boundary asymptotics: tail constants,
// probabilities of a negative limit, the alpha = 1 skew density, and the
// conditional limit law G of the likelihood-ratio statistic.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "bmix/errors.hpp"
#include "bmix/numeric.hpp"

namespace bmix {

struct StableSpec {
  double alpha = 2.0;
  double beta = 0.0;

  StableSpec() = default;
  StableSpec(double a, double b) : alpha(a), beta(a == 2.0 ? 0.0 : b) {
    if (!(alpha > 0.0 && alpha <= 2.0) || !(std::abs(beta) <= 1.0))
      throw DomainError("stable parameters out of range");
  }
};

inline double c_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 2.0)) throw DomainError("alpha must lie in (0, 2]");
  if (alpha == 2.0) return 0.0;
  return std::tgamma(alpha) * std::sin(kPi * alpha / 2.0) / kPi;
}

// Value of P_{1,1}(X < 0) used where no closed form is available; it agrees
// with skew_cauchy_cdf_below_zero(1) to the quadrature tolerance.
inline constexpr double kSkewCauchyNegativity = 0.36523870;

inline double stable_negativity(const StableSpec& s) {
  if (s.alpha == 2.0) return 0.5;
  if (s.alpha == 1.0 && s.beta == 1.0) return kSkewCauchyNegativity;
  if (s.alpha == 1.0 && s.beta == 0.0) return 0.5;
  if (!(s.alpha > 1.0 && s.alpha < 2.0))
    throw RangeError("negativity probability available only for 1 < alpha < 2, "
                     "alpha = 2 or (alpha, beta) = (1, 1)");
  const double c =
      2.0 * std::atan(s.beta * std::tan(kPi * s.alpha / 2.0)) / (kPi * (s.alpha - 2.0));
  return (1.0 - c) / 2.0 + c / s.alpha;
}

namespace detail {

// int_0^inf e^{-t} k(t, phi(t)) dt with phi(t) = t x + (2 beta / pi) t log t,
// on panels no longer than half a local period of the phase. The integrand
// envelope is below e^{-50} beyond t = 50.
template <class Kernel>
double skew_cauchy_transform(double x, double beta, Kernel&& k) {
  using Rule = boost::math::quadrature::gauss<double, 30>;
  const double c = 2.0 * beta / kPi;
  const auto f = [&](double t) {
    return std::exp(-t) * k(t, t * x + c * t * std::log(t));
  };
  CompensatedSum total;
  const double t_max = 50.0;
  // Geometric panels resolve the t log t singularity at the origin.
  double t = std::min(0.5, 1.0 / (std::abs(x) + std::abs(c) + 1.0));
  for (double lo = t * 0x1.0p-40; lo < t; lo *= 2.0)
    total += Rule::integrate(f, lo, std::min(2.0 * lo, t));
  while (t < t_max) {
    const double rate = std::abs(x + c * (std::log(t) + 1.0));
    const double width = std::min(0.5, kPi / (rate + 1e-300));
    const double hi = std::min(t + width, t_max);
    total += Rule::integrate(f, t, hi);
    t = hi;
  }
  return total.value();
}

}  // namespace detail

namespace detail {

// The density integral taken along the ray t = s e^{i theta}, theta = -atan(x),
// on which e^{-t(1 + i x)} is real and decays at rate sqrt(1 + x^2). The
// closing arc is negligible once |x| exceeds a few units.
inline double skew_cauchy_pdf_rotated(double x, double beta) {
  using Rule = boost::math::quadrature::gauss<double, 30>;
  const double c = 2.0 * beta / kPi;
  const double theta = -std::atan(x);
  const double r = std::hypot(1.0, x);
  const std::complex<double> rot = std::polar(1.0, theta);
  const auto f = [&](double s) {
    const std::complex<double> log_t(std::log(s), theta);
    const std::complex<double> e =
        -s * r - std::complex<double>(0.0, c) * s * rot * log_t;
    return std::real(rot * std::exp(e));
  };
  const double s_max = 60.0 / r;
  CompensatedSum total;
  for (double lo = s_max * 0x1.0p-40; lo < s_max; lo *= 2.0)
    total += Rule::integrate(f, lo, std::min(2.0 * lo, s_max));
  return total.value() / kPi;
}

}  // namespace detail

// Density of the alpha = 1 stable law with log characteristic function
// -|t| (1 + 2 i beta sign(t) log|t| / pi).
inline double skew_cauchy_pdf(double x, double beta) {
  if (!(std::abs(beta) <= 1.0)) throw DomainError("|beta| must be at most 1");
  const double v =
      std::abs(x) > 20.0
          ? kPi * detail::skew_cauchy_pdf_rotated(x, beta)
          : detail::skew_cauchy_transform(
                x, beta, [](double, double phase) { return std::cos(phase); });
  if (!std::isfinite(v)) throw NumericError("skew Cauchy density did not converge");
  // Far in the light left tail the quadrature returns rounding noise of
  // either sign, |v| < 1e-13.
  return std::max(0.0, v / kPi);
}

// Distribution function by Gil-Pelaez inversion of the characteristic function.
inline double skew_cauchy_cdf(double x, double beta) {
  if (!(std::abs(beta) <= 1.0)) throw DomainError("|beta| must be at most 1");
  const double v = detail::skew_cauchy_transform(
      x, beta, [](double t, double phase) { return std::sin(phase) / t; });
  if (!std::isfinite(v)) throw NumericError("skew Cauchy cdf did not converge");
  return 0.5 + v / kPi;
}

// P(X < 0) by integrating the density over [-A, 0] and closing the left tail
// with its leading term (1 - beta) / (pi A).
inline double skew_cauchy_cdf_below_zero(double beta, double cutoff = 1e6) {
  if (!(std::abs(beta) <= 1.0)) throw DomainError("|beta| must be at most 1");
  const auto pdf = [beta](double x) { return skew_cauchy_pdf(x, beta); };
  std::vector<double> pts{-cutoff};
  for (double b = cutoff / 4.0; b > 0.5; b /= 4.0) pts.push_back(-b);
  pts.push_back(0.0);
  return integrate_panels(pdf, pts, 1e-9) + (1.0 - beta) / (kPi * cutoff);
}

// The law G with quantile function -2u - 2 log(1 - u).
class GLaw {
 public:
  static double quantile(double u) {
    if (!(u >= 0.0 && u <= 1.0)) throw DomainError("quantile level outside [0, 1]");
    if (u == 1.0) return kInf;
    if (u < 0.25) {
      // 2 sum_{r >= 2} u^r / r, free of cancellation near 0.
      double term = u * u, sum = 0.0;
      for (int r = 2; r < 200; ++r) {
        sum += term / r;
        if (term < 1e-18 * sum) break;
        term *= u;
      }
      return 2.0 * sum;
    }
    return -2.0 * u - 2.0 * std::log1p(-u);
  }

  // dG^{-1}/du
  static double quantile_derivative(double u) { return 2.0 * u / (1.0 - u); }

  static double cdf(double x) {
    if (std::isnan(x)) throw DomainError("cdf of NaN");
    if (x <= 0.0) return 0.0;
    if (x == kInf) return 1.0;
    double lo = 0.0, hi = 1.0 - 1e-16;
    if (quantile(hi) <= x) return hi;
    // Start from the small-u (u ~ sqrt(x)) or large-u (1 - u ~ e^{-(x+2)/2}) form.
    double u = x < 1.0 ? std::sqrt(x) : 1.0 - std::exp(-(x + 2.0) / 2.0);
    u = std::clamp(u, 1e-300, hi);
    for (int it = 0; it < 200; ++it) {
      const double r = quantile(u) - x;
      if (r > 0) hi = u; else lo = u;
      if (r == 0.0) return u;
      double next = u - r / quantile_derivative(u);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - u) <= 4e-16 * u || hi - lo <= 4e-16 * hi) return next;
      u = next;
    }
    return u;
  }

  static double pdf(double x) {
    if (!(x > 0.0)) return x == 0.0 ? kInf : 0.0;
    const double u = cdf(x);
    return (1.0 - u) / (2.0 * u);
  }

  static double survival(double x) {
    if (x <= 0.0) return 1.0;
    // 1 - u is accurate from the large-x relation when u is close to 1.
    const double u = cdf(x);
    if (u < 0.5) return 1.0 - u;
    const double w = std::exp(-(x + 2.0 * u) / 2.0);
    return w;
  }

  // First four cumulants, from raw moments of G^{-1}(U), U uniform.
  static std::array<double, 4> cumulants() {
    boost::math::quadrature::tanh_sinh<double> integrator;
    std::array<double, 5> m{1.0, 0, 0, 0, 0};
    for (int j = 1; j <= 4; ++j)
      m[j] = integrator.integrate(
          [j](double u) { return u >= 1.0 ? 0.0 : std::pow(quantile(u), j); },
          0.0, 1.0, 1e-14);
    return {m[1], m[2] - m[1] * m[1],
            m[3] - 3 * m[2] * m[1] + 2 * std::pow(m[1], 3),
            m[4] - 4 * m[3] * m[1] - 3 * m[2] * m[2] + 12 * m[2] * m[1] * m[1] -
                6 * std::pow(m[1], 4)};
  }

  // Degree-4 expansion of log(2 x g(x^2)), the log density of X^{1/2}.
  static double sqrt_log_density_series(double x) {
    return -2.0 * x / 3.0 - 5.0 * x * x / 36.0 - 23.0 * std::pow(x, 3) / 810.0 -
           31.0 * std::pow(x, 4) / 6480.0;
  }

  static double sqrt_log_density(double x) {
    return std::log(2.0 * x * pdf(x * x));
  }
};

struct TaylorCheck {
  double max_abs_deviation = 0;   // sup |2x g(x^2) - exp(series)|
  double max_rel_deviation = 0;   // sup of the same difference over the density
  double peak_density = 0;        // sup 2x g(x^2), attained as x -> 0
  double worst_x = 0;
};

// Compares the density of X^{1/2}, X ~ G, with the exponential of its
// degree-4 log expansion on (0, upper).
inline TaylorCheck g_sqrt_logpdf_taylor_check(double upper = 3.0,
                                              std::size_t points = 3000) {
  TaylorCheck out;
  for (std::size_t i = 1; i < points; ++i) {
    const double x = upper * static_cast<double>(i) / static_cast<double>(points);
    const double dens = 2.0 * x * GLaw::pdf(x * x);
    const double approx = std::exp(GLaw::sqrt_log_density_series(x));
    const double diff = std::abs(dens - approx);
    if (diff > out.max_abs_deviation) {
      out.max_abs_deviation = diff;
      out.worst_x = x;
    }
    out.max_rel_deviation = std::max(out.max_rel_deviation, diff / dens);
    out.peak_density = std::max(out.peak_density, dens);
  }
  return out;
}

}  // namespace bmix
