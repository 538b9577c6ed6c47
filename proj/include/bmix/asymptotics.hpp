#pragma once

// Slowly varying functions of the form
//   L(x) = (beta0 log x)^(delta+1) * exp((beta1 log x)^gamma),
// their de Bruijn conjugates, and the stabilizing sequences for sums of
// variables with tail 2*C1 / (x L(x)).

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/ooura_fourier_integrals.hpp>

#include "bmix/errors.hpp"
#include "bmix/numeric.hpp"
#include "bmix/rng.hpp"

namespace bmix {

struct SlowVariationParams {
  double beta0 = 1.0;
  double beta1 = 0.0;
  double delta = 0.0;
  double gamma = 0.0;
  double mu = 1.0;
  double c1 = 1.0 / kPi;

  bool has_exp_term() const { return beta1 > 0.0 && gamma > 0.0; }

  void validate() const {
    if (!(beta0 > 0.0) || !(beta1 >= 0.0) || !(gamma >= 0.0 && gamma < 1.0) ||
        !(c1 > 0.0))
      throw InvariantError("slow variation parameters out of range");
    if (beta1 == 0.0 && gamma != 0.0)
      throw InvariantError("gamma must be 0 when beta1 = 0");
    const bool finite_mean =
        (beta1 > 0.0 && gamma > 0.0 && gamma < 1.0) || (beta1 == 0.0 && delta > 0.0);
    if (!finite_mean)
      throw InvariantError("slow variation parameters violate the finite-mean constraint");
  }
};

using SlowFn = std::function<double(double)>;

// log L(x) as a function of y = log x > 0.
inline double log_L_at_log(const SlowVariationParams& p, double y) {
  double v = (p.delta + 1.0) * std::log(p.beta0 * y);
  if (p.has_exp_term()) v += std::pow(p.beta1 * y, p.gamma);
  return v;
}

inline double L_eval(const SlowVariationParams& p, double x) {
  if (!(x > 1.0)) throw DomainError("L(x) requires x > 1");
  return std::exp(log_L_at_log(p, std::log(x)));
}

inline SlowFn slow_fn(const SlowVariationParams& p) {
  return [p](double x) { return L_eval(p, x); };
}

// x L'(x) / L(x) for the parametric family, as a function of y = log x.
inline double L_log_derivative_at_log(const SlowVariationParams& p, double y) {
  double e = (p.delta + 1.0) / y;
  if (p.has_exp_term())
    e += p.gamma * std::pow(p.beta1, p.gamma) * std::pow(y, p.gamma - 1.0);
  return e;
}

inline double L_log_derivative(const SlowVariationParams& p, double x) {
  return L_log_derivative_at_log(p, std::log(x));
}

// (L1 <> L2)(x) = L1(x) L2(x L1(x)).
inline SlowFn diamond(SlowFn l1, SlowFn l2) {
  return [l1 = std::move(l1), l2 = std::move(l2)](double x) {
    const double a = l1(x);
    return a * l2(x * a);
  };
}

// Solves b L(n b) = 1 by fixed-point iteration started at 1/L(n).
inline double de_bruijn_conjugate(const SlowFn& L, double n) {
  if (!(n >= 2.0)) throw DomainError("de Bruijn conjugate requires n >= 2");
  double b = 1.0 / L(n);
  double resid = kInf;
  for (int it = 0; it < 200; ++it) {
    if (!(n * b > 1.0))
      throw NumericError("de Bruijn iteration left the domain of L");
    const double lv = L(n * b);
    resid = std::abs(b * lv - 1.0);
    if (resid < 1e-12) return b;
    b = 1.0 / lv;
  }
  std::ostringstream msg;
  msg << "de Bruijn iteration did not converge, last residual " << resid;
  throw NumericError(msg.str());
}

inline double de_bruijn_conjugate(const SlowVariationParams& p, double n) {
  return de_bruijn_conjugate(slow_fn(p), n);
}

inline double stabilizing_constant(const SlowVariationParams& p) {
  return p.has_exp_term()
             ? 2.0 * p.c1 / (std::pow(p.beta1, p.gamma) * p.gamma)
             : 2.0 * p.c1 / p.delta;
}

struct StabilizingTriple {
  double n = 0;
  double A_n = 0;
  double B_n = 0;
  double T_n = 0;
  double K = 0;
};

// With include_mean_term = false the centering is the leading-order
// -K (log n)^(1-gamma) alone.
inline StabilizingTriple stabilizing(const SlowVariationParams& p, double n,
                                     bool include_mean_term = true) {
  p.validate();
  if (!(n >= 2.0)) throw DomainError("stabilizing sequences require n >= 2");
  const double b = de_bruijn_conjugate(p, n);
  StabilizingTriple s;
  s.n = n;
  s.K = stabilizing_constant(p);
  s.B_n = n * b;
  const double lead = s.K * std::pow(std::log(n), 1.0 - p.gamma);
  s.A_n = (include_mean_term ? p.mu / b : 0.0) - lead;
  s.T_n = s.B_n * lead;
  return s;
}

// Asymptotic probability that the sample mean exceeds the population mean.
inline double error_rate_theory(const SlowVariationParams& p, double n) {
  if (!(n >= 3.0)) throw DomainError("error rate requires n >= 3");
  const double ln = std::log(n);
  if (p.has_exp_term())
    return std::pow(p.beta1, p.gamma) * p.gamma * std::pow(ln, p.gamma - 1.0);
  return p.delta / ln;
}

// Positive distribution on [x0, inf) with survival min(1, 2 C1 / (x L(x))).
class CanonicalTail {
 public:
  explicit CanonicalTail(SlowVariationParams p) : p_(p) {
    p_.validate();
    // x L(x) increases from 0 at x = 1, so the crossing is unique.
    const auto g = [this](double y) { return log_survival_raw(y); };
    double hi = 1.0;
    while (g(hi) > 0.0) hi *= 2.0;
    double lo = hi / 2.0;
    while (lo > 1e-300 && g(lo) < 0.0) lo /= 2.0;
    y0_ = bisect(g, lo, hi, 1e-15);
    x0_ = std::exp(y0_);
  }

  const SlowVariationParams& params() const { return p_; }
  double lower() const { return x0_; }

  double survival(double x) const {
    if (x <= x0_) return 1.0;
    return std::exp(log_survival_raw(std::log(x)));
  }

  double log_survival(double x) const {
    if (x <= x0_) return 0.0;
    return log_survival_raw(std::log(x));
  }

  double pdf(double x) const {
    if (x <= x0_) return 0.0;
    return survival(x) / x * (1.0 + L_log_derivative(p_, x));
  }

  // Smallest x with survival(x) <= q; q >= 1 returns the lower end.
  double inverse_survival(double q) const {
    if (!(q > 0.0)) throw DomainError("inverse survival requires q > 0");
    if (q >= 1.0) return x0_;
    const double target = std::log(q);
    double y = std::max(y0_, std::log(2.0 * p_.c1) - target);
    double lo = y0_, hi = y;
    while (log_survival_raw(hi) > target) hi = 2.0 * hi + 1.0;
    y = std::clamp(y, lo, hi);
    for (int it = 0; it < 100; ++it) {
      const double r = log_survival_raw(y) - target;
      if (r > 0) lo = y; else hi = y;
      const double slope = -(1.0 + L_log_derivative_at_log(p_, y));
      double next = y - r / slope;
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - y) <= 1e-15 * std::max(1.0, y)) {
        y = next;
        break;
      }
      y = next;
    }
    return std::exp(y);
  }

  double sample(Rng& rng) const { return inverse_survival(rng.uniform()); }

  // E[X] = x0 + int_{x0}^inf survival(x) dx, integrated in s = log log x.
  double mean() const {
    boost::math::quadrature::exp_sinh<double> integrator;
    const auto f = [this](double s) {
      const double y = y0_ * std::exp(s);
      if (!std::isfinite(y)) return 0.0;
      return y * 2.0 * p_.c1 * std::exp(-log_L_at_log(p_, y));
    };
    return x0_ + integrator.integrate(f, 0.0, kInf, 1e-12);
  }

 private:
  double log_survival_raw(double y) const {
    return std::log(2.0 * p_.c1) - y - log_L_at_log(p_, y);
  }

  SlowVariationParams p_;
  double x0_ = 1.0;
  double y0_ = 0.0;
};

struct SineIntegralCheck {
  double numeric = 0;
  double theory = 0;
  double rel_err = 0;
};

// E sin(tX) for the canonical distribution against mu t - K t (log T)^(1-gamma) / L(T),
// T = 1/t. The error is relative to the non-mean part of the expansion.
inline SineIntegralCheck sine_integral_check(const SlowVariationParams& p,
                                             double t) {
  if (!(t > 0.0 && t < 0.01))
    throw DomainError("sine integral check requires 0 < t < 0.01");
  SlowVariationParams q = p;
  const CanonicalTail tail(q);
  q.mu = tail.mean();
  // Integration by parts: E sin(tX) = sin(a) + int_a^inf cos(u) Fbar(u/t) du.
  const double a = t * tail.lower();
  const auto g = [&](double u) { return tail.survival(u / t); };

  const double two_pi = 2.0 * kPi;
  std::vector<double> pts{a};
  for (double u = a * 2.0; u < two_pi; u *= 2.0) pts.push_back(u);
  pts.push_back(two_pi);
  const double near =
      integrate_panels([&](double u) { return std::cos(u) * g(u); }, pts, 1e-12);

  boost::math::quadrature::ooura_fourier_cos<double> cosine(1e-10);
  const auto [far, far_err] =
      cosine.integrate([&](double v) { return g(v + two_pi); }, 1.0);
  if (!std::isfinite(far) || far_err > 1e-8 * std::max(1.0, std::abs(far)))
    throw NumericError("oscillatory tail integral did not converge");

  SineIntegralCheck out;
  out.numeric = std::sin(a) + near + far;
  const double T = 1.0 / t;
  const double tail_term = stabilizing_constant(q) * t *
                           std::pow(std::log(T), 1.0 - q.gamma) / L_eval(q, T);
  out.theory = q.mu * t - tail_term;
  out.rel_err = std::abs((out.numeric - q.mu * t) + tail_term) / tail_term;
  return out;
}

// Hill estimate of the tail index from the k largest values.
inline double hill_estimator(std::vector<double> x, std::size_t k) {
  if (k < 1 || k >= x.size()) throw DomainError("Hill estimator needs 1 <= k < n");
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k),
                   x.end(), std::greater<>());
  const double threshold = x[k];
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::log(x[i] / threshold);
  return static_cast<double>(k) / s;
}

}  // namespace bmix
