#pragma once

// Boundary maximum likelihood for the mixing weight theta, given the density
// ratios h(X_i): positivity, the exact maximizer, LR / Wald / Rao / R
// statistics, the local approximation and fitted activity rates.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "bmix/errors.hpp"
#include "bmix/numeric.hpp"

namespace bmix {

// Units summarized by quadrature: sum_k w_k log(1 + theta z_k) + theta linear
// stands in for sum_i log(1 + theta z_i) over `count` units whose individual
// values were not drawn.
struct BulkTerm {
  std::vector<double> z;
  std::vector<double> w;
  double linear = 0.0;

  double count() const { return compensated_sum(w); }
  bool empty() const { return z.empty(); }
};

struct HSample {
  std::vector<double> h;  // explicit ratios h(X_i) in [0, inf]
  BulkTerm bulk;

  HSample() = default;
  HSample(std::vector<double> values) : h(std::move(values)) {}  // NOLINT: implicit by design
  HSample(std::initializer_list<double> values) : h(values) {}

  double n() const { return static_cast<double>(h.size()) + bulk.count(); }
};

struct FitResult {
  double theta_hat_lo = 0.0;
  double theta_hat_hi = 0.0;
  double lambda = 0.0;
  double r_stat = kNaN;
  double wald = 0.0;
  double rao = 0.0;
  bool positive = false;
  int iterations = 0;
  double grad_at_zero = 0.0;

  double theta_hat() const { return theta_hat_hi; }
};

namespace detail {

inline void check_sample(const HSample& s) {
  for (double v : s.h)
    if (std::isnan(v) || v < 0.0) throw InputError("density ratios must be non-negative numbers");
  if (s.bulk.z.size() != s.bulk.w.size()) throw InputError("bulk nodes and weights differ in size");
  for (std::size_t k = 0; k < s.bulk.z.size(); ++k)
    if (std::isnan(s.bulk.z[k]) || s.bulk.z[k] < -1.0 || !(s.bulk.w[k] >= 0.0) ||
        !std::isfinite(s.bulk.z[k]))
      throw InputError("bulk nodes must be finite with z >= -1 and w >= 0");
  if (std::isnan(s.bulk.linear)) throw InputError("bulk linear term is NaN");
  if (s.h.empty() && s.bulk.empty()) throw InputError("empty sample");
}

// Log likelihood and its first two derivatives in theta. Units with h = inf
// contribute log theta (f0 vanishes there) and units with h = 0 contribute
// log(1 - theta); the constant log h of the former is dropped.
class Likelihood {
 public:
  explicit Likelihood(const HSample& s) : s_(s) {
    for (double v : s.h) {
      if (v == kInf) ++n_inf_;
      else if (v == 0.0) ++n_zero_;
      else z_.push_back(v - 1.0);
    }
  }

  double n_inf() const { return n_inf_; }
  double n_zero() const { return n_zero_; }
  const std::vector<double>& finite_z() const { return z_; }

  bool flat() const {
    if (n_inf_ > 0 || n_zero_ > 0 || s_.bulk.linear != 0.0) return false;
    for (double z : z_)
      if (z != 0.0) return false;
    for (std::size_t k = 0; k < s_.bulk.z.size(); ++k)
      if (s_.bulk.z[k] != 0.0 && s_.bulk.w[k] > 0.0) return false;
    return true;
  }

  // l'(0) = sum z_i, the quantity whose sign decides positivity.
  double grad_at_zero() const {
    if (n_inf_ > 0) return kInf;
    CompensatedSum s;
    for (double z : z_) s += z;
    s += -n_zero_;
    for (std::size_t k = 0; k < s_.bulk.z.size(); ++k) s += s_.bulk.w[k] * s_.bulk.z[k];
    s += s_.bulk.linear;
    return s.value();
  }

  double value(double theta) const {
    if (theta == 0.0) return n_inf_ > 0 ? -kInf : 0.0;
    CompensatedSum s;
    for (double z : z_) s += log1p_term(theta, z);
    for (std::size_t k = 0; k < s_.bulk.z.size(); ++k)
      s += s_.bulk.w[k] * log1p_term(theta, s_.bulk.z[k]);
    s += theta * s_.bulk.linear;
    double v = s.value();
    if (n_inf_ > 0) v += n_inf_ * std::log(theta);
    if (n_zero_ > 0) v += n_zero_ * std::log1p(-theta);
    return v;
  }

  double grad(double theta) const {
    if (theta == 0.0) return grad_at_zero();
    CompensatedSum s;
    for (double z : z_) s += z / (1.0 + theta * z);
    for (std::size_t k = 0; k < s_.bulk.z.size(); ++k)
      s += s_.bulk.w[k] * s_.bulk.z[k] / (1.0 + theta * s_.bulk.z[k]);
    s += s_.bulk.linear;
    if (n_inf_ > 0) s += n_inf_ / theta;
    if (n_zero_ > 0) s += -n_zero_ / (1.0 - theta);
    return s.value();
  }

  double hess(double theta) const {
    CompensatedSum s;
    const auto sq = [theta](double z) {
      const double q = z / (1.0 + theta * z);
      return q * q;
    };
    for (double z : z_) s += -sq(z);
    for (std::size_t k = 0; k < s_.bulk.z.size(); ++k) s += -s_.bulk.w[k] * sq(s_.bulk.z[k]);
    if (n_inf_ > 0) s += theta == 0.0 ? -kInf : -n_inf_ / (theta * theta);
    if (n_zero_ > 0) s += -n_zero_ / ((1.0 - theta) * (1.0 - theta));
    return s.value();
  }

 private:
  static double log1p_term(double theta, double z) {
    const double a = theta * z;
    if (a <= -1.0) return -kInf;
    return std::log1p(a);
  }

  const HSample& s_;
  std::vector<double> z_;
  double n_inf_ = 0.0;
  double n_zero_ = 0.0;
};

}  // namespace detail

// mean(h) > 1, decided by the sign of the compensated sum of h_i - 1.
inline bool positivity(const HSample& s) {
  detail::check_sample(s);
  return detail::Likelihood(s).grad_at_zero() > 0.0;
}

// 2 sum log(1 + theta (h_i - 1)).
inline double lr_statistic(const HSample& s, double theta) {
  detail::check_sample(s);
  if (theta == 0.0) return 0.0;
  const detail::Likelihood lik(s);
  for (double z : lik.finite_z())
    if (1.0 + theta * z <= 0.0) throw RangeError("theta makes a mixture density non-positive");
  for (double z : s.bulk.z)
    if (1.0 + theta * z <= 0.0) throw RangeError("theta makes a mixture density non-positive");
  if ((lik.n_zero() > 0 && theta >= 1.0) || (theta < 0.0 && lik.n_inf() > 0))
    throw RangeError("theta makes a mixture density non-positive");
  if (lik.n_inf() > 0) return kInf;
  return std::max(0.0, 2.0 * lik.value(theta));
}

// Maximizes l(theta) over [0, upper] using strict concavity.
inline FitResult fit_theta(const HSample& s, double upper = 1.0) {
  detail::check_sample(s);
  if (!(upper > 0.0)) throw DomainError("upper bound must be positive");
  const detail::Likelihood lik(s);
  FitResult out;
  const double n = s.n();
  out.grad_at_zero = lik.grad_at_zero();
  if (lik.flat()) {
    out.theta_hat_lo = 0.0;
    out.theta_hat_hi = upper;
    out.positive = true;
    return out;
  }
  // With h = 0 present the mixture density needs theta <= 1.
  const double cap = lik.n_zero() > 0 ? std::min(upper, 1.0) : upper;

  double theta = 0.0;
  if (!(out.grad_at_zero > 0.0)) {
    theta = 0.0;
  } else if (s.bulk.empty() && std::all_of(lik.finite_z().begin(), lik.finite_z().end(),
                                            [](double z) { return z == 0.0; })) {
    // Only 0, 1 and inf entries: n_inf log theta + n_zero log(1 - theta).
    theta = lik.n_zero() > 0 ? std::min(cap, lik.n_inf() / (lik.n_inf() + lik.n_zero())) : cap;
  } else if (!std::isfinite(cap)) {
    throw RangeError("unbounded parameter range with an increasing likelihood");
  } else if (lik.grad(cap) >= 0.0) {
    theta = cap;
  } else {
    // Safeguarded Newton on l' with the sign-change bracket [lo, hi].
    double lo = 0.0, hi = cap;
    const double hz = lik.hess(0.0);
    theta = std::isfinite(hz) && hz < 0.0 ? -out.grad_at_zero / hz : 0.5 * cap;
    if (!(theta > lo && theta < hi)) theta = 0.5 * (lo + hi);
    const double tol = 1e-10 * n;
    for (int it = 0; it < 500; ++it) {
      out.iterations = it + 1;
      const double g = lik.grad(theta);
      if (std::abs(g) < tol) break;
      if (g > 0.0) lo = theta; else hi = theta;
      double next = theta - g / lik.hess(theta);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
        theta = next;
        break;
      }
      theta = next;
    }
  }
  out.theta_hat_lo = out.theta_hat_hi = theta;
  out.positive = theta > 0.0;
  if (theta > 0.0) {
    out.lambda = lik.n_inf() > 0 ? kInf : std::max(0.0, 2.0 * lik.value(theta));
    const double hh = lik.hess(theta);
    out.wald = theta * std::sqrt(std::max(0.0, -hh));
  }
  const double h0 = lik.hess(0.0);
  out.rao = std::isfinite(h0) && h0 < 0.0 ? out.grad_at_zero / std::sqrt(-h0) : kNaN;

  // R = n mean(Z) / max Z over the explicit units and the bulk nodes.
  if (lik.n_inf() == 0) {
    double zmax = -kInf;
    for (double z : lik.finite_z()) zmax = std::max(zmax, z);
    if (lik.n_zero() > 0) zmax = std::max(zmax, -1.0);
    for (std::size_t k = 0; k < s.bulk.z.size(); ++k)
      if (s.bulk.w[k] > 0.0) zmax = std::max(zmax, s.bulk.z[k]);
    if (zmax > 0.0) out.r_stat = out.grad_at_zero / zmax;
  }
  return out;
}

struct ApproxStats {
  double r = 0.0;
  double lambda_tilde = 0.0;  // +inf when r >= 1
  double wald = 0.0;
  double rao = 0.0;
};

// 2 sum_{k >= 2} r^k / k, i.e. -2r - 2 log(1 - r), free of cancellation.
inline double approx_lr_from_r(double r) {
  if (r >= 1.0) return kInf;
  if (r <= 0.0) return 0.0;
  if (r < 0.25) {
    double term = r * r, sum = 0.0;
    for (int k = 2; k < 200; ++k) {
      sum += term / k;
      if (term < 1e-18 * sum) break;
      term *= r;
    }
    return 2.0 * sum;
  }
  return -2.0 * r - 2.0 * std::log1p(-r);
}

// Statistics of the local quadratic-free approximation of the log likelihood.
inline ApproxStats approx_stats(const HSample& s) {
  detail::check_sample(s);
  const detail::Likelihood lik(s);
  if (lik.n_inf() > 0) throw DomainError("approximate statistics need finite ratios");
  double zmax = lik.n_zero() > 0 ? -1.0 : -kInf;
  for (double z : lik.finite_z()) zmax = std::max(zmax, z);
  for (std::size_t k = 0; k < s.bulk.z.size(); ++k)
    if (s.bulk.w[k] > 0.0) zmax = std::max(zmax, s.bulk.z[k]);
  if (!(zmax > 0.0)) throw DomainError("largest centred ratio is not positive");
  ApproxStats out;
  out.r = lik.grad_at_zero() / zmax;
  out.lambda_tilde = approx_lr_from_r(out.r);
  out.wald = out.rao = out.r;
  return out;
}

struct ActivityRates {
  std::vector<double> rates;
  double max_rate = 0.0;
  double min_fdr = 1.0;  // smallest local false discovery rate, 1 - max_rate
};

// theta h_i / (1 - theta + theta h_i) for each explicit unit.
inline ActivityRates activity_rates(const HSample& s, double theta) {
  detail::check_sample(s);
  ActivityRates out;
  out.rates.reserve(s.h.size());
  for (double h : s.h) {
    double r;
    if (theta == 0.0) r = 0.0;
    else if (h == kInf) r = 1.0;
    else {
      const double den = 1.0 + theta * (h - 1.0);
      if (den <= 0.0) throw RangeError("theta makes a mixture density non-positive");
      r = theta * h / den;
    }
    out.rates.push_back(r);
    out.max_rate = std::max(out.max_rate, r);
  }
  out.min_fdr = 1.0 - out.max_rate;
  return out;
}

// Mean of the conditioned LR statistics; +inf sentinels are excluded.
inline double bartlett_factor(const std::vector<double>& lambdas) {
  CompensatedSum s;
  std::size_t count = 0;
  for (double v : lambdas) {
    if (std::isnan(v)) throw InputError("NaN LR statistic");
    if (!std::isfinite(v)) continue;
    s += v;
    ++count;
  }
  if (count == 0) throw InputError("no finite LR statistics");
  return s.value() / static_cast<double>(count);
}

}  // namespace bmix
