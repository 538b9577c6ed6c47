#pragma once

// The inverse-power family psi_nu = phi * zeta_nu, 0 < nu <= 2, whose tails
// are regularly varying with index -nu.

#include <algorithm>
#include <cmath>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "bmix/errors.hpp"
#include "bmix/numeric.hpp"
#include "bmix/rng.hpp"

namespace bmix {

namespace detail {

// Leading factor of psi_nu(x) x^{nu+1} / K_nu: E[(1 + e/x)^{-(nu+1)}] for
// e ~ N(0,1), summed as an asymptotic series until its terms stop shrinking.
inline double zeta_tail_factor(double nu, double x) {
  const double p = nu + 1.0, ix2 = 1.0 / (x * x);
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 60; ++k) {
    const double next = term * (p + 2 * k - 2) * (p + 2 * k - 1) * ix2 / (2.0 * k);
    if (next >= term || next < 1e-18 * sum) {
      if (next < term) sum += next;
      break;
    }
    term = next;
    sum += term;
  }
  return sum;
}

// Integral of u^{-(nu+1)} zeta_tail_factor(nu, u) over (x, inf), termwise.
inline double zeta_tail_integral(double nu, double x) {
  const double p = nu + 1.0, ix2 = 1.0 / (x * x);
  const double base = std::pow(x, -nu);
  double sum = 1.0 / nu, coef = 1.0, prev = kInf;
  for (int k = 1; k < 60; ++k) {
    coef *= (p + 2 * k - 2) * (p + 2 * k - 1) * ix2 / (2.0 * k);
    const double term = coef / (nu + 2.0 * k);
    if (term >= prev || term < 1e-18 * sum) break;
    sum += term;
    prev = term;
  }
  return base * sum;
}

}  // namespace detail

class ZetaFamily {
 public:
  explicit ZetaFamily(double nu) : nu_(nu) {
    if (!(nu > 0.0 && nu <= 2.0)) throw DomainError("nu must lie in (0, 2]");
    if (nu_ == 2.0) return;
    count_series_terms();
    fit_tail_constant();
    find_crossover();
    build_table();
  }

  double nu() const { return nu_; }
  double tail_constant() const { return k_nu_; }
  double crossover() const { return crossover_; }
  int series_terms() const { return series_terms_; }

  // Closed form of the tail constant, used only as a cross-check of the fit.
  static double tail_constant_exact(double nu) {
    return nu * (2.0 - nu) * std::pow(2.0, nu / 2.0) / (4.0 * std::tgamma(2.0 - nu / 2.0));
  }

  double zeta(double x) const {
    x = std::abs(x);
    if (nu_ == 2.0) return x * x;
    if (x <= 12.0) return series(x);
    return std::exp(log_zeta(x));
  }

  double log_zeta(double x) const {
    x = std::abs(x);
    if (nu_ == 2.0) return 2.0 * std::log(x);
    if (x <= 12.0) return std::log(series(x));
    if (x < crossover_) return log_series(x);
    return log_psi_asymptotic(x) - normal_log_pdf(x);
  }

  double log_psi(double x) const {
    x = std::abs(x);
    // The power branch is evaluated directly; adding and removing the
    // Gaussian log density would cancel catastrophically for large x.
    if (nu_ != 2.0 && x >= crossover_) return log_psi_asymptotic(x);
    return normal_log_pdf(x) + log_zeta(x);
  }
  double psi(double x) const { return std::exp(log_psi(x)); }

  // Psi-bar(x) = P(X > x).
  double survival(double x) const {
    if (x < 0.0) return 1.0 - survival(-x);
    if (nu_ == 2.0) {
      // int_x^inf u^2 phi(u) du = x phi(x) + Phi-bar(x)
      return x * std::exp(normal_log_pdf(x)) + 0.5 * std::erfc(x / std::sqrt(2.0));
    }
    if (x >= crossover_) return upper_tail(x);
    const std::size_t i = std::min(table_.size() - 2,
                                   static_cast<std::size_t>(x / kStep));
    const double edge = kStep * static_cast<double>(i);
    return table_[i] - cell_mass(edge, x);
  }

  // Inverse of survival by bracketed bisection on the tabulated masses.
  double sample(Rng& rng) const {
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    if (nu_ == 2.0) {
      // x^2 phi(x) restricted to x > 0 is the chi law with 3 degrees of freedom.
      const double a = rng.normal(), b = rng.normal(), c = rng.normal();
      return sign * std::sqrt(a * a + b * b + c * c);
    }
    const double q = 0.5 * rng.uniform();
    return sign * inverse_survival(q);
  }

  double inverse_survival(double q) const {
    if (!(q > 0.0 && q <= 0.5)) throw DomainError("level must lie in (0, 1/2]");
    if (q <= upper_tail(crossover_)) {
      double lo = crossover_, hi = 2.0 * crossover_;
      while (upper_tail(hi) > q) hi *= 2.0;
      return bisect([&](double x) { return upper_tail(x) - q; }, lo, hi, 1e-15);
    }
    // Largest i with table_[i] >= q, then safeguarded Newton inside the cell.
    const auto it = std::lower_bound(table_.rbegin(), table_.rend(), q);
    const std::size_t i = table_.size() - 1 - static_cast<std::size_t>(it - table_.rbegin());
    double lo = kStep * static_cast<double>(i);
    double hi = std::min(crossover_, lo + kStep);
    const double top = table_[i];
    double x = lo + (hi - lo) * (top - q) / std::max(top - table_[i + 1], 1e-300);
    for (int iter = 0; iter < 100; ++iter) {
      const double r = top - cell_mass(kStep * static_cast<double>(i), x) - q;
      if (r > 0) lo = x; else hi = x;
      double next = x + r / psi(x);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - x) <= 1e-15 * std::max(1.0, x) || hi - lo <= 1e-15 * hi) return next;
      x = next;
    }
    return x;
  }

 private:
  static constexpr double kStep = 0.05;

  // Mass of psi on [a, b] inside one table cell.
  double cell_mass(double a, double b) const {
    return boost::math::quadrature::gauss<double, 10>::integrate(
        [this](double u) { return psi(u); }, a, b);
  }

  // Positive-term series with t_1 = nu x^2 / 2 and
  // t_{r+1} / t_r = 2 (r - nu/2) x^2 / ((2r + 1)(2r + 2)).
  double series(double x) const {
    const double x2 = x * x;
    double term = nu_ * x2 / 2.0, sum = term;
    for (int r = 1; r < 100000; ++r) {
      term *= 2.0 * (r - nu_ / 2.0) * x2 / ((2.0 * r + 1.0) * (2.0 * r + 2.0));
      sum += term;
      if (term < 1e-16 * sum) break;
    }
    return sum;
  }

  void count_series_terms() {
    const double x2 = 144.0;
    double term = nu_ * x2 / 2.0, sum = term;
    for (series_terms_ = 1; term >= 1e-16 * sum; ++series_terms_) {
      term *= 2.0 * (series_terms_ - nu_ / 2.0) * x2 /
              ((2.0 * series_terms_ + 1.0) * (2.0 * series_terms_ + 2.0));
      sum += term;
    }
  }

  double log_series(double x) const {
    const double x2 = x * x;
    double lt = std::log(nu_ * x2 / 2.0), lmax = lt;
    std::vector<double> logs{lt};
    for (int r = 1; r < 1000000; ++r) {
      lt += std::log(2.0 * (r - nu_ / 2.0) * x2 / ((2.0 * r + 1.0) * (2.0 * r + 2.0)));
      logs.push_back(lt);
      lmax = std::max(lmax, lt);
      if (lt < lmax - 40.0) break;
    }
    CompensatedSum s;
    for (double l : logs) s += std::exp(l - lmax);
    return lmax + std::log(s.value());
  }

  double log_psi_asymptotic(double x) const {
    return std::log(k_nu_) - (nu_ + 1.0) * std::log(x) +
           std::log(detail::zeta_tail_factor(nu_, x));
  }

  double upper_tail(double x) const { return k_nu_ * detail::zeta_tail_integral(nu_, x); }

  // Plateau average of psi(x) x^{nu+1} / factor(x) over [30, 100].
  void fit_tail_constant() {
    CompensatedSum s;
    int count = 0;
    for (double x = 30.0; x <= 100.0; x += 2.0) {
      const double lp = normal_log_pdf(x) + log_series(x);
      s += std::exp(lp + (nu_ + 1.0) * std::log(x)) / detail::zeta_tail_factor(nu_, x);
      ++count;
    }
    k_nu_ = s.value() / count;
  }

  // First x >= 12 where the log-space series and the power branch agree to 1e-8.
  void find_crossover() {
    crossover_ = kInf;
    for (double x = 12.0; x <= 60.0; x += 0.25) {
      const double a = log_series(x);
      const double b = log_psi_asymptotic(x) - normal_log_pdf(x);
      if (std::abs(a - b) < 1e-8) {
        crossover_ = x;
        return;
      }
    }
    throw NumericError("zeta_nu: series and power-law branches never agree below x = 60");
  }

  // table_[i] = survival(i * kStep) for i * kStep up to the crossover.
  void build_table() {
    const std::size_t cells = static_cast<std::size_t>(std::ceil(crossover_ / kStep));
    std::vector<double> mass(cells);
    for (std::size_t i = 0; i < cells; ++i) {
      const double a = kStep * static_cast<double>(i);
      const double b = std::min(crossover_, a + kStep);
      mass[i] = cell_mass(a, b);
    }
    table_.assign(cells + 1, 0.0);
    table_[cells] = upper_tail(crossover_);
    for (std::size_t i = cells; i-- > 0;) table_[i] = table_[i + 1] + mass[i];
  }

  double nu_;
  double k_nu_ = 0.0;
  double crossover_ = kInf;
  int series_terms_ = 0;
  std::vector<double> table_;
};

inline double zeta_nu(double x, double nu) { return ZetaFamily(nu).zeta(x); }

}  // namespace bmix
