#pragma once

// Generator pairs (F0, F1) of a binary mixture: densities, the density ratio
// h = f1 / f0 in log space, samplers, and the extended-parameter bounds.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "bmix/asymptotics.hpp"
#include "bmix/errors.hpp"
#include "bmix/numeric.hpp"
#include "bmix/rng.hpp"
#include "bmix/zeta.hpp"

namespace bmix {

struct SupportFlags {
  bool equal_supports = true;
  bool symmetric = true;
};

struct GeneratorPair {
  std::string name;
  std::function<double(double)> log_f0;
  std::function<double(double)> log_f1;
  std::function<double(Rng&)> sample_f0;
  std::function<double(Rng&)> sample_f1;
  // Null-distribution tail of h(X) in the slowly varying parametrization.
  std::optional<SlowVariationParams> tail_model;
  SupportFlags support_flags;
  // f0 is N(0, 1) and h is even and bounded on compact sets, so samples can
  // be split into |X| order statistics and a bounded bulk.
  bool normal_null_bounded_h = false;
  // Limit of P0(theta_hat > 0) when it is known in closed form.
  std::optional<double> null_limit;
  // Points where a density has a kink or a singularity; used by quadrature.
  std::vector<double> breakpoints{0.0};
  // Support of f0 and f1 combined.
  double support_lo = -kInf;
  double support_hi = kInf;
  // log h in closed form when f1 / f0 simplifies; avoids cancelling two
  // large log densities far out.
  std::function<double(double)> log_ratio;
};

struct ThetaBounds {
  double theta_min = 0.0;
  double theta_max = 1.0;
  double argmin_x = kNaN;  // where theta_min is attained
  double argmax_x = kNaN;  // where theta_max is attained
};

// log h(x); +-inf where exactly one density vanishes.
inline double log_density_ratio(const GeneratorPair& pair, double x) {
  if (pair.log_ratio) return pair.log_ratio(x);
  const double l0 = pair.log_f0(x), l1 = pair.log_f1(x);
  if (l0 == -kInf && l1 == -kInf) throw DomainError("both densities vanish at x");
  if (l0 == -kInf) return kInf;
  if (l1 == -kInf) return -kInf;
  return l1 - l0;
}

namespace detail {

// log(a e^{la} - b e^{lb}) for a, b >= 0; -inf when the difference is zero
// within rounding, since the mixture density then vanishes.
inline double log_diff(double la, double lb) {
  if (lb == -kInf) return la;
  if (la <= lb) return -kInf;
  const double r = std::exp(lb - la);
  if (r > 1.0 - 1e-12) return -kInf;
  return la + std::log1p(-r);
}

inline double log_sum(double la, double lb) {
  if (la == -kInf) return lb;
  if (lb == -kInf) return la;
  const double m = std::max(la, lb);
  return m + std::log(std::exp(la - m) + std::exp(lb - m));
}

}  // namespace detail

// Bounds by a grid scan of |x| <= 50 followed by golden-section refinement.
inline ThetaBounds theta_bounds(const GeneratorPair& pair) {
  if (!pair.support_flags.equal_supports) return {0.0, 1.0, kNaN, kNaN};
  const double lo = std::max(-50.0, pair.support_lo), hi = std::min(50.0, pair.support_hi);
  const std::size_t points = 200001;
  std::vector<double> xs = linspace(lo, hi, points);
  double min_lh = kInf, max_lh = -kInf;
  std::size_t imin = 0, imax = 0;
  bool all_one = true;
  for (std::size_t i = 0; i < points; ++i) {
    const double lh = log_density_ratio(pair, xs[i]);
    if (lh != 0.0) all_one = false;
    // Prefer x >= 0 among ties so symmetric pairs report the positive point.
    if (lh < min_lh || (lh == min_lh && xs[i] >= 0.0 && xs[imin] < 0.0)) {
      min_lh = lh;
      imin = i;
    }
    if (lh > max_lh || (lh == max_lh && xs[i] >= 0.0 && xs[imax] < 0.0)) {
      max_lh = lh;
      imax = i;
    }
  }
  if (all_one) throw DegeneracyError("h is identically 1: the generators coincide");
  const auto lh_at = [&](double x) { return log_density_ratio(pair, x); };
  const auto refine = [&](std::size_t i, double sign) {
    const double a = xs[i == 0 ? 0 : i - 1], b = xs[std::min(points - 1, i + 1)];
    const double x = golden_section_minimize(
        [&](double t) { return sign * lh_at(t); }, a, b, 1e-10);
    return sign * lh_at(x) < sign * lh_at(xs[i]) ? x : xs[i];
  };
  // An extremum on the edge of the scan is followed outward by decades; a
  // ratio still moving when x leaves the representable range is unbounded.
  const auto follow = [&](std::size_t i, double dir, double& lh_out) {
    double x = xs[i], best = lh_at(x);
    if (i != 0 && i != points - 1) return false;
    for (;;) {
      const double next = x * 10.0;
      if (!std::isfinite(next) || next <= pair.support_lo || next >= pair.support_hi) {
        lh_out = dir * kInf;
        return true;
      }
      double v = kNaN;
      try {
        v = lh_at(next);
      } catch (const DomainError&) {
      }
      if (std::isnan(v)) {
        lh_out = dir * kInf;  // both densities underflow while h still moves
        return true;
      }
      if (dir * v <= dir * best) break;
      best = v;
      x = next;
    }
    lh_out = best;
    return true;
  };
  ThetaBounds out;
  if (double lim = 0.0; min_lh < 0.0 && follow(imin, -1.0, lim)) {
    out.theta_max = 1.0 / (1.0 - std::exp(lim));
    out.argmax_x = lim == -kInf ? std::copysign(kInf, xs[imin]) : kNaN;
  } else if (min_lh < 0.0) {
    const double x = std::isfinite(min_lh) ? refine(imin, 1.0) : xs[imin];
    const double h = std::exp(lh_at(x));
    out.theta_max = 1.0 / (1.0 - h);
    out.argmax_x = x;
  } else {
    out.theta_max = kInf;
  }
  if (double lim = 0.0; max_lh > 0.0 && follow(imax, 1.0, lim)) {
    out.theta_min = lim == kInf ? 0.0 : -std::exp(-lim - std::log(-std::expm1(-lim)));
    out.argmin_x = lim == kInf ? std::copysign(kInf, xs[imax]) : kNaN;
  } else if (max_lh > 0.0) {
    const double x = std::isfinite(max_lh) ? refine(imax, -1.0) : xs[imax];
    // -1 / (h - 1) with h - 1 = e^{lh} (1 - e^{-lh}).
    const double lh = lh_at(x);
    out.theta_min = -std::exp(-lh - std::log(-std::expm1(-lh)));
    if (out.theta_min == 0.0) out.theta_min = 0.0;  // drop the sign of -0
    out.argmin_x = x;
  } else {
    out.theta_min = -kInf;
  }
  return out;
}

// log[(1 - theta) f0(x) + theta f1(x)] for theta within the pair's bounds.
inline double mixture_log_density(const GeneratorPair& pair, const ThetaBounds& bounds,
                                  double theta, double x) {
  const double tol = 1e-12 * std::max(1.0, std::abs(theta));
  if (!(theta >= bounds.theta_min - tol && theta <= bounds.theta_max + tol))
    throw RangeError("theta outside [theta_min, theta_max]");
  const double l0 = pair.log_f0(x), l1 = pair.log_f1(x);
  if (theta == 0.0) return l0;
  if (theta == 1.0) return l1;
  if (theta > 1.0) return detail::log_diff(std::log(theta) + l1, std::log(theta - 1.0) + l0);
  if (theta < 0.0) return detail::log_diff(std::log1p(-theta) + l0, std::log(-theta) + l1);
  return detail::log_sum(std::log1p(-theta) + l0, std::log(theta) + l1);
}

inline double mixture_log_density(const GeneratorPair& pair, double theta, double x) {
  return mixture_log_density(pair, theta_bounds(pair), theta, x);
}

// m(y) = int phi(y - x) g(x) dx; the Gaussian factor confines the mass to
// |x - y| < 40.
inline double convolve_density(const std::function<double(double)>& g, double y,
                               std::vector<double> breaks = {0.0}) {
  std::vector<double> pts{y - 40.0, y, y + 40.0};
  for (double b : breaks)
    if (b > y - 40.0 && b < y + 40.0) pts.push_back(b);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  const auto f = [&](double x) { return std::exp(normal_log_pdf(y - x)) * g(x); };
  CompensatedSum s;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    // Subdivide so each panel spans a few standard deviations of phi.
    const int pieces = static_cast<int>(std::ceil((pts[i + 1] - pts[i]) / 2.0));
    for (int k = 0; k < pieces; ++k) {
      const double a = pts[i] + (pts[i + 1] - pts[i]) * k / pieces;
      const double b = pts[i] + (pts[i + 1] - pts[i]) * (k + 1) / pieces;
      s += integrate(f, a, b, 1e-12, 1e-300);
    }
  }
  return s.value();
}

// Integral of exp(log_f) over [a, b]; tanh-sinh and exp-sinh rules absorb
// integrable endpoint singularities and heavy tails.
inline double mass_between(const std::function<double(double)>& log_f, double a, double b) {
  const auto f = [&](double x) {
    const double v = std::exp(log_f(x));
    return std::isfinite(v) ? v : 0.0;
  };
  double err = 0.0, l1 = 0.0, v = 0.0;
  if (std::isinf(a) && std::isinf(b)) {
    return mass_between(log_f, a, 0.0) + mass_between(log_f, 0.0, b);
  } else if (std::isinf(b)) {
    v = boost::math::quadrature::exp_sinh<double>().integrate(
        [&](double t) { return f(a + t); }, 0.0, kInf, 1e-13, &err, &l1);
  } else if (std::isinf(a)) {
    v = boost::math::quadrature::exp_sinh<double>().integrate(
        [&](double t) { return f(b - t); }, 0.0, kInf, 1e-13, &err, &l1);
  } else {
    v = boost::math::quadrature::tanh_sinh<double>().integrate(f, a, b, 1e-13, &err, &l1);
  }
  if (!std::isfinite(v) || err > 1e-10 * std::max(l1, 1e-300)) {
    std::ostringstream msg;
    msg << "mass quadrature did not converge on [" << a << ", " << b << "]: value " << v
        << ", error estimate " << err;
    throw NumericError(msg.str());
  }
  return v;
}

// Integral of exp(log_f) over the pair's support, split at its breakpoints.
inline double total_mass(const GeneratorPair& pair, const std::function<double(double)>& log_f) {
  std::vector<double> pts{pair.support_lo};
  for (double b : pair.breakpoints)
    if (b > pair.support_lo && b < pair.support_hi) pts.push_back(b);
  pts.push_back(pair.support_hi);
  std::sort(pts.begin(), pts.end());
  CompensatedSum s;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) s += mass_between(log_f, pts[i], pts[i + 1]);
  return s.value();
}

namespace detail {

inline double random_sign(Rng& rng) { return rng.uniform() < 0.5 ? -1.0 : 1.0; }

inline double gamma_draw(Rng& rng, double shape) {
  return std::gamma_distribution<double>(shape, 1.0)(rng);
}

inline GeneratorPair gauss_base(std::string name) {
  GeneratorPair p;
  p.name = std::move(name);
  p.log_f0 = normal_log_pdf;
  p.sample_f0 = [](Rng& rng) { return rng.normal(); };
  p.normal_null_bounded_h = true;
  return p;
}

// Tail of h(X) when f1(x) ~ c |x|^{-(nu+1)}: P0(h > eta) ~ 2 c (2 log eta)^{-(nu+2)/2} / eta,
// i.e. beta1 = 0, delta = nu / 2 and beta0 = 2 (pi c)^{-1/(delta+1)}.
inline SlowVariationParams power_tail_model(double nu, double c) {
  SlowVariationParams s;
  s.delta = nu / 2.0;
  s.beta0 = 2.0 * std::pow(kPi * c, -1.0 / (s.delta + 1.0));
  return s;
}

}  // namespace detail

inline GeneratorPair gauss_cauchy() {
  auto p = detail::gauss_base("gauss_cauchy");
  p.log_f1 = [](double x) { return -std::log(kPi) - std::log1p(x * x); };
  p.sample_f1 = [](Rng& rng) { return std::tan(kPi * (rng.uniform() - 0.5)); };
  p.tail_model = SlowVariationParams{2.0, 0.0, 0.5, 0.0};
  p.null_limit = 0.0;
  return p;
}

// f1(x) = c exp(-|x|^{2 kappa}) with c = 1 / (2 Gamma(1 + 1/(2 kappa))).
inline GeneratorPair gauss_regvar(double kappa) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw DomainError("kappa must lie in (0, 1)");
  std::ostringstream name;
  name << "gauss_regvar(" << kappa << ")";
  auto p = detail::gauss_base(name.str());
  const double log_c = -std::log(2.0) - std::lgamma(1.0 + 1.0 / (2.0 * kappa));
  p.log_f1 = [=](double x) { return log_c - std::pow(std::abs(x), 2.0 * kappa); };
  p.sample_f1 = [=](Rng& rng) {
    return detail::random_sign(rng) *
           std::pow(detail::gamma_draw(rng, 1.0 / (2.0 * kappa)), 1.0 / (2.0 * kappa));
  };
  const double c = std::exp(log_c);
  p.tail_model = SlowVariationParams{2.0 / ((c * kPi) * (c * kPi)), 2.0, -0.5, kappa};
  p.null_limit = 0.0;
  return p;
}

inline GeneratorPair gauss_laplace() {
  auto p = gauss_regvar(0.5);
  p.name = "gauss_laplace";
  p.log_f1 = [](double x) { return -std::log(2.0) - std::abs(x); };
  p.sample_f1 = [](Rng& rng) { return detail::random_sign(rng) * rng.exponential(); };
  return p;
}

// Student t on nu degrees of freedom with scale sigma.
inline GeneratorPair gauss_t(double nu, double sigma = 1.0) {
  if (!(nu > 0.0 && sigma > 0.0)) throw DomainError("t parameters must be positive");
  std::ostringstream name;
  name << "gauss_t(" << nu << "," << sigma << ")";
  auto p = detail::gauss_base(name.str());
  const double log_c = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) -
                       0.5 * std::log(nu * kPi) - std::log(sigma);
  p.log_f1 = [=](double x) {
    const double z = x / sigma;
    return log_c - (nu + 1.0) / 2.0 * std::log1p(z * z / nu);
  };
  p.sample_f1 = [=](Rng& rng) {
    const double chi2 = 2.0 * detail::gamma_draw(rng, nu / 2.0);
    return sigma * rng.normal() / std::sqrt(chi2 / nu);
  };
  // f1(x) ~ c x^{-(nu+1)} with c = exp(log_c) (nu sigma^2)^{(nu+1)/2}.
  const double c = std::exp(log_c + (nu + 1.0) / 2.0 * std::log(nu * sigma * sigma));
  p.tail_model = detail::power_tail_model(nu, c);
  p.null_limit = 0.0;
  return p;
}

// f1(x) = |x|^nu phi(x) / E|X|^nu, nu > -1; h(x) = |x|^nu / E|X|^nu.
inline GeneratorPair gauss_powerphi(double nu) {
  if (!(nu > -1.0)) throw DomainError("nu must exceed -1");
  std::ostringstream name;
  name << "gauss_powerphi(" << nu << ")";
  auto p = detail::gauss_base(name.str());
  const double log_m = nu / 2.0 * std::log(2.0) + std::lgamma((nu + 1.0) / 2.0) - 0.5 * std::log(kPi);
  p.log_f1 = [=](double x) {
    if (nu == 0.0) return normal_log_pdf(x);
    return nu * std::log(std::abs(x)) - log_m + normal_log_pdf(x);
  };
  if (nu != 0.0) p.log_ratio = [=](double x) { return nu * std::log(std::abs(x)) - log_m; };
  p.sample_f1 = [=](Rng& rng) {
    return detail::random_sign(rng) * std::sqrt(2.0 * detail::gamma_draw(rng, (nu + 1.0) / 2.0));
  };
  // h unbounded at the origin for nu < 0.
  p.normal_null_bounded_h = nu >= 0.0;
  // Normal domain for nu >= -1/2; otherwise index alpha = -1/nu with limit 1 - 1/alpha.
  p.null_limit = nu >= -0.5 ? 0.5 : 1.0 + nu;
  return p;
}

// F0 uniform on (0, 2), F1 uniform on (1, 3).
inline GeneratorPair uniform_shift() {
  GeneratorPair p;
  p.name = "uniform_shift";
  p.log_f0 = [](double x) { return x > 0.0 && x < 2.0 ? -std::log(2.0) : -kInf; };
  p.log_f1 = [](double x) { return x > 1.0 && x < 3.0 ? -std::log(2.0) : -kInf; };
  p.sample_f0 = [](Rng& rng) { return 2.0 * rng.uniform(); };
  p.sample_f1 = [](Rng& rng) { return 1.0 + 2.0 * rng.uniform(); };
  p.support_flags = {false, false};
  p.breakpoints = {1.0, 2.0};
  p.support_lo = 0.0;
  p.support_hi = 3.0;
  return p;
}

// f1 = psi_nu = phi zeta_nu.
inline GeneratorPair gauss_psi(double nu) {
  auto fam = std::make_shared<const ZetaFamily>(nu);
  std::ostringstream name;
  name << "gauss_psi(" << nu << ")";
  auto p = detail::gauss_base(name.str());
  p.log_f1 = [fam](double x) { return fam->log_psi(x); };
  p.sample_f1 = [fam](Rng& rng) { return fam->sample(rng); };
  p.log_ratio = [fam](double x) { return fam->log_zeta(x); };
  if (nu < 2.0) {
    p.tail_model = detail::power_tail_model(nu, fam->tail_constant());
    p.null_limit = 0.0;
  } else {
    p.null_limit = 0.5;
  }
  return p;
}

// Names accepted by find_pair; parameterized entries take "name(a,b)".
inline std::vector<std::string> builtin_pair_names() {
  return {"gauss_cauchy", "gauss_laplace", "gauss_t",     "gauss_powerphi",
          "gauss_regvar", "uniform_shift", "gauss_psi"};
}

inline GeneratorPair find_pair(const std::string& spec) {
  std::string name = spec;
  std::vector<double> args;
  if (const auto open = spec.find('('); open != std::string::npos) {
    if (spec.back() != ')') throw LookupError("malformed pair spec: " + spec);
    name = spec.substr(0, open);
    std::stringstream ss(spec.substr(open + 1, spec.size() - open - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        args.push_back(std::stod(item, &used));
        if (item.find_first_not_of(' ', used) != std::string::npos) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw LookupError("bad numeric argument in pair spec: " + spec);
      }
    }
  }
  const auto arg = [&](std::size_t i, double fallback) { return i < args.size() ? args[i] : fallback; };
  const auto max_args = [&](std::size_t k) {
    if (args.size() > k) throw LookupError("too many arguments in pair spec: " + spec);
  };
  if (name == "gauss_cauchy") { max_args(0); return gauss_cauchy(); }
  if (name == "gauss_laplace") { max_args(0); return gauss_laplace(); }
  if (name == "uniform_shift") { max_args(0); return uniform_shift(); }
  if (name == "gauss_t") { max_args(2); return gauss_t(arg(0, 3.0), arg(1, 1.0)); }
  if (name == "gauss_powerphi") { max_args(1); return gauss_powerphi(arg(0, 1.0)); }
  if (name == "gauss_regvar") { max_args(1); return gauss_regvar(arg(0, 0.25)); }
  if (name == "gauss_psi") { max_args(1); return gauss_psi(arg(0, 1.0)); }
  throw LookupError("unknown generator pair: " + spec);
}

// The catalog with default parameters, keyed by name.
inline std::map<std::string, GeneratorPair> builtin_pairs() {
  std::map<std::string, GeneratorPair> out;
  for (const auto& n : builtin_pair_names()) out.emplace(n, find_pair(n));
  return out;
}

}  // namespace bmix
