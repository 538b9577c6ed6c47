// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is 0 only when every criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "bmix/composite.hpp"
#include "bmix/generators.hpp"
#include "bmix/inference.hpp"
#include "bmix/simlab.hpp"
#include "bmix/stable_laws.hpp"

using namespace bmix;

namespace {

struct Outcome {
  bool pass = false;
  std::vector<std::string> details;
};

std::string fmt(const char* f, double a) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

template <class... T>
std::string fmtn(const char* f, T... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

// 1. positivity(h) iff fit_theta(h).positive.
Outcome exact_event_equivalence() {
  Outcome o;
  const std::vector<std::string> pairs{"gauss_cauchy", "gauss_laplace", "gauss_t(3,1)",
                                       "gauss_powerphi(1)", "gauss_powerphi(-0.75)",
                                       "uniform_shift", "gauss_psi(1)", "gauss_regvar(0.75)"};
  std::vector<GeneratorPair> gp;
  for (const auto& p : pairs) gp.push_back(find_pair(p));
  const std::size_t samples = 100000;
  std::size_t mismatches = 0, flat = 0, positives = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    Rng rng(101, i);
    const auto& pair = gp[i % gp.size()];
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform() * 50.0);
    const bool from_f1 = rng.uniform() < 0.3;
    std::vector<double> h(n);
    bool all_one = true;
    for (auto& v : h) {
      const double x = from_f1 ? pair.sample_f1(rng) : pair.sample_f0(rng);
      v = std::exp(log_density_ratio(pair, x));
      all_one = all_one && v == 1.0;
    }
    // A flat likelihood (every h = 1) is outside the fit's precondition.
    if (all_one) {
      ++flat;
      continue;
    }
    const bool a = positivity(h), b = fit_theta(h).positive;
    positives += a;
    mismatches += a != b;
  }
  o.pass = mismatches == 0;
  o.details.push_back(fmtn("samples=%zu mismatches=%zu positive=%zu flat_excluded=%zu", samples,
                           mismatches, positives, flat));
  return o;
}

// 2. Uniform shift: P0(theta_hat > 0) = 2^-n.
Outcome unequal_supports() {
  Outcome o;
  ExperimentConfig c;
  c.pair = "uniform_shift";
  c.n_grid = {10};
  c.replicates = 1000000;
  c.master_seed = 2;
  const auto p = boundary_rate_experiment(c).points[0];
  const double target = std::ldexp(1.0, -10);
  const double se_theory = std::sqrt(target * (1 - target) / c.replicates);
  o.pass = std::abs(p.p_hat - target) <= 3.0 * p.se;
  o.details.push_back(fmtn("p_hat=%.6g target=%.6g se=%.3g (se at target %.3g) z=%.2f", p.p_hat,
                           target, p.se, se_theory, (p.p_hat - target) / p.se));
  return o;
}

// 3. G quantile/cdf round trip, cumulants, Taylor remark.
Outcome g_law_internals() {
  Outcome o;
  double worst = 0.0;
  for (int i = 1; i <= 999; ++i) {
    const double u = i / 1000.0;
    worst = std::max(worst, std::abs(GLaw::cdf(GLaw::quantile(u)) - u));
  }
  const auto k = GLaw::cumulants();
  const double want[4] = {1.0, 7.0 / 3.0, 32.0 / 3.0, 3194.0 / 45.0};
  double kerr = 0.0;
  for (int i = 0; i < 4; ++i) kerr = std::max(kerr, std::abs(k[i] - want[i]));
  const auto t = g_sqrt_logpdf_taylor_check(3.0);
  o.pass = worst <= 1e-10 && kerr <= 1e-6 && t.max_abs_deviation < 0.01;
  o.details.push_back(fmt("round trip max |F(Q(u)) - u| = %.3g", worst));
  o.details.push_back(fmtn("cumulants %.10g %.10g %.10g %.10g (max err %.3g)", k[0], k[1], k[2],
                           k[3], kerr));
  o.details.push_back(fmtn("Taylor on (0,3): max |difference| = %.4g at x=%.3f; pointwise relative %.4g",
                           t.max_abs_deviation, t.worst_x, t.max_rel_deviation));
  return o;
}

// 4. Skew-Cauchy normalization, P(X < 0), tail constant.
Outcome skew_cauchy_numerics() {
  Outcome o;
  const double A = 1e6;
  std::vector<double> pts{0.0};
  for (double b = 1.0; b <= A; b *= 4.0) {
    pts.push_back(b);
    pts.insert(pts.begin(), -b);
  }
  const auto pdf = [](double x) { return skew_cauchy_pdf(x, 1.0); };
  const double body = integrate_panels(pdf, pts, 1e-10);
  // Beyond +-A the density is 2/(pi x^2) on the right and negligible on the left.
  const double mass = body + 2.0 / (kPi * pts.back());
  const double below = skew_cauchy_cdf_below_zero(1.0);
  const double tail = 1e6 * skew_cauchy_pdf(1e3, 1.0) / (2.0 / kPi);
  o.pass = std::abs(mass - 1.0) <= 1e-6 && std::abs(below - 0.3652) <= 5e-4 &&
           std::abs(tail - 1.0) <= 0.05;
  o.details.push_back(fmt("total mass = %.10f", mass));
  o.details.push_back(fmt("P(X<0) = %.6f", below));
  o.details.push_back(fmt("x^2 f(x) / (2/pi) at x=1e3 = %.5f", tail));
  return o;
}

// 5. Stable negativity by formula and by centered Pareto sums.
Outcome stable_negativity_check() {
  Outcome o;
  const double formula = stable_negativity(StableSpec(1.5, 1.0));
  const auto mc = pareto_mean_exceedance(1.5, 10000, 20000, 5);
  o.pass = std::abs(formula - 1.0 / 1.5) < 1e-6 && std::abs(mc.p_hat - 1.0 / 3.0) <= 0.02;
  o.details.push_back(fmt("P_{1.5,1}(X<0) formula = %.8f (1/alpha = 0.66666667)", formula));
  o.details.push_back(fmtn("Pareto(1.5) n=1e4 reps=2e4: P(mean > mu) = %.4f +- %.4f (target 1/3)",
                           mc.p_hat, mc.se));
  return o;
}

// 6. Boundary rate curves for Gauss-Cauchy and Gauss-Laplace.
Outcome fig3_rates() {
  Outcome o;
  o.pass = true;
  for (const std::string pair : {"gauss_cauchy", "gauss_laplace"}) {
    ExperimentConfig c;
    c.pair = pair;
    c.n_grid = {1e3, 1e4, 1e5};
    c.replicates = 20000;
    c.master_seed = 6;
    const auto r = boundary_rate_experiment(c);
    double prev = 1.0;
    for (const auto& p : r.points) {
      const double ln = std::log(p.n);
      const double target = pair == "gauss_cauchy" ? 1.0 / (2.0 * ln) : 1.0 / std::sqrt(2.0 * ln);
      const double ratio = p.p_hat / target;
      const bool ok = ratio >= 0.6 && ratio <= 1.4 && p.p_hat < prev;
      o.pass = o.pass && ok;
      prev = p.p_hat;
      o.details.push_back(fmtn("%s n=%.0e p_hat=%.5f se=%.5f target=%.5f ratio=%.3f library_theory=%.5f %s",
                               pair.c_str(), p.n, p.p_hat, p.se, target, ratio, p.theory,
                               ok ? "ok" : "out"));
    }
  }
  return o;
}

// 7. Conditional law of the LR statistic, Gauss-Cauchy at n = 1e5.
Outcome fig4_lr_law() {
  Outcome o;
  int g_wins = 0;
  bool ks_ok = true, kappa_ok = true;
  for (int seed = 1; seed <= 10; ++seed) {
    ExperimentConfig c;
    c.pair = "gauss_cauchy";
    c.n_grid = {1e5};
    c.replicates = 400000;
    c.conditioning = Conditioning::positivity;
    c.target_conditioned = 2000;
    c.master_seed = static_cast<std::uint64_t>(seed);
    const auto r = conditional_lr_experiment(c);
    const bool win = r.chi2_g < r.chi2_chi1;
    g_wins += win;
    ks_ok = ks_ok && r.conditioned == 2000 && r.ks_r_uniform < 0.05;
    kappa_ok = kappa_ok && r.kappa_hat >= 0.95 && r.kappa_hat <= 1.10;
    o.details.push_back(fmtn(
        "seed %d: used=%zu conditioned=%zu KS(R,U)=%.4f kappa=%.4f X2(G)=%.2f X2(chi2_1)=%.2f "
        "[unadjusted %.2f / %.2f] r>=1: %zu",
        seed, r.replicates_used, r.conditioned, r.ks_r_uniform, r.kappa_hat, r.chi2_g,
        r.chi2_chi1, r.chi2_g_raw, r.chi2_chi1_raw, r.r_ge_1));
  }
  o.pass = ks_ok && kappa_ok && g_wins >= 8;
  o.details.push_back(fmtn("KS<0.05 all seeds: %s; kappa in [0.95,1.10] all seeds: %s; G preferred in %d/10",
                           ks_ok ? "yes" : "no", kappa_ok ? "yes" : "no", g_wins));
  return o;
}

// 8. Joint (mean, max) limit for the canonical tail.
Outcome joint_limit() {
  Outcome o;
  ExperimentConfig c;
  c.n_grid = {1e4, 1e5, 1e6};
  c.replicates = 400000;
  c.conditioning = Conditioning::positivity;
  c.target_conditioned = 2000;
  c.master_seed = 8;
  c.tail_units = 100;
  const auto r = joint_limit_experiment(SlowVariationParams{2.0, 0.0, 0.5, 0.0}, c);
  bool decreasing = true;
  double prev = kInf;
  for (const auto& p : r.points) {
    decreasing = decreasing && p.median_line < prev;
    prev = p.median_line;
    o.details.push_back(fmtn(
        "n=%.0e used=%zu conditioned=%zu KS(ratio,U)=%.4f P(mean>0 | max>2T)=%.4f (%zu/%zu) "
        "median line=%.4f KS(max/T vs Pareto)=%.4f",
        p.n, p.replicates_used, p.conditioned, p.ks_ratio_uniform, p.p_positive_given_big,
        p.big_max_positive, p.big_max, p.median_line, p.ks_max_pareto));
  }
  const auto& top = r.points.back();
  o.pass = top.conditioned == 2000 && top.ks_ratio_uniform < 0.05 &&
           top.p_positive_given_big >= 0.95 && decreasing;
  return o;
}

// 9. Non-null boundary: P1(theta_hat < 1) -> 1/2.
Outcome non_null() {
  Outcome o;
  o.pass = true;
  for (const std::string pair : {"gauss_cauchy", "gauss_laplace"}) {
    ExperimentConfig c;
    c.pair = pair;
    c.n_grid = {1e4};
    c.replicates = 10000;
    c.master_seed = 9;
    const auto p = non_null_boundary_experiment(c).points[0];
    const bool ok = std::abs(p.p_hat - 0.5) <= 3.0 * p.se;
    o.pass = o.pass && ok;
    o.details.push_back(fmtn("%s: p_hat=%.4f se=%.4f z=%.2f", pair.c_str(), p.p_hat, p.se,
                             (p.p_hat - 0.5) / p.se));
  }
  return o;
}

// 10. Composite family with tau = 1.
Outcome composite_check() {
  Outcome o;
  ExperimentConfig rate;
  rate.n_grid = {1e4, 1e5};
  rate.replicates = 20000;
  rate.master_seed = 10;
  rate.tail_units = 100;
  const auto r = composite_experiment(1.0, rate);
  bool rate_ok = true;
  for (const auto& p : r.points) {
    const double ratio = p.p_hat / p.theory;
    rate_ok = rate_ok && ratio >= 0.6 && ratio <= 1.4;
    o.details.push_back(fmtn("rate n=%.0e p_hat=%.5f se=%.5f theory=%.5f ratio=%.3f", p.n,
                             p.p_hat, p.se, p.theory, ratio));
  }
  ExperimentConfig cond;
  cond.n_grid = {1e6};
  cond.replicates = 400000;
  cond.conditioning = Conditioning::positivity;
  cond.target_conditioned = 2000;
  cond.master_seed = 11;
  cond.tail_units = 300;
  const auto q = composite_experiment(1.0, cond).points[0];
  o.details.push_back(fmtn(
      "n=1e6 conditioned=%zu nu_hat=tau rate=%.4f unimodal=%zu X2(G)=%.2f X2(chi2_1)=%.2f kappa=%.4f",
      q.conditioned, q.nu_at_tau_rate, q.unimodal, q.chi2_g, q.chi2_chi1, q.kappa_hat));
  o.pass = rate_ok && q.conditioned == 2000 && q.nu_at_tau_rate >= 0.95;
  return o;
}

// 11. Tail-equivalent Student-t non-null densities.
Outcome tail_equivalence() {
  Outcome o;
  ExperimentConfig c;
  c.n_grid = {1e4, 1e5, 1e6};
  c.replicates = 400000;
  c.target_conditioned = 2000;
  c.master_seed = 12;
  const auto r = tail_equivalence_experiment("gauss_t(3,1)", "gauss_t(3,2)", c);
  bool decreasing = true;
  double prev = kInf;
  for (const auto& p : r.points) {
    decreasing = decreasing && p.median_abs_diff < prev;
    prev = p.median_abs_diff;
    o.details.push_back(fmtn("n=%.0e conditioned=%zu median|dL|=%.4f max|dL|=%.3f both positive=%zu",
                             p.n, p.conditioned, p.median_abs_diff, p.max_abs_diff, p.both_positive));
  }
  o.pass = decreasing && r.points.back().conditioned == 2000 && r.points.back().median_abs_diff < 0.1;
  return o;
}

// 12. Byte-identical summaries across worker counts.
Outcome determinism() {
  Outcome o;
  bool same = true;
  for (int kind = 0; kind < 4; ++kind) {
    std::string dumps[2];
    for (int w = 0; w < 2; ++w) {
      ExperimentConfig c;
      c.workers = w == 0 ? 1 : 4;
      c.master_seed = 99;
      c.n_grid = {1e5};
      c.replicates = 20000;
      if (kind == 0) {
        c.n_grid = {100, 1000};
        c.replicates = 4000;
        dumps[w] = to_json(boundary_rate_experiment(c)).dump();
      } else if (kind == 1) {
        c.conditioning = Conditioning::positivity;
        c.target_conditioned = 300;
        dumps[w] = to_json(conditional_lr_experiment(c)).dump();
      } else if (kind == 2) {
        c.conditioning = Conditioning::positivity;
        c.target_conditioned = 200;
        dumps[w] = to_json(joint_limit_experiment(SlowVariationParams{2.0, 0.0, 0.5, 0.0}, c)).dump();
      } else {
        c.n_grid = {1e4};
        c.replicates = 2000;
        c.tail_units = 100;
        dumps[w] = to_json(composite_experiment(1.0, c)).dump();
      }
    }
    same = same && dumps[0] == dumps[1];
    o.details.push_back(fmtn("experiment %d: %zu bytes, identical=%s", kind, dumps[0].size(),
                             dumps[0] == dumps[1] ? "yes" : "no"));
  }
  o.pass = same;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 exact-event equivalence", exact_event_equivalence},
      {"2 unequal supports 2^-n", unequal_supports},
      {"3 G-law internals", g_law_internals},
      {"4 skew-Cauchy numerics", skew_cauchy_numerics},
      {"5 stable negativity", stable_negativity_check},
      {"6 boundary rate curves", fig3_rates},
      {"7 conditional LR law", fig4_lr_law},
      {"8 joint mean/max limit", joint_limit},
      {"9 non-null boundary", non_null},
      {"10 composite family", composite_check},
      {"11 tail equivalence", tail_equivalence},
      {"12 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.details.push_back(std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), secs);
    for (const auto& d : o.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
