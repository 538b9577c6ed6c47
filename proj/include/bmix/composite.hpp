#pragma once

// Composite mixtures (1 - theta) phi + theta psi_nu over 0 < nu <= tau:
// profile likelihood in nu, boundary rates, and likelihood-ratio agreement
// between tail-equivalent non-null densities.

#include <algorithm>
#include <cmath>
#include <vector>

#include "bmix/inference.hpp"
#include "bmix/simlab.hpp"
#include "bmix/zeta.hpp"

namespace bmix {

// Limit of P0(theta_hat > 0) for the composite family with upper index tau.
inline double composite_rate_theory(double tau, double n) {
  if (!(tau > 0.0 && tau <= 2.0)) throw DomainError("tau must lie in (0, 2]");
  if (!(n > 1.0)) throw DomainError("n must exceed 1");
  if (tau == 2.0) return 0.5;
  return tau / (2.0 * std::log(n));
}

// Log-spaced points on [1e-3 tau, tau], ending exactly at tau.
inline std::vector<double> nu_grid(double tau, std::size_t points = 64) {
  if (!(tau > 0.0 && tau <= 2.0)) throw DomainError("tau must lie in (0, 2]");
  if (points < 2) throw DomainError("the nu grid needs at least two points");
  std::vector<double> out(points);
  const double lo = std::log(1e-3 * tau), hi = std::log(tau);
  for (std::size_t k = 0; k < points; ++k)
    out[k] = std::exp(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(points - 1));
  out.back() = tau;
  return out;
}

// zeta_nu over a fixed set of indices. For |x| <= 12 the series runs on
// precomputed term ratios; larger |x| defers to the family evaluator.
class ZetaGrid {
 public:
  explicit ZetaGrid(std::vector<double> nus) : nus_(std::move(nus)) {
    for (double nu : nus_) {
      fams_.emplace_back(nu);
      std::vector<double> ratio;
      for (int r = 1; r <= kMaxTerms; ++r)
        ratio.push_back(2.0 * (r - nu / 2.0) / ((2.0 * r + 1.0) * (2.0 * r + 2.0)));
      ratios_.push_back(std::move(ratio));
    }
  }

  std::size_t size() const { return nus_.size(); }
  const std::vector<double>& nus() const { return nus_; }
  const ZetaFamily& family(std::size_t k) const { return fams_[k]; }

  double zeta(std::size_t k, double x) const {
    x = std::abs(x);
    const double nu = nus_[k];
    if (nu == 2.0) return x * x;
    if (x > 12.0) return fams_[k].zeta(x);
    const double x2 = x * x;
    const auto& rho = ratios_[k];
    double term = nu * x2 / 2.0, sum = term;
    for (int r = 0; r < kMaxTerms; ++r) {
      term *= rho[r] * x2;
      sum += term;
      if (term < 1e-16 * sum) break;
    }
    return sum;
  }

 private:
  static constexpr int kMaxTerms = 400;
  std::vector<double> nus_;
  std::vector<ZetaFamily> fams_;
  std::vector<std::vector<double>> ratios_;
};

struct CompositeFit {
  bool positive = false;
  double theta_hat = 0.0;
  double nu_hat = kNaN;         // indeterminate when theta_hat = 0
  double lambda = 0.0;
  bool nu_at_tau = false;
  bool grid_unimodal = true;    // profile on the grid rises then falls
  std::vector<double> profile;  // lambda(nu) on the grid, when positive
};

class CompositeModel {
 public:
  explicit CompositeModel(double tau, std::size_t points = 64)
      : tau_(tau), grid_(nu_grid(tau, points)) {}

  double tau() const { return tau_; }
  const ZetaGrid& grid() const { return grid_; }

  // zeta_nu - 1 on the nodes of a geometry, one entry per grid index.
  std::vector<BulkValues> bulk_for(const BulkGeometry& g) const {
    std::vector<BulkValues> out;
    for (std::size_t k = 0; k < grid_.size(); ++k)
      out.push_back(bulk_values(g, [&](double x) { return grid_.zeta(k, x) - 1.0; }));
    return out;
  }

  HSample hsample(std::size_t k, const XSample& s, const std::vector<BulkValues>* bulk) const {
    std::vector<double> h(s.x.size());
    for (std::size_t i = 0; i < s.x.size(); ++i) h[i] = grid_.zeta(k, s.x[i]);
    return attach_bulk(s, std::move(h), bulk ? &(*bulk)[k] : nullptr);
  }

  // theta_hat > 0 for some grid index.
  bool positive(const XSample& s, const std::vector<BulkValues>* bulk) const {
    for (std::size_t k = grid_.size(); k-- > 0;)
      if (positivity(hsample(k, s, bulk))) return true;
    return false;
  }

  // Profile likelihood over the grid; an interior maximum is refined by
  // golden section between its neighbours.
  CompositeFit fit(const XSample& s, const std::vector<BulkValues>* bulk) const {
    CompositeFit out;
    const std::size_t m = grid_.size();
    std::vector<FitResult> fits;
    for (std::size_t k = 0; k < m; ++k) fits.push_back(fit_theta(hsample(k, s, bulk)));
    for (const auto& f : fits) out.positive = out.positive || f.theta_hat() > 0.0;
    if (!out.positive) return out;
    std::size_t best = 0;
    for (std::size_t k = 0; k < m; ++k) {
      out.profile.push_back(fits[k].lambda);
      if (fits[k].lambda > fits[best].lambda) best = k;
    }
    out.grid_unimodal = unimodal(out.profile);
    out.theta_hat = fits[best].theta_hat();
    out.nu_hat = grid_.nus()[best];
    out.lambda = fits[best].lambda;
    out.nu_at_tau = best + 1 == m;
    if (out.nu_at_tau || best == 0 || !std::isfinite(out.lambda)) return out;
    const auto lambda_at = [&](double nu) {
      const ZetaFamily fam(nu);
      std::vector<double> h(s.x.size());
      for (std::size_t i = 0; i < s.x.size(); ++i) h[i] = fam.zeta(s.x[i]);
      BulkValues bz;
      if (s.bulk) bz = bulk_values(*s.bulk, [&](double x) { return fam.zeta(x) - 1.0; });
      return fit_theta(attach_bulk(s, std::move(h), s.bulk ? &bz : nullptr));
    };
    const double nu = golden_section_minimize(
        [&](double v) { return -lambda_at(v).lambda; }, grid_.nus()[best - 1],
        grid_.nus()[best + 1], 1e-6);
    const auto f = lambda_at(nu);
    if (f.lambda > out.lambda) {
      out.theta_hat = f.theta_hat();
      out.nu_hat = nu;
      out.lambda = f.lambda;
    }
    return out;
  }

  CompositeFit fit(const std::vector<double>& x) const {
    if (x.empty()) throw InputError("composite fit needs data");
    for (double v : x)
      if (!std::isfinite(v)) throw InputError("data must be finite");
    XSample s;
    s.x = x;
    return fit(s, nullptr);
  }

 private:
  static bool unimodal(const std::vector<double>& v) {
    std::size_t i = 1;
    while (i < v.size() && v[i] >= v[i - 1]) ++i;
    while (i < v.size() && v[i] <= v[i - 1]) ++i;
    return i == v.size();
  }

  double tau_;
  ZetaGrid grid_;
};

inline CompositeFit composite_fit(const std::vector<double>& x, double tau) {
  return CompositeModel(tau).fit(x);
}

// ---------------------------------------------------------------------------
// Experiments

struct CompositePoint {
  double n = 0;
  bool hybrid = false;
  std::size_t replicates_used = 0, positives = 0;
  bool capped = false;
  double p_hat = kNaN, se = kNaN, theory = kNaN;
  // Conditioned on theta_hat > 0.
  std::size_t conditioned = 0, nu_at_tau = 0, unimodal = 0;
  double nu_at_tau_rate = kNaN;
  double kappa_hat = kNaN, chi2_g = kNaN, chi2_chi1 = kNaN;
  std::vector<double> lambda, nu_hat;
};

struct CompositeResult {
  ExperimentConfig config;
  double tau = 0;
  std::vector<CompositePoint> points;
};

namespace detail {

struct CompositeDraw {
  bool positive = false;
  CompositeFit fit;
};

inline bool use_hybrid(const ExperimentConfig& cfg, double n) {
  return cfg.sampler == SamplerMode::hybrid ||
         (cfg.sampler == SamplerMode::automatic && n >= 50.0 * cfg.tail_units);
}

}  // namespace detail

// Under F0 = N(0, 1): the positivity rate over `replicates` draws, or, with
// positivity conditioning, draws until target_conditioned positives with the
// profile fit on each.
inline CompositeResult composite_experiment(double tau, const ExperimentConfig& cfg) {
  const CompositeModel model(tau);
  const int workers = resolve_workers(cfg.workers);
  const bool conditioned = cfg.conditioning == Conditioning::positivity;
  CompositeResult out{cfg, tau, {}};
  out.config.pair = "composite_psi";
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    const double n = cfg.n_grid[g];
    std::shared_ptr<const BulkGeometry> geom;
    std::vector<BulkValues> bulk;
    if (detail::use_hybrid(cfg, n)) {
      geom = make_gauss_bulk(n, cfg.tail_units);
      bulk = model.bulk_for(*geom);
    }
    const auto* bp = geom ? &bulk : nullptr;
    const std::uint64_t seed = derive_seed(cfg.master_seed, g);
    const std::size_t target = conditioned ? std::max<std::size_t>(1, cfg.target_conditioned) : 0;
    auto run = run_until<detail::CompositeDraw>(
        target, cfg.replicates, workers,
        [&](std::size_t i) {
          Rng rng(seed, i);
          const auto s = draw_gauss_null(static_cast<std::size_t>(n), geom, rng);
          detail::CompositeDraw d;
          d.positive = model.positive(s, bp);
          if (d.positive && conditioned) d.fit = model.fit(s, bp);
          return d;
        },
        [](const detail::CompositeDraw& d) { return d.positive; });
    CompositePoint pt;
    pt.n = n;
    pt.hybrid = static_cast<bool>(geom);
    pt.replicates_used = run.used;
    pt.capped = run.capped;
    pt.positives = run.accepted;
    pt.p_hat = double(pt.positives) / double(pt.replicates_used);
    pt.se = binomial_se(pt.p_hat, double(pt.replicates_used));
    pt.theory = composite_rate_theory(tau, n);
    if (conditioned) {
      for (const auto& d : run.records) {
        if (!d.positive) continue;
        ++pt.conditioned;
        pt.nu_at_tau += d.fit.nu_at_tau;
        pt.unimodal += d.fit.grid_unimodal;
        pt.lambda.push_back(d.fit.lambda);
        pt.nu_hat.push_back(d.fit.nu_hat);
      }
      if (pt.conditioned > 0) {
        pt.nu_at_tau_rate = double(pt.nu_at_tau) / double(pt.conditioned);
        pt.kappa_hat = bartlett_factor(pt.lambda);
        std::vector<double> adj;
        for (double l : pt.lambda)
          if (std::isfinite(l)) adj.push_back(l / pt.kappa_hat);
        if (adj.size() >= 200) {
          pt.chi2_g = chi2_gof_20bin(adj, RefLaw::G);
          pt.chi2_chi1 = chi2_gof_20bin(adj, RefLaw::Chi2_1);
        }
      }
    }
    out.points.push_back(std::move(pt));
  }
  return out;
}

inline Json to_json(const CompositeResult& r) {
  Json pts = Json::array();
  for (const auto& p : r.points) {
    Json j{{"n", p.n},
           {"sampler", p.hybrid ? "hybrid" : "direct"},
           {"status", p.capped ? "capped" : "complete"},
           {"replicates_used", p.replicates_used},
           {"positives", p.positives},
           {"p_hat", p.p_hat},
           {"se", p.se},
           {"theory", p.theory}};
    if (r.config.conditioning == Conditioning::positivity) {
      j["conditioned"] = p.conditioned;
      j["nu_hat_equals_tau"] = p.nu_at_tau;
      j["nu_hat_equals_tau_rate"] = p.nu_at_tau_rate;
      j["profile_unimodal"] = p.unimodal;
      j["kappa_hat"] = p.kappa_hat;
      j["chi2_G"] = p.chi2_g;
      j["chi2_chi2_1"] = p.chi2_chi1;
    }
    pts.push_back(j);
  }
  Json prov = provenance(r.config);
  prov["config"]["tau"] = r.tau;
  return Json{{"experiment", "composite"}, {"provenance", prov}, {"points", pts}};
}

// ---------------------------------------------------------------------------
// Tail equivalence

struct TailEquivPoint {
  double n = 0;
  bool hybrid = false;
  std::size_t replicates_used = 0, conditioned = 0, both_positive = 0;
  bool capped = false;
  double median_abs_diff = kNaN, max_abs_diff = kNaN;
  std::vector<double> abs_diff;
};

struct TailEquivResult {
  ExperimentConfig config;
  std::string pair1, pair2;
  std::vector<TailEquivPoint> points;
};

namespace detail {

struct PairedLambda {
  bool positive = false;
  bool second_positive = false;
  double diff = kNaN;
};

}  // namespace detail

// |Lambda_1 - Lambda_2| on shared null samples, conditioned on theta_hat_1 > 0.
inline TailEquivResult tail_equivalence_experiment(const std::string& pair1, const std::string& pair2,
                                                   const ExperimentConfig& cfg) {
  const auto p1 = find_pair(pair1), p2 = find_pair(pair2);
  if (!p1.normal_null_bounded_h || !p2.normal_null_bounded_h)
    throw InputError("tail equivalence needs pairs with a N(0,1) null");
  const int workers = resolve_workers(cfg.workers);
  TailEquivResult out{cfg, pair1, pair2, {}};
  out.config.pair = pair1 + " vs " + pair2;
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    const double n = cfg.n_grid[g];
    const NullDraws d1(p1, n, cfg.sampler, cfg.tail_units);
    const NullDraws d2(p2, n, d1.hybrid() ? SamplerMode::hybrid : SamplerMode::direct,
                       cfg.tail_units);
    const std::uint64_t seed = derive_seed(cfg.master_seed, g);
    const std::size_t target = std::max<std::size_t>(1, cfg.target_conditioned);
    auto run = run_until<detail::PairedLambda>(
        target, cfg.replicates, workers,
        [&](std::size_t i) {
          Rng rng(seed, i);
          const auto s = d1.draw(rng);
          detail::PairedLambda r;
          const auto h1 = d1.ratios(s);
          r.positive = positivity(h1);
          if (!r.positive) return r;
          const auto f1 = fit_theta(h1), f2 = fit_theta(d2.ratios(s));
          r.second_positive = f2.theta_hat() > 0.0;
          r.diff = std::abs(f1.lambda - f2.lambda);
          return r;
        },
        [](const detail::PairedLambda& r) { return r.positive; });
    TailEquivPoint pt;
    pt.n = n;
    pt.hybrid = d1.hybrid();
    pt.replicates_used = run.used;
    pt.capped = run.capped;
    for (const auto& r : run.records) {
      if (!r.positive) continue;
      ++pt.conditioned;
      pt.both_positive += r.second_positive;
      pt.abs_diff.push_back(r.diff);
    }
    if (pt.conditioned > 0) {
      pt.median_abs_diff = median(pt.abs_diff);
      pt.max_abs_diff = *std::max_element(pt.abs_diff.begin(), pt.abs_diff.end());
    }
    out.points.push_back(std::move(pt));
  }
  return out;
}

inline Json to_json(const TailEquivResult& r) {
  Json pts = Json::array();
  for (const auto& p : r.points)
    pts.push_back(Json{{"n", p.n},
                       {"sampler", p.hybrid ? "hybrid" : "direct"},
                       {"status", p.conditioned == 0 ? "empty" : (p.capped ? "capped" : "complete")},
                       {"replicates_used", p.replicates_used},
                       {"conditioned", p.conditioned},
                       {"both_positive", p.both_positive},
                       {"median_abs_diff", p.median_abs_diff},
                       {"max_abs_diff", p.max_abs_diff}});
  return Json{{"experiment", "tail_equivalence"},
              {"provenance", provenance(r.config)},
              {"pair1", r.pair1},
              {"pair2", r.pair2},
              {"points", pts}};
}

}  // namespace bmix
