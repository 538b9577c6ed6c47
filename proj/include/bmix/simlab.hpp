#pragma once

// Reproducible Monte Carlo experiments: boundary error rates, the conditional
// law of the LR statistic, the joint (mean, max) limit, non-null boundary
// errors, the order-statistic sampler and goodness-of-fit helpers.
//
// Every replicate draws from its own counter-based stream keyed by its index,
// and workers write results into index-ordered slots, so results do not
// depend on the number of workers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "json.hpp"

#include "bmix/asymptotics.hpp"
#include "bmix/errors.hpp"
#include "bmix/generators.hpp"
#include "bmix/inference.hpp"
#include "bmix/numeric.hpp"
#include "bmix/rng.hpp"
#include "bmix/stable_laws.hpp"

namespace bmix {

inline constexpr const char* kCodeVersion = "bmix 1.0.0";

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Engine

inline int default_workers() {
  if (const char* env = std::getenv("BMIX_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
    throw InputError("BMIX_WORKERS must be a positive integer");
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

inline int resolve_workers(int requested) { return requested >= 1 ? requested : default_workers(); }

// fn(i) for i in [begin, begin + count), statically interleaved over workers.
template <class T, class Fn>
std::vector<T> parallel_map(std::size_t begin, std::size_t count, int workers, Fn&& fn) {
  std::vector<T> out(count);
  const std::size_t w = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)),
                                              std::max<std::size_t>(1, count));
  if (w <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = fn(begin + i);
    return out;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t k = 0; k < w; ++k)
    pool.emplace_back([&, k] {
      try {
        for (std::size_t i = k; i < count; i += w) out[i] = fn(begin + i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return out;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Seed of a sub-experiment (one n of a grid, one arm of a comparison).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  return splitmix64(master ^ splitmix64(tag + 0x632BE59BD9B4E019ull));
}

template <class T>
struct RejectionRun {
  std::vector<T> records;  // every replicate up to `used`, in index order
  std::size_t accepted = 0;
  std::size_t used = 0;
  bool capped = false;
};

// Runs replicates in fixed-size batches until `target` of them satisfy
// `accept` (all `cap` replicates when target is 0). The cut-off is the index
// of the target-th acceptance, so the result is independent of the batching
// and of the worker count.
template <class T, class Fn, class Accept>
RejectionRun<T> run_until(std::size_t target, std::size_t cap, int workers, Fn&& fn,
                          Accept&& accept) {
  constexpr std::size_t kBatch = 1024;
  RejectionRun<T> out;
  for (std::size_t start = 0; start < cap; start += kBatch) {
    const std::size_t count = std::min(kBatch, cap - start);
    auto batch = parallel_map<T>(start, count, workers, fn);
    for (std::size_t i = 0; i < count; ++i) {
      out.records.push_back(std::move(batch[i]));
      out.used = start + i + 1;
      if (accept(out.records.back()) && ++out.accepted == target && target > 0) return out;
    }
  }
  out.capped = target > 0 && out.accepted < target;
  return out;
}

// ---------------------------------------------------------------------------
// Samplers

// Units below a cut-off summarized per cell: exact multinomial counts, a
// three-point Gauss-Legendre rule for within-cell averages and a Gaussian
// within-cell fluctuation. Units beyond the cut-off are drawn exactly.
struct BulkGeometry {
  static constexpr int kNodes = 3;
  double p_tail = 0.0;              // P(unit beyond the cut-off)
  double cut = 0.0;
  std::vector<double> edges;        // cell boundaries, cells + 1 entries
  std::vector<double> node_x;       // kNodes per cell
  std::vector<double> node_v;       // conditional weights within each cell
  std::vector<double> cond_prob;    // P(cell j | bulk, not in cells < j)

  std::size_t cells() const { return cond_prob.size(); }
};

namespace detail {

inline constexpr double kGl3Node = 0.77459666924148337704;  // sqrt(3/5)
inline constexpr double kGl3W[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

// Fills nodes, weights and conditional cell probabilities from cell masses
// and a node density in the cell coordinate t (x = to_x(t)).
template <class ToX, class Dens>
void fill_cells(BulkGeometry& g, const std::vector<double>& t_edges, const std::vector<double>& mass,
                ToX&& to_x, Dens&& dens) {
  const std::size_t cells = mass.size();
  g.node_x.assign(cells * 3, 0.0);
  g.node_v.assign(cells * 3, 0.0);
  g.cond_prob.assign(cells, 0.0);
  g.edges.resize(cells + 1);
  for (std::size_t j = 0; j <= cells; ++j) g.edges[j] = to_x(t_edges[j]);
  for (std::size_t j = 0; j < cells; ++j) {
    const double a = t_edges[j], b = t_edges[j + 1], mid = 0.5 * (a + b), half = 0.5 * (b - a);
    const double t[3] = {mid - half * kGl3Node, mid, mid + half * kGl3Node};
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
      g.node_x[3 * j + k] = to_x(t[k]);
      g.node_v[3 * j + k] = kGl3W[k] * dens(t[k]);
      total += g.node_v[3 * j + k];
    }
    for (int k = 0; k < 3; ++k) g.node_v[3 * j + k] /= total;
  }
  double rest = 0.0;
  for (std::size_t j = cells; j-- > 0;) {
    rest += mass[j];
    g.cond_prob[j] = rest > 0.0 ? std::min(1.0, mass[j] / rest) : 1.0;
  }
}

template <class IntType = long long>
IntType binomial(Rng& rng, IntType n, double p) {
  if (n <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  std::binomial_distribution<IntType> d(n, p);
  return d(rng);
}

}  // namespace detail

// |X| cells on [0, c] for X ~ N(0, 1), with n P(|X| > c) = tail_units.
inline std::shared_ptr<const BulkGeometry> make_gauss_bulk(double n, double tail_units,
                                                           std::size_t cells = 200) {
  if (!(tail_units > 0.0 && tail_units < n)) throw DomainError("tail units must lie in (0, n)");
  auto g = std::make_shared<BulkGeometry>();
  g->p_tail = tail_units / n;
  g->cut = std::sqrt(2.0) * boost::math::erfc_inv(g->p_tail);
  const std::vector<double> t = linspace(0.0, g->cut, cells + 1);
  std::vector<double> mass(cells);
  const double r2 = std::sqrt(2.0);
  for (std::size_t j = 0; j < cells; ++j)
    mass[j] = std::erfc(t[j] / r2) - std::erfc(t[j + 1] / r2);
  detail::fill_cells(*g, t, mass, [](double x) { return x; },
                     [](double x) { return std::exp(-0.5 * x * x); });
  return g;
}

// Log-spaced cells on [x0, c] for the canonical tail law.
inline std::shared_ptr<const BulkGeometry> make_canonical_bulk(const CanonicalTail& law, double n,
                                                               double tail_units,
                                                               std::size_t cells = 256) {
  if (!(tail_units > 0.0 && tail_units < n)) throw DomainError("tail units must lie in (0, n)");
  auto g = std::make_shared<BulkGeometry>();
  g->p_tail = tail_units / n;
  g->cut = law.inverse_survival(g->p_tail);
  const std::vector<double> t = linspace(std::log(law.lower()), std::log(g->cut), cells + 1);
  std::vector<double> mass(cells);
  for (std::size_t j = 0; j < cells; ++j)
    mass[j] = law.survival(std::exp(t[j])) - law.survival(std::exp(t[j + 1]));
  detail::fill_cells(*g, t, mass, [](double y) { return std::exp(y); },
                     [&](double y) { return law.pdf(std::exp(y)) * std::exp(y); });
  return g;
}

// A sample of n units: explicit values plus, optionally, bulk cell counts.
struct XSample {
  std::vector<double> x;
  std::shared_ptr<const BulkGeometry> bulk;
  std::vector<double> counts;
  std::vector<double> xi;

  double n() const {
    double m = static_cast<double>(x.size());
    for (double c : counts) m += c;
    return m;
  }
};

namespace detail {

// Multinomial cell counts of the bulk and their fluctuation variables.
inline void draw_cells(XSample& s, long long bulk_units, Rng& rng) {
  const auto& g = *s.bulk;
  s.counts.assign(g.cells(), 0.0);
  s.xi.assign(g.cells(), 0.0);
  long long rest = bulk_units;
  for (std::size_t j = 0; j < g.cells(); ++j) {
    const long long k = j + 1 == g.cells() ? rest : binomial(rng, rest, g.cond_prob[j]);
    s.counts[j] = static_cast<double>(k);
    rest -= k;
  }
  for (std::size_t j = 0; j < g.cells(); ++j) s.xi[j] = rng.normal();
}

}  // namespace detail

// n draws from N(0, 1); with a geometry, only |X| > c is drawn unit by unit.
inline XSample draw_gauss_null(std::size_t n, const std::shared_ptr<const BulkGeometry>& bulk,
                               Rng& rng) {
  XSample s;
  if (!bulk) {
    s.x.resize(n);
    for (auto& v : s.x) v = rng.normal();
    return s;
  }
  s.bulk = bulk;
  const long long k = detail::binomial<long long>(rng, static_cast<long long>(n), bulk->p_tail);
  s.x.resize(static_cast<std::size_t>(k));
  for (auto& v : s.x) {
    const double a = std::sqrt(2.0) * boost::math::erfc_inv(bulk->p_tail * rng.uniform());
    v = rng.uniform() < 0.5 ? -a : a;
  }
  detail::draw_cells(s, static_cast<long long>(n) - k, rng);
  return s;
}

// n draws from the canonical tail law; with a geometry, only X > c is drawn
// unit by unit.
inline XSample draw_canonical(const CanonicalTail& law, std::size_t n,
                              const std::shared_ptr<const BulkGeometry>& bulk, Rng& rng) {
  XSample s;
  if (!bulk) {
    s.x.resize(n);
    for (auto& v : s.x) v = law.sample(rng);
    return s;
  }
  s.bulk = bulk;
  const long long k = detail::binomial<long long>(rng, static_cast<long long>(n), bulk->p_tail);
  s.x.resize(static_cast<std::size_t>(k));
  for (auto& v : s.x) v = law.inverse_survival(bulk->p_tail * rng.uniform());
  detail::draw_cells(s, static_cast<long long>(n) - k, rng);
  return s;
}

// Per-node values of a function of x over a bulk geometry, with the
// within-cell mean and standard deviation.
struct BulkValues {
  std::vector<double> node;
  std::vector<double> mean;
  std::vector<double> sd;
};

template <class G>
BulkValues bulk_values(const BulkGeometry& g, G&& fn) {
  BulkValues out;
  out.node.resize(g.node_x.size());
  out.mean.assign(g.cells(), 0.0);
  out.sd.assign(g.cells(), 0.0);
  for (std::size_t k = 0; k < g.node_x.size(); ++k) out.node[k] = fn(g.node_x[k]);
  for (std::size_t j = 0; j < g.cells(); ++j) {
    double m = 0.0, m2 = 0.0;
    for (int k = 0; k < BulkGeometry::kNodes; ++k) {
      const double v = out.node[3 * j + k], w = g.node_v[3 * j + k];
      m += w * v;
      m2 += w * v * v;
    }
    out.mean[j] = m;
    out.sd[j] = std::sqrt(std::max(0.0, m2 - m * m));
  }
  return out;
}

// HSample from explicit ratios h and, for hybrid samples, bulk node values
// bz holding h - 1 on the nodes of the sample's geometry.
inline HSample attach_bulk(const XSample& s, std::vector<double> h, const BulkValues* bz) {
  HSample out;
  out.h = std::move(h);
  if (!s.bulk) return out;
  if (bz == nullptr) throw InvariantError("hybrid sample needs bulk node values");
  const auto& g = *s.bulk;
  out.bulk.z = bz->node;
  out.bulk.w.resize(g.node_x.size());
  CompensatedSum lin;
  for (std::size_t j = 0; j < g.cells(); ++j) {
    for (int k = 0; k < BulkGeometry::kNodes; ++k)
      out.bulk.w[3 * j + k] = s.counts[j] * g.node_v[3 * j + k];
    lin += s.xi[j] * bz->sd[j] * std::sqrt(s.counts[j]);
  }
  out.bulk.linear = lin.value();
  return out;
}

// Density ratios of an XSample; `log_h` maps x to log h(x) and `bz` holds
// expm1(log h) on the bulk nodes.
template <class LogH>
HSample ratio_sample(const XSample& s, const BulkValues* bz, LogH&& log_h) {
  std::vector<double> h(s.x.size());
  for (std::size_t i = 0; i < s.x.size(); ++i) h[i] = std::exp(log_h(s.x[i]));
  return attach_bulk(s, std::move(h), bz);
}

// sum_i x_i - n mu and max_i x_i of an XSample.
struct SumMax {
  double centred_sum = 0.0;
  double max = -kInf;
};

inline SumMax sum_and_max(const XSample& s, double mu, const BulkValues* bx) {
  SumMax out;
  CompensatedSum sum;
  for (double v : s.x) {
    sum += v - mu;
    out.max = std::max(out.max, v);
  }
  if (s.bulk) {
    const auto& g = *s.bulk;
    for (std::size_t j = 0; j < g.cells(); ++j) {
      if (s.counts[j] <= 0.0) continue;
      sum += s.counts[j] * (bx->mean[j] - mu);
      sum += s.xi[j] * bx->sd[j] * std::sqrt(s.counts[j]);
      if (s.x.empty()) out.max = std::max(out.max, g.edges[j + 1]);
    }
  }
  out.centred_sum = sum.value();
  return out;
}

enum class SamplerMode { automatic, direct, hybrid };

inline std::string to_string(SamplerMode m) {
  switch (m) {
    case SamplerMode::direct: return "direct";
    case SamplerMode::hybrid: return "hybrid";
    default: return "auto";
  }
}

inline SamplerMode sampler_mode_from_string(const std::string& s) {
  if (s == "auto") return SamplerMode::automatic;
  if (s == "direct") return SamplerMode::direct;
  if (s == "hybrid") return SamplerMode::hybrid;
  throw InputError("sampler must be auto, direct or hybrid");
}

// Null draws of a catalog pair and their density ratios.
class NullDraws {
 public:
  NullDraws(GeneratorPair pair, double n, SamplerMode mode, double tail_units)
      : pair_(std::move(pair)), n_(static_cast<std::size_t>(n)) {
    if (!(n >= 1.0)) throw DomainError("n must be at least 1");
    bool hybrid = false;
    if (mode == SamplerMode::hybrid) {
      if (!pair_.normal_null_bounded_h)
        throw InputError("hybrid sampling needs a N(0,1) null and a ratio bounded on compacts");
      hybrid = true;
    } else if (mode == SamplerMode::automatic) {
      hybrid = pair_.normal_null_bounded_h && n >= 50.0 * tail_units;
    }
    if (hybrid) {
      bulk_ = make_gauss_bulk(n, tail_units);
      bz_ = bulk_values(*bulk_, [this](double x) { return std::expm1(log_density_ratio(pair_, x)); });
    }
  }

  bool hybrid() const { return static_cast<bool>(bulk_); }
  const GeneratorPair& pair() const { return pair_; }
  const std::shared_ptr<const BulkGeometry>& geometry() const { return bulk_; }

  XSample draw(Rng& rng) const {
    if (bulk_) return draw_gauss_null(n_, bulk_, rng);
    XSample s;
    s.x.resize(n_);
    for (auto& v : s.x) v = pair_.sample_f0(rng);
    return s;
  }

  HSample ratios(const XSample& s) const {
    return ratio_sample(s, bulk_ ? &bz_ : nullptr,
                        [this](double x) { return log_density_ratio(pair_, x); });
  }

 private:
  GeneratorPair pair_;
  std::size_t n_;
  std::shared_ptr<const BulkGeometry> bulk_;
  BulkValues bz_;
};

// ---------------------------------------------------------------------------
// Goodness of fit

enum class RefLaw { G, Chi2_1, Uniform };

inline RefLaw ref_law_from_string(const std::string& s) {
  if (s == "G") return RefLaw::G;
  if (s == "chi2_1") return RefLaw::Chi2_1;
  if (s == "uniform") return RefLaw::Uniform;
  throw LookupError("no quantile function for law " + s);
}

inline double ref_cdf(RefLaw law, double x) {
  switch (law) {
    case RefLaw::G: return GLaw::cdf(x);
    case RefLaw::Chi2_1: return x <= 0.0 ? 0.0 : std::erf(std::sqrt(0.5 * x));
    default: return std::clamp(x, 0.0, 1.0);
  }
}

// Pearson statistic over 20 bins of equal probability under the reference law.
inline double chi2_gof_20bin(const std::vector<double>& samples, RefLaw law) {
  if (samples.size() < 200) throw InputError("the 20-bin test needs at least 200 samples");
  std::vector<double> counts(20, 0.0);
  for (double v : samples) {
    if (std::isnan(v)) throw InputError("NaN sample");
    const double u = ref_cdf(law, v);
    counts[std::min<std::size_t>(19, static_cast<std::size_t>(20.0 * u))] += 1.0;
  }
  const double e = static_cast<double>(samples.size()) / 20.0;
  double x2 = 0.0;
  for (double o : counts) x2 += (o - e) * (o - e) / e;
  return x2;
}

// sup |F_n(x) - x| for samples against U(0, 1).
inline double ks_uniform(std::vector<double> v) {
  if (v.empty()) throw InputError("KS statistic of an empty sample");
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double u = std::clamp(v[i], 0.0, 1.0);
    d = std::max({d, (i + 1) / n - u, u - i / n});
  }
  return d;
}

inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("KS statistic of an empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

struct Histogram {
  double lo = 0.0, hi = 1.0;
  std::vector<double> counts;
  double underflow = 0.0, overflow = 0.0;
};

// Fixed-width bins on [lo, hi); +inf lands in overflow.
inline Histogram histogram(const std::vector<double>& v, double lo, double hi, std::size_t bins) {
  Histogram h{lo, hi, std::vector<double>(bins, 0.0), 0.0, 0.0};
  for (double x : v) {
    if (std::isnan(x)) continue;
    if (x < lo) h.underflow += 1.0;
    else if (x >= hi) h.overflow += 1.0;
    else h.counts[std::min(bins - 1, static_cast<std::size_t>((x - lo) / (hi - lo) * bins))] += 1.0;
  }
  return h;
}

inline Json to_json(const Histogram& h) {
  return Json{{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts},
              {"underflow", h.underflow}, {"overflow", h.overflow}};
}

inline double binomial_se(double p, double m) { return m > 0 ? std::sqrt(p * (1.0 - p) / m) : kNaN; }

// ---------------------------------------------------------------------------
// Configuration

enum class Conditioning { none, positivity };

struct ExperimentConfig {
  std::string pair = "gauss_cauchy";
  std::optional<SlowVariationParams> tail;  // joint-limit experiments
  std::vector<double> n_grid{1000.0};
  std::size_t replicates = 1000;            // cap when conditioning
  std::uint64_t master_seed = 1;
  int workers = 0;                          // 0: BMIX_WORKERS or all cores
  Conditioning conditioning = Conditioning::none;
  std::size_t target_conditioned = 0;
  bool extended = false;                    // fit over [0, theta_max]
  SamplerMode sampler = SamplerMode::automatic;
  double tail_units = 1000.0;
};

inline Json to_json(const SlowVariationParams& p) {
  return Json{{"beta0", p.beta0}, {"beta1", p.beta1}, {"delta", p.delta},
              {"gamma", p.gamma}, {"mu", p.mu},       {"c1", p.c1}};
}

// Config echo; the worker count is left out because results do not depend on it.
inline Json to_json(const ExperimentConfig& c) {
  Json j{{"pair", c.pair},
         {"n_grid", c.n_grid},
         {"replicates", c.replicates},
         {"master_seed", c.master_seed},
         {"conditioning", c.conditioning == Conditioning::positivity ? "positivity" : "none"},
         {"target_conditioned", c.target_conditioned},
         {"extended", c.extended},
         {"sampler", to_string(c.sampler)},
         {"tail_units", c.tail_units}};
  if (c.tail) j["tail"] = to_json(*c.tail);
  return j;
}

inline Json provenance(const ExperimentConfig& c) {
  return Json{{"config", to_json(c)}, {"code_version", kCodeVersion}};
}

inline double fit_upper(const GeneratorPair& p, bool extended) {
  return extended ? theta_bounds(p).theta_max : 1.0;
}

// ---------------------------------------------------------------------------
// Boundary error rate

struct RatePoint {
  double n = 0;
  std::size_t replicates = 0;
  std::size_t positives = 0;
  double p_hat = 0, se = 0, theory = kNaN;
  bool hybrid = false;
};

struct RateResult {
  ExperimentConfig config;
  std::vector<RatePoint> points;
};

inline double rate_theory(const GeneratorPair& p, double n) {
  if (p.tail_model && n >= 3.0) return error_rate_theory(*p.tail_model, n);
  if (p.null_limit) return *p.null_limit;
  return kNaN;
}

// P0(theta_hat > 0) for each n, with binomial standard errors.
inline RateResult boundary_rate_experiment(const ExperimentConfig& cfg) {
  const auto pair = find_pair(cfg.pair);
  const int workers = resolve_workers(cfg.workers);
  RateResult out{cfg, {}};
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    const double n = cfg.n_grid[g];
    const NullDraws draws(pair, n, cfg.sampler, cfg.tail_units);
    const std::uint64_t seed = derive_seed(cfg.master_seed, g);
    const double upper = fit_upper(pair, cfg.extended);
    const auto hits = parallel_map<unsigned char>(0, cfg.replicates, workers, [&](std::size_t i) {
      Rng rng(seed, i);
      // positivity and fit_theta agree except on a flat likelihood, which
      // the maximizer interval counts as positive.
      return static_cast<unsigned char>(fit_theta(draws.ratios(draws.draw(rng)), upper).positive);
    });
    RatePoint pt;
    pt.n = n;
    pt.replicates = cfg.replicates;
    for (auto h : hits) pt.positives += h;
    pt.p_hat = static_cast<double>(pt.positives) / static_cast<double>(cfg.replicates);
    pt.se = binomial_se(pt.p_hat, static_cast<double>(cfg.replicates));
    pt.theory = rate_theory(pair, n);
    pt.hybrid = draws.hybrid();
    out.points.push_back(pt);
  }
  return out;
}

inline Json to_json(const RateResult& r) {
  Json pts = Json::array();
  for (const auto& p : r.points)
    pts.push_back(Json{{"n", p.n}, {"replicates", p.replicates}, {"positives", p.positives},
                       {"p_hat", p.p_hat}, {"se", p.se}, {"theory", p.theory},
                       {"sampler", p.hybrid ? "hybrid" : "direct"}});
  return Json{{"experiment", "boundary_rate"}, {"provenance", provenance(r.config)}, {"points", pts}};
}

// ---------------------------------------------------------------------------
// Conditional law of the LR statistic

struct ConditionedFit {
  bool positive = false;
  double r = kNaN;
  double lambda = kNaN;
  double lambda_tilde = kNaN;
  double max_rate = kNaN;
};

struct LrResult {
  ExperimentConfig config;
  double n = 0;
  bool hybrid = false;
  std::size_t replicates_used = 0;
  std::size_t conditioned = 0;
  bool capped = false;
  std::size_t r_ge_1 = 0;
  double kappa_hat = kNaN;
  double ks_r_uniform = kNaN;
  double chi2_g = kNaN, chi2_chi1 = kNaN;          // Lambda / kappa_hat
  double chi2_g_raw = kNaN, chi2_chi1_raw = kNaN;  // Lambda
  double first_decile = kNaN, last_decile = kNaN;  // fractions of R in (0, .1] and (.9, 1]
  std::vector<double> r, lambda, lambda_tilde, max_rate;
  Histogram hist_r, hist_sqrt_lambda;
};

// The fit on one replicate; the exact fit runs only when l'(0) > 0.
inline ConditionedFit conditioned_fit(const HSample& h, double upper) {
  ConditionedFit c;
  c.positive = positivity(h);
  if (!c.positive) return c;
  const auto f = fit_theta(h, upper);
  c.r = f.r_stat;
  c.lambda = f.lambda;
  c.lambda_tilde = approx_lr_from_r(c.r);
  double hmax = 0.0;
  for (double v : h.h) hmax = std::max(hmax, v);
  const double t = f.theta_hat();
  c.max_rate = hmax == kInf ? 1.0 : t * hmax / (1.0 + t * (hmax - 1.0));
  return c;
}

inline void summarize_lr(LrResult& out) {
  out.conditioned = out.r.size();
  if (out.conditioned == 0) return;
  for (double v : out.r)
    if (v >= 1.0) ++out.r_ge_1;
  out.kappa_hat = bartlett_factor(out.lambda);
  out.ks_r_uniform = ks_uniform(out.r);
  std::vector<double> adj, raw, roots;
  for (double l : out.lambda) {
    if (!std::isfinite(l)) continue;
    raw.push_back(l);
    adj.push_back(l / out.kappa_hat);
    roots.push_back(std::sqrt(l / out.kappa_hat));
  }
  if (adj.size() >= 200) {
    out.chi2_g = chi2_gof_20bin(adj, RefLaw::G);
    out.chi2_chi1 = chi2_gof_20bin(adj, RefLaw::Chi2_1);
    out.chi2_g_raw = chi2_gof_20bin(raw, RefLaw::G);
    out.chi2_chi1_raw = chi2_gof_20bin(raw, RefLaw::Chi2_1);
  }
  double lo = 0, hi = 0;
  for (double v : out.r) {
    if (v <= 0.1) ++lo;
    if (v > 0.9 && v <= 1.0) ++hi;
  }
  out.first_decile = lo / static_cast<double>(out.conditioned);
  out.last_decile = hi / static_cast<double>(out.conditioned);
  out.hist_r = histogram(out.r, 0.0, 1.0, 40);
  out.hist_sqrt_lambda = histogram(roots, 0.0, 4.0, 40);
}

// Replicates under F0 until target_conditioned of them have theta_hat > 0.
inline LrResult conditional_lr_experiment(const ExperimentConfig& cfg) {
  if (cfg.conditioning != Conditioning::positivity)
    throw InputError("the conditional LR experiment needs positivity conditioning");
  if (cfg.n_grid.size() != 1) throw InputError("the conditional LR experiment takes one n");
  const auto pair = find_pair(cfg.pair);
  const double n = cfg.n_grid[0];
  const NullDraws draws(pair, n, cfg.sampler, cfg.tail_units);
  const double upper = fit_upper(pair, cfg.extended);
  const std::uint64_t seed = derive_seed(cfg.master_seed, 0);
  const std::size_t target = cfg.target_conditioned > 0 ? cfg.target_conditioned : cfg.replicates;
  auto run = run_until<ConditionedFit>(
      target, cfg.replicates, resolve_workers(cfg.workers),
      [&](std::size_t i) {
        Rng rng(seed, i);
        return conditioned_fit(draws.ratios(draws.draw(rng)), upper);
      },
      [](const ConditionedFit& c) { return c.positive; });
  LrResult out;
  out.config = cfg;
  out.n = n;
  out.hybrid = draws.hybrid();
  out.replicates_used = run.used;
  out.capped = run.capped;
  for (const auto& c : run.records) {
    if (!c.positive) continue;
    out.r.push_back(c.r);
    out.lambda.push_back(c.lambda);
    out.lambda_tilde.push_back(c.lambda_tilde);
    out.max_rate.push_back(c.max_rate);
  }
  summarize_lr(out);
  return out;
}

inline Json to_json(const LrResult& r) {
  return Json{{"experiment", "conditional_lr"},
              {"provenance", provenance(r.config)},
              {"n", r.n},
              {"sampler", r.hybrid ? "hybrid" : "direct"},
              {"status", r.conditioned == 0 ? "empty" : (r.capped ? "capped" : "complete")},
              {"replicates_used", r.replicates_used},
              {"conditioned", r.conditioned},
              {"positivity_rate", r.replicates_used ? double(r.conditioned) / r.replicates_used : kNaN},
              {"r_ge_1", r.r_ge_1},
              {"kappa_hat", r.kappa_hat},
              {"ks_r_uniform", r.ks_r_uniform},
              {"chi2_G", r.chi2_g},
              {"chi2_chi2_1", r.chi2_chi1},
              {"chi2_G_unadjusted", r.chi2_g_raw},
              {"chi2_chi2_1_unadjusted", r.chi2_chi1_raw},
              {"r_first_decile", r.first_decile},
              {"r_last_decile", r.last_decile},
              {"hist_r", to_json(r.hist_r)},
              {"hist_sqrt_lambda", to_json(r.hist_sqrt_lambda)}};
}

// ---------------------------------------------------------------------------
// Joint limit of (n mean, max)

struct JointPoint {
  double n = 0, T_n = 0, B_n = 0;
  bool hybrid = false;
  std::size_t replicates_used = 0, conditioned = 0;
  bool capped = false;
  double ks_ratio_uniform = kNaN;
  std::size_t big_max = 0, big_max_positive = 0;  // X_(n) > 2 T_n, and also mean > 0
  double p_positive_given_big = kNaN;
  double median_line = kNaN;  // median |X_(n)/T_n - n mean/T_n - 1| given mean > 0
  double ks_max_pareto = kNaN;  // X_(n)/T_n vs 1/(1 - U) given mean > 0
  std::vector<double> ratio, max_over_t, sum_over_t;
};

struct JointResult {
  ExperimentConfig config;
  std::vector<JointPoint> points;
};

// The canonical law shifted to mean zero; conditioned on a positive mean.
inline JointResult joint_limit_experiment(const SlowVariationParams& tail,
                                          const ExperimentConfig& cfg) {
  const CanonicalTail law(tail);
  const double mu = law.mean();
  const int workers = resolve_workers(cfg.workers);
  JointResult out{cfg, {}};
  out.config.tail = tail;
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    const double n = cfg.n_grid[g];
    const auto st = stabilizing(tail, n);
    const bool hybrid = cfg.sampler == SamplerMode::hybrid ||
                        (cfg.sampler == SamplerMode::automatic && n >= 50.0 * cfg.tail_units);
    std::shared_ptr<const BulkGeometry> geom;
    BulkValues bx;
    if (hybrid) {
      geom = make_canonical_bulk(law, n, cfg.tail_units);
      bx = bulk_values(*geom, [](double x) { return x; });
    }
    const std::uint64_t seed = derive_seed(cfg.master_seed, g);
    const std::size_t target = cfg.target_conditioned > 0 ? cfg.target_conditioned : cfg.replicates;
    auto run = run_until<SumMax>(
        target, cfg.replicates, workers,
        [&](std::size_t i) {
          Rng rng(seed, i);
          const auto s = draw_canonical(law, static_cast<std::size_t>(n), geom, rng);
          return sum_and_max(s, mu, geom ? &bx : nullptr);
        },
        [](const SumMax& s) { return s.centred_sum > 0.0; });
    JointPoint pt;
    pt.n = n;
    pt.T_n = st.T_n;
    pt.B_n = st.B_n;
    pt.hybrid = hybrid;
    pt.replicates_used = run.used;
    pt.capped = run.capped;
    std::vector<double> line, pareto;
    for (const auto& s : run.records) {
      if (s.max > 2.0 * st.T_n) {
        ++pt.big_max;
        if (s.centred_sum > 0.0) ++pt.big_max_positive;
      }
      if (!(s.centred_sum > 0.0)) continue;
      pt.ratio.push_back(s.centred_sum / s.max);
      pt.max_over_t.push_back(s.max / st.T_n);
      pt.sum_over_t.push_back(s.centred_sum / st.T_n);
      line.push_back(std::abs(s.max / st.T_n - s.centred_sum / st.T_n - 1.0));
      // 1/(1 - U) > y has probability 1/y, so T_n / X_(n) should be uniform
      // after y -> 1 - 1/y.
      pareto.push_back(1.0 - st.T_n / s.max);
    }
    pt.conditioned = pt.ratio.size();
    if (pt.conditioned > 0) {
      pt.ks_ratio_uniform = ks_uniform(pt.ratio);
      pt.median_line = median(line);
      pt.ks_max_pareto = ks_uniform(pareto);
    }
    if (pt.big_max > 0) pt.p_positive_given_big = double(pt.big_max_positive) / pt.big_max;
    out.points.push_back(std::move(pt));
  }
  return out;
}

inline Json to_json(const JointResult& r) {
  Json pts = Json::array();
  for (const auto& p : r.points)
    pts.push_back(Json{{"n", p.n},
                       {"T_n", p.T_n},
                       {"B_n", p.B_n},
                       {"sampler", p.hybrid ? "hybrid" : "direct"},
                       {"status", p.conditioned == 0 ? "empty" : (p.capped ? "capped" : "complete")},
                       {"replicates_used", p.replicates_used},
                       {"conditioned", p.conditioned},
                       {"ks_ratio_uniform", p.ks_ratio_uniform},
                       {"max_exceeds_2T", p.big_max},
                       {"p_positive_given_max_exceeds_2T", p.p_positive_given_big},
                       {"median_line_degeneracy", p.median_line},
                       {"ks_max_vs_pareto", p.ks_max_pareto}});
  return Json{{"experiment", "joint_limit"}, {"provenance", provenance(r.config)}, {"points", pts}};
}

// ---------------------------------------------------------------------------
// Non-null boundary

struct NonNullPoint {
  double n = 0;
  std::size_t replicates = 0, below_one = 0;
  double p_hat = 0, se = 0;
};

struct NonNullResult {
  ExperimentConfig config;
  std::vector<NonNullPoint> points;
};

// P1(theta_hat < 1) with data drawn from F1.
inline NonNullResult non_null_boundary_experiment(const ExperimentConfig& cfg) {
  const auto pair = find_pair(cfg.pair);
  const int workers = resolve_workers(cfg.workers);
  const double upper = fit_upper(pair, cfg.extended);
  NonNullResult out{cfg, {}};
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    const auto n = static_cast<std::size_t>(cfg.n_grid[g]);
    const std::uint64_t seed = derive_seed(cfg.master_seed, g);
    const auto below = parallel_map<unsigned char>(0, cfg.replicates, workers, [&](std::size_t i) {
      Rng rng(seed, i);
      std::vector<double> h(n);
      for (auto& v : h) v = std::exp(log_density_ratio(pair, pair.sample_f1(rng)));
      return static_cast<unsigned char>(fit_theta(h, upper).theta_hat_lo < 1.0);
    });
    NonNullPoint pt;
    pt.n = static_cast<double>(n);
    pt.replicates = cfg.replicates;
    for (auto b : below) pt.below_one += b;
    pt.p_hat = double(pt.below_one) / double(cfg.replicates);
    pt.se = binomial_se(pt.p_hat, double(cfg.replicates));
    out.points.push_back(pt);
  }
  return out;
}

inline Json to_json(const NonNullResult& r) {
  Json pts = Json::array();
  for (const auto& p : r.points)
    pts.push_back(Json{{"n", p.n}, {"replicates", p.replicates}, {"below_one", p.below_one},
                       {"p_hat", p.p_hat}, {"se", p.se}});
  return Json{{"experiment", "non_null_boundary"}, {"provenance", provenance(r.config)}, {"points", pts}};
}

// ---------------------------------------------------------------------------
// Stable negativity by simulation

struct ExceedanceResult {
  double p_hat = 0, se = 0;
  std::size_t replicates = 0;
};

// P(mean > mu) for n iid Pareto(alpha) variables, x_min = 1.
inline ExceedanceResult pareto_mean_exceedance(double alpha, std::size_t n, std::size_t replicates,
                                               std::uint64_t seed, int workers = 0) {
  if (!(alpha > 1.0)) throw DomainError("Pareto mean requires alpha > 1");
  const double mu = alpha / (alpha - 1.0);
  const double inv = -1.0 / alpha;
  const auto hits =
      parallel_map<unsigned char>(0, replicates, resolve_workers(workers), [&](std::size_t i) {
        Rng rng(derive_seed(seed, 0), i);
        CompensatedSum s;
        for (std::size_t k = 0; k < n; ++k) s += std::pow(rng.uniform(), inv) - mu;
        return static_cast<unsigned char>(s.value() > 0.0);
      });
  ExceedanceResult out;
  out.replicates = replicates;
  for (auto h : hits) out.p_hat += h;
  out.p_hat /= double(replicates);
  out.se = binomial_se(out.p_hat, double(replicates));
  return out;
}

// ---------------------------------------------------------------------------
// Top order statistics

struct OrderStats {
  std::vector<double> values;  // X_(n), X_(n-1), ..., X_(n-k)
  bool clamped = false;        // some level reached the body of the law
};

// Survival levels of the top k+1 of n uniforms by exponential spacings,
// 1 - exp(-sum_{i<=j} e_i / (n - i)), mapped through the inverse survival.
inline OrderStats top_order_stats_sampler(const CanonicalTail& law, double n, std::size_t k,
                                          Rng& rng) {
  if (!(static_cast<double>(k) < n)) throw DomainError("need k < n");
  OrderStats out;
  double acc = 0.0;
  for (std::size_t j = 0; j <= k; ++j) {
    acc += rng.exponential() / (n - static_cast<double>(j));
    const double q = -std::expm1(-acc);
    if (q >= 1.0) out.clamped = true;
    out.values.push_back(q >= 1.0 ? law.lower() : law.inverse_survival(q));
  }
  return out;
}

}  // namespace bmix
