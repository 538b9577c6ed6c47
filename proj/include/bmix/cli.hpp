#pragma once

// The bmix command line: catalog queries, fits, limit laws and experiments,
// with flat key = value configs, 17-digit CSV and a run manifest per output
// directory.
//
// Exit codes: 0 success, 1 input error, 2 numeric error, 3 capped or partial
// experiment.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bmix/asymptotics.hpp"
#include "bmix/composite.hpp"
#include "bmix/errors.hpp"
#include "bmix/generators.hpp"
#include "bmix/inference.hpp"
#include "bmix/simlab.hpp"
#include "bmix/stable_laws.hpp"

namespace bmix::cli {

enum ExitCode : int { kOk = 0, kInput = 1, kNumeric = 2, kPartial = 3 };

using Config = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Formatting and parsing

inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used == t.size()) return v;
  } catch (const std::exception&) {
  }
  throw InputError("bad number for " + what + ": '" + s + "'");
}

inline std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
    throw InputError("bad non-negative integer for " + what + ": '" + s + "'");
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw InputError("integer out of range for " + what + ": '" + s + "'");
  }
}

// Counts such as n accept 1e6; they must be whole numbers.
inline std::size_t parse_count(const std::string& s, const std::string& what) {
  const double v = parse_double(s, what);
  if (!(v >= 0.0 && v <= 9e15 && v == std::floor(v)))
    throw InputError(what + " must be a non-negative whole number");
  return static_cast<std::size_t>(v);
}

inline std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item, what));
  if (out.empty()) throw InputError("empty list for " + what);
  return out;
}

// "a:b:step", inclusive of b up to rounding.
inline std::vector<double> parse_grid(const std::string& s) {
  std::vector<double> p;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ':')) p.push_back(parse_double(item, "grid"));
  if (p.size() != 3 || !(p[2] > 0.0) || !(p[1] >= p[0]))
    throw InputError("grid must be lo:hi:step with step > 0 and hi >= lo");
  const auto m = static_cast<std::size_t>(std::floor((p[1] - p[0]) / p[2] + 1e-9));
  if (m > 10000000) throw InputError("grid has too many points");
  std::vector<double> out;
  for (std::size_t i = 0; i <= m; ++i) out.push_back(p[0] + p[2] * static_cast<double>(i));
  return out;
}

inline bool parse_bool(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw InputError("bad boolean for " + what + ": '" + s + "'");
}

// Flat "key = value" lines; '#' starts a comment; values may be quoted.
inline Config parse_config_text(const std::string& text) {
  Config out;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw InputError("config line " + std::to_string(lineno) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
      value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '-', '_');
    out[key] = value;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A config file, or a run manifest whose "config" object is reused.
inline Config load_config(const std::string& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    Json j;
    try {
      j = Json::parse(text);
    } catch (const std::exception& e) {
      throw InputError("bad manifest " + path + ": " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object())
      throw InputError("manifest " + path + " has no config object");
    Config out;
    for (auto it = j["config"].begin(); it != j["config"].end(); ++it)
      out[it.key()] = it.value().get<std::string>();
    return out;
  }
  return parse_config_text(text);
}

// One numeric column of a CSV file; a non-numeric first line is a header.
inline std::vector<double> read_column(std::istream& in, const std::string& column) {
  std::vector<double> out;
  std::string line;
  std::size_t col = 0;
  bool first = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (first) {
      first = false;
      bool header = false;
      try {
        parse_double(cells[0], "data");
      } catch (const InputError&) {
        header = true;
      }
      if (header) {
        if (!column.empty()) {
          const auto it = std::find(cells.begin(), cells.end(), column);
          if (it == cells.end()) throw InputError("no column named " + column);
          col = static_cast<std::size_t>(it - cells.begin());
        }
        continue;
      }
      if (!column.empty()) throw InputError("--column needs a header line");
    }
    if (col >= cells.size())
      throw InputError("data line " + std::to_string(lineno) + " has too few columns");
    out.push_back(parse_double(cells[col], "data line " + std::to_string(lineno)));
  }
  if (out.empty()) throw InputError("no data values");
  return out;
}

inline std::vector<double> read_data(const std::string& path, const std::string& column) {
  if (path == "-") return read_column(std::cin, column);
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_column(in, column);
}

// ---------------------------------------------------------------------------
// Outputs and manifest

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Output {
 public:
  Output(std::string dir, std::ostream& out) : dir_(std::move(dir)), out_(out) {
    if (!dir_.empty()) {
      std::error_code ec;
      std::filesystem::create_directories(dir_, ec);
      if (ec) throw InputError("cannot create output directory " + dir_);
    }
  }

  bool to_dir() const { return !dir_.empty(); }

  // Written to DIR/name, or to stdout when there is no output directory.
  void emit(const std::string& name, const std::string& body) {
    if (dir_.empty()) {
      out_ << body;
      return;
    }
    const auto path = (std::filesystem::path(dir_) / name).string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path);
    f << body;
    files_.push_back(path);
  }

  // Like emit, but dropped when writing to stdout.
  void attach(const std::string& name, const std::string& body) {
    if (!dir_.empty()) emit(name, body);
  }

  void manifest(const std::vector<std::string>& argv, const Config& cfg, std::uint64_t seed) {
    if (dir_.empty()) return;
    Json c = Json::object();
    std::string canon;
    for (const auto& [k, v] : cfg) {
      c[k] = v;
      if (k != "workers") canon += k + "=" + v + "\n";
    }
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    Json m{{"command_line", argv}, {"config", c},          {"config_hash", hash},
           {"master_seed", seed},  {"code_version", kCodeVersion}, {"timestamp", stamp},
           {"outputs", files_}};
    const auto path = (std::filesystem::path(dir_) / "manifest.json").string();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path);
    f << m.dump(2) << "\n";
  }

 private:
  std::string dir_;
  std::ostream& out_;
  std::vector<std::string> files_;
};

class Csv {
 public:
  explicit Csv(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) body_ += (i ? "," : "") + header[i];
    body_ += "\n";
  }
  void row(const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) body_ += (i ? "," : "") + fmt17(v[i]);
    body_ += "\n";
  }
  const std::string& str() const { return body_; }

 private:
  std::string body_;
};

// ---------------------------------------------------------------------------
// Config assembly

// Options shared by every experiment; keys double as config-file keys.
inline const std::vector<std::string>& experiment_keys() {
  static const std::vector<std::string> keys{
      "pair",      "pair2",       "n",          "replicates", "seed", "workers",
      "conditioning", "target",   "sampler",    "tail_units", "tail", "tau"};
  return keys;
}

inline SlowVariationParams parse_tail(const std::string& s) {
  const auto v = parse_list(s, "tail");
  if (v.size() < 4 || v.size() > 6)
    throw InputError("tail takes beta0,beta1,delta,gamma[,mu[,c1]]");
  SlowVariationParams p;
  p.beta0 = v[0];
  p.beta1 = v[1];
  p.delta = v[2];
  p.gamma = v[3];
  if (v.size() > 4) p.mu = v[4];
  if (v.size() > 5) p.c1 = v[5];
  try {
    p.validate();
  } catch (const InvariantError& e) {
    throw InputError(e.what());
  }
  return p;
}

inline ExperimentConfig experiment_config(const Config& c) {
  ExperimentConfig e;
  const auto get = [&](const std::string& k) -> const std::string* {
    const auto it = c.find(k);
    return it == c.end() ? nullptr : &it->second;
  };
  if (auto v = get("pair")) e.pair = *v;
  if (auto v = get("n")) {
    e.n_grid.clear();
    for (double n : parse_list(*v, "n")) {
      if (!(n >= 1.0 && n == std::floor(n))) throw InputError("n must be a positive whole number");
      e.n_grid.push_back(n);
    }
  }
  if (auto v = get("replicates")) e.replicates = parse_count(*v, "replicates");
  if (e.replicates < 1) throw InputError("replicates must be at least 1");
  if (auto v = get("seed")) e.master_seed = parse_u64(*v, "seed");
  if (auto v = get("workers")) {
    const auto w = parse_count(*v, "workers");
    if (w < 1) throw InputError("workers must be at least 1");
    e.workers = static_cast<int>(w);
  }
  if (auto v = get("conditioning")) {
    if (*v == "none") e.conditioning = Conditioning::none;
    else if (*v == "positivity") e.conditioning = Conditioning::positivity;
    else throw InputError("conditioning must be none or positivity");
  }
  if (auto v = get("target")) e.target_conditioned = parse_count(*v, "target");
  if (auto v = get("sampler")) e.sampler = sampler_mode_from_string(*v);
  if (auto v = get("tail_units")) {
    e.tail_units = parse_double(*v, "tail_units");
    if (!(e.tail_units >= 1.0)) throw InputError("tail_units must be at least 1");
  }
  if (auto v = get("tail")) e.tail = parse_tail(*v);
  if (auto v = get("extended")) e.extended = parse_bool(*v, "extended");
  for (const auto& [k, v] : c) {
    static const std::vector<std::string> extra{"extended", "data", "column", "out", "config"};
    const auto& keys = experiment_keys();
    if (std::find(keys.begin(), keys.end(), k) == keys.end() &&
        std::find(extra.begin(), extra.end(), k) == extra.end())
      throw InputError("unknown config key: " + k);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Commands

struct Args {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  bool extended = false;
  CLI::Option* extended_flag = nullptr;
  std::string config_path, out_dir;

  void add(CLI::App* app, const std::string& key, const std::string& help) {
    std::string flag = key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    options[key] = app->add_option("--" + flag, values[key], help);
  }

  // Config file first, then flags.
  Config merged() const {
    Config c;
    if (!config_path.empty()) c = load_config(config_path);
    for (const auto& [k, opt] : options)
      if (opt->count() > 0) c[k] = values.at(k);
    if (extended_flag && extended_flag->count() > 0) c["extended"] = "true";
    return c;
  }
};

inline void add_experiment_options(CLI::App* app, Args& a) {
  a.add(app, "pair", "generator pair, e.g. gauss_cauchy or gauss_t(3,2)");
  a.add(app, "n", "sample size or comma-separated list");
  a.add(app, "replicates", "replicates, or the cap when conditioning");
  a.add(app, "seed", "master seed");
  a.add(app, "workers", "worker threads (default BMIX_WORKERS or all cores)");
  a.add(app, "conditioning", "none or positivity");
  a.add(app, "target", "conditioned events to collect");
  a.add(app, "sampler", "auto, direct or hybrid");
  a.add(app, "tail_units", "expected explicit tail units per hybrid sample");
  a.add(app, "tail", "beta0,beta1,delta,gamma[,mu[,c1]] for joint-limit runs");
  a.add(app, "tau", "upper index of the composite family");
  a.add(app, "pair2", "second pair for tail equivalence");
  app->add_option("--config", a.config_path, "flat key = value config file or manifest");
  app->add_option("--out", a.out_dir, "output directory");
  a.extended_flag = app->add_flag("--extended", a.extended, "fit over [0, theta_max]");
}

inline int status_code(bool partial) { return partial ? kPartial : kOk; }

inline int run_sim(const std::string& kind, const Args& a, const std::vector<std::string>& argv,
                   std::ostream& out) {
  Config cfg = a.merged();
  if (kind == "lr" && !cfg.count("conditioning")) cfg["conditioning"] = "positivity";
  if (kind == "joint" && !cfg.count("tail")) cfg["tail"] = "2,0,0.5,0";
  if (kind == "joint" && !cfg.count("conditioning")) cfg["conditioning"] = "positivity";
  auto e = experiment_config(cfg);
  Output o(a.out_dir, out);
  bool partial = false;
  if (kind == "rate") {
    const auto r = boundary_rate_experiment(e);
    o.emit("results.json", to_json(r).dump(2) + "\n");
    Csv csv({"n", "replicates", "positives", "p_hat", "se", "theory"});
    for (const auto& p : r.points)
      csv.row({p.n, double(p.replicates), double(p.positives), p.p_hat, p.se, p.theory});
    o.attach("curve.csv", csv.str());
  } else if (kind == "lr") {
    const auto r = conditional_lr_experiment(e);
    partial = r.capped;
    o.emit("results.json", to_json(r).dump(2) + "\n");
    Csv samples({"r", "lambda", "lambda_bartlett", "lambda_tilde", "max_rate"});
    for (std::size_t i = 0; i < r.r.size(); ++i)
      samples.row({r.r[i], r.lambda[i], r.lambda[i] / r.kappa_hat, r.lambda_tilde[i], r.max_rate[i]});
    o.attach("samples.csv", samples.str());
    Csv hist({"quantity", "lo", "hi", "count"});
    const auto bins = [&](double which, const Histogram& h) {
      const double w = (h.hi - h.lo) / static_cast<double>(h.counts.size());
      for (std::size_t i = 0; i < h.counts.size(); ++i)
        hist.row({which, h.lo + w * i, h.lo + w * (i + 1), h.counts[i]});
      hist.row({which, h.hi, kInf, h.overflow});
    };
    bins(0, r.hist_r);
    bins(1, r.hist_sqrt_lambda);
    o.attach("hist.csv", "# quantity 0: R, 1: sqrt(lambda / kappa_hat)\n" + hist.str());
  } else if (kind == "joint") {
    const auto r = joint_limit_experiment(*e.tail, e);
    for (const auto& p : r.points) partial = partial || p.capped;
    o.emit("results.json", to_json(r).dump(2) + "\n");
    Csv samples({"n", "ratio", "max_over_T", "sum_over_T"});
    for (const auto& p : r.points)
      for (std::size_t i = 0; i < p.ratio.size(); ++i)
        samples.row({p.n, p.ratio[i], p.max_over_t[i], p.sum_over_t[i]});
    o.attach("samples.csv", samples.str());
  } else if (kind == "nonnull") {
    const auto r = non_null_boundary_experiment(e);
    o.emit("results.json", to_json(r).dump(2) + "\n");
    Csv csv({"n", "replicates", "below_one", "p_hat", "se"});
    for (const auto& p : r.points)
      csv.row({p.n, double(p.replicates), double(p.below_one), p.p_hat, p.se});
    o.attach("curve.csv", csv.str());
  }
  o.manifest(argv, cfg, e.master_seed);
  return status_code(partial);
}

inline int run_fit(const Args& a, const std::string& data, const std::string& column, bool raw_h,
                   const std::vector<std::string>& argv, std::ostream& out) {
  const Config cfg = a.merged();
  const auto e = experiment_config(cfg);
  const auto x = read_data(data, column);
  std::vector<double> h;
  const auto pair = find_pair(e.pair);
  if (raw_h) h = x;
  else
    for (double v : x) h.push_back(std::exp(log_density_ratio(pair, v)));
  const double upper = fit_upper(pair, e.extended);
  const auto f = fit_theta(h, upper);
  Json j{{"pair", pair.name},
         {"n", h.size()},
         {"positive", f.positive},
         {"theta_hat", f.theta_hat()},
         {"theta_hat_lo", f.theta_hat_lo},
         {"theta_hat_hi", f.theta_hat_hi},
         {"lambda", f.lambda},
         {"r", f.r_stat},
         {"wald", f.wald},
         {"rao", f.rao},
         {"grad_at_zero", f.grad_at_zero},
         {"upper", upper}};
  Output o(a.out_dir, out);
  o.emit("fit.json", j.dump(2) + "\n");
  o.manifest(argv, cfg, 0);
  return kOk;
}

inline double law_pdf(const std::string& law, double x) {
  if (law == "G") return GLaw::pdf(x);
  if (law == "chi2_1") return x > 0 ? std::exp(-0.5 * x) / std::sqrt(2.0 * kPi * x) : 0.0;
  if (law == "skew_cauchy") return skew_cauchy_pdf(x, 1.0);
  if (law == "uniform") return x >= 0.0 && x <= 1.0 ? 1.0 : 0.0;
  throw LookupError("unknown law " + law);
}

inline double law_cdf(const std::string& law, double x) {
  if (law == "skew_cauchy") return skew_cauchy_cdf(x, 1.0);
  if (law == "G") return GLaw::cdf(x);
  if (law == "chi2_1") return ref_cdf(RefLaw::Chi2_1, x);
  if (law == "uniform") return ref_cdf(RefLaw::Uniform, x);
  throw LookupError("unknown law " + law);
}

inline double law_quantile(const std::string& law, double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
  if (law == "G") return GLaw::quantile(p);
  if (law == "uniform") return p;
  if (law == "chi2_1") {
    const double z = boost::math::erf_inv(p);
    return 2.0 * z * z;
  }
  throw LookupError("no quantile function for law " + law);
}

inline std::string usage_hint() { return "run 'bmix --help' for usage\n"; }

// ---------------------------------------------------------------------------
// Dispatch

inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  const std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"bmix: boundary behaviour of binary Gaussian mixtures"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kCodeVersion);

  // dist
  auto* dist = app.add_subcommand("dist", "generator pair catalog");
  dist->require_subcommand(1);
  std::string pair_name = "gauss_cauchy", grid = "-5:5:0.5", from = "f0";
  std::size_t count = 10;
  std::uint64_t seed = 1;
  dist->add_subcommand("list", "list pair names");
  auto* dist_eval = dist->add_subcommand("eval", "log densities and log ratio on a grid");
  dist_eval->add_option("--pair", pair_name)->required();
  dist_eval->add_option("--grid", grid, "lo:hi:step");
  auto* dist_bounds = dist->add_subcommand("bounds", "extended mixing-weight interval");
  dist_bounds->add_option("--pair", pair_name)->required();
  auto* dist_sample = dist->add_subcommand("sample", "draws from f0 or f1");
  dist_sample->add_option("--pair", pair_name)->required();
  dist_sample->add_option("--n", count);
  dist_sample->add_option("--seed", seed);
  dist_sample->add_option("--from", from)->check(CLI::IsMember({"f0", "f1"}));

  // asym
  auto* asym = app.add_subcommand("asym", "stabilizing sequences and limits");
  asym->require_subcommand(1);
  std::string tail = "2,0,0.5,0", ns = "1e3,1e4,1e5,1e6";
  double alpha = 1.5, beta = 1.0;
  auto* asym_table = asym->add_subcommand("table", "A_n, B_n, T_n and the boundary rate");
  asym_table->add_option("--tail", tail, "beta0,beta1,delta,gamma[,mu[,c1]]");
  asym_table->add_option("--n", ns);
  auto* asym_neg = asym->add_subcommand("negativity", "P(X < 0) for a stable law");
  asym_neg->add_option("--alpha", alpha);
  asym_neg->add_option("--beta", beta);

  // law
  auto* law = app.add_subcommand("law", "limit laws G, chi2_1 and skew Cauchy");
  law->require_subcommand(1);
  std::string law_name = "G", levels = "0.5";
  auto* law_table = law->add_subcommand("table", "pdf and cdf on a grid");
  law_table->add_option("--law", law_name)->check(CLI::IsMember({"G", "chi2_1", "skew_cauchy", "uniform"}));
  law_table->add_option("--grid", grid, "lo:hi:step");
  auto* law_q = law->add_subcommand("quantile", "quantiles");
  law_q->add_option("--law", law_name);
  law_q->add_option("--p", levels, "comma-separated levels");
  law->add_subcommand("cumulants", "first four cumulants of G");

  // fit
  auto* fit = app.add_subcommand("fit", "maximum-likelihood mixing weight");
  Args fit_args;
  std::string data, column;
  bool raw_h = false;
  fit_args.add(fit, "pair", "generator pair");
  fit->add_option("--data", data, "CSV file of observations, or - for stdin")->required();
  fit->add_option("--column", column, "column name when the file has a header");
  fit->add_flag("--ratios", raw_h, "the data are density ratios h, not observations");
  fit->add_option("--config", fit_args.config_path, "flat key = value config file");
  fit->add_option("--out", fit_args.out_dir, "output directory");
  fit_args.extended_flag = fit->add_flag("--extended", fit_args.extended, "fit over [0, theta_max]");

  // sim
  auto* sim = app.add_subcommand("sim", "Monte Carlo experiments");
  sim->require_subcommand(1);
  std::map<std::string, Args> sim_args;
  const std::vector<std::pair<std::string, std::string>> sim_kinds{
      {"rate", "null boundary rate P0(theta_hat > 0) over n"},
      {"lr", "conditioned LR statistic against G and chi2_1"},
      {"joint", "joint mean/max law for a canonical tail"},
      {"nonnull", "P1(theta_hat < 1) over n"}};
  for (const auto& [kind, about] : sim_kinds)
    add_experiment_options(sim->add_subcommand(kind, about), sim_args[kind]);

  // composite
  auto* comp = app.add_subcommand("composite", "composite mixtures over the zeta family");
  comp->require_subcommand(1);
  Args comp_fit_args, comp_sim_args, comp_eq_args;
  double tau = 1.0;
  auto* comp_fit = comp->add_subcommand("fit", "profile fit over (theta, nu)");
  comp_fit->add_option("--tau", tau);
  comp_fit->add_option("--data", data)->required();
  comp_fit->add_option("--column", column);
  comp_fit->add_option("--out", comp_fit_args.out_dir, "output directory");
  add_experiment_options(comp->add_subcommand("sim", "boundary rate and conditioned fits"),
                         comp_sim_args);
  add_experiment_options(comp->add_subcommand("equiv", "tail-equivalent pairs"), comp_eq_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion& e) {
    out << kCodeVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kInput;
  }

  try {
    if (dist->parsed()) {
      if (dist->got_subcommand("list")) {
        for (const auto& n : builtin_pair_names()) out << n << "\n";
        return kOk;
      }
      const auto pair = find_pair(pair_name);
      if (dist_eval->parsed()) {
        Csv csv({"x", "log_f0", "log_f1", "log_h"});
        for (double x : parse_grid(grid))
          csv.row({x, pair.log_f0(x), pair.log_f1(x), log_density_ratio(pair, x)});
        out << csv.str();
      } else if (dist_bounds->parsed()) {
        const auto b = theta_bounds(pair);
        out << Json{{"pair", pair.name},       {"theta_min", b.theta_min},
                    {"theta_max", b.theta_max}, {"argmin_x", b.argmin_x},
                    {"argmax_x", b.argmax_x}}.dump(2)
            << "\n";
      } else {
        Rng rng(seed, 0);
        Csv csv({"x"});
        for (std::size_t i = 0; i < count; ++i)
          csv.row({from == "f0" ? pair.sample_f0(rng) : pair.sample_f1(rng)});
        out << csv.str();
      }
      return kOk;
    }
    if (asym->parsed()) {
      if (asym_neg->parsed()) {
        out << fmt17(stable_negativity(StableSpec(alpha, beta))) << "\n";
        return kOk;
      }
      const auto p = parse_tail(tail);
      Csv csv({"n", "A_n", "B_n", "T_n", "K", "rate"});
      for (double n : parse_list(ns, "n")) {
        const auto s = stabilizing(p, n);
        csv.row({n, s.A_n, s.B_n, s.T_n, s.K, error_rate_theory(p, n)});
      }
      out << csv.str();
      return kOk;
    }
    if (law->parsed()) {
      if (law_table->parsed()) {
        Csv csv({"x", "pdf", "cdf"});
        for (double x : parse_grid(grid)) csv.row({x, law_pdf(law_name, x), law_cdf(law_name, x)});
        out << csv.str();
      } else if (law_q->parsed()) {
        Csv csv({"p", "x"});
        for (double p : parse_list(levels, "p")) csv.row({p, law_quantile(law_name, p)});
        out << csv.str();
      } else {
        const auto k = GLaw::cumulants();
        Csv csv({"k1", "k2", "k3", "k4"});
        csv.row({k[0], k[1], k[2], k[3]});
        out << csv.str();
      }
      return kOk;
    }
    if (fit->parsed()) return run_fit(fit_args, data, column, raw_h, args, out);
    if (sim->parsed()) {
      for (auto& [kind, a] : sim_args)
        if (sim->got_subcommand(kind)) return run_sim(kind, a, args, out);
    }
    if (comp->parsed()) {
      if (comp_fit->parsed()) {
        const auto f = composite_fit(read_data(data, column), tau);
        Json j{{"tau", tau},           {"positive", f.positive},
               {"theta_hat", f.theta_hat}, {"nu_hat", f.nu_hat},
               {"lambda", f.lambda},   {"nu_hat_equals_tau", f.nu_at_tau}};
        Output o(comp_fit_args.out_dir, out);
        o.emit("fit.json", j.dump(2) + "\n");
        Config cfg{{"tau", fmt17(tau)}, {"data", data}};
        o.manifest(args, cfg, 0);
        return kOk;
      }
      const bool equiv = comp->got_subcommand("equiv");
      const Args& a = equiv ? comp_eq_args : comp_sim_args;
      Config cfg = a.merged();
      const auto e = experiment_config(cfg);
      Output o(a.out_dir, out);
      bool partial = false;
      if (equiv) {
        if (!cfg.count("pair2")) throw InputError("equiv needs --pair2");
        const auto r = tail_equivalence_experiment(e.pair, cfg.at("pair2"), e);
        o.emit("results.json", to_json(r).dump(2) + "\n");
        Csv csv({"n", "abs_diff"});
        for (const auto& p : r.points) {
          partial = partial || p.capped;
          for (double d : p.abs_diff) csv.row({p.n, d});
        }
        o.attach("samples.csv", csv.str());
      } else {
        const double t = cfg.count("tau") ? parse_double(cfg.at("tau"), "tau") : 1.0;
        const auto r = composite_experiment(t, e);
        o.emit("results.json", to_json(r).dump(2) + "\n");
        Csv csv({"n", "lambda", "nu_hat"});
        for (const auto& p : r.points) {
          partial = partial || p.capped;
          for (std::size_t i = 0; i < p.lambda.size(); ++i) csv.row({p.n, p.lambda[i], p.nu_hat[i]});
        }
        o.attach("samples.csv", csv.str());
      }
      o.manifest(args, cfg, e.master_seed);
      return status_code(partial);
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInput;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  }
  err << usage_hint();
  return kInput;
}

}  // namespace bmix::cli
