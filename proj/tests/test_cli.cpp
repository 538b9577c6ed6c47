#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bmix/cli.hpp"

using namespace bmix;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

// In-process dispatch with captured streams.
Run call(std::vector<std::string> args) {
  args.insert(args.begin(), "bmix");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// The installed binary, for exit codes and stdin.
Run shell(const std::string& args, const std::string& stdin_text = "") {
  const fs::path tmp = fs::temp_directory_path() / "bmix_cli_stdin.txt";
  std::ofstream(tmp) << stdin_text;
  const std::string cmd = std::string(BMIX_CLI_PATH) + " " + args + " < " + tmp.string() + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  std::string out;
  char buf[4096];
  while (std::size_t k = fread(buf, 1, sizeof buf, p)) out.append(buf, k);
  const int status = pclose(p);
  return {WEXITSTATUS(status), out, ""};
}

std::string slurp(const fs::path& p) { return cli::read_file(p.string()); }

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("bmix_test_" + name);
  fs::remove_all(d);
  return d;
}

std::string fixture(const std::string& name) {
  return (fs::path(__FILE__).parent_path() / "fixtures" / name).string();
}

}  // namespace

TEST(Format, SeventeenDigitsRoundTrip) {
  Rng rng(1, 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = std::ldexp(rng.uniform() - 0.5, static_cast<int>(rng.uniform() * 200) - 100);
    EXPECT_EQ(std::stod(cli::fmt17(v)), v);
  }
  EXPECT_EQ(cli::fmt17(kInf), "inf");
}

TEST(Config, FlatGrammar) {
  const auto c = cli::parse_config_text(
      "# experiment\npair = \"gauss_t(3,2)\"  # quoted\nn=1e4,1e5\n\ntail-units = 50\n");
  EXPECT_EQ(c.at("pair"), "gauss_t(3,2)");
  EXPECT_EQ(c.at("n"), "1e4,1e5");
  EXPECT_EQ(c.at("tail_units"), "50");
  EXPECT_THROW(cli::parse_config_text("novalue\n"), InputError);
  const auto e = cli::experiment_config(c);
  EXPECT_EQ(e.n_grid, (std::vector<double>{1e4, 1e5}));
  EXPECT_EQ(e.tail_units, 50.0);
  EXPECT_THROW(cli::experiment_config({{"bogus", "1"}}), InputError);
  EXPECT_THROW(cli::experiment_config({{"n", "10.5"}}), InputError);
  EXPECT_THROW(cli::experiment_config({{"replicates", "0"}}), InputError);
}

TEST(Config, ReadColumn) {
  std::istringstream a("x,y\n1,2\n3,4\n");
  EXPECT_EQ(cli::read_column(a, "y"), (std::vector<double>{2, 4}));
  std::istringstream b("1.5\n-2\n");
  EXPECT_EQ(cli::read_column(b, ""), (std::vector<double>{1.5, -2}));
  std::istringstream c("1\nfoo\n");
  EXPECT_THROW(cli::read_column(c, ""), InputError);
}

TEST(Cli, LawTable) {
  const auto r = call({"law", "table", "--law", "G", "--grid", "0:4:0.01"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "x,pdf,cdf");
  int rows = 0;
  double last_cdf = -1;
  while (std::getline(in, line)) {
    ++rows;
    const double cdf = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_GE(cdf, last_cdf);
    last_cdf = cdf;
  }
  EXPECT_EQ(rows, 401);
  EXPECT_NEAR(last_cdf, GLaw::cdf(4.0), 0.0);
}

TEST(Cli, LawQuantileAndCumulants) {
  const auto q = call({"law", "quantile", "--law", "G", "--p", "0.5"});
  ASSERT_EQ(q.code, 0);
  EXPECT_NE(q.out.find(cli::fmt17(GLaw::quantile(0.5))), std::string::npos);
  EXPECT_EQ(call({"law", "quantile", "--law", "skew_cauchy", "--p", "0.5"}).code, 1);
  const auto k = call({"law", "cumulants"});
  EXPECT_EQ(k.code, 0);
  EXPECT_EQ(k.out.substr(0, 12), "k1,k2,k3,k4\n");
}

TEST(Cli, FitOnNullFixture) {
  const auto r = call({"fit", "--pair", "gauss_cauchy", "--data", fixture("z_null.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["theta_hat"].get<double>(), 0.0);
  EXPECT_EQ(j["lambda"].get<double>(), 0.0);
  EXPECT_FALSE(j["positive"].get<bool>());
}

TEST(Cli, FitFromStdin) {
  const auto r = shell("fit --pair gauss_cauchy --data -", "0.1\n8.0\n-0.2\n");
  ASSERT_EQ(r.code, 0);
  const auto j = Json::parse(r.out);
  EXPECT_GT(j["theta_hat"].get<double>(), 0.0);
  EXPECT_GT(j["lambda"].get<double>(), 0.0);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(shell("--no-such-flag").code, 1);
  EXPECT_EQ(shell("law table --bogus 1").code, 1);
  EXPECT_EQ(shell("dist eval --pair nope").code, 1);
  EXPECT_EQ(shell("fit --pair gauss_cauchy --data /nonexistent.csv").code, 1);
  EXPECT_EQ(shell("").code, 1);
  EXPECT_EQ(shell("--help").code, 0);
  const auto d = fresh_dir("capped");
  EXPECT_EQ(shell("sim lr --pair gauss_cauchy --n 1000 --replicates 50 --target 100 --out " +
                  d.string()).code,
            3);
  EXPECT_TRUE(fs::exists(d / "results.json"));
}

TEST(Cli, SimRateIsReproducible) {
  const auto a = fresh_dir("rate_a"), b = fresh_dir("rate_b");
  const std::vector<std::string> base{"sim", "rate", "--pair", "gauss_cauchy", "--n", "1000",
                                      "--replicates", "20000", "--seed", "7"};
  auto args_a = base, args_b = base;
  args_a.insert(args_a.end(), {"--workers", "1", "--out", a.string()});
  args_b.insert(args_b.end(), {"--workers", "4", "--out", b.string()});
  ASSERT_EQ(call(args_a).code, 0);
  ASSERT_EQ(call(args_b).code, 0);
  EXPECT_EQ(slurp(a / "results.json"), slurp(b / "results.json"));
  EXPECT_EQ(slurp(a / "curve.csv"), slurp(b / "curve.csv"));
  int manifests = 0;
  for (const auto& e : fs::directory_iterator(a)) manifests += e.path().filename() == "manifest.json";
  EXPECT_EQ(manifests, 1);
  const auto m = Json::parse(slurp(a / "manifest.json"));
  EXPECT_EQ(m["master_seed"].get<std::uint64_t>(), 7u);
  EXPECT_EQ(m["config"]["replicates"], "20000");
}

TEST(Cli, ManifestRoundTrip) {
  const auto a = fresh_dir("round_a"), b = fresh_dir("round_b");
  ASSERT_EQ(call({"sim", "nonnull", "--pair", "gauss_laplace", "--n", "50,100", "--replicates",
                  "500", "--seed", "3", "--out", a.string()})
                .code,
            0);
  ASSERT_EQ(call({"sim", "nonnull", "--config", (a / "manifest.json").string(), "--out",
                  b.string()})
                .code,
            0);
  EXPECT_EQ(slurp(a / "results.json"), slurp(b / "results.json"));
  const auto ma = Json::parse(slurp(a / "manifest.json"));
  const auto mb = Json::parse(slurp(b / "manifest.json"));
  EXPECT_EQ(ma["config_hash"], mb["config_hash"]);
}

TEST(Cli, ConfigFileWithOverrides) {
  const auto d = fresh_dir("cfg");
  fs::create_directories(d);
  std::ofstream(d / "cfg.txt") << "pair = uniform_shift\nn = 4\nreplicates = 100\nseed = 1\n";
  const auto r = call({"sim", "rate", "--config", (d / "cfg.txt").string(), "--replicates", "4000"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_EQ(j["points"][0]["replicates"].get<int>(), 4000);
  EXPECT_NEAR(j["points"][0]["p_hat"].get<double>(), 1.0 / 16, 0.02);
}

TEST(Cli, SimLrWritesVectorsAndHistograms) {
  const auto d = fresh_dir("lr");
  const auto r = call({"sim", "lr", "--pair", "gauss_cauchy", "--n", "2000", "--replicates",
                       "20000", "--target", "250", "--seed", "5", "--out", d.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(slurp(d / "results.json"));
  EXPECT_EQ(j["conditioned"].get<int>(), 250);
  EXPECT_EQ(j["status"], "complete");
  std::ifstream s(d / "samples.csv");
  std::string header;
  std::getline(s, header);
  EXPECT_EQ(header, "r,lambda,lambda_bartlett,lambda_tilde,max_rate");
  EXPECT_TRUE(fs::exists(d / "hist.csv"));
}

TEST(Cli, DistAndAsym) {
  const auto e = call({"dist", "eval", "--pair", "gauss_cauchy", "--grid", "0:1:0.5"});
  ASSERT_EQ(e.code, 0);
  EXPECT_EQ(e.out.substr(0, e.out.find('\n')), "x,log_f0,log_f1,log_h");
  const auto b = Json::parse(call({"dist", "bounds", "--pair", "gauss_laplace"}).out);
  EXPECT_EQ(b["theta_min"].get<double>(), 0.0);
  const auto l = call({"dist", "list"});
  EXPECT_NE(l.out.find("gauss_psi"), std::string::npos);
  const auto s = call({"dist", "sample", "--pair", "gauss_cauchy", "--n", "5", "--from", "f1"});
  EXPECT_EQ(std::count(s.out.begin(), s.out.end(), '\n'), 6);
  const auto a = call({"asym", "table", "--tail", "2,0,0.5,0", "--n", "1e4"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out.substr(0, a.out.find('\n')), "n,A_n,B_n,T_n,K,rate");
  const auto ng = call({"asym", "negativity", "--alpha", "1.5"});
  EXPECT_NEAR(std::stod(ng.out), 1.0 / 1.5, 1e-8);
}

TEST(Cli, CompositeCommands) {
  const auto f = call({"composite", "fit", "--tau", "1.0", "--data", fixture("z_null.csv")});
  ASSERT_EQ(f.code, 0) << f.err;
  EXPECT_FALSE(Json::parse(f.out)["positive"].get<bool>());
  const auto s = call({"composite", "sim", "--tau", "1", "--n", "1e4", "--replicates", "300",
                       "--tail-units", "100", "--seed", "2"});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_EQ(Json::parse(s.out)["points"][0]["replicates_used"].get<int>(), 300);
  EXPECT_EQ(call({"composite", "equiv", "--pair", "gauss_t(3,1)", "--n", "1000"}).code, 1);
}
