#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include "metapac/config.hpp"
#include "metapac/errors.hpp"
#include "metapac/experiments.hpp"

using namespace metapac;

namespace {

const double kNegInf = -std::numeric_limits<double>::infinity();

const char* kSmallDiscrete = R"(name: small
environment:
  kind: discrete
  M: 6
  a_star: [0]
  flip: 0.5
algorithm:
  family: subset
sweep:
  T_grid: [10]
  n_grid: [10, 20]
  reps: 20
  seeds: [1]
  threads: 1
)";

const char* kSmallGaussian = R"(name: gsmall
environment:
  kind: gaussian
  d: 2
  mu_star: [1.0, 1.0]
  spread: 0.0
  noise_var: 1.0
algorithm:
  family: gaussian-gamma
sweep:
  T_grid: [20]
  n_grid: [10]
  reps: 10
  seeds: [3]
)";

std::string csv_of(const std::vector<CellRow>& rows) {
  std::ostringstream os;
  write_csv(os, rows);
  return os.str();
}

}  // namespace

TEST_CASE("rate_fit recovers planted exponents") {
  std::vector<RatePoint> inv, root;
  for (double T = 10; T <= 1e6; T *= 10) {
    inv.push_back({T, 3.0 / T, 0.0});
    root.push_back({T, 3.0 / std::sqrt(T), 0.0});
  }
  CHECK(std::fabs(rate_fit(inv).slope + 1.0) <= 1e-10);
  CHECK(std::fabs(rate_fit(root).slope + 0.5) <= 1e-10);
  CHECK(rate_fit(inv).intercept == doctest::Approx(std::log(3.0)));
  CHECK(rate_fit(inv).r2 == doctest::Approx(1.0));
}

TEST_CASE("rate_fit under multiplicative noise") {
  Rng rng(1);
  for (int r = 0; r < 100; ++r) {
    std::vector<RatePoint> pts;
    for (double T = 1; T <= 1e6; T *= 10) pts.push_back({T, (2.0 / T) * (1.0 + 0.1 * (2.0 * rng.uniform() - 1.0)), 0.0});
    CHECK(std::fabs(rate_fit(pts).slope + 1.0) <= 0.15);
  }
}

TEST_CASE("rate_fit drops nonpositive points") {
  std::vector<RatePoint> pts{{10, 0.1, 0}, {100, -0.01, 0}, {1000, 0.001, 0}, {10000, 0.0, 0}};
  CHECK_THROWS_AS(rate_fit(pts), FitUnavailable);
  pts.push_back({100000, 1e-5, 0});
  const RateReport r = rate_fit(pts);
  CHECK(r.points.size() == 3);
  CHECK(r.slope == doctest::Approx(-1.0));
}

TEST_CASE("estimate_meta_risk is zero for a Dirac prior in a noiseless env") {
  const MetaEnvironment env = DiscreteEnv{5, {2}, 0.0};
  DiscretePrior dirac{std::vector<double>(5, kNegInf)};
  dirac.log_weights[2] = 0.0;
  const auto fam = std::make_shared<const FinitePriorFamily>(std::vector<DiscretePrior>{dirac}, CategoricalDist::uniform(1));
  const Estimate e = estimate_meta_risk(FiniteHyper{fam, CategoricalDist({1.0})}, env, 0.04, 10, 50, RandomStream(2, "z"));
  CHECK(e.mean == 0.0);
  CHECK(e.se == 0.0);
  CHECK(e.reps == 50);
}

TEST_CASE("estimate_meta_risk is nonnegative and deterministic") {
  const MetaEnvironment env = DiscreteEnv{8, {1, 5}, 0.4};
  const auto fam = std::make_shared<const SubsetPriorFamily>(subset_family(8));
  const HyperPosterior h = SubsetHyper{fam, fam->lambda()};
  const Estimate a = estimate_meta_risk(h, env, 0.04, 20, 200, RandomStream(3, "m"));
  const Estimate b = estimate_meta_risk(h, env, 0.04, 20, 200, RandomStream(3, "m"));
  CHECK(a.mean > -3.0 * a.se);
  CHECK(a.mean == b.mean);
  CHECK(a.se == b.se);
  CHECK_THROWS_AS(estimate_meta_risk(h, env, 0.04, 20, 1, RandomStream(3, "m")), DomainError);

  const MetaEnvironment g = GaussianEnv{2, {0.5, 0.5}, 0.1, 1.0, 100.0};
  const Estimate p = estimate_prior_risk(DiagGaussian({0.0, 0.0}, {2.0, 2.0}), g, 0.04, 10, 200, RandomStream(3, "g"));
  CHECK(p.mean > -3.0 * p.se);
}

TEST_CASE("subset_expected_excess matches brute-force expectation") {
  Rng rng(4);
  const SubsetPriorFamily fam = subset_family(5);
  for (int inst = 0; inst < 20; ++inst) {
    std::vector<double> risks(5), excess(5);
    for (int i = 0; i < 5; ++i) {
      risks[i] = rng.uniform();
      excess[i] = rng.uniform();
    }
    const CategoricalDist w(rng.dirichlet(std::vector<double>(fam.size(), 1.0)));
    const double alpha = inst < 10 ? 0.1 : 50.0;
    const int n = inst < 10 ? 20 : 2000;  // second half forces underflow in the shared weights
    double brute = 0.0;
    for (std::size_t j = 0; j < fam.size(); ++j) {
      const auto post = gibbs_discrete(fam.prior(j).log_weights, risks, alpha, n).probabilities();
      double e = 0.0;
      for (int i = 0; i < 5; ++i) e += post[i] * excess[i];
      brute += w.probs[j] * e;
    }
    CHECK(subset_expected_excess(fam, w, risks, excess, alpha, n) == doctest::Approx(brute).epsilon(1e-10));
  }
}

TEST_CASE("gibbs_excess for a Gaussian prior uses the quadratic posterior") {
  const GaussianTask task{{1.0, -1.0}, 1.0, 1e4};
  const TaskSample s = sample_dataset(task, 30, RandomStream(5, "d"));
  const DiagGaussian prior({0.0, 0.0}, {2.0, 2.0});
  const double alpha = 0.05;
  const DiagGaussian rho = gibbs_gaussian_quadratic(prior, summarize(s), alpha);
  double offset = 0.0, var = 0.0;
  for (int i = 0; i < 2; ++i) {
    offset += (rho.mean[i] - task.mean[i]) * (rho.mean[i] - task.mean[i]);
    var += rho.var[i];
  }
  const double excess = gibbs_excess(prior, task, s, BoundedLoss::clipped_squared(1e4), alpha, 10, RandomStream(5, "v"));
  CHECK(excess == doctest::Approx(offset + var).epsilon(1e-12));
}

TEST_CASE("run_isolation_vs_meta on a small discrete config") {
  const ExperimentConfig cfg = parse_config(kSmallDiscrete);
  const std::vector<CellRow> rows = run_isolation_vs_meta(cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].n == 10);
  CHECK(rows[1].n == 20);
  for (const auto& r : rows) {
    CHECK(r.reps == 20);
    CHECK(r.T == 10);
    CHECK(r.seed == 1);
    CHECK(r.meta.se >= 0.0);
    CHECK(r.isolation.se >= 0.0);
    CHECK(r.meta_bound >= r.meta.mean - 3.0 * r.meta.se);
    CHECK(r.isolation_bound >= r.isolation.mean - 3.0 * r.isolation.se);
    CHECK(r.bound_ok);
    CHECK(r.diff.mean == doctest::Approx(r.meta.mean - r.isolation.mean).epsilon(1e-9));
  }
  const std::string a = csv_of(rows), b = csv_of(run_isolation_vs_meta(cfg));
  CHECK(a == b);
  CHECK(a.rfind("setting,seed,T,n,reps,meta_excess,meta_se,isolation_excess,isolation_se,diff,diff_se,meta_bound,"
                "isolation_bound,favorable_fraction,sigma_hat,approximations,bound_ok\n",
                0) == 0);
}

TEST_CASE("thread count does not change results") {
  ExperimentConfig cfg = parse_config(kSmallGaussian);
  cfg.sweep.threads = 1;
  const std::string one = csv_of(run_isolation_vs_meta(cfg));
  cfg.sweep.threads = 3;
  CHECK(csv_of(run_isolation_vs_meta(cfg)) == one);
}

TEST_CASE("gaussian cell reports regime and bounds") {
  const ExperimentConfig cfg = parse_config(kSmallGaussian);
  const CellRow r = run_cell(cfg, 3, 20, 10);
  CHECK(r.favorable_fraction >= 0.0);
  CHECK(r.favorable_fraction <= 1.0);
  CHECK(std::isfinite(r.meta_bound));
  CHECK(std::isfinite(r.isolation_bound));
  CHECK(r.bound_ok);
}

TEST_CASE("open_question_probe") {
  ExperimentConfig cfg = parse_config(kSmallDiscrete);
  cfg.probe.variational = FreeEnergyKind::Gibbs;  // the full simplex
  const std::vector<ProbeRow> same = open_question_probe(cfg);
  REQUIRE(same.size() == 2);
  for (const auto& r : same) {
    CHECK(r.gibbs.mean == r.variational.mean);
    CHECK(r.gibbs.se == r.variational.se);
    CHECK(r.gap.mean == 0.0);
    CHECK(r.max_free_energy_gap == 0.0);
  }
  cfg.probe.variational = FreeEnergyKind::Dirac;
  const std::vector<ProbeRow> rows = open_question_probe(cfg);
  std::ostringstream os;
  write_probe_csv(os, rows);
  CHECK(os.str().find("gibbs") != std::string::npos);
  for (const auto& r : rows) {
    CHECK(r.max_free_energy_gap >= 0.0);
    CHECK(r.max_free_energy_gap <= std::log(6.0) / (resolved_alpha(cfg) * r.n) + 1e-12);
  }
  CHECK_THROWS_AS(open_question_probe(parse_config(kSmallGaussian)), Unsupported);
}

TEST_CASE("Dirac and Gibbs free energies converge as alpha n grows") {
  Rng rng(6);
  for (double an : {10.0, 100.0, 1000.0, 1e5}) {
    std::vector<double> risks(7);
    for (double& r : risks) r = rng.uniform();
    const std::vector<double> prior(7, -std::log(7.0));
    const double gap = dirac_free_energy(prior, risks, an, 1) - log_partition_free_energy(prior, risks, an, 1);
    CHECK(gap >= -1e-12);
    CHECK(gap <= std::log(7.0) / an + 1e-12);
  }
}

TEST_CASE("config parsing") {
  const ExperimentConfig cfg = parse_config(kSmallDiscrete);
  CHECK(cfg.name == "small");
  CHECK(std::get<DiscreteEnv>(cfg.environment).M == 6);
  CHECK(cfg.sweep.n_grid == std::vector<int>{10, 20});
  CHECK(resolved_alpha(cfg) == doctest::Approx(1.0 / (1.0 + 8.0 * std::exp(1.0))));
  CHECK(resolved_beta(cfg) == resolved_alpha(cfg));

  const ExperimentConfig g = parse_config(kSmallGaussian);
  const auto& ge = std::get<GaussianEnv>(g.environment);
  CHECK(ge.clip == doctest::Approx(default_clip(2, 1.0, 4.0)));
  CHECK(resolved_alpha(g) == doctest::Approx(1.0 / (ge.clip * (1.0 + 8.0 * std::exp(1.0)))));

  std::string bad = kSmallDiscrete;
  bad.replace(bad.find("flip"), 4, "flap");
  try {
    parse_config(bad);
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(e.line == 6);
    CHECK(std::string(e.what()).find("flap") != std::string::npos);
  }
  std::string mismatch = kSmallDiscrete;
  mismatch.replace(mismatch.find("subset"), 6, "gaussian-gamma");
  CHECK_THROWS_AS(parse_config(mismatch), ConfigError);
  std::string few = kSmallDiscrete;
  few.replace(few.find("reps: 20"), 8, "reps: 1");
  CHECK_THROWS_AS(parse_config(few), ConfigError);
  std::string empty = kSmallDiscrete;
  empty.replace(empty.find("[10, 20]"), 8, "[]");
  CHECK_THROWS_AS(parse_config(empty), ConfigError);
  CHECK_THROWS_AS(parse_config("environment: [1, 2"), ConfigError);
}

TEST_CASE("schedules") {
  CHECK(Schedule::parse("n/T").eval(50, 100) == doctest::Approx(0.5));
  CHECK(Schedule::parse("n/T^2").eval(50, 100) == doctest::Approx(0.005));
  CHECK(Schedule::parse("sqrt(n)/T").eval(49, 100) == doctest::Approx(0.07));
  CHECK(Schedule::parse("0.25").eval(1, 1) == 0.25);
  CHECK_THROWS_AS(Schedule::parse("-1"), DomainError);
  CHECK_THROWS_AS(Schedule::parse("n/T^3"), DomainError);
}

TEST_CASE("format_double round-trips") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 12345.678901234567}) CHECK(std::stod(format_double(x)) == x);
}
