#include <CLI11.hpp>
#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "metapac/bernstein_lab.hpp"
#include "metapac/bounds.hpp"
#include "metapac/config.hpp"
#include "metapac/errors.hpp"
#include "metapac/experiments.hpp"

using namespace metapac;
using json = nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kStatisticalFailure = 3;

json number(double x) { return std::isfinite(x) ? json(x) : json(format_double(x)); }

json report_json(const std::string& proposition, const BoundReport& r) {
  json j;
  j["proposition"] = proposition;
  j["value"] = number(r.value);
  j["regime"] = r.regime ? json(to_string(*r.regime)) : json(nullptr);
  json terms = json::object(), extras = json::object();
  for (const auto& [k, v] : r.terms) terms[k] = number(v);
  for (const auto& [k, v] : r.extras) extras[k] = number(v);
  j["terms"] = terms;
  j["extras"] = extras;
  return j;
}

std::filesystem::path output_path(const std::string& dir, const std::string& file) {
  std::filesystem::create_directories(dir);
  return std::filesystem::path(dir) / file;
}

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : -1; }

template <class T>
T field(const YAML::Node& n, const std::string& name) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("invalid value for '" + name + "'", line_of(n));
  }
}

int cmd_bound(const std::string& proposition, const std::string& params_path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(params_path);
  } catch (const YAML::BadFile&) {
    throw ConfigError("cannot open params file '" + params_path + "'");
  } catch (const YAML::ParserException& e) {
    throw ConfigError("malformed params: " + e.msg, e.mark.line + 1);
  }
  if (!root.IsMap()) throw ConfigError("params must be a mapping", line_of(root));
  static const std::set<std::string> allowed = {
      "defaults", "C", "c", "L", "alpha", "beta", "bernstein", "n", "T", "M", "m_star", "d", "K", "sigma", "sigma_K",
      "d_pi", "kappa_pi", "xi2_ref", "a_ref", "b_ref", "mu_norm2", "tau_norm2", "regime_threshold", "epsilon",
      "empirical_part", "inner", "rates", "k_grid"};
  for (const auto& kv : root) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "'", line_of(kv.first));
  }
  const double C = root["C"] ? field<double>(root["C"], "C") : 1.0;
  BoundParams p;
  p.C = C;
  if (!root["defaults"] || field<std::string>(root["defaults"], "defaults") == "standard") p = default_constants(C);
  else if (field<std::string>(root["defaults"], "defaults") != "none")
    throw ConfigError("defaults must be 'standard' or 'none'", line_of(root["defaults"]));
  auto set = [&](const char* key, auto& target) {
    if (root[key]) target = field<std::remove_reference_t<decltype(target)>>(root[key], key);
  };
  set("c", p.c);
  set("L", p.L);
  set("alpha", p.alpha);
  set("beta", p.beta);
  set("bernstein", p.bernstein);
  set("n", p.n);
  set("T", p.T);
  set("M", p.M);
  set("m_star", p.m_star);
  set("d", p.d);
  set("K", p.K);
  set("sigma", p.sigma);
  set("sigma_K", p.sigma_K);
  set("d_pi", p.d_pi);
  set("kappa_pi", p.kappa_pi);
  set("xi2_ref", p.xi2_ref);
  set("a_ref", p.a_ref);
  set("b_ref", p.b_ref);
  set("mu_norm2", p.mu_norm2);
  set("tau_norm2", p.tau_norm2);
  if (root["regime_threshold"]) p.regime_threshold = field<double>(root["regime_threshold"], "regime_threshold");
  if (root["epsilon"]) p.epsilon = field<double>(root["epsilon"], "epsilon");
  const double empirical = root["empirical_part"] ? field<double>(root["empirical_part"], "empirical_part") : 0.0;
  const double inner = root["inner"] ? field<double>(root["inner"], "inner") : 0.0;

  BoundReport r;
  if (proposition == "thm1") r = isolation_bound(p, empirical);
  else if (proposition == "cor1") r = prior_mass_bound(p);
  else if (proposition == "thm3") r = meta_learning_bound(p, inner);
  else if (proposition == "concurrent") {
    if (!root["rates"]) throw ConfigError("concurrent needs 'rates'");
    r = concurrent_priors_bound(field<std::vector<double>>(root["rates"], "rates"), p.M, p.beta,
                                static_cast<double>(p.T));
  } else if (proposition == "discrete") r = discrete_meta_bound(p.m_star, p.M, p.alpha, p.beta, p.n, static_cast<double>(p.T));
  else if (proposition == "gaussian") r = gaussian_meta_bound(p);
  else if (proposition == "mixture") r = mixture_meta_bound(p, true);
  else if (proposition == "mixture-unknownK") {
    std::vector<MixtureCell> grid;
    if (root["k_grid"]) {
      for (const auto& cell : root["k_grid"]) {
        MixtureCell c{field<int>(cell["K"], "K"), cell["sigma_K"] ? field<double>(cell["sigma_K"], "sigma_K") : 0.0,
                      cell["tau_norm2"] ? field<std::vector<double>>(cell["tau_norm2"], "tau_norm2")
                                        : std::vector<double>{}};
        grid.push_back(c);
      }
    } else {
      grid.push_back({p.K, p.sigma_K, p.tau_norm2});
    }
    r = mixture_meta_bound_unknownK(p, grid);
  } else {
    throw ConfigError("unknown proposition '" + proposition + "'");
  }
  std::cout << report_json(proposition, r).dump(2) << '\n';
  return kOk;
}

void apply_overrides(ExperimentConfig& cfg, const std::optional<std::uint64_t>& seed, const std::string& out) {
  if (seed) cfg.sweep.seeds = {*seed};
  if (!out.empty()) cfg.output.dir = out;
}

int cmd_simulate(ExperimentConfig cfg) {
  const auto rows = run_isolation_vs_meta(cfg);
  const auto path = output_path(cfg.output.dir, cfg.output.csv);
  {
    std::ofstream f(path);
    write_csv(f, rows);
  }
  write_csv(std::cout, rows);
  bool ok = true;
  for (const auto& r : rows) ok = ok && r.bound_ok;
  if (!ok) {
    std::cerr << "bound below estimate - 3 SE in at least one cell\n";
    return kStatisticalFailure;
  }
  return kOk;
}

json rate_json(const std::vector<RatePoint>& pts) {
  try {
    const RateReport r = rate_fit(pts);
    json j;
    j["slope"] = r.slope;
    j["intercept"] = r.intercept;
    j["r2"] = r.r2;
    json points = json::array();
    for (const auto& p : r.points) points.push_back({{"T", p.T}, {"estimate", p.estimate}, {"se", p.se}});
    j["points"] = points;
    return j;
  } catch (const FitUnavailable& e) {
    return {{"slope", nullptr}, {"reason", e.what()}};
  }
}

int cmd_rates(ExperimentConfig cfg) {
  const auto rows = run_isolation_vs_meta(cfg);
  {
    std::ofstream f(output_path(cfg.output.dir, cfg.output.csv));
    write_csv(f, rows);
  }
  std::map<std::pair<std::uint64_t, int>, std::pair<std::vector<RatePoint>, std::vector<RatePoint>>> groups;
  for (const auto& r : rows) {
    auto& g = groups[{r.seed, r.n}];
    g.first.push_back({static_cast<double>(r.T), r.meta.mean, r.meta.se});
    g.second.push_back({static_cast<double>(r.T), r.isolation.mean, r.isolation.se});
  }
  json report;
  report["setting"] = cfg.name;
  report["groups"] = json::array();
  for (const auto& [key, g] : groups)
    report["groups"].push_back(
        {{"seed", key.first}, {"n", key.second}, {"meta", rate_json(g.first)}, {"isolation", rate_json(g.second)}});
  {
    std::ofstream f(output_path(cfg.output.dir, cfg.output.json));
    f << report.dump(2) << '\n';
  }
  std::cout << report.dump(2) << '\n';
  return kOk;
}

int cmd_verify_bernstein(const ExperimentConfig& cfg) {
  const auto* env = std::get_if<DiscreteEnv>(&cfg.environment);
  if (!env) throw ConfigError("verify-bernstein needs a discrete environment");
  const double alpha = resolved_alpha(cfg);
  const int n = cfg.sweep.n_grid.front();
  json out;
  out["setting"] = cfg.name;
  out["alpha"] = alpha;
  out["n"] = n;
  out["runs"] = json::array();
  std::size_t passed = 0, total = 0;
  for (std::uint64_t seed : cfg.sweep.seeds) {
    const RandomStream stream(seed, cfg.name + "/bernstein");
    const FinitePriorFamily family = make_candidate_family(*env, cfg.bernstein.candidates, stream.child("candidates"));
    const PiStarEstimate star = estimate_pi_star(*env, family, alpha, n, cfg.bernstein.reps, stream.child("estimate"));
    std::vector<std::size_t> tested;
    for (std::size_t j = 0; j < family.priors.size() && tested.size() < static_cast<std::size_t>(cfg.bernstein.tested);
         ++j)
      if (j != star.index) tested.push_back(j);
    const MetaBernsteinReport rep =
        verify_meta_bernstein(*env, family, alpha, n, cfg.bernstein.reps, stream.child("verify"), tested);
    json run;
    run["seed"] = seed;
    run["pi_star"] = rep.pi_star;
    run["second"] = rep.second;
    run["c_used"] = rep.c_used;
    run["checks"] = json::array();
    for (const auto& c : rep.checks) {
      auto side = [](const BernsteinEstimate& e) {
        return json{{"lhs", e.lhs}, {"rhs", e.rhs}, {"se_lhs", e.se_lhs}, {"se_rhs", e.se_rhs}, {"reps", e.reps},
                    {"pass", e.pass}};
      };
      run["checks"].push_back(
          {{"candidate", c.index}, {"vs_pi_star", side(c.against_pi_star)}, {"vs_second", side(c.against_second)}});
    }
    passed += rep.passed();
    total += rep.checks.size();
    std::vector<Point> grid;
    for (int th = 0; th < env->M; ++th) grid.push_back({static_cast<double>(th)});
    const auto within = verify_within_task_bernstein(cfg.environment, grid, cfg.bernstein.grid_reps,
                                                     stream.child("within"), cfg.bernstein.ceiling);
    run["within_task"] = {{"constant", within.constant.infinite ? json("inf") : json(within.constant.value)},
                          {"ceiling", number(within.ceiling)},
                          {"pass", within.pass}};
    out["runs"].push_back(run);
  }
  const double rate = total ? static_cast<double>(passed) / static_cast<double>(total) : 1.0;
  out["pass_rate"] = rate;
  std::cout << out.dump(2) << '\n';
  {
    std::ofstream f(output_path(cfg.output.dir, cfg.output.json));
    f << out.dump(2) << '\n';
  }
  return rate >= 0.95 ? kOk : kStatisticalFailure;
}

int cmd_probe(const ExperimentConfig& cfg) {
  const auto rows = open_question_probe(cfg);
  {
    std::ofstream f(output_path(cfg.output.dir, cfg.output.csv));
    write_probe_csv(f, rows);
  }
  write_probe_csv(std::cout, rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learning PAC-Bayes experiment harness"};
  app.require_subcommand(1);
  std::string config_path, out_dir, proposition, params_path;
  std::optional<std::uint64_t> seed;

  auto* simulate = app.add_subcommand("simulate", "Isolation vs meta-learning sweep, CSV output");
  simulate->add_option("--config", config_path, "Experiment config")->required();
  simulate->add_option("--seed", seed, "Override the seed list with one seed");
  simulate->add_option("--out", out_dir, "Output directory");

  auto* rates = app.add_subcommand("rates", "Sweep over the T grid and fit log-log slopes");
  rates->add_option("--config", config_path, "Experiment config")->required();
  rates->add_option("--seed", seed, "Override the seed list with one seed");
  rates->add_option("--out", out_dir, "Output directory");

  auto* bound = app.add_subcommand("bound", "Evaluate one bound and print it as JSON");
  bound->add_option("--proposition", proposition, "Bound to evaluate")
      ->required()
      ->check(CLI::IsMember(
          {"thm1", "cor1", "thm3", "concurrent", "discrete", "gaussian", "mixture", "mixture-unknownK"}));
  bound->add_option("--params", params_path, "Bound parameters")->required();

  auto* verify = app.add_subcommand("verify-bernstein", "Meta-level and within-task Bernstein checks");
  verify->add_option("--config", config_path, "Experiment config")->required();
  verify->add_option("--seed", seed, "Override the seed list with one seed");
  verify->add_option("--out", out_dir, "Output directory");

  auto* probe = app.add_subcommand("probe-open-question", "Gibbs vs variational meta posterior comparison");
  probe->add_option("--config", config_path, "Experiment config")->required();
  probe->add_option("--seed", seed, "Override the seed list with one seed");
  probe->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*bound) return cmd_bound(proposition, params_path);
    ExperimentConfig cfg = load_config(config_path);
    apply_overrides(cfg, seed, out_dir);
    if (*simulate) return cmd_simulate(cfg);
    if (*rates) return cmd_rates(cfg);
    if (*verify) return cmd_verify_bernstein(cfg);
    if (*probe) return cmd_probe(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DomainError& e) {
    std::cerr << "invalid parameters: " << e.what() << '\n';
    return kConfigError;
  } catch (const Unsupported& e) {
    std::cerr << "unsupported: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
