#include "metapac/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "metapac/errors.hpp"

namespace metapac {

double Schedule::eval(int n, long long T) const {
  const double nn = n, TT = static_cast<double>(T);
  switch (kind) {
    case Kind::Value: return value;
    case Kind::NOverT: return nn / TT;
    case Kind::NOverT2: return nn / (TT * TT);
    case Kind::SqrtNOverT: return std::sqrt(nn) / TT;
  }
  return value;
}

std::string Schedule::text() const {
  switch (kind) {
    case Kind::NOverT: return "n/T";
    case Kind::NOverT2: return "n/T^2";
    case Kind::SqrtNOverT: return "sqrt(n)/T";
    case Kind::Value: break;
  }
  std::ostringstream os;
  os.precision(17);
  os << value;
  return os.str();
}

Schedule Schedule::parse(const std::string& s) {
  if (s == "n/T") return {Kind::NOverT, 0.0};
  if (s == "n/T^2") return {Kind::NOverT2, 0.0};
  if (s == "sqrt(n)/T") return {Kind::SqrtNOverT, 0.0};
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !(v > 0.0)) throw DomainError("expected a positive number, n/T, n/T^2 or sqrt(n)/T");
  return {Kind::Value, v};
}

namespace {

int line_of(const YAML::Node& node) { return node.Mark().line >= 0 ? node.Mark().line + 1 : -1; }

void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ConfigError("'" + section + "' must be a mapping", line_of(node));
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in '" + section + "'", line_of(kv.first));
  }
}

template <class T>
T get(const YAML::Node& node, const std::string& field) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("invalid value for '" + field + "'", line_of(node));
  }
}

template <class T>
std::vector<T> get_list(const YAML::Node& node, const std::string& field) {
  if (!node.IsSequence()) throw ConfigError("'" + field + "' must be a list", line_of(node));
  std::vector<T> out;
  for (const auto& item : node) out.push_back(get<T>(item, field));
  return out;
}

double positive(const YAML::Node& node, const std::string& field) {
  const double v = get<double>(node, field);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("'" + field + "' must be positive", line_of(node));
  return v;
}

double nonnegative(const YAML::Node& node, const std::string& field) {
  const double v = get<double>(node, field);
  if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("'" + field + "' must be nonnegative", line_of(node));
  return v;
}

Schedule schedule(const YAML::Node& node, const std::string& field) {
  try {
    return Schedule::parse(get<std::string>(node, field));
  } catch (const DomainError& e) {
    throw ConfigError("'" + field + "': " + e.what(), line_of(node));
  }
}

std::optional<double> rate_or_default(const YAML::Node& node, const std::string& field) {
  const std::string s = get<std::string>(node, field);
  if (s == "default" || s == "paper-default") return std::nullopt;
  return positive(node, field);
}

double squared_norm(const Point& p) {
  double s = 0.0;
  for (double v : p) s += v * v;
  return s;
}

MetaEnvironment parse_environment(const YAML::Node& node) {
  if (!node || !node.IsMap()) throw ConfigError("missing 'environment' section", line_of(node));
  if (!node["kind"]) throw ConfigError("environment: missing 'kind'", line_of(node));
  const std::string kind = get<std::string>(node["kind"], "kind");
  if (kind == "discrete") {
    check_keys(node, "environment", {"kind", "M", "a_star", "flip"});
    for (const char* k : {"M", "a_star", "flip"})
      if (!node[k]) throw ConfigError(std::string("environment: missing '") + k + "'", line_of(node));
    DiscreteEnv e{get<int>(node["M"], "M"), get_list<int>(node["a_star"], "a_star"),
                  get<double>(node["flip"], "flip")};
    try {
      validate(MetaEnvironment{e});
    } catch (const DomainError& err) {
      throw ConfigError(std::string("environment: ") + err.what(), line_of(node));
    }
    return e;
  }
  const double noise = node["noise_var"] ? positive(node["noise_var"], "noise_var") : 1.0;
  if (kind == "gaussian") {
    check_keys(node, "environment", {"kind", "d", "mu_star", "spread", "dispersion", "noise_var", "clip"});
    if (!node["mu_star"]) throw ConfigError("environment: missing 'mu_star'", line_of(node));
    const Point mu = get_list<double>(node["mu_star"], "mu_star");
    const std::size_t d = node["d"] ? get<std::size_t>(node["d"], "d") : mu.size();
    if (d != mu.size() || d == 0) throw ConfigError("environment: 'd' must equal the length of mu_star", line_of(node));
    if (node["spread"] && node["dispersion"])
      throw ConfigError("environment: give either 'spread' or 'dispersion', not both", line_of(node));
    double spread = 0.0;
    if (node["spread"]) spread = nonnegative(node["spread"], "spread");
    if (node["dispersion"]) spread = nonnegative(node["dispersion"], "dispersion") / static_cast<double>(d);
    const double offset2 = squared_norm(mu) + static_cast<double>(d) * (spread + 1.0);
    const double clip = node["clip"] ? positive(node["clip"], "clip") : default_clip(d, noise, offset2);
    GaussianEnv e{d, mu, spread, noise, clip};
    try {
      validate(MetaEnvironment{e});
    } catch (const DomainError& err) {
      throw ConfigError(std::string("environment: ") + err.what(), line_of(node));
    }
    return e;
  }
  if (kind == "mixture") {
    check_keys(node, "environment", {"kind", "centers", "spread", "noise_var", "clip"});
    if (!node["centers"] || !node["centers"].IsSequence())
      throw ConfigError("environment: 'centers' must be a list of points", line_of(node));
    std::vector<Point> centers;
    for (const auto& c : node["centers"]) centers.push_back(get_list<double>(c, "centers"));
    if (centers.empty()) throw ConfigError("environment: 'centers' is empty", line_of(node["centers"]));
    const double spread = node["spread"] ? nonnegative(node["spread"], "spread") : 0.0;
    double far = 0.0;
    for (const auto& c : centers) far = std::max(far, squared_norm(c));
    const std::size_t d = centers.front().size();
    const double offset2 = far + static_cast<double>(d) * (spread + 1.0);
    const double clip = node["clip"] ? positive(node["clip"], "clip") : default_clip(d, noise, offset2);
    MixtureEnv e{centers, spread, noise, clip};
    try {
      validate(MetaEnvironment{e});
    } catch (const DomainError& err) {
      throw ConfigError(std::string("environment: ") + err.what(), line_of(node));
    }
    return e;
  }
  throw ConfigError("environment: unknown kind '" + kind + "'", line_of(node["kind"]));
}

void parse_algorithm(const YAML::Node& node, AlgorithmConfig& a) {
  check_keys(node, "algorithm",
             {"alpha", "beta", "family", "fit_mode", "epsilon", "regime_threshold", "xi2_ref", "a_ref", "b_ref",
              "reference_var", "budget", "draws", "K", "k_grid", "refine", "variational_budget"});
  if (node["alpha"]) a.alpha = rate_or_default(node["alpha"], "alpha");
  if (node["beta"]) a.beta = rate_or_default(node["beta"], "beta");
  if (node["family"]) {
    const std::string f = get<std::string>(node["family"], "family");
    if (f == "subset") a.family = FamilyKind::Subset;
    else if (f == "gaussian-gamma") a.family = FamilyKind::GaussianGamma;
    else if (f == "mixture") a.family = FamilyKind::Mixture;
    else if (f == "mixture-unknown-k") a.family = FamilyKind::MixtureUnknownK;
    else throw ConfigError("unknown family '" + f + "'", line_of(node["family"]));
  }
  if (node["fit_mode"]) {
    const std::string m = get<std::string>(node["fit_mode"], "fit_mode");
    if (m == "closed-form") a.fit_mode = FitMode::ClosedForm;
    else if (m == "stochastic") a.fit_mode = FitMode::Stochastic;
    else throw ConfigError("unknown fit_mode '" + m + "'", line_of(node["fit_mode"]));
  }
  if (node["epsilon"]) a.epsilon = schedule(node["epsilon"], "epsilon");
  if (node["regime_threshold"]) a.regime_threshold = schedule(node["regime_threshold"], "regime_threshold");
  if (node["xi2_ref"]) a.xi2_ref = positive(node["xi2_ref"], "xi2_ref");
  if (node["a_ref"]) a.a_ref = positive(node["a_ref"], "a_ref");
  if (node["b_ref"]) a.b_ref = positive(node["b_ref"], "b_ref");
  if (node["reference_var"]) a.reference_var = positive(node["reference_var"], "reference_var");
  if (node["budget"]) a.budget = get<int>(node["budget"], "budget");
  if (node["draws"]) a.draws = get<int>(node["draws"], "draws");
  if (node["variational_budget"]) a.variational_budget = get<int>(node["variational_budget"], "variational_budget");
  if (node["K"]) a.K = get<std::size_t>(node["K"], "K");
  if (node["k_grid"]) a.k_grid = get_list<std::size_t>(node["k_grid"], "k_grid");
  if (node["refine"]) a.refine = get<bool>(node["refine"], "refine");
  if (a.budget < 1 || a.draws < 1 || a.variational_budget < 1)
    throw ConfigError("algorithm: budgets and draws must be positive", line_of(node));
  if (a.K < 1) throw ConfigError("algorithm: K must be positive", line_of(node));
}

void parse_sweep(const YAML::Node& node, SweepConfig& s) {
  check_keys(node, "sweep", {"T_grid", "n_grid", "reps", "seeds", "threads"});
  for (const char* k : {"T_grid", "n_grid", "reps"})
    if (!node[k]) throw ConfigError(std::string("sweep: missing '") + k + "'", line_of(node));
  s.T_grid = get_list<long long>(node["T_grid"], "T_grid");
  s.n_grid = get_list<int>(node["n_grid"], "n_grid");
  s.reps = get<int>(node["reps"], "reps");
  if (node["seeds"]) s.seeds = get_list<std::uint64_t>(node["seeds"], "seeds");
  if (node["threads"]) s.threads = get<unsigned>(node["threads"], "threads");
  if (s.T_grid.empty() || s.n_grid.empty() || s.seeds.empty())
    throw ConfigError("sweep: grids and seeds must be nonempty", line_of(node));
  for (long long T : s.T_grid)
    if (T < 1) throw ConfigError("sweep: T values must be positive", line_of(node["T_grid"]));
  for (int n : s.n_grid)
    if (n < 1) throw ConfigError("sweep: n values must be positive", line_of(node["n_grid"]));
  if (s.reps < 2) throw ConfigError("sweep: reps must be at least 2", line_of(node["reps"]));
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("malformed document: " + e.msg, e.mark.line >= 0 ? e.mark.line + 1 : -1);
  }
  if (!root.IsMap()) throw ConfigError("config must be a mapping", line_of(root));
  check_keys(root, "root", {"name", "environment", "algorithm", "sweep", "output", "bernstein", "probe"});
  ExperimentConfig cfg;
  if (root["name"]) cfg.name = get<std::string>(root["name"], "name");
  cfg.environment = parse_environment(root["environment"]);
  if (std::holds_alternative<GaussianEnv>(cfg.environment)) cfg.algorithm.family = FamilyKind::GaussianGamma;
  if (std::holds_alternative<MixtureEnv>(cfg.environment)) cfg.algorithm.family = FamilyKind::Mixture;
  if (root["algorithm"]) parse_algorithm(root["algorithm"], cfg.algorithm);
  const bool discrete = std::holds_alternative<DiscreteEnv>(cfg.environment);
  const FamilyKind f = cfg.algorithm.family;
  if (discrete != (f == FamilyKind::Subset))
    throw ConfigError("algorithm: family does not match the environment kind",
                      root["algorithm"] ? line_of(root["algorithm"]) : -1);
  if (discrete && std::get<DiscreteEnv>(cfg.environment).M > 20)
    throw ConfigError("environment: the subset family needs M <= 20", line_of(root["environment"]));
  if (!root["sweep"]) throw ConfigError("missing 'sweep' section", line_of(root));
  parse_sweep(root["sweep"], cfg.sweep);
  if (const auto out = root["output"]) {
    check_keys(out, "output", {"dir", "csv", "json"});
    if (out["dir"]) cfg.output.dir = get<std::string>(out["dir"], "dir");
    if (out["csv"]) cfg.output.csv = get<std::string>(out["csv"], "csv");
    if (out["json"]) cfg.output.json = get<std::string>(out["json"], "json");
  }
  if (const auto b = root["bernstein"]) {
    check_keys(b, "bernstein", {"candidates", "tested", "reps", "ceiling", "grid_reps"});
    if (b["candidates"]) cfg.bernstein.candidates = get<int>(b["candidates"], "candidates");
    if (b["tested"]) cfg.bernstein.tested = get<int>(b["tested"], "tested");
    if (b["reps"]) cfg.bernstein.reps = get<int>(b["reps"], "reps");
    if (b["ceiling"]) cfg.bernstein.ceiling = positive(b["ceiling"], "ceiling");
    if (b["grid_reps"]) cfg.bernstein.grid_reps = get<int>(b["grid_reps"], "grid_reps");
    if (cfg.bernstein.candidates < 1 || cfg.bernstein.tested < 0 || cfg.bernstein.reps < 100 ||
        cfg.bernstein.grid_reps < 1)
      throw ConfigError("bernstein: need candidates >= 1, tested >= 0, reps >= 100", line_of(b));
  }
  if (const auto p = root["probe"]) {
    check_keys(p, "probe", {"variational"});
    if (p["variational"]) {
      const std::string v = get<std::string>(p["variational"], "variational");
      if (v == "dirac") cfg.probe.variational = FreeEnergyKind::Dirac;
      else if (v == "full") cfg.probe.variational = FreeEnergyKind::Gibbs;
      else throw ConfigError("probe: variational must be 'dirac' or 'full'", line_of(p["variational"]));
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

double resolved_alpha(const ExperimentConfig& cfg) {
  if (cfg.algorithm.alpha) return *cfg.algorithm.alpha;
  const double C = loss_of(cfg.environment).C;
  return 1.0 / (C + 8.0 * std::numbers::e * C);
}

double resolved_beta(const ExperimentConfig& cfg) {
  if (cfg.algorithm.beta) return *cfg.algorithm.beta;
  const double C = loss_of(cfg.environment).C;
  return 1.0 / (C + 8.0 * std::numbers::e * C);
}

}  // namespace metapac
