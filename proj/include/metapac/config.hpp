#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "metapac/environments.hpp"
#include "metapac/meta_level.hpp"

namespace metapac {

/// A number or one of the schedules "n/T", "n/T^2", "sqrt(n)/T".
struct Schedule {
  enum class Kind { Value, NOverT, NOverT2, SqrtNOverT };
  Kind kind = Kind::Value;
  double value = 0.0;
  double eval(int n, long long T) const;
  std::string text() const;
  static Schedule parse(const std::string& s);  // throws DomainError
};

enum class FamilyKind { Subset, GaussianGamma, Mixture, MixtureUnknownK };

struct AlgorithmConfig {
  std::optional<double> alpha;  // empty: 1/(C + 8eC)
  std::optional<double> beta;
  FamilyKind family = FamilyKind::Subset;
  FitMode fit_mode = FitMode::ClosedForm;
  Schedule epsilon{Schedule::Kind::NOverT2, 0.0};
  std::optional<Schedule> regime_threshold;  // gaussian default n/T, mixture n/T^2
  double xi2_ref = 1.0;
  double a_ref = 2.0;
  double b_ref = 1.0;
  double reference_var = 1e6;
  int budget = 200;
  int draws = 64;
  std::size_t K = 1;
  std::vector<std::size_t> k_grid;
  bool refine = false;
  int variational_budget = 200;
};

struct SweepConfig {
  std::vector<long long> T_grid;
  std::vector<int> n_grid;
  int reps = 2;
  std::vector<std::uint64_t> seeds{0};
  unsigned threads = 0;  // 0: hardware concurrency
};

struct OutputConfig {
  std::string dir = ".";
  std::string csv = "results.csv";
  std::string json = "report.json";
};

struct BernsteinConfig {
  int candidates = 30;
  int tested = 20;
  int reps = 10000;
  double ceiling = std::numeric_limits<double>::infinity();
  int grid_reps = 100;
};

struct ProbeConfig {
  FreeEnergyKind variational = FreeEnergyKind::Dirac;
};

struct ExperimentConfig {
  std::string name = "experiment";
  MetaEnvironment environment = DiscreteEnv{2, {0}, 0.0};
  AlgorithmConfig algorithm;
  SweepConfig sweep;
  OutputConfig output;
  BernsteinConfig bernstein;
  ProbeConfig probe;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Resolved alpha and beta for the configured environment.
double resolved_alpha(const ExperimentConfig& cfg);
double resolved_beta(const ExperimentConfig& cfg);

}  // namespace metapac
