#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "metapac/config.hpp"
#include "metapac/environments.hpp"
#include "metapac/meta_level.hpp"
#include "metapac/random.hpp"

namespace metapac {

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
  int reps = 0;
};

/// Oracle excess risk E_{theta ~ rho}[R(theta)] - R* of the within-task Gibbs
/// posterior for `prior` on one task and sample. Gaussian priors use the exact
/// quadratic posterior when clipping is negligible, the variational posterior
/// otherwise. `approximate` is set when a mixture prior had to fall back to
/// the unclipped posterior.
double gibbs_excess(const PriorSpec& prior, const TaskDistribution& task, const TaskSample& sample,
                    const BoundedLoss& loss, double alpha, int variational_budget, const RandomStream& stream,
                    bool* approximate = nullptr);

/// Exact E_{pi ~ Pi}[excess] for a hyper-posterior over subset priors.
double subset_expected_excess(const SubsetPriorFamily& family, const CategoricalDist& weights,
                              const std::vector<double>& risks, const std::vector<double>& excess, double alpha, int n);

/// Monte-Carlo estimate of E_{pi ~ Pi} E(pi) - E*. Finite and subset hypers
/// take the expectation over Pi exactly; continuous hypers draw one prior per rep.
Estimate estimate_meta_risk(const HyperPosterior& hyper, const MetaEnvironment& env, double alpha, int n, int reps,
                            const RandomStream& stream, int variational_budget = 200);
/// Same with a fixed prior (learning in isolation).
Estimate estimate_prior_risk(const PriorSpec& prior, const MetaEnvironment& env, double alpha, int n, int reps,
                             const RandomStream& stream, int variational_budget = 200);

/// Reference prior used for learning in isolation: uniform on finite Theta,
/// N(0, (a_ref / b_ref) I) otherwise.
PriorSpec isolation_prior(const MetaEnvironment& env, const AlgorithmConfig& algorithm);

struct CellRow {
  std::string setting;
  std::uint64_t seed;
  long long T;
  int n;
  int reps;
  Estimate meta;
  Estimate isolation;
  Estimate diff;  // paired meta - isolation
  double meta_bound;
  double isolation_bound;
  double favorable_fraction;  // share of reps whose fit picked the favorable regime
  double sigma_hat;           // mean plug-in dispersion over reps
  int approximations;         // reps that used the unclipped mixture posterior
  bool bound_ok;              // both bounds >= estimate - 3 SE
};

/// One row per (seed, T, n); every rep retrains on T fresh tasks and scores a
/// fresh test task.
std::vector<CellRow> run_isolation_vs_meta(const ExperimentConfig& cfg);
CellRow run_cell(const ExperimentConfig& cfg, std::uint64_t seed, long long T, int n);

void write_csv(std::ostream& out, const std::vector<CellRow>& rows);

struct RatePoint {
  double T;
  double estimate;
  double se;
};

struct RateReport {
  std::vector<RatePoint> points;  // those used in the fit
  double slope;
  double intercept;
  double r2;
};

/// Least squares of log(estimate) on log(T), nonpositive estimates dropped.
/// Throws FitUnavailable with fewer than 3 usable points.
RateReport rate_fit(const std::vector<RatePoint>& points);

struct ProbeRow {
  std::uint64_t seed;
  long long T;
  int n;
  int reps;
  Estimate gibbs;
  Estimate variational;
  Estimate gap;  // paired variational - gibbs
  double max_free_energy_gap;  // over all training tasks and subsets
};

/// Meta risk of the hyper-posterior built from exact Gibbs free energies vs
/// from variational (Dirac or full-simplex) free energies. Finite Theta only.
std::vector<ProbeRow> open_question_probe(const ExperimentConfig& cfg);
void write_probe_csv(std::ostream& out, const std::vector<ProbeRow>& rows);

/// %.17g formatting used by every emitter.
std::string format_double(double x);

}  // namespace metapac
