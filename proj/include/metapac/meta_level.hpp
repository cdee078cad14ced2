#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <variant>
#include <vector>

#include "metapac/divergences.hpp"
#include "metapac/environments.hpp"
#include "metapac/random.hpp"
#include "metapac/within_task.hpp"

namespace metapac {

struct DiscretePrior {
  std::vector<double> log_weights;
};

using PriorSpec = std::variant<DiscretePrior, DiagGaussian, GaussianMixture>;

struct FinitePriorFamily {
  std::vector<DiscretePrior> priors;
  CategoricalDist lambda;
  FinitePriorFamily(std::vector<DiscretePrior> priors, CategoricalDist lambda);
};

/// All nonempty subsets A of {0..M-1} (bitmask order 1..2^M-1), pi_A uniform on A.
struct SubsetPriorFamily {
  int M;
  std::vector<std::uint32_t> masks;
  std::vector<double> log_lambda;
  std::size_t size() const { return masks.size(); }
  DiscretePrior prior(std::size_t j) const;
  CategoricalDist lambda() const;
};

SubsetPriorFamily subset_family(int M);

/// Row-major T x M matrix.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::vector<double> column_sums() const;
};

/// Entry (t, j) = min free energy of task t under prior j.
Matrix meta_empirical_risk_matrix(const std::vector<std::vector<double>>& task_risks, const FinitePriorFamily& family,
                                  double alpha, int n);
Matrix meta_empirical_risk_matrix(const std::vector<TaskSample>& tasks, const BoundedLoss& loss, int M,
                                  const FinitePriorFamily& family, double alpha);

/// Pi_hat_j proportional to Lambda_j exp(-beta * column_sums_j).
CategoricalDist meta_gibbs_finite(const std::vector<double>& column_sums, const std::vector<double>& log_lambda,
                                  double beta);
CategoricalDist meta_gibbs_finite(const Matrix& matrix, const CategoricalDist& lambda, double beta, std::size_t T);

enum class FreeEnergyKind { Gibbs, Dirac };

/// Free energy of one task's risks under every subset prior, by a
/// subset-sum recursion over bitmasks.
void subset_free_energies(const SubsetPriorFamily& family, const std::vector<double>& risks, double alpha, int n,
                          FreeEnergyKind kind, std::vector<double>& out);

/// (1/T) sum_t (E_Pi[matrix(t,.)] - proxy_t) + KL(Pi || Lambda) / (beta T), T = rows.
double empirical_meta_objective(const CategoricalDist& pi, const Matrix& matrix, const CategoricalDist& lambda,
                                double beta, const std::vector<double>& proxy_risks);

struct MetaConstants {
  double L = 1.0;
  double C = 1.0;
};

enum class FitMode { ClosedForm, Stochastic };
enum class Regime { Favorable, Unfavorable };
const char* to_string(Regime r);

struct GaussianGammaHyper {
  HyperParams params;  // K = 1
  HyperReference reference;
};

struct MixtureHyper {
  HyperParams params;  // delta set
  HyperReference reference;
  std::optional<CategoricalDist> k_distribution;  // over {1..T}
};

struct FiniteHyper {
  std::shared_ptr<const FinitePriorFamily> family;
  CategoricalDist weights;
};

struct SubsetHyper {
  std::shared_ptr<const SubsetPriorFamily> family;
  CategoricalDist weights;
};

using HyperPosterior = std::variant<FiniteHyper, SubsetHyper, GaussianGammaHyper, MixtureHyper>;

PriorSpec sample_prior(const HyperPosterior& hyper, const RandomStream& stream);

HyperReference make_reference(std::size_t K, double xi2, double a, double b);

struct GaussianFitOptions {
  FitMode mode = FitMode::ClosedForm;
  double epsilon = 0.0;           // resolved value, > 0
  double regime_threshold = 0.0;  // resolved value
  double reference_var = 1e6;     // prior variance behind the per-task posterior means
  int budget = 200;               // stochastic iterations
  int draws = 64;                 // common random numbers for the Gamma block
};

struct GaussianFitResult {
  GaussianGammaHyper hyper;
  Regime regime;
  double sigma_hat;
  double objective_initial = 0.0;  // stochastic mode only
  double objective_final = 0.0;
};

/// Per-task posterior means under a wide centered Gaussian prior.
std::vector<Point> posterior_means(const std::vector<QuadraticSummary>& tasks, double alpha, double reference_var);
/// Plug-in dispersion of the posterior means around the given centers,
/// corrected for within-task sampling noise. Never negative.
double plug_in_dispersion(const std::vector<QuadraticSummary>& tasks, const std::vector<Point>& means,
                          const std::vector<Point>& centers, double alpha, double reference_var);

GaussianFitResult fit_gaussian_hyperposterior(const std::vector<TaskSample>& tasks, const MetaConstants& consts,
                                              double alpha, double beta, const HyperReference& reference,
                                              const GaussianFitOptions& options, const RandomStream& stream);

/// Meta objective of a Normal x Gamma hyper for quadratic-loss tasks,
/// Gamma expectation by stratified quantile draws.
double gaussian_hyper_objective(const HyperParams& q, const HyperReference& reference,
                                const std::vector<QuadraticSummary>& tasks, double alpha, double beta, int draws);

/// Closed-form optimizers of the per-coordinate objectives, exposed for testing.
double optimal_posterior_variance(double prior_var, double alpha, double L, int n);
double optimal_gamma_rate(double a, double L, double alpha, int n, double epsilon);
double optimal_hyper_variance(double xi2_ref, double b, double alpha, int n, double beta, std::size_t T);

struct MixtureFitOptions {
  std::optional<Regime> regime;   // forced regime, otherwise plug-in vs threshold
  double regime_threshold = 0.0;  // resolved value
  double reference_var = 1e6;
  bool refine = false;
  int budget = 50;
  int draws = 32;
};

struct MixtureFitResult {
  MixtureHyper hyper;
  Regime regime;
  double sigma_hat;
  double objective = 0.0;  // empirical meta objective estimate (CRN)
};

MixtureFitResult fit_mixture_hyperposterior(const std::vector<TaskSample>& tasks, const MetaConstants& consts,
                                            double alpha, double beta, const HyperReference& reference, std::size_t K,
                                            const MixtureFitOptions& options, const RandomStream& stream);

struct UnknownKFitResult {
  MixtureFitResult fit;
  std::size_t K;
  std::vector<double> objectives;  // per grid entry, penalty included
};

UnknownKFitResult fit_unknownK_hyperposterior(const std::vector<TaskSample>& tasks, const MetaConstants& consts,
                                              double alpha, double beta, double xi2_ref, double b_ref,
                                              const std::vector<std::size_t>& k_grid, const MixtureFitOptions& options,
                                              const RandomStream& stream);

/// Empirical meta objective of a mixture hyper (CRN Monte-Carlo over priors).
double mixture_hyper_objective(const MixtureHyper& hyper, const std::vector<QuadraticSummary>& tasks, double alpha,
                               double beta, int draws, const RandomStream& stream);

/// Lloyd clustering with k-means++ seeding, best of `restarts`.
struct Clustering {
  std::vector<Point> centers;
  double within_ss;
};
Clustering kmeans(const std::vector<Point>& points, std::size_t K, int restarts, const RandomStream& stream);

}  // namespace metapac
