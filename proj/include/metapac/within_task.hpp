#pragma once

#include <vector>

#include "metapac/divergences.hpp"
#include "metapac/environments.hpp"
#include "metapac/random.hpp"

namespace metapac {

struct DiscretePosterior {
  std::vector<double> log_weights;  // normalized
  std::vector<double> probabilities() const;
};

/// E_rho[R_hat] + KL(rho || prior) / (alpha n).
struct FreeEnergyValue {
  double risk_term = 0.0;
  KlValue kl_term = KlValue::finite(0.0);  // already divided by alpha n
  bool is_infinite() const { return kl_term.is_infinite(); }
  double value() const { return risk_term + kl_term.value(); }
};

enum class VariationalKind { FullSimplex, DiracOnTheta, DiagGaussian };

/// Risks for Theta = {0, .., M-1} under a label loss.
std::vector<double> empirical_risks(const TaskSample& sample, const BoundedLoss& loss, int M);
/// Risks for an explicit finite set of points.
std::vector<double> empirical_risks(const TaskSample& sample, const BoundedLoss& loss, const std::vector<Point>& thetas);

DiscretePosterior gibbs_discrete(const std::vector<double>& prior_log, const std::vector<double>& risks, double alpha, int n);
FreeEnergyValue free_energy(const DiscretePosterior& rho, const std::vector<double>& prior_log, double alpha, int n,
                            const std::vector<double>& risks);
double log_partition_free_energy(const std::vector<double>& prior_log, const std::vector<double>& risks, double alpha, int n);

/// One-hot at argmin of R_hat(theta) + log(1/prior(theta)) / (alpha n), lowest index on ties.
DiscretePosterior dirac_variational_posterior(const std::vector<double>& prior_log, const std::vector<double>& risks,
                                              double alpha, int n);
/// Free energy of the best Dirac posterior.
double dirac_free_energy(const std::vector<double>& prior_log, const std::vector<double>& risks, double alpha, int n);

/// Sufficient statistics of a sample under unclipped squared loss.
struct QuadraticSummary {
  Point mean;       // z bar
  double scatter;   // (1/n) sum |z_i - z bar|^2
  int n;
};
QuadraticSummary summarize(const TaskSample& sample);

/// Exact Gibbs posterior for squared loss with a diagonal Gaussian prior.
DiagGaussian gibbs_gaussian_quadratic(const DiagGaussian& prior, const QuadraticSummary& s, double alpha);
/// Exact Gibbs posterior for squared loss with a Gaussian-mixture prior.
GaussianMixture gibbs_mixture_quadratic(const GaussianMixture& prior, const QuadraticSummary& s, double alpha);
/// -(1/(alpha n)) log int prior(theta) exp(-alpha n R_hat(theta)) for squared loss.
double quadratic_free_energy(const GaussianMixture& prior, const QuadraticSummary& s, double alpha);
double quadratic_free_energy(const DiagGaussian& prior, const QuadraticSummary& s, double alpha);

/// True when every data point sees clipping probability below 1e-12 under rho.
bool clipping_negligible(const TaskSample& sample, const DiagGaussian& rho, double clip);

/// Reparameterized Monte-Carlo objective on (mu, log var) with fixed,
/// moment-standardized base draws (common random numbers).
class VariationalObjective {
 public:
  VariationalObjective(const TaskSample& sample, const BoundedLoss& loss, const DiagGaussian& prior, double alpha,
                       int n, int draws, const RandomStream& stream);

  double value(const Point& mu, const std::vector<double>& log_var) const;
  void gradient(const Point& mu, const std::vector<double>& log_var, Point& g_mu, std::vector<double>& g_log_var) const;
  /// Objective with E_rho[R_hat] from the oracle clipped-square expectation.
  double exact_value(const DiagGaussian& rho) const;

 private:
  double kl_over_alpha_n(const Point& mu, const std::vector<double>& log_var) const;
  const TaskSample& sample_;
  BoundedLoss loss_;
  DiagGaussian prior_;
  double alpha_n_;
  std::size_t d_;
  std::vector<double> eps_;  // draws x d
  std::size_t draws_;
};

struct VariationalResult {
  DiagGaussian posterior;
  double objective;
  int steps;
};

VariationalResult variational_gaussian_posterior(const TaskSample& sample, const BoundedLoss& loss,
                                                 const DiagGaussian& prior, double alpha, int n, int budget,
                                                 const RandomStream& stream);

}  // namespace metapac
