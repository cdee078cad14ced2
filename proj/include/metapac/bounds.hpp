#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metapac/meta_level.hpp"

namespace metapac {

struct BoundParams {
  double C = 1.0;
  double c = 0.0;  // Bernstein constant; default_constants sets 8eC
  double L = 1.0;
  double alpha = 0.0;
  double beta = 0.0;
  bool bernstein = true;
  int n = 1;
  long long T = 1;
  int M = 1;
  int m_star = 1;
  int d = 1;
  int K = 1;
  double sigma = 0.0;    // Sigma(P)
  double sigma_K = 0.0;  // Sigma_K(P)
  double d_pi = 1.0;
  double kappa_pi = 1.0;
  double xi2_ref = 1.0;
  double a_ref = 2.0;
  double b_ref = 1.0;
  double mu_norm2 = 0.0;          // |mu*|^2
  std::vector<double> tau_norm2;  // |tau_k|^2 per mixture center; empty -> mu_norm2 for all k
  std::optional<double> regime_threshold;  // gaussian default n/T, mixture default n/T^2
  std::optional<double> epsilon;           // hyper-prior variance target, default n/T^2
};

/// c = 8eC, alpha = beta = 1/(C + c), Bernstein flag on.
BoundParams default_constants(double C);

struct BoundReport {
  double value = 0.0;
  std::optional<Regime> regime;
  std::vector<std::pair<std::string, double>> terms;   // sum to value
  std::vector<std::pair<std::string, double>> extras;  // reported, not summed
  double term(const std::string& name) const;
  double extra(const std::string& name) const;
};

/// 1 / (1 - alpha c 1_B / (2 (1 - C alpha))).
double bernstein_prefactor(const BoundParams& p);

BoundReport isolation_bound(const BoundParams& p, double empirical_part);
BoundReport prior_mass_bound(const BoundParams& p);
/// 2 * prefactor * (inner + alpha C^2 (1 - 1_B) / 8).
BoundReport meta_learning_bound(const BoundParams& p, double inner);
BoundReport concurrent_priors_bound(const std::vector<double>& rates, int M, double beta, double T);
BoundReport discrete_meta_bound(int m_star, int M, double alpha, double beta, int n, double T);
BoundReport gaussian_meta_bound(const BoundParams& p);
/// Isolation bound for a fixed N(mean, var I) prior in the gaussian env:
/// prefactor * [L (|mean - mu*|^2 + Sigma) / (1 + 2 alpha n L var) + d log(1 + 2 alpha n L var) / (2 alpha n)].
BoundReport gaussian_isolation_bound(const BoundParams& p, double mean_offset2, double prior_var);
BoundReport mixture_meta_bound(const BoundParams& p, bool known_K);

struct MixtureCell {
  int K;
  double sigma_K;
  std::vector<double> tau_norm2;
};
/// Infimum over the grid of the unknown-K bound.
BoundReport mixture_meta_bound_unknownK(const BoundParams& p, const std::vector<MixtureCell>& grid);

}  // namespace metapac
