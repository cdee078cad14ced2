#pragma once

#include <cstddef>
#include <vector>

namespace metapac {

/// KL value that is either a finite nonnegative real or +infinity.
/// Infinity is a sentinel: value() throws instead of returning inf.
class KlValue {
 public:
  static KlValue finite(double v) { return KlValue(v, false); }
  static KlValue infinite() { return KlValue(0.0, true); }

  bool is_infinite() const { return infinite_; }
  double value() const;
  KlValue operator+(const KlValue& o) const;
  KlValue scaled(double factor) const;  // factor > 0

 private:
  KlValue(double v, bool inf) : v_(v), infinite_(inf) {}
  double v_;
  bool infinite_;
};

struct DiagGaussian {
  std::vector<double> mean;
  std::vector<double> var;
  DiagGaussian() = default;
  DiagGaussian(std::vector<double> mean, std::vector<double> var);
  std::size_t dim() const { return mean.size(); }
  double log_density(const std::vector<double>& x) const;
};

/// Gamma(a, b) with b a rate: density proportional to x^(a-1) exp(-b x).
struct GammaDist {
  double shape;
  double rate;
  GammaDist(double shape, double rate);
  double mean() const { return shape / rate; }
  double log_density(double x) const;
};

struct DirichletDist {
  std::vector<double> concentration;
  explicit DirichletDist(std::vector<double> concentration);
  double log_density(const std::vector<double>& w) const;
};

struct CategoricalDist {
  std::vector<double> probs;
  CategoricalDist() = default;
  explicit CategoricalDist(std::vector<double> probs);
  static CategoricalDist uniform(std::size_t k);
  std::size_t size() const { return probs.size(); }
};

struct GaussianMixture {
  CategoricalDist weights;
  std::vector<DiagGaussian> components;
  GaussianMixture(CategoricalDist weights, std::vector<DiagGaussian> components);
  std::size_t dim() const { return components.front().dim(); }
  double log_density(const std::vector<double>& x) const;
};

KlValue kl_categorical(const CategoricalDist& p, const CategoricalDist& q);
double kl_diag_gaussian(const DiagGaussian& p, const DiagGaussian& q);
double kl_gamma(const GammaDist& p, const GammaDist& q);
double kl_dirichlet_vs_flat(const DirichletDist& p);
double kl_multinomial_vs_uniform(const CategoricalDist& x);

struct MixtureKlBound {
  KlValue value;
  bool is_upper_bound = true;
};

/// KL(w || w_bar) + sum_k w_k KL(N_k || N_bar_k), with matched components.
MixtureKlBound mixture_kl_upper_bound(const GaussianMixture& p, const GaussianMixture& q);

/// Parameters of a Normal x Gamma (optionally Dirichlet) hyper-distribution.
/// Block k has mean tau[k] (d reals), isotropic variance xi2[k], and
/// Gamma(a, b[k]) on the prior variance.
struct HyperParams {
  std::vector<std::vector<double>> tau;
  std::vector<double> xi2;
  double a = 2.0;
  std::vector<double> b;
  std::vector<double> delta;  // empty when no Dirichlet block
  std::size_t components() const { return tau.size(); }
  std::size_t dim() const { return tau.empty() ? 0 : tau.front().size(); }
  void validate() const;
};

/// Reference Lambda: tau = 0, xi2_ref, a_ref, b_ref, flat Dirichlet.
struct HyperReference {
  std::vector<double> xi2;
  double a = 2.0;
  std::vector<double> b;
};

struct HyperKl {
  double normal = 0.0;
  double gamma = 0.0;
  double dirichlet = 0.0;
  double multinomial = 0.0;
  double total = 0.0;
};

/// Sum of block KLs. k_distribution, when given, is the multinomial over
/// {1..T} for the number of components.
HyperKl kl_hyper_gaussian_gamma(const HyperParams& q, const HyperReference& ref,
                                const CategoricalDist* k_distribution = nullptr);

}  // namespace metapac
