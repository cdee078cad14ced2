#include "metapac/divergences.hpp"

#include <cmath>
#include <numbers>

#include "metapac/errors.hpp"
#include "metapac/numerics.hpp"

namespace metapac {

double KlValue::value() const {
  if (infinite_) throw DivergenceInfinite("KL divergence is infinite (support violation)");
  return v_;
}

KlValue KlValue::operator+(const KlValue& o) const {
  if (infinite_ || o.infinite_) return infinite();
  return finite(v_ + o.v_);
}

KlValue KlValue::scaled(double factor) const {
  if (!(factor > 0.0)) throw DomainError("KlValue::scaled: factor must be positive");
  if (infinite_) return infinite();
  return finite(v_ * factor);
}

DiagGaussian::DiagGaussian(std::vector<double> m, std::vector<double> v) : mean(std::move(m)), var(std::move(v)) {
  if (mean.empty() || mean.size() != var.size()) throw DomainError("DiagGaussian: bad dimensions");
  for (double s : var)
    if (!(s > 0.0)) throw DomainError("DiagGaussian: variances must be positive");
}

double DiagGaussian::log_density(const std::vector<double>& x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double r = x[i] - mean[i];
    s += -0.5 * (r * r / var[i] + std::log(2.0 * std::numbers::pi * var[i]));
  }
  return s;
}

GammaDist::GammaDist(double a, double b) : shape(a), rate(b) {
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("GammaDist: shape and rate must be positive");
}

double GammaDist::log_density(double x) const {
  return shape * std::log(rate) - log_gamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

DirichletDist::DirichletDist(std::vector<double> c) : concentration(std::move(c)) {
  if (concentration.empty()) throw DomainError("DirichletDist: empty concentration");
  for (double d : concentration)
    if (!(d > 0.0)) throw DomainError("DirichletDist: concentrations must be positive");
}

double DirichletDist::log_density(const std::vector<double>& w) const {
  double total = 0.0, s = 0.0;
  for (std::size_t k = 0; k < concentration.size(); ++k) {
    total += concentration[k];
    s += (concentration[k] - 1.0) * std::log(w[k]) - log_gamma(concentration[k]);
  }
  return s + log_gamma(total);
}

CategoricalDist::CategoricalDist(std::vector<double> p) : probs(std::move(p)) {
  if (probs.empty()) throw DomainError("CategoricalDist: empty");
  for (double v : probs)
    if (!(v >= 0.0)) throw DomainError("CategoricalDist: negative or NaN entry");
  const double s = pairwise_sum(probs);
  if (std::fabs(s - 1.0) > 1e-12) throw DomainError("CategoricalDist: entries must sum to 1");
}

CategoricalDist CategoricalDist::uniform(std::size_t k) {
  return CategoricalDist(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

GaussianMixture::GaussianMixture(CategoricalDist w, std::vector<DiagGaussian> c)
    : weights(std::move(w)), components(std::move(c)) {
  if (components.empty() || components.size() != weights.size())
    throw DomainError("GaussianMixture: weights and components differ in length");
  for (const auto& g : components)
    if (g.dim() != components.front().dim()) throw DomainError("GaussianMixture: dimension mismatch");
}

double GaussianMixture::log_density(const std::vector<double>& x) const {
  std::vector<double> lw(components.size()), lv(components.size());
  for (std::size_t k = 0; k < components.size(); ++k) {
    lw[k] = std::log(weights.probs[k]);
    lv[k] = components[k].log_density(x);
  }
  return log_sum_exp(lw, lv);
}

KlValue kl_categorical(const CategoricalDist& p, const CategoricalDist& q) {
  if (p.size() != q.size()) throw DomainError("kl_categorical: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p.probs[k] == 0.0) continue;
    if (q.probs[k] == 0.0) return KlValue::infinite();
    s += p.probs[k] * std::log(p.probs[k] / q.probs[k]);
  }
  return KlValue::finite(std::max(s, 0.0));
}

double kl_diag_gaussian(const DiagGaussian& p, const DiagGaussian& q) {
  if (p.dim() != q.dim()) throw DomainError("kl_diag_gaussian: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.dim(); ++i) {
    const double r = p.mean[i] - q.mean[i];
    const double ratio = p.var[i] / q.var[i];
    s += 0.5 * (r * r / q.var[i] + ratio - 1.0 - std::log(ratio));
  }
  return s;
}

double kl_gamma(const GammaDist& p, const GammaDist& q) {
  const double a = p.shape, b = p.rate, ar = q.shape, br = q.rate;
  return (a - ar) * digamma(a) + log_gamma(ar) - log_gamma(a) + ar * std::log(b / br) + a * (br - b) / b;
}

double kl_dirichlet_vs_flat(const DirichletDist& p) {
  const auto& d = p.concentration;
  const double k = static_cast<double>(d.size());
  double total = 0.0;
  for (double v : d) total += v;
  double s = log_gamma(total) - log_gamma(k);
  const double psi_total = digamma(total);
  for (double v : d) s += -log_gamma(v) + (v - 1.0) * (digamma(v) - psi_total);
  return s;
}

double kl_multinomial_vs_uniform(const CategoricalDist& x) {
  double h = 0.0;
  for (double v : x.probs)
    if (v > 0.0) h -= v * std::log(v);
  return std::max(0.0, std::log(static_cast<double>(x.size())) - h);
}

MixtureKlBound mixture_kl_upper_bound(const GaussianMixture& p, const GaussianMixture& q) {
  if (p.components.size() != q.components.size() || p.dim() != q.dim())
    throw DomainError("mixture_kl_upper_bound: shape mismatch");
  KlValue total = kl_categorical(p.weights, q.weights);
  for (std::size_t k = 0; k < p.components.size(); ++k) {
    const double w = p.weights.probs[k];
    if (w > 0.0) total = total + KlValue::finite(w * kl_diag_gaussian(p.components[k], q.components[k]));
  }
  return {total, true};
}

void HyperParams::validate() const {
  const std::size_t k = tau.size();
  if (k == 0 || dim() == 0) throw DomainError("HyperParams: need K >= 1 and d >= 1");
  if (xi2.size() != k || b.size() != k) throw DomainError("HyperParams: block counts differ");
  for (const auto& t : tau)
    if (t.size() != dim()) throw DomainError("HyperParams: tau dimension mismatch");
  for (double v : xi2)
    if (!(v > 0.0)) throw DomainError("HyperParams: xi2 must be positive");
  for (double v : b)
    if (!(v > 0.0)) throw DomainError("HyperParams: b must be positive");
  if (!(a > 0.0)) throw DomainError("HyperParams: a must be positive");
  if (!delta.empty() && delta.size() != k) throw DomainError("HyperParams: delta length mismatch");
}

HyperKl kl_hyper_gaussian_gamma(const HyperParams& q, const HyperReference& ref,
                                const CategoricalDist* k_distribution) {
  q.validate();
  const std::size_t k = q.components(), d = q.dim();
  if (ref.xi2.size() != k || ref.b.size() != k) throw DomainError("kl_hyper_gaussian_gamma: reference shape");
  HyperKl out;
  for (std::size_t j = 0; j < k; ++j) {
    DiagGaussian qn(q.tau[j], std::vector<double>(d, q.xi2[j]));
    DiagGaussian rn(std::vector<double>(d, 0.0), std::vector<double>(d, ref.xi2[j]));
    out.normal += kl_diag_gaussian(qn, rn);
    out.gamma += kl_gamma(GammaDist(q.a, q.b[j]), GammaDist(ref.a, ref.b[j]));
  }
  if (!q.delta.empty()) out.dirichlet = kl_dirichlet_vs_flat(DirichletDist(q.delta));
  if (k_distribution) out.multinomial = kl_multinomial_vs_uniform(*k_distribution);
  out.total = out.normal + out.gamma + out.dirichlet + out.multinomial;
  return out;
}

}  // namespace metapac
