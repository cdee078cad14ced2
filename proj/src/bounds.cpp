#include "metapac/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "metapac/errors.hpp"
#include "metapac/numerics.hpp"

namespace metapac {

namespace {

constexpr double kE = std::numbers::e;

BoundReport finish(BoundReport r) {
  std::vector<double> v;
  for (const auto& [name, x] : r.terms) {
    if (!std::isfinite(x)) throw NumericError("bound term '" + name + "' is not finite");
    v.push_back(x);
  }
  r.value = pairwise_sum(v);
  return r;
}

void require_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) throw DomainError(std::string(what) + " must be positive and finite");
}

}  // namespace

BoundParams default_constants(double C) {
  require_positive(C, "C");
  BoundParams p;
  p.C = C;
  p.c = 8.0 * kE * C;
  p.alpha = 1.0 / (C + p.c);
  p.beta = p.alpha;
  p.bernstein = true;
  return p;
}

double BoundReport::term(const std::string& name) const {
  for (const auto& [k, v] : terms)
    if (k == name) return v;
  throw DomainError("no bound term named " + name);
}

double BoundReport::extra(const std::string& name) const {
  for (const auto& [k, v] : extras)
    if (k == name) return v;
  throw DomainError("no bound extra named " + name);
}

double bernstein_prefactor(const BoundParams& p) {
  require_positive(p.C, "C");
  require_positive(p.alpha, "alpha");
  if (!p.bernstein) return 1.0;
  require_positive(p.c, "c");
  if (!(p.C * p.alpha < 1.0)) throw DomainError("Bernstein prefactor needs alpha < 1/C");
  const double denom = 1.0 - p.alpha * p.c / (2.0 * (1.0 - p.C * p.alpha));
  if (!(denom > 0.0)) throw DomainError("Bernstein prefactor denominator is not positive (alpha too large for c)");
  return 1.0 / denom;
}

BoundReport isolation_bound(const BoundParams& p, double empirical_part) {
  const double pre = bernstein_prefactor(p);
  BoundReport r;
  r.terms = {{"empirical", pre * empirical_part},
             {"non_bernstein", pre * p.alpha * p.C * p.C * (p.bernstein ? 0.0 : 1.0) / 8.0}};
  r.extras = {{"prefactor", pre}};
  return finish(std::move(r));
}

BoundReport prior_mass_bound(const BoundParams& p) {
  require_positive(p.d_pi, "d_pi");
  require_positive(p.kappa_pi, "kappa_pi");
  if (p.n < 1) throw DomainError("n must be positive");
  const double n = p.n;
  BoundReport r;
  if (p.bernstein) {
    require_positive(p.alpha, "alpha");
    const double arg = n * p.alpha / p.d_pi;
    if (!(arg > 1.0))
      throw DomainError("prior_mass_bound: n alpha / d_pi must exceed 1, otherwise the log term is not positive");
    const double an = p.alpha * n;
    r.terms = {{"dimension", 2.0 * p.d_pi * std::log(arg) / an}, {"kappa", 2.0 * std::log(p.kappa_pi) / an}};
    r.extras = {{"alpha", p.alpha}};
  } else {
    require_positive(p.C, "C");
    const double arg = 8.0 * kE * kE * n / (p.d_pi * p.C * p.C);
    if (!(arg > 1.0)) throw DomainError("prior_mass_bound: 8 e^2 n / (d_pi C^2) must exceed 1");
    const double scale = (p.C / 2.0) * std::sqrt(p.d_pi / (2.0 * n));
    r.terms = {{"dimension", scale * 0.5 * std::log(arg)}, {"kappa", scale * std::log(p.kappa_pi) / p.d_pi}};
    r.extras = {{"alpha", 2.0 * std::sqrt(2.0 * p.d_pi) / (std::sqrt(n) * p.C)}};
  }
  return finish(std::move(r));
}

BoundReport meta_learning_bound(const BoundParams& p, double inner) {
  const double pre = bernstein_prefactor(p);
  BoundReport r;
  r.terms = {{"inner", 2.0 * pre * inner},
             {"non_bernstein", 2.0 * pre * p.alpha * p.C * p.C * (p.bernstein ? 0.0 : 1.0) / 8.0}};
  r.extras = {{"prefactor", 2.0 * pre}};
  return finish(std::move(r));
}

BoundReport concurrent_priors_bound(const std::vector<double>& rates, int M, double beta, double T) {
  if (rates.empty()) throw DomainError("concurrent_priors_bound: no rates");
  if (M < 1) throw DomainError("concurrent_priors_bound: M must be positive");
  require_positive(beta, "beta");
  require_positive(T, "T");
  BoundReport r;
  r.terms = {{"best_prior", 4.0 * *std::min_element(rates.begin(), rates.end())},
             {"meta", 4.0 * std::log(static_cast<double>(M)) / (beta * T)}};
  return finish(std::move(r));
}

BoundReport discrete_meta_bound(int m_star, int M, double alpha, double beta, int n, double T) {
  if (M < 1 || m_star < 1 || m_star > M) throw DomainError("discrete_meta_bound: need 1 <= m* <= M");
  require_positive(alpha, "alpha");
  require_positive(beta, "beta");
  require_positive(T, "T");
  if (n < 1) throw DomainError("n must be positive");
  const double an = alpha * n, bt = beta * T;
  BoundReport r;
  r.terms = {{"within_task", 4.0 * std::log(static_cast<double>(m_star)) / an},
             {"meta", 4.0 * m_star * std::log(2.0 * kE * M / m_star) / bt}};
  r.extras = {{"isolation_2", 2.0 * std::log(static_cast<double>(M)) / an},
              {"isolation_4", 4.0 * std::log(static_cast<double>(M)) / an}};
  return finish(std::move(r));
}

BoundReport gaussian_meta_bound(const BoundParams& p) {
  if (p.d < 1) throw DomainError("gaussian_meta_bound: d must be at least 1");
  if (!(p.a_ref > 1.0)) throw DomainError("gaussian_meta_bound: a_ref must exceed 1");
  require_positive(p.alpha, "alpha");
  require_positive(p.beta, "beta");
  require_positive(p.L, "L");
  require_positive(p.xi2_ref, "xi2_ref");
  require_positive(p.b_ref, "b_ref");
  if (p.n < 1 || p.T < 1) throw DomainError("n and T must be positive");
  if (p.sigma < 0.0) throw DomainError("Sigma must be nonnegative");
  const double a = p.a_ref, bb = p.b_ref, xi2 = p.xi2_ref, L = p.L, al = p.alpha, be = p.beta;
  const double n = p.n, T = static_cast<double>(p.T), d = p.d;
  const double eps = p.epsilon.value_or(n / (T * T));
  require_positive(eps, "epsilon");
  const double pre2 = 2.0 * bernstein_prefactor(p);  // 4 at the default constants
  const double an = al * n, bT = be * T;

  // Infimum evaluated at xi^2 = eps, a = a_ref, b = sqrt(alpha L a (a-1) n / eps), tau = mu*.
  // Sigma is kept explicit so the branch holds for any dispersion.
  const double b = std::sqrt(al * L * a * (a - 1.0) * n / eps);
  const double kl_gamma = a * std::log(b / bb) + a * (bb - b) / b;
  const std::vector<std::pair<std::string, double>> fav_terms = {
      {"dispersion", pre2 * b * (p.sigma + d * eps) / (2.0 * (a - 1.0) * an)},
      {"dimension", pre2 * d * L * a / b},
      {"meta", pre2 * p.mu_norm2 / (2.0 * bT * xi2)},
      {"meta_variance", pre2 * (d / (2.0 * bT)) * (eps / xi2 - 1.0 + std::log(xi2 / eps))},
      {"meta_gamma", pre2 * kl_gamma / (2.0 * bT)}};

  // Hyper-prior centre itself (xi^2 = xi2_ref, b = b_ref).
  const std::vector<std::pair<std::string, double>> unfav_terms = {
      {"dispersion", pre2 * bb * (d * xi2 + p.sigma) / ((a - 1.0) * an)},
      {"dimension", pre2 * d * std::log(2.0 * a * an * L / bb + 1.0) / (2.0 * an)},
      {"meta", pre2 * p.mu_norm2 / (2.0 * bT * xi2)}};

  auto total = [](const auto& terms) {
    double s = 0.0;
    for (const auto& kv : terms) s += kv.second;
    return s;
  };
  const double favorable = total(fav_terms), unfavorable = total(unfav_terms);

  // Closed-form constant from the simplified rate; can go negative, so reported only.
  const double root = std::sqrt(al * L * a * (a - 1.0));
  const double G = 4.0 * std::sqrt(a * L / (al * (a - 1.0))) +
                   (2.0 / be) * (p.mu_norm2 / xi2 + n / (xi2 * T * T) + 1.0 + std::log(xi2) + a +
                                 (a / 2.0) * std::log(al * L * a * (a - 1.0) / (bb * bb)) + (a * bb / T) * root);

  const double threshold = p.regime_threshold.value_or(n / T);
  BoundReport r;
  r.regime = p.sigma <= threshold ? Regime::Favorable : Regime::Unfavorable;
  r.terms = favorable <= unfavorable ? fav_terms : unfav_terms;
  r.extras = {{"favorable_branch", favorable},
              {"unfavorable_branch", unfavorable},
              {"G", G},
              {"G_rate", G * (d + std::log(T)) / T},
              {"epsilon", eps},
              {"b_choice", b},
              {"threshold", threshold}};
  return finish(std::move(r));
}

BoundReport gaussian_isolation_bound(const BoundParams& p, double mean_offset2, double prior_var) {
  if (p.d < 1) throw DomainError("gaussian_isolation_bound: d must be at least 1");
  require_positive(prior_var, "prior variance");
  require_positive(p.L, "L");
  if (mean_offset2 < 0.0 || p.sigma < 0.0) throw DomainError("gaussian_isolation_bound: negative distance");
  const double pre = bernstein_prefactor(p);
  const double an = p.alpha * p.n;
  const double k = 1.0 + 2.0 * an * p.L * prior_var;
  BoundReport r;
  r.terms = {{"location", pre * p.L * (mean_offset2 + p.sigma) / k}, {"dimension", pre * p.d * std::log(k) / (2.0 * an)}};
  r.extras = {{"prefactor", pre}};
  return finish(std::move(r));
}

BoundReport mixture_meta_bound(const BoundParams& p, bool known_K) {
  if (p.K < 1 || p.K > p.T) throw DomainError("mixture_meta_bound: need 1 <= K <= T");
  if (p.d < 1) throw DomainError("mixture_meta_bound: d must be at least 1");
  require_positive(p.alpha, "alpha");
  require_positive(p.beta, "beta");
  require_positive(p.L, "L");
  require_positive(p.xi2_ref, "xi2_ref");
  require_positive(p.b_ref, "b_ref");
  if (p.n < 1) throw DomainError("n must be positive");
  if (p.sigma_K < 0.0) throw DomainError("Sigma_K must be nonnegative");
  if (!p.tau_norm2.empty() && p.tau_norm2.size() != static_cast<std::size_t>(p.K))
    throw DomainError("mixture_meta_bound: tau_norm2 must have K entries");
  const double K = p.K, d = p.d, n = p.n, T = static_cast<double>(p.T), al = p.alpha, be = p.beta, L = p.L;
  const double an = al * n, bt = be * T;
  const double threshold = p.regime_threshold.value_or(n / (T * T));
  BoundReport r;
  r.regime = p.sigma_K <= threshold ? Regime::Favorable : Regime::Unfavorable;
  const double b_k = r.regime == Regime::Favorable ? T : 1.0;
  const double cv_gauss = r.regime == Regime::Favorable
                              ? 8.0 * L * d / T + 4.0 / (al * T)
                              : 2.0 * d * std::log(1.0 + 4.0 * al * L * n) / an + 4.0 * p.sigma_K / an;
  double location = 0.0;
  for (int k = 0; k < p.K; ++k)
    location += (p.tau_norm2.empty() ? p.mu_norm2 : p.tau_norm2[static_cast<std::size_t>(k)]) / (bt * p.xi2_ref);
  r.terms = {
      {"cv_finite", 4.0 * std::log(2.0 * K) / an},
      {"cv_gaussian", K * cv_gauss},
      {"cv_meta_dirichlet", 2.0 * K * std::log(2.0 * K) / bt},
      {"cv_meta_location", location},
      {"cv_meta_scale", (d / bt) * K * std::log(1.0 + 4.0 * b_k * p.xi2_ref * bt / an)},
      {"cv_meta_rate", (4.0 / bt) * K * (std::log(b_k / p.b_ref) + (p.b_ref - b_k) / b_k)},
  };
  if (!known_K) r.terms.emplace_back("unknown_K", 2.0 * std::log(T) / bt);
  r.extras = {{"threshold", threshold}, {"b_k", b_k}};
  return finish(std::move(r));
}

BoundReport mixture_meta_bound_unknownK(const BoundParams& p, const std::vector<MixtureCell>& grid) {
  if (grid.empty()) throw DomainError("mixture_meta_bound_unknownK: empty K grid");
  BoundReport best;
  bool have = false;
  for (const auto& cell : grid) {
    BoundParams q = p;
    q.K = cell.K;
    q.sigma_K = cell.sigma_K;
    q.tau_norm2 = cell.tau_norm2;
    BoundReport r = mixture_meta_bound(q, false);
    if (!have || r.value < best.value) {
      r.extras.emplace_back("best_K", cell.K);
      best = std::move(r);
      have = true;
    }
  }
  return best;
}

}  // namespace metapac
