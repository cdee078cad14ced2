#include "metapac/within_task.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "metapac/errors.hpp"
#include "metapac/numerics.hpp"

namespace metapac {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_scale(double alpha, int n) {
  if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
  if (n <= 0) throw DomainError("n must be positive");
}

void check_lengths(const std::vector<double>& prior_log, const std::vector<double>& risks) {
  if (prior_log.empty() || prior_log.size() != risks.size())
    throw DomainError("prior and risks must be nonempty and of equal length");
}

}  // namespace

std::vector<double> DiscretePosterior::probabilities() const {
  std::vector<double> p(log_weights.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_weights[i]);
  return p;
}

std::vector<double> empirical_risks(const TaskSample& sample, const BoundedLoss& loss, int M) {
  if (M < 1 || sample.labels.empty()) throw DomainError("empirical_risks: need M >= 1 and a nonempty sample");
  std::vector<double> counts(static_cast<std::size_t>(M), 0.0);
  for (int z : sample.labels) {
    if (z < 0 || z >= M) throw DomainError("empirical_risks: label out of range");
    counts[static_cast<std::size_t>(z)] += 1.0;
  }
  const double n = static_cast<double>(sample.labels.size());
  std::vector<double> r(static_cast<std::size_t>(M));
  // Zero-one mismatch: loss C on every observation that differs from theta.
  for (std::size_t t = 0; t < r.size(); ++t) r[t] = loss.C * (n - counts[t]) / n;
  return r;
}

std::vector<double> empirical_risks(const TaskSample& sample, const BoundedLoss& loss, const std::vector<Point>& thetas) {
  if (thetas.empty() || sample.points.empty()) throw DomainError("empirical_risks: empty parameter set or sample");
  std::vector<double> r(thetas.size());
  std::vector<double> terms(sample.points.size());
  for (std::size_t t = 0; t < thetas.size(); ++t) {
    for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = loss(sample.points[i], thetas[t]);
    r[t] = pairwise_sum(terms) / static_cast<double>(terms.size());
  }
  return r;
}

DiscretePosterior gibbs_discrete(const std::vector<double>& prior_log, const std::vector<double>& risks, double alpha,
                                 int n) {
  check_scale(alpha, n);
  check_lengths(prior_log, risks);
  const double an = alpha * n;
  std::vector<double> lw(prior_log.size());
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = prior_log[i] - an * risks[i];
  const double z = log_sum_exp(lw);
  if (!std::isfinite(z)) throw NumericError("gibbs_discrete: prior has no mass");
  for (double& v : lw) v -= z;
  return {std::move(lw)};
}

FreeEnergyValue free_energy(const DiscretePosterior& rho, const std::vector<double>& prior_log, double alpha, int n,
                            const std::vector<double>& risks) {
  check_scale(alpha, n);
  check_lengths(prior_log, risks);
  if (rho.log_weights.size() != risks.size()) throw DomainError("free_energy: posterior length mismatch");
  std::vector<double> risk_terms, kl_terms;
  bool infinite = false;
  for (std::size_t i = 0; i < risks.size(); ++i) {
    if (rho.log_weights[i] == -kInf) continue;
    const double p = std::exp(rho.log_weights[i]);
    risk_terms.push_back(p * risks[i]);
    if (prior_log[i] == -kInf) {
      infinite = true;
      continue;
    }
    kl_terms.push_back(p * (rho.log_weights[i] - prior_log[i]));
  }
  FreeEnergyValue out;
  out.risk_term = pairwise_sum(risk_terms);
  if (infinite) {
    out.kl_term = KlValue::infinite();
  } else {
    const double kl = kl_terms.empty() ? 0.0 : std::max(0.0, pairwise_sum(kl_terms));
    out.kl_term = KlValue::finite(kl / (alpha * n));
  }
  return out;
}

double log_partition_free_energy(const std::vector<double>& prior_log, const std::vector<double>& risks, double alpha,
                                 int n) {
  check_scale(alpha, n);
  check_lengths(prior_log, risks);
  const double an = alpha * n;
  std::vector<double> v(risks.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -an * risks[i];
  const double z = log_sum_exp(prior_log, v);
  if (!std::isfinite(z)) throw NumericError("log_partition_free_energy: prior has no mass");
  return -z / an;
}

namespace {

std::size_t dirac_index(const std::vector<double>& prior_log, const std::vector<double>& risks, double alpha, int n) {
  check_scale(alpha, n);
  check_lengths(prior_log, risks);
  const double an = alpha * n;
  std::size_t best = risks.size();
  double best_score = kInf;
  for (std::size_t i = 0; i < risks.size(); ++i) {
    if (prior_log[i] == -kInf) continue;
    const double score = risks[i] - prior_log[i] / an;
    if (score < best_score) {
      best_score = score;
      best = i;
    }
  }
  if (best == risks.size()) throw NumericError("dirac_variational_posterior: prior has no mass");
  return best;
}

}  // namespace

DiscretePosterior dirac_variational_posterior(const std::vector<double>& prior_log, const std::vector<double>& risks,
                                              double alpha, int n) {
  const std::size_t best = dirac_index(prior_log, risks, alpha, n);
  DiscretePosterior out{std::vector<double>(risks.size(), -kInf)};
  out.log_weights[best] = 0.0;
  return out;
}

double dirac_free_energy(const std::vector<double>& prior_log, const std::vector<double>& risks, double alpha, int n) {
  const std::size_t best = dirac_index(prior_log, risks, alpha, n);
  return risks[best] - prior_log[best] / (alpha * n);
}

QuadraticSummary summarize(const TaskSample& sample) {
  if (sample.points.empty()) throw DomainError("summarize: empty sample");
  const std::size_t d = sample.points.front().size();
  const double n = static_cast<double>(sample.points.size());
  Point mean(d, 0.0);
  for (const auto& z : sample.points)
    for (std::size_t i = 0; i < d; ++i) mean[i] += z[i];
  for (double& v : mean) v /= n;
  std::vector<double> sq(sample.points.size());
  for (std::size_t j = 0; j < sq.size(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += (sample.points[j][i] - mean[i]) * (sample.points[j][i] - mean[i]);
    sq[j] = s;
  }
  return {std::move(mean), pairwise_sum(sq) / n, static_cast<int>(sample.points.size())};
}

DiagGaussian gibbs_gaussian_quadratic(const DiagGaussian& prior, const QuadraticSummary& s, double alpha) {
  check_scale(alpha, s.n);
  if (prior.dim() != s.mean.size()) throw DomainError("gibbs_gaussian_quadratic: dimension mismatch");
  const double an = alpha * s.n;
  DiagGaussian out = prior;
  for (std::size_t i = 0; i < prior.dim(); ++i) {
    const double k = 2.0 * an * prior.var[i];
    out.mean[i] = (k * s.mean[i] + prior.mean[i]) / (k + 1.0);
    out.var[i] = prior.var[i] / (k + 1.0);
  }
  return out;
}

namespace {

// log int N(theta; prior) exp(-alpha n |theta - z bar|^2) dtheta
double log_evidence(const DiagGaussian& prior, const QuadraticSummary& s, double an) {
  double out = 0.0;
  for (std::size_t i = 0; i < prior.dim(); ++i) {
    const double k = 1.0 + 2.0 * an * prior.var[i];
    const double r = prior.mean[i] - s.mean[i];
    out += -0.5 * std::log(k) - an * r * r / k;
  }
  return out;
}

}  // namespace

GaussianMixture gibbs_mixture_quadratic(const GaussianMixture& prior, const QuadraticSummary& s, double alpha) {
  check_scale(alpha, s.n);
  const double an = alpha * s.n;
  const std::size_t k = prior.components.size();
  std::vector<double> lw(k);
  std::vector<DiagGaussian> comps;
  comps.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    lw[j] = std::log(prior.weights.probs[j]) + log_evidence(prior.components[j], s, an);
    comps.push_back(gibbs_gaussian_quadratic(prior.components[j], s, alpha));
  }
  const double z = log_sum_exp(lw);
  std::vector<double> w(k);
  for (std::size_t j = 0; j < k; ++j) w[j] = std::exp(lw[j] - z);
  const double total = pairwise_sum(w);
  for (double& v : w) v /= total;
  return GaussianMixture(CategoricalDist(std::move(w)), std::move(comps));
}

double quadratic_free_energy(const GaussianMixture& prior, const QuadraticSummary& s, double alpha) {
  check_scale(alpha, s.n);
  const double an = alpha * s.n;
  std::vector<double> lw(prior.components.size());
  for (std::size_t j = 0; j < lw.size(); ++j)
    lw[j] = std::log(prior.weights.probs[j]) + log_evidence(prior.components[j], s, an);
  return s.scatter - log_sum_exp(lw) / an;
}

double quadratic_free_energy(const DiagGaussian& prior, const QuadraticSummary& s, double alpha) {
  check_scale(alpha, s.n);
  return s.scatter - log_evidence(prior, s, alpha * s.n) / (alpha * s.n);
}

bool clipping_negligible(const TaskSample& sample, const DiagGaussian& rho, double clip) {
  Point delta(rho.dim());
  for (const auto& z : sample.points) {
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = rho.mean[i] - z[i];
    if (clip_probability_bound(delta, rho.var, clip) >= 1e-12) return false;
  }
  return true;
}

VariationalObjective::VariationalObjective(const TaskSample& sample, const BoundedLoss& loss, const DiagGaussian& prior,
                                           double alpha, int n, int draws, const RandomStream& stream)
    : sample_(sample), loss_(loss), prior_(prior), alpha_n_(alpha * n), d_(prior.dim()),
      draws_(static_cast<std::size_t>(draws)) {
  check_scale(alpha, n);
  if (loss.kind != LossKind::ClippedSquared) throw DomainError("variational objective needs clipped-squared loss");
  if (sample.points.empty() || sample.points.front().size() != d_)
    throw DomainError("variational objective: sample dimension mismatch");
  if (draws < 2) throw DomainError("variational objective: need at least 2 draws");
  Rng rng = stream.rng();
  eps_.resize(draws_ * d_);
  for (double& e : eps_) e = rng.normal();
  // Standardize each coordinate so the first two sample moments are exact.
  for (std::size_t i = 0; i < d_; ++i) {
    double m = 0.0, v = 0.0;
    for (std::size_t s = 0; s < draws_; ++s) m += eps_[s * d_ + i];
    m /= static_cast<double>(draws_);
    for (std::size_t s = 0; s < draws_; ++s) v += (eps_[s * d_ + i] - m) * (eps_[s * d_ + i] - m);
    const double sd = std::sqrt(v / static_cast<double>(draws_));
    for (std::size_t s = 0; s < draws_; ++s) eps_[s * d_ + i] = (eps_[s * d_ + i] - m) / sd;
  }
}

double VariationalObjective::kl_over_alpha_n(const Point& mu, const std::vector<double>& log_var) const {
  std::vector<double> var(d_);
  for (std::size_t i = 0; i < d_; ++i) var[i] = std::exp(log_var[i]);
  return kl_diag_gaussian(DiagGaussian(mu, var), prior_) / alpha_n_;
}

double VariationalObjective::value(const Point& mu, const std::vector<double>& log_var) const {
  Point theta(d_);
  std::vector<double> per_draw(draws_), per_point(sample_.points.size());
  for (std::size_t s = 0; s < draws_; ++s) {
    for (std::size_t i = 0; i < d_; ++i) theta[i] = mu[i] + std::exp(0.5 * log_var[i]) * eps_[s * d_ + i];
    for (std::size_t j = 0; j < per_point.size(); ++j) per_point[j] = loss_(sample_.points[j], theta);
    per_draw[s] = pairwise_sum(per_point) / static_cast<double>(per_point.size());
  }
  return pairwise_sum(per_draw) / static_cast<double>(draws_) + kl_over_alpha_n(mu, log_var);
}

void VariationalObjective::gradient(const Point& mu, const std::vector<double>& log_var, Point& g_mu,
                                    std::vector<double>& g_log_var) const {
  g_mu.assign(d_, 0.0);
  g_log_var.assign(d_, 0.0);
  std::vector<double> sd(d_);
  for (std::size_t i = 0; i < d_; ++i) sd[i] = std::exp(0.5 * log_var[i]);
  Point theta(d_), grad(d_);
  const double n = static_cast<double>(sample_.points.size());
  for (std::size_t s = 0; s < draws_; ++s) {
    for (std::size_t i = 0; i < d_; ++i) theta[i] = mu[i] + sd[i] * eps_[s * d_ + i];
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& z : sample_.points) {
      double dist = 0.0;
      for (std::size_t i = 0; i < d_; ++i) dist += (theta[i] - z[i]) * (theta[i] - z[i]);
      if (dist >= loss_.C) continue;
      for (std::size_t i = 0; i < d_; ++i) grad[i] += 2.0 * (theta[i] - z[i]) / n;
    }
    for (std::size_t i = 0; i < d_; ++i) {
      g_mu[i] += grad[i];
      g_log_var[i] += grad[i] * eps_[s * d_ + i] * 0.5 * sd[i];
    }
  }
  for (std::size_t i = 0; i < d_; ++i) {
    g_mu[i] = g_mu[i] / static_cast<double>(draws_) + (mu[i] - prior_.mean[i]) / prior_.var[i] / alpha_n_;
    const double var = sd[i] * sd[i];
    g_log_var[i] = g_log_var[i] / static_cast<double>(draws_) + 0.5 * (var / prior_.var[i] - 1.0) / alpha_n_;
  }
}

double VariationalObjective::exact_value(const DiagGaussian& rho) const {
  std::vector<double> terms(sample_.points.size());
  Point delta(d_);
  for (std::size_t j = 0; j < terms.size(); ++j) {
    for (std::size_t i = 0; i < d_; ++i) delta[i] = rho.mean[i] - sample_.points[j][i];
    terms[j] = expected_clipped_square(delta, rho.var, loss_.C);
  }
  return pairwise_sum(terms) / static_cast<double>(terms.size()) + kl_diag_gaussian(rho, prior_) / alpha_n_;
}

VariationalResult variational_gaussian_posterior(const TaskSample& sample, const BoundedLoss& loss,
                                                 const DiagGaussian& prior, double alpha, int n, int budget,
                                                 const RandomStream& stream) {
  check_scale(alpha, n);
  if (budget < 1) throw DomainError("variational_gaussian_posterior: budget must be >= 1");
  const VariationalObjective objective(sample, loss, prior, alpha, n, 256, stream);
  const std::size_t d = prior.dim();
  const double an = alpha * n;

  const DiagGaussian closed = gibbs_gaussian_quadratic(prior, summarize(sample), alpha);
  const DiagGaussian init = clipping_negligible(sample, closed, loss.C) ? closed : prior;

  Point mu = init.mean;
  std::vector<double> lv(d);
  for (std::size_t i = 0; i < d; ++i) lv[i] = std::log(init.var[i]);

  Point best_mu = mu;
  std::vector<double> best_lv = lv;
  double best = objective.value(mu, lv), last_checkpoint = best;
  int increases = 0;
  constexpr int kCheckpointEvery = 10;
  constexpr double kStep = 0.5;
  Point g_mu;
  std::vector<double> g_lv;
  int step = 0;
  for (; step < budget; ++step) {
    objective.gradient(mu, lv, g_mu, g_lv);
    // Diagonal curvature of the unclipped objective as preconditioner.
    for (std::size_t i = 0; i < d; ++i) {
      const double var = std::exp(lv[i]);
      mu[i] -= kStep * g_mu[i] / (2.0 + 1.0 / (an * prior.var[i]));
      lv[i] -= kStep * g_lv[i] / (var * (1.0 + 0.5 / (an * prior.var[i])));
    }
    if ((step + 1) % kCheckpointEvery == 0 || step + 1 == budget) {
      const double v = objective.value(mu, lv);
      if (!std::isfinite(v)) throw OptimizationFailure("variational_gaussian_posterior: non-finite objective");
      if (v < best) {
        best = v;
        best_mu = mu;
        best_lv = lv;
      }
      increases = v > last_checkpoint ? increases + 1 : 0;
      if (increases >= 3) throw OptimizationFailure("variational_gaussian_posterior: objective increased 3 checkpoints in a row");
      last_checkpoint = v;
    }
  }
  std::vector<double> var(d);
  for (std::size_t i = 0; i < d; ++i) var[i] = std::exp(best_lv[i]);
  DiagGaussian result(best_mu, var);
  double result_obj = objective.exact_value(result);
  const double init_obj = objective.exact_value(init);
  if (init_obj < result_obj) {
    result = init;
    result_obj = init_obj;
  }
  return {result, result_obj, step};
}

}  // namespace metapac
