#include "metapac/meta_level.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>

#include "metapac/errors.hpp"
#include "metapac/numerics.hpp"

namespace metapac {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CategoricalDist normalized_from_log(std::vector<double> lw) {
  const double z = log_sum_exp(lw);
  for (double& v : lw) v = std::exp(v - z);
  const double s = pairwise_sum(lw);
  for (double& v : lw) v /= s;
  return CategoricalDist(std::move(lw));
}

std::size_t draw_categorical(const std::vector<double>& p, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) {
    acc += p[j];
    if (u < acc) return j;
  }
  for (std::size_t j = p.size(); j-- > 0;)
    if (p[j] > 0.0) return j;
  return p.size() - 1;
}

int common_n(const std::vector<QuadraticSummary>& tasks) {
  if (tasks.empty()) throw DomainError("need at least one task");
  for (const auto& t : tasks)
    if (t.n != tasks.front().n) throw DomainError("all tasks must share the same n");
  return tasks.front().n;
}

std::vector<QuadraticSummary> summaries(const std::vector<TaskSample>& tasks) {
  std::vector<QuadraticSummary> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) out.push_back(summarize(t));
  return out;
}

double squared_distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// BFGS with backtracking line search and central-difference gradients.
// Only accepts decreasing steps, so the result is never worse than x0.
struct Minimum {
  std::vector<double> x;
  double f;
};

Minimum minimize_bfgs(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x, int budget) {
  const std::size_t p = x.size();
  auto grad = [&](const std::vector<double>& at) {
    std::vector<double> g(p);
    std::vector<double> y = at;
    for (std::size_t i = 0; i < p; ++i) {
      const double h = 1e-6 * std::max(1.0, std::fabs(at[i]));
      y[i] = at[i] + h;
      const double fp = f(y);
      y[i] = at[i] - h;
      const double fm = f(y);
      y[i] = at[i];
      g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
  };
  double fx = f(x);
  if (!std::isfinite(fx)) throw OptimizationFailure("minimize: non-finite objective at the initial point");
  std::vector<double> g = grad(x);
  std::vector<double> H(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i) H[i * p + i] = 1.0;
  bool identity = true;
  for (int it = 0; it < budget; ++it) {
    std::vector<double> dir(p, 0.0);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j) dir[i] -= H[i * p + j] * g[j];
    double slope = 0.0;
    for (std::size_t i = 0; i < p; ++i) slope += dir[i] * g[i];
    if (slope >= 0.0) {  // reset to steepest descent
      std::fill(H.begin(), H.end(), 0.0);
      for (std::size_t i = 0; i < p; ++i) {
        H[i * p + i] = 1.0;
        dir[i] = -g[i];
      }
      slope = 0.0;
      for (std::size_t i = 0; i < p; ++i) slope += dir[i] * g[i];
      if (slope >= 0.0) break;
      identity = true;
    }
    // unit-length first step while H carries no curvature information
    double step = identity ? std::min(1.0, 1.0 / std::sqrt(-slope)) : 1.0, fn = kInf;
    std::vector<double> xn(p);
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < p; ++i) xn[i] = x[i] + step * dir[i];
      fn = f(xn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || fn >= fx) break;
    std::vector<double> gn = grad(xn);
    std::vector<double> s(p), yv(p);
    double sy = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      s[i] = xn[i] - x[i];
      yv[i] = gn[i] - g[i];
      sy += s[i] * yv[i];
    }
    const double improvement = fx - fn;
    x = xn;
    fx = fn;
    g = gn;
    if (sy > 1e-300) {
      identity = false;
      std::vector<double> Hy(p, 0.0);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) Hy[i] += H[i * p + j] * yv[j];
      double yHy = 0.0;
      for (std::size_t i = 0; i < p; ++i) yHy += yv[i] * Hy[i];
      const double rho = 1.0 / sy;
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j)
          H[i * p + j] += rho * ((1.0 + rho * yHy) * s[i] * s[j] - Hy[i] * s[j] - s[i] * Hy[j]);
    }
    if (improvement < 1e-15 * std::max(1.0, std::fabs(fx))) break;
  }
  return {x, fx};
}

}  // namespace

FinitePriorFamily::FinitePriorFamily(std::vector<DiscretePrior> p, CategoricalDist l)
    : priors(std::move(p)), lambda(std::move(l)) {
  if (priors.empty() || priors.size() != lambda.size())
    throw DomainError("FinitePriorFamily: priors and Lambda must be nonempty and of equal size");
  for (const auto& pr : priors)
    if (pr.log_weights.size() != priors.front().log_weights.size())
      throw DomainError("FinitePriorFamily: priors live on different parameter sets");
}

DiscretePrior SubsetPriorFamily::prior(std::size_t j) const {
  const std::uint32_t mask = masks.at(j);
  const double lw = -std::log(static_cast<double>(std::popcount(mask)));
  DiscretePrior out{std::vector<double>(static_cast<std::size_t>(M), -kInf)};
  for (int i = 0; i < M; ++i)
    if (mask & (1u << i)) out.log_weights[static_cast<std::size_t>(i)] = lw;
  return out;
}

CategoricalDist SubsetPriorFamily::lambda() const { return normalized_from_log(log_lambda); }

SubsetPriorFamily subset_family(int M) {
  if (M < 1 || M > 20) throw DomainError("subset_family: M must be in [1, 20]");
  SubsetPriorFamily f;
  f.M = M;
  const std::uint32_t total = (1u << M) - 1u;
  f.masks.resize(total);
  f.log_lambda.resize(total);
  const double log_norm = std::log(static_cast<double>(total));
  std::vector<double> by_size(static_cast<std::size_t>(M) + 1);
  for (int m = 1; m <= M; ++m)
    by_size[static_cast<std::size_t>(m)] = (M - m) * std::log(2.0) - log_norm - log_binomial(M, m);
  for (std::uint32_t mask = 1; mask <= total; ++mask) {
    f.masks[mask - 1] = mask;
    f.log_lambda[mask - 1] = by_size[static_cast<std::size_t>(std::popcount(mask))];
  }
  return f;
}

std::vector<double> Matrix::column_sums() const {
  std::vector<double> out(cols);
  std::vector<double> col(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) col[r] = (*this)(r, c);
    out[c] = pairwise_sum(col);
  }
  return out;
}

Matrix meta_empirical_risk_matrix(const std::vector<std::vector<double>>& task_risks, const FinitePriorFamily& family,
                                  double alpha, int n) {
  Matrix m(task_risks.size(), family.priors.size());
  for (std::size_t t = 0; t < task_risks.size(); ++t)
    for (std::size_t j = 0; j < family.priors.size(); ++j)
      m(t, j) = log_partition_free_energy(family.priors[j].log_weights, task_risks[t], alpha, n);
  return m;
}

Matrix meta_empirical_risk_matrix(const std::vector<TaskSample>& tasks, const BoundedLoss& loss, int M,
                                  const FinitePriorFamily& family, double alpha) {
  std::vector<std::vector<double>> risks;
  risks.reserve(tasks.size());
  for (const auto& t : tasks) {
    if (t.n != tasks.front().n) throw DomainError("meta_empirical_risk_matrix: tasks must share n");
    risks.push_back(empirical_risks(t, loss, M));
  }
  return meta_empirical_risk_matrix(risks, family, alpha, tasks.empty() ? 1 : tasks.front().n);
}

CategoricalDist meta_gibbs_finite(const std::vector<double>& column_sums, const std::vector<double>& log_lambda,
                                  double beta) {
  if (!(beta > 0.0)) throw DomainError("meta_gibbs_finite: beta must be positive");
  if (column_sums.empty() || column_sums.size() != log_lambda.size())
    throw DomainError("meta_gibbs_finite: size mismatch");
  std::vector<double> lw(column_sums.size());
  for (std::size_t j = 0; j < lw.size(); ++j) lw[j] = log_lambda[j] - beta * column_sums[j];
  return normalized_from_log(std::move(lw));
}

CategoricalDist meta_gibbs_finite(const Matrix& matrix, const CategoricalDist& lambda, double beta, std::size_t T) {
  if (T < 1 || T != matrix.rows) throw DomainError("meta_gibbs_finite: T must equal the number of matrix rows");
  if (lambda.size() != matrix.cols) throw DomainError("meta_gibbs_finite: Lambda size mismatch");
  std::vector<double> log_lambda(lambda.size());
  for (std::size_t j = 0; j < log_lambda.size(); ++j) log_lambda[j] = std::log(lambda.probs[j]);
  return meta_gibbs_finite(matrix.column_sums(), log_lambda, beta);
}

void subset_free_energies(const SubsetPriorFamily& family, const std::vector<double>& risks, double alpha, int n,
                          FreeEnergyKind kind, std::vector<double>& out) {
  if (!(alpha > 0.0) || n < 1) throw DomainError("subset_free_energies: alpha and n must be positive");
  const int M = family.M;
  if (risks.size() != static_cast<std::size_t>(M)) throw DomainError("subset_free_energies: risk length mismatch");
  const std::size_t total = family.size();
  out.resize(total);
  const double an = alpha * n;
  std::vector<double> log_count(static_cast<std::size_t>(M) + 1, 0.0);
  for (int m = 1; m <= M; ++m) log_count[static_cast<std::size_t>(m)] = std::log(static_cast<double>(m));
  // table[mask] for mask in [0, 2^M); entry 0 is the empty set.
  static thread_local std::vector<double> table;
  table.assign(total + 1, 0.0);

  if (kind == FreeEnergyKind::Dirac) {
    table[0] = kInf;
    for (std::size_t mask = 1; mask <= total; ++mask) {
      const int low = std::countr_zero(static_cast<std::uint32_t>(mask));
      table[mask] = std::min(table[mask & (mask - 1)], risks[static_cast<std::size_t>(low)]);
      out[mask - 1] = table[mask] + log_count[static_cast<std::size_t>(std::popcount(mask))] / an;
    }
    return;
  }

  const double rmin = *std::min_element(risks.begin(), risks.end());
  const double rmax = *std::max_element(risks.begin(), risks.end());
  if (an * (rmax - rmin) < 700.0) {
    std::vector<double> w(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i) w[static_cast<std::size_t>(i)] = std::exp(-an * (risks[static_cast<std::size_t>(i)] - rmin));
    for (std::size_t mask = 1; mask <= total; ++mask) {
      const int low = std::countr_zero(static_cast<std::uint32_t>(mask));
      table[mask] = table[mask & (mask - 1)] + w[static_cast<std::size_t>(low)];
      out[mask - 1] = rmin - (std::log(table[mask]) - log_count[static_cast<std::size_t>(std::popcount(mask))]) / an;
    }
    return;
  }
  table[0] = -kInf;
  for (std::size_t mask = 1; mask <= total; ++mask) {
    const int low = std::countr_zero(static_cast<std::uint32_t>(mask));
    const double lw = -an * (risks[static_cast<std::size_t>(low)] - rmin);
    const double prev = table[mask & (mask - 1)];
    const double hi = std::max(prev, lw), lo = std::min(prev, lw);
    table[mask] = lo == -kInf ? hi : hi + std::log1p(std::exp(lo - hi));
    out[mask - 1] = rmin - (table[mask] - log_count[static_cast<std::size_t>(std::popcount(mask))]) / an;
  }
}

double empirical_meta_objective(const CategoricalDist& pi, const Matrix& matrix, const CategoricalDist& lambda,
                                double beta, const std::vector<double>& proxy_risks) {
  if (!(beta > 0.0)) throw DomainError("empirical_meta_objective: beta must be positive");
  if (pi.size() != matrix.cols || lambda.size() != matrix.cols || proxy_risks.size() != matrix.rows || matrix.rows == 0)
    throw DomainError("empirical_meta_objective: shape mismatch");
  const double T = static_cast<double>(matrix.rows);
  std::vector<double> rows(matrix.rows), row(matrix.cols);
  for (std::size_t t = 0; t < matrix.rows; ++t) {
    for (std::size_t j = 0; j < matrix.cols; ++j) row[j] = pi.probs[j] * matrix(t, j);
    rows[t] = pairwise_sum(row) - proxy_risks[t];
  }
  return pairwise_sum(rows) / T + kl_categorical(pi, lambda).value() / (beta * T);
}

const char* to_string(Regime r) { return r == Regime::Favorable ? "favorable" : "unfavorable"; }

PriorSpec sample_prior(const HyperPosterior& hyper, const RandomStream& stream) {
  Rng rng = stream.rng();
  if (const auto* h = std::get_if<FiniteHyper>(&hyper)) return h->family->priors.at(draw_categorical(h->weights.probs, rng));
  if (const auto* h = std::get_if<SubsetHyper>(&hyper)) return h->family->prior(draw_categorical(h->weights.probs, rng));
  if (const auto* h = std::get_if<GaussianGammaHyper>(&hyper)) {
    const auto& q = h->params;
    Point mean = q.tau.front();
    const double sd = std::sqrt(q.xi2.front());
    for (double& v : mean) v += sd * rng.normal();
    const double var = rng.gamma(q.a, q.b.front());
    return DiagGaussian(std::move(mean), std::vector<double>(q.dim(), var));
  }
  const auto& h = std::get<MixtureHyper>(hyper);
  const auto& q = h.params;
  if (h.k_distribution) {
    const std::size_t k = draw_categorical(h.k_distribution->probs, rng) + 1;
    if (k != q.components()) throw Unsupported("sample_prior: K-distribution draws a K without fitted parameters");
  }
  std::vector<double> w = rng.dirichlet(q.delta);
  std::vector<DiagGaussian> comps;
  for (std::size_t k = 0; k < q.components(); ++k) {
    Point mean = q.tau[k];
    const double sd = std::sqrt(q.xi2[k]);
    for (double& v : mean) v += sd * rng.normal();
    const double var = rng.gamma(q.a, q.b[k]);
    comps.emplace_back(std::move(mean), std::vector<double>(q.dim(), var));
  }
  const double s = pairwise_sum(w);
  for (double& v : w) v /= s;
  return GaussianMixture(CategoricalDist(std::move(w)), std::move(comps));
}

HyperReference make_reference(std::size_t K, double xi2, double a, double b) {
  if (K < 1 || !(xi2 > 0.0) || !(a > 0.0) || !(b > 0.0)) throw DomainError("make_reference: invalid parameters");
  return HyperReference{std::vector<double>(K, xi2), a, std::vector<double>(K, b)};
}

std::vector<Point> posterior_means(const std::vector<QuadraticSummary>& tasks, double alpha, double reference_var) {
  std::vector<Point> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) {
    const std::size_t d = t.mean.size();
    out.push_back(gibbs_gaussian_quadratic(DiagGaussian(Point(d, 0.0), std::vector<double>(d, reference_var)), t, alpha).mean);
  }
  return out;
}

double plug_in_dispersion(const std::vector<QuadraticSummary>& tasks, const std::vector<Point>& means,
                          const std::vector<Point>& centers, double alpha, double reference_var) {
  const std::size_t T = means.size(), K = centers.size();
  if (T <= K) return 0.0;
  const int n = common_n(tasks);
  const double d = static_cast<double>(means.front().size());
  std::vector<double> sq(T);
  for (std::size_t t = 0; t < T; ++t) {
    double best = kInf;
    for (const auto& c : centers) best = std::min(best, squared_distance(means[t], c));
    sq[t] = best;
  }
  const double raw = pairwise_sum(sq) / static_cast<double>(T - K);
  if (n < 2) return std::max(0.0, raw);
  std::vector<double> noise(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) noise[t] = tasks[t].scatter * n / (n - 1.0) / d;
  const double sigma2 = pairwise_sum(noise) / static_cast<double>(noise.size());
  const double k = 2.0 * alpha * n * reference_var;
  const double shrink = k / (k + 1.0);
  return std::max(0.0, raw - shrink * shrink * d * sigma2 / n);
}

double optimal_posterior_variance(double prior_var, double alpha, double L, int n) {
  if (!(prior_var > 0.0) || !(alpha > 0.0) || !(L > 0.0) || n < 1) throw DomainError("optimal_posterior_variance");
  return prior_var / (2.0 * alpha * L * prior_var * n + 1.0);
}

double optimal_gamma_rate(double a, double L, double alpha, int n, double epsilon) {
  if (!(a > 1.0)) throw DomainError("optimal_gamma_rate: needs a > 1");
  if (!(L > 0.0) || !(alpha > 0.0) || n < 1 || !(epsilon > 0.0)) throw DomainError("optimal_gamma_rate");
  return std::sqrt(alpha * L * a * (a - 1.0) * n / epsilon);
}

double optimal_hyper_variance(double xi2_ref, double b, double alpha, int n, double beta, std::size_t T) {
  if (!(xi2_ref > 0.0) || !(b > 0.0) || !(alpha > 0.0) || n < 1 || !(beta > 0.0) || T < 1)
    throw DomainError("optimal_hyper_variance");
  return xi2_ref / (1.0 + 4.0 * b * xi2_ref * beta * static_cast<double>(T) / (alpha * n));
}

double gaussian_hyper_objective(const HyperParams& q, const HyperReference& reference,
                                const std::vector<QuadraticSummary>& tasks, double alpha, double beta, int draws) {
  q.validate();
  if (q.components() != 1) throw DomainError("gaussian_hyper_objective: K must be 1");
  if (draws < 1) throw DomainError("gaussian_hyper_objective: draws must be positive");
  const int n = common_n(tasks);
  const double an = alpha * n;
  const std::size_t d = q.dim();
  // quantiles only depend on (a, draws); finite-difference steps on the other coordinates reuse them
  thread_local double cached_a = 0.0;
  thread_local std::vector<double> quantiles;
  if (cached_a != q.a || quantiles.size() != static_cast<std::size_t>(draws)) {
    quantiles.resize(static_cast<std::size_t>(draws));
    for (int j = 0; j < draws; ++j) quantiles[static_cast<std::size_t>(j)] = gamma_p_inverse(q.a, (j + 0.5) / draws);
    cached_a = q.a;
  }
  std::vector<double> c(static_cast<std::size_t>(draws)), l(static_cast<std::size_t>(draws));
  for (int j = 0; j < draws; ++j) {
    const double var = quantiles[static_cast<std::size_t>(j)] / q.b.front();
    const double k = 1.0 + 2.0 * an * var;
    c[static_cast<std::size_t>(j)] = 1.0 / k;
    l[static_cast<std::size_t>(j)] = std::log(k) / (2.0 * an);
  }
  const double mean_c = pairwise_sum(c) / draws, mean_l = pairwise_sum(l) / draws;
  std::vector<double> per_task(tasks.size());
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const double dist = squared_distance(q.tau.front(), tasks[t].mean);
    per_task[t] = tasks[t].scatter + (dist + static_cast<double>(d) * q.xi2.front()) * mean_c + static_cast<double>(d) * mean_l;
  }
  const double T = static_cast<double>(tasks.size());
  return pairwise_sum(per_task) / T + kl_hyper_gaussian_gamma(q, reference).total / (beta * T);
}

GaussianFitResult fit_gaussian_hyperposterior(const std::vector<TaskSample>& tasks, const MetaConstants& consts,
                                              double alpha, double beta, const HyperReference& reference,
                                              const GaussianFitOptions& options, const RandomStream& stream) {
  (void)stream;  // the stochastic mode uses deterministic stratified draws
  if (!(alpha > 0.0) || !(beta > 0.0)) throw DomainError("fit_gaussian_hyperposterior: alpha, beta must be positive");
  if (reference.xi2.size() != 1 || reference.b.size() != 1)
    throw DomainError("fit_gaussian_hyperposterior: reference must have one block");
  if (!(reference.a > 1.0)) throw DomainError("fit_gaussian_hyperposterior: closed form needs a_ref > 1");
  if (!(options.epsilon > 0.0)) throw DomainError("fit_gaussian_hyperposterior: epsilon must be positive");
  const std::vector<QuadraticSummary> sums = summaries(tasks);
  const int n = common_n(sums);
  const std::size_t d = sums.front().mean.size();
  const std::vector<Point> means = posterior_means(sums, alpha, options.reference_var);
  Point tau(d, 0.0);
  for (const auto& m : means)
    for (std::size_t i = 0; i < d; ++i) tau[i] += m[i];
  for (double& v : tau) v /= static_cast<double>(means.size());

  GaussianFitResult out;
  out.sigma_hat = plug_in_dispersion(sums, means, {tau}, alpha, options.reference_var);
  out.regime = out.sigma_hat <= options.regime_threshold ? Regime::Favorable : Regime::Unfavorable;
  HyperParams q;
  q.tau = {tau};
  q.a = reference.a;
  if (out.regime == Regime::Favorable) {
    q.xi2 = {options.epsilon};
    q.b = {optimal_gamma_rate(q.a, consts.L, alpha, n, options.epsilon)};
  } else {
    q.xi2 = {reference.xi2.front()};
    q.b = {reference.b.front()};
  }
  out.hyper = GaussianGammaHyper{q, reference};
  if (options.mode == FitMode::ClosedForm) return out;

  auto pack = [&](const HyperParams& h) {
    std::vector<double> x(h.tau.front());
    x.push_back(std::log(h.xi2.front()));
    x.push_back(std::log(h.a));
    x.push_back(std::log(h.b.front()));
    return x;
  };
  auto unpack = [&](const std::vector<double>& x) {
    HyperParams h;
    h.tau = {Point(x.begin(), x.begin() + static_cast<long>(d))};
    h.xi2 = {std::exp(x[d])};
    h.a = std::exp(x[d + 1]);
    h.b = {std::exp(x[d + 2])};
    return h;
  };
  auto objective = [&](const std::vector<double>& x) {
    for (std::size_t i = d; i < x.size(); ++i)
      if (std::fabs(x[i]) > 700.0) return kInf;
    return gaussian_hyper_objective(unpack(x), reference, sums, alpha, beta, options.draws);
  };
  const std::vector<double> x0 = pack(q);
  out.objective_initial = objective(x0);
  const Minimum m = minimize_bfgs(objective, x0, options.budget);
  out.objective_final = m.f;
  if (m.f <= out.objective_initial) out.hyper.params = unpack(m.x);
  else out.objective_final = out.objective_initial;
  return out;
}

Clustering kmeans(const std::vector<Point>& points, std::size_t K, int restarts, const RandomStream& stream) {
  const std::size_t T = points.size();
  if (K < 1 || K > T) throw DomainError("kmeans: need 1 <= K <= number of points");
  const std::size_t d = points.front().size();
  Clustering best{{}, kInf};
  for (int r = 0; r < restarts; ++r) {
    Rng rng = stream.child("restart", static_cast<std::uint64_t>(r)).rng();
    std::vector<Point> centers{points[rng.index(T)]};
    std::vector<double> dist(T);
    while (centers.size() < K) {
      for (std::size_t t = 0; t < T; ++t) {
        double m = kInf;
        for (const auto& c : centers) m = std::min(m, squared_distance(points[t], c));
        dist[t] = m;
      }
      const double total = pairwise_sum(dist);
      if (total <= 0.0) {
        centers.push_back(points[rng.index(T)]);
        continue;
      }
      for (double& v : dist) v /= total;
      centers.push_back(points[draw_categorical(dist, rng)]);
    }
    std::vector<std::size_t> assign(T, K);
    for (int it = 0; it < 200; ++it) {
      bool changed = false;
      for (std::size_t t = 0; t < T; ++t) {
        std::size_t arg = 0;
        double m = kInf;
        for (std::size_t k = 0; k < K; ++k) {
          const double v = squared_distance(points[t], centers[k]);
          if (v < m) {
            m = v;
            arg = k;
          }
        }
        if (assign[t] != arg) {
          assign[t] = arg;
          changed = true;
        }
      }
      std::vector<Point> sums(K, Point(d, 0.0));
      std::vector<std::size_t> counts(K, 0);
      for (std::size_t t = 0; t < T; ++t) {
        ++counts[assign[t]];
        for (std::size_t i = 0; i < d; ++i) sums[assign[t]][i] += points[t][i];
      }
      for (std::size_t k = 0; k < K; ++k) {
        if (counts[k] == 0) continue;  // keep the old center
        for (std::size_t i = 0; i < d; ++i) centers[k][i] = sums[k][i] / static_cast<double>(counts[k]);
      }
      if (!changed) break;
    }
    std::vector<double> sq(T);
    for (std::size_t t = 0; t < T; ++t) sq[t] = squared_distance(points[t], centers[assign[t]]);
    const double wss = pairwise_sum(sq);
    if (wss < best.within_ss) best = {centers, wss};
  }
  std::sort(best.centers.begin(), best.centers.end());
  return best;
}

double mixture_hyper_objective(const MixtureHyper& hyper, const std::vector<QuadraticSummary>& tasks, double alpha,
                               double beta, int draws, const RandomStream& stream) {
  const HyperParams& q = hyper.params;
  q.validate();
  if (q.delta.empty()) throw DomainError("mixture_hyper_objective: Dirichlet block required");
  common_n(tasks);
  const std::size_t K = q.components(), d = q.dim();
  Rng rng = stream.rng();
  std::vector<double> per_draw(static_cast<std::size_t>(draws));
  std::vector<double> per_task(tasks.size());
  for (int s = 0; s < draws; ++s) {
    std::vector<double> w = rng.dirichlet(q.delta);
    const double ws = pairwise_sum(w);
    for (double& v : w) v /= ws;
    std::vector<DiagGaussian> comps;
    for (std::size_t k = 0; k < K; ++k) {
      Point mean(d);
      for (std::size_t i = 0; i < d; ++i) mean[i] = q.tau[k][i] + std::sqrt(q.xi2[k]) * rng.normal();
      const double var = rng.gamma(q.a, 1.0) / q.b[k];
      comps.emplace_back(std::move(mean), std::vector<double>(d, var));
    }
    const GaussianMixture prior(CategoricalDist(std::move(w)), std::move(comps));
    for (std::size_t t = 0; t < tasks.size(); ++t)
      per_task[t] = quadratic_free_energy(prior, tasks[t], alpha) - tasks[t].scatter;
    per_draw[static_cast<std::size_t>(s)] = pairwise_sum(per_task) / static_cast<double>(tasks.size());
  }
  const double T = static_cast<double>(tasks.size());
  HyperKl kl = kl_hyper_gaussian_gamma(q, hyper.reference);
  return pairwise_sum(per_draw) / draws + kl.total / (beta * T);
}

MixtureFitResult fit_mixture_hyperposterior(const std::vector<TaskSample>& tasks, const MetaConstants& consts,
                                            double alpha, double beta, const HyperReference& reference, std::size_t K,
                                            const MixtureFitOptions& options, const RandomStream& stream) {
  (void)consts;
  if (!(alpha > 0.0) || !(beta > 0.0)) throw DomainError("fit_mixture_hyperposterior: alpha, beta must be positive");
  const std::size_t T = tasks.size();
  if (K < 1 || K > T) throw DomainError("fit_mixture_hyperposterior: need 1 <= K <= T");
  if (reference.xi2.size() != K || reference.b.size() != K)
    throw DomainError("fit_mixture_hyperposterior: reference must have K blocks");
  const std::vector<QuadraticSummary> sums = summaries(tasks);
  const int n = common_n(sums);
  const std::vector<Point> means = posterior_means(sums, alpha, options.reference_var);
  const Clustering cl = kmeans(means, K, 10, stream.child("kmeans"));

  MixtureFitResult out;
  out.sigma_hat = plug_in_dispersion(sums, means, cl.centers, alpha, options.reference_var);
  out.regime = options.regime ? *options.regime
                              : (out.sigma_hat <= options.regime_threshold ? Regime::Favorable : Regime::Unfavorable);
  HyperParams q;
  q.tau = cl.centers;
  q.a = 2.0;
  q.delta.assign(K, 2.0);
  const double b_k = out.regime == Regime::Favorable ? static_cast<double>(T) : 1.0;
  for (std::size_t k = 0; k < K; ++k) {
    q.b.push_back(b_k);
    q.xi2.push_back(optimal_hyper_variance(reference.xi2[k], b_k, alpha, n, beta, T));
  }
  HyperReference ref = reference;
  ref.a = 2.0;
  out.hyper = MixtureHyper{q, ref, std::nullopt};
  const RandomStream crn = stream.child("objective");
  out.objective = mixture_hyper_objective(out.hyper, sums, alpha, beta, options.draws, crn);
  if (!options.refine) return out;

  const std::size_t d = q.dim();
  auto unpack = [&](const std::vector<double>& x) {
    HyperParams h = q;
    std::size_t p = 0;
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t i = 0; i < d; ++i) h.tau[k][i] = x[p++];
    for (std::size_t k = 0; k < K; ++k) h.xi2[k] = std::exp(x[p++]);
    for (std::size_t k = 0; k < K; ++k) h.b[k] = std::exp(x[p++]);
    return h;
  };
  std::vector<double> x0;
  for (const auto& t : q.tau) x0.insert(x0.end(), t.begin(), t.end());
  for (double v : q.xi2) x0.push_back(std::log(v));
  for (double v : q.b) x0.push_back(std::log(v));
  auto objective = [&](const std::vector<double>& x) {
    for (std::size_t i = K * d; i < x.size(); ++i)
      if (std::fabs(x[i]) > 700.0) return kInf;
    MixtureHyper h{unpack(x), ref, std::nullopt};
    return mixture_hyper_objective(h, sums, alpha, beta, options.draws, crn);
  };
  const Minimum m = minimize_bfgs(objective, x0, options.budget);
  if (m.f < out.objective) {
    out.hyper.params = unpack(m.x);
    out.objective = m.f;
  }
  return out;
}

UnknownKFitResult fit_unknownK_hyperposterior(const std::vector<TaskSample>& tasks, const MetaConstants& consts,
                                              double alpha, double beta, double xi2_ref, double b_ref,
                                              const std::vector<std::size_t>& k_grid, const MixtureFitOptions& options,
                                              const RandomStream& stream) {
  if (k_grid.empty()) throw DomainError("fit_unknownK_hyperposterior: empty K grid");
  const std::size_t T = tasks.size();
  std::vector<std::size_t> grid = k_grid;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const double penalty = std::log(static_cast<double>(T)) / (2.0 * beta * static_cast<double>(T));
  UnknownKFitResult out{};
  double best = kInf;
  for (std::size_t K : grid) {
    if (K < 1 || K > T) throw DomainError("fit_unknownK_hyperposterior: K outside [1, T]");
    MixtureFitResult fit = fit_mixture_hyperposterior(tasks, consts, alpha, beta, make_reference(K, xi2_ref, 2.0, b_ref),
                                                      K, options, stream.child("K", K));
    const double obj = fit.objective + penalty;
    out.objectives.push_back(obj);
    if (obj < best) {
      best = obj;
      out.fit = std::move(fit);
      out.K = K;
    }
  }
  std::vector<double> x(T, 0.0);
  x[out.K - 1] = 1.0;
  out.fit.hyper.k_distribution = CategoricalDist(std::move(x));
  return out;
}

}  // namespace metapac
