#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "metapac/bounds.hpp"
#include "metapac/errors.hpp"
#include "metapac/random.hpp"

using namespace metapac;

namespace {

const double kE = std::numbers::e;

double sum_terms(const BoundReport& r) {
  double s = 0.0;
  for (const auto& [k, v] : r.terms) s += v;
  return s;
}

// Independent transcription of the two Gaussian branches at the default constants (outer factor 4).
struct Branches {
  double favorable, unfavorable, G;
};
Branches gaussian_oracle(const BoundParams& p) {
  const double a = p.a_ref, b = p.b_ref, x = p.xi2_ref, L = p.L, al = p.alpha, be = p.beta;
  const double n = p.n, T = static_cast<double>(p.T), d = p.d;
  const double eps = n / (T * T);
  const double bs = std::sqrt(al * L * a * (a - 1.0) * n / eps);
  const double klg = a * std::log(bs / b) + a * (b - bs) / bs;
  const double fav = 4.0 * (bs * (d * eps + p.sigma) / (2.0 * (a - 1.0) * al * n) + d * L * a / bs +
                            p.mu_norm2 / (2.0 * be * T * x) + d / (2.0 * be * T) * (eps / x - 1.0 + std::log(x / eps)) +
                            klg / (2.0 * be * T));
  const double unf = 4.0 * b * (d * x + p.sigma) / ((a - 1.0) * al * n) + 2.0 * d * std::log(2.0 * a * al * L * n / b + 1.0) / (al * n) +
                     2.0 * p.mu_norm2 / (be * x * T);
  const double G = 4.0 * std::sqrt(a * L / (al * (a - 1.0))) +
                   2.0 / be *
                       (p.mu_norm2 / x + n / (x * T * T) + 1.0 + std::log(x) + a +
                        a / 2.0 * std::log(al * L * a * (a - 1.0) / (b * b)) + a * b / T * std::sqrt(al * L * a * (a - 1.0)));
  return {fav, unf, G};
}

double mixture_oracle(const BoundParams& p, bool known_K) {
  const double K = p.K, d = p.d, n = p.n, T = static_cast<double>(p.T), al = p.alpha, be = p.beta, L = p.L;
  const bool fav = p.sigma_K <= n / (T * T);
  const double bk = fav ? T : 1.0;
  const double cvg = fav ? 8.0 * L * d / T + 4.0 / (al * T) : 2.0 * d * std::log(1.0 + 4.0 * al * L * n) / (al * n) + 4.0 * p.sigma_K / (al * n);
  double loc = 0.0;
  for (int k = 0; k < p.K; ++k) loc += (p.tau_norm2.empty() ? p.mu_norm2 : p.tau_norm2[k]) / (be * T * p.xi2_ref);
  double v = 4.0 * std::log(2.0 * K) / (al * n) + K * cvg + 2.0 * K * std::log(2.0 * K) / (be * T) + loc +
             d / (be * T) * K * std::log(1.0 + 4.0 * bk * p.xi2_ref * be * T / (al * n)) +
             4.0 / (be * T) * K * (std::log(bk / p.b_ref) + (p.b_ref - bk) / bk);
  if (!known_K) v += 2.0 * std::log(T) / (be * T);
  return v;
}

}  // namespace

TEST_CASE("default constants") {
  const BoundParams p = default_constants(1.0);
  CHECK(p.c == doctest::Approx(21.7463).epsilon(1e-5));
  CHECK(p.c == 8.0 * kE);
  CHECK(p.beta == doctest::Approx(0.043960).epsilon(1e-4));
  CHECK(p.alpha == 1.0 / (1.0 + 8.0 * kE));
  CHECK(p.bernstein);
  const BoundParams q = default_constants(25.0);
  CHECK(q.c == doctest::Approx(200.0 * kE));
  CHECK(q.alpha == doctest::Approx(1.0 / (25.0 * (1.0 + 8.0 * kE))));
}

TEST_CASE("isolation_bound examples") {
  BoundParams p = default_constants(1.0);
  CHECK(bernstein_prefactor(p) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(isolation_bound(p, 0.37).value == doctest::Approx(0.74).epsilon(1e-14));
  CHECK(default_constants(3.0).c == doctest::Approx(24.0 * kE));
  CHECK(bernstein_prefactor(default_constants(3.0)) == doctest::Approx(2.0).epsilon(1e-14));

  BoundParams nb;
  nb.bernstein = false;
  nb.C = 1.0;
  nb.alpha = 0.08;  // alpha C^2 / 8 = 0.01
  CHECK(isolation_bound(nb, 0.0).value == doctest::Approx(0.01));

  BoundParams bad = default_constants(1.0);
  bad.alpha = 0.5;  // denominator negative
  CHECK_THROWS_AS(isolation_bound(bad, 0.1), DomainError);
  bad.alpha = 1.0;
  CHECK_THROWS_AS(isolation_bound(bad, 0.1), DomainError);
}

TEST_CASE("meta_learning_bound doubles the isolation prefactor") {
  const BoundParams p = default_constants(1.0);
  CHECK(meta_learning_bound(p, 0.1).value == doctest::Approx(0.4));
}

TEST_CASE("prior_mass_bound examples") {
  BoundParams p;
  p.bernstein = true;
  p.d_pi = 1.0;
  p.kappa_pi = 1.0;
  p.n = 100;
  p.alpha = kE / 100.0;
  const BoundReport r = prior_mass_bound(p);
  CHECK(r.value == doctest::Approx(2.0 / kE).epsilon(1e-12));
  CHECK(r.term("kappa") == 0.0);
  p.alpha = 0.005;  // n alpha / d = 0.5
  CHECK_THROWS_AS(prior_mass_bound(p), DomainError);

  BoundParams s;
  s.bernstein = false;
  s.C = 1.0;
  s.d_pi = 2.0;
  s.kappa_pi = 3.0;
  s.n = 400;
  const double expect = 0.5 * std::sqrt(2.0 / 800.0) * (0.5 * std::log(8.0 * kE * kE * 400.0 / 2.0) + std::log(3.0) / 2.0);
  CHECK(prior_mass_bound(s).value == doctest::Approx(expect).epsilon(1e-12));
  CHECK(prior_mass_bound(s).extra("alpha") == doctest::Approx(2.0 * std::sqrt(4.0) / 20.0));
}

TEST_CASE("prior_mass_bound decreases when n doubles") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    BoundParams p;
    p.bernstein = true;
    p.d_pi = 1.0 + 10.0 * rng.uniform();
    p.kappa_pi = 1.0 + 5.0 * rng.uniform();
    p.alpha = 0.01 + rng.uniform();
    p.n = static_cast<int>(std::ceil(3.0 * p.d_pi / p.alpha)) + static_cast<int>(rng.index(1000));
    const double a = prior_mass_bound(p).value;
    p.n *= 2;
    CHECK(prior_mass_bound(p).value < a);
  }
}

TEST_CASE("concurrent_priors_bound examples") {
  CHECK(concurrent_priors_bound({0.3}, 1, 0.5, 10.0).value == doctest::Approx(1.2));
  CHECK(concurrent_priors_bound({0.1, 0.2}, 2, 0.5, 8.0).value == doctest::Approx(0.4 + std::log(2.0)));
  CHECK(concurrent_priors_bound({0.2, 0.1}, 2, 0.5, 8.0).value == concurrent_priors_bound({0.1, 0.2}, 2, 0.5, 8.0).value);
  CHECK_THROWS_AS(concurrent_priors_bound({}, 2, 0.5, 8.0), DomainError);
}

TEST_CASE("discrete_meta_bound examples") {
  const BoundReport one = discrete_meta_bound(1, 16, 0.04, 0.04, 50, 1000.0);
  CHECK(one.term("within_task") == 0.0);
  CHECK(one.value == doctest::Approx(4.0 * std::log(2.0 * kE * 16) / 40.0));
  const BoundReport ex = discrete_meta_bound(2, 8, 1.0, 1.0, 100, 100.0);
  CHECK(ex.value == doctest::Approx(4.0 * std::log(2.0) / 100.0 + 8.0 * std::log(8.0 * kE) / 100.0).epsilon(1e-14));
  CHECK(ex.extra("isolation_2") == doctest::Approx(2.0 * std::log(8.0) / 100.0));
  CHECK(ex.extra("isolation_4") == doctest::Approx(4.0 * std::log(8.0) / 100.0));
  // m* = M: within-task part equals the isolation rate, the rest is O(M/T)
  const BoundReport full = discrete_meta_bound(8, 8, 1.0, 1.0, 100, 1e6);
  CHECK(full.term("within_task") == doctest::Approx(full.extra("isolation_4")));
  CHECK(full.term("meta") == doctest::Approx(4.0 * 8.0 * std::log(2.0 * kE) / 1e6));
  CHECK_THROWS_AS(discrete_meta_bound(9, 8, 1.0, 1.0, 100, 100.0), DomainError);
}

TEST_CASE("discrete_meta_bound monotonicity") {
  for (int M : {4, 16}) {
    for (int m = 1; m <= M; ++m) {
      double last = 1e300;
      for (double T = 1; T <= 1e6; T *= 3) {
        const double v = discrete_meta_bound(m, M, 0.04, 0.04, 50, T).value;
        CHECK(v <= last);
        last = v;
      }
    }
    for (double T : {10.0, 1000.0}) {
      double last = -1.0;
      for (int m = 1; m <= M; ++m) {
        const double v = discrete_meta_bound(m, M, 0.04, 0.04, 50, T).value;
        CHECK(v >= last);
        last = v;
      }
    }
  }
}

TEST_CASE("gaussian_meta_bound matches the oracle in both regimes") {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    BoundParams p = default_constants(1.0 + 20.0 * rng.uniform());
    p.d = 1 + static_cast<int>(rng.index(5));
    p.n = 1 + static_cast<int>(rng.index(200));
    p.T = 1 + static_cast<long long>(rng.index(10000));
    p.sigma = rng.uniform() < 0.5 ? 0.0 : 3.0 * rng.uniform();
    p.mu_norm2 = 5.0 * rng.uniform();
    p.xi2_ref = 0.2 + 2.0 * rng.uniform();
    p.a_ref = 1.2 + 3.0 * rng.uniform();
    p.b_ref = 0.2 + 2.0 * rng.uniform();
    const BoundReport r = gaussian_meta_bound(p);
    const Branches o = gaussian_oracle(p);
    CHECK(r.extra("favorable_branch") == doctest::Approx(o.favorable).epsilon(1e-12));
    CHECK(r.extra("unfavorable_branch") == doctest::Approx(o.unfavorable).epsilon(1e-12));
    const bool fav = p.sigma <= static_cast<double>(p.n) / static_cast<double>(p.T);
    CHECK((r.regime == Regime::Favorable) == fav);
    CHECK(r.extra("G") == doctest::Approx(o.G).epsilon(1e-12));
    CHECK(r.value == doctest::Approx(std::min(o.favorable, o.unfavorable)).epsilon(1e-12));
    CHECK(r.value > 0.0);
    CHECK(std::fabs(r.value - sum_terms(r)) <= 1e-12 * std::max(1.0, r.value));
  }
}

TEST_CASE("gaussian_meta_bound vanishes as T grows") {
  BoundParams p = default_constants(1.0);
  p.d = 2;
  p.n = 50;
  p.sigma = 0.0;
  double last = 1e300;
  for (long long T = 1000; T <= 10000000000LL; T *= 10) {
    p.T = T;
    const double v = gaussian_meta_bound(p).value;
    CHECK(v < last);
    last = v;
  }
  CHECK(last <= 1e-6);
}

TEST_CASE("dispersion enters the unfavorable branch linearly") {
  BoundParams p = default_constants(1.0);
  p.d = 3;
  p.n = 40;
  p.T = 100;
  p.sigma = 2.0;
  p.mu_norm2 = 1.0;
  const BoundReport a = gaussian_meta_bound(p);
  p.sigma = 4.0;
  const BoundReport b = gaussian_meta_bound(p);
  CHECK(a.regime == Regime::Unfavorable);
  CHECK(b.extra("unfavorable_branch") - a.extra("unfavorable_branch") ==
        doctest::Approx(4.0 * p.b_ref * 2.0 / ((p.a_ref - 1.0) * p.alpha * p.n)));
  CHECK(b.value >= a.value);
}

TEST_CASE("gaussian_meta_bound stays positive where the closed-form constant does not") {
  BoundParams p = default_constants(150.0);
  p.d = 2;
  p.n = 10;
  p.T = 20;
  p.mu_norm2 = 2.0;
  const BoundReport r = gaussian_meta_bound(p);
  CHECK(r.extra("G") < 0.0);
  CHECK(r.value > 0.0);
}

TEST_CASE("gaussian_meta_bound domain checks") {
  BoundParams p = default_constants(1.0);
  p.d = 0;
  CHECK_THROWS_AS(gaussian_meta_bound(p), DomainError);
  p.d = 1;
  CHECK(std::isfinite(gaussian_meta_bound(p).value));
  p.a_ref = 1.0;
  CHECK_THROWS_AS(gaussian_meta_bound(p), DomainError);
}

TEST_CASE("gaussian_isolation_bound") {
  BoundParams p = default_constants(1.0);
  p.d = 2;
  p.n = 50;
  p.sigma = 0.5;
  const double an = p.alpha * 50.0, k = 1.0 + 2.0 * an * 2.0;
  const BoundReport r = gaussian_isolation_bound(p, 4.5, 2.0);
  CHECK(r.value == doctest::Approx(2.0 * ((4.5 + 0.5) / k + 2.0 * std::log(k) / (2.0 * an))).epsilon(1e-12));
}

TEST_CASE("mixture_meta_bound examples") {
  BoundParams p = default_constants(1.0);
  p.K = 1;
  p.d = 2;
  p.n = 30;
  p.T = 200;
  p.sigma_K = 0.0;
  p.mu_norm2 = 2.0;
  const BoundReport r = mixture_meta_bound(p, true);
  CHECK(r.regime == Regime::Favorable);
  CHECK(r.term("cv_gaussian") == doctest::Approx(8.0 * 2.0 / 200.0 + 4.0 / (p.alpha * 200.0)));
  CHECK(r.value == doctest::Approx(mixture_oracle(p, true)).epsilon(1e-12));

  const BoundReport u = mixture_meta_bound(p, false);
  CHECK(u.value - r.value == doctest::Approx(2.0 * std::log(200.0) / (p.beta * 200.0)));
  const BoundReport grid = mixture_meta_bound_unknownK(p, {{1, 0.0, {2.0}}});
  CHECK(grid.value == doctest::Approx(u.value));

  p.sigma_K = 1.0;
  p.K = 3;
  p.tau_norm2 = {1.0, 4.0, 0.0};
  const BoundReport big = mixture_meta_bound(p, true);
  CHECK(big.regime == Regime::Unfavorable);
  CHECK(big.term("cv_gaussian") ==
        doctest::Approx(3.0 * (4.0 * std::log(1.0 + 4.0 * p.alpha * 30.0) / (p.alpha * 30.0) + 4.0 / (p.alpha * 30.0))));
  CHECK(big.value == doctest::Approx(mixture_oracle(p, true)).epsilon(1e-12));
  p.K = 201;
  p.tau_norm2.clear();
  CHECK_THROWS_AS(mixture_meta_bound(p, true), DomainError);
}

TEST_CASE("mixture unknown-K takes the grid infimum") {
  BoundParams p = default_constants(1.0);
  p.d = 2;
  p.n = 50;
  p.T = 5000;
  const std::vector<MixtureCell> grid{{1, 9.0, {0.0}}, {2, 0.0, {4.0, 4.0}}, {4, 0.0, {4.0, 4.0, 1.0, 1.0}}};
  const BoundReport best = mixture_meta_bound_unknownK(p, grid);
  for (const auto& c : grid) {
    BoundParams q = p;
    q.K = c.K;
    q.sigma_K = c.sigma_K;
    q.tau_norm2 = c.tau_norm2;
    CHECK(best.value <= mixture_meta_bound(q, false).value);
  }
  CHECK(best.extra("best_K") == 2.0);
}

TEST_CASE("every report's terms sum to its value") {
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    BoundParams p = default_constants(0.5 + 5.0 * rng.uniform());
    p.n = 10 + static_cast<int>(rng.index(200));
    p.T = 2 + static_cast<long long>(rng.index(5000));
    p.d = 1 + static_cast<int>(rng.index(4));
    p.K = 1 + static_cast<int>(rng.index(3));
    p.sigma = rng.uniform();
    p.sigma_K = rng.uniform() < 0.5 ? 0.0 : rng.uniform();
    p.mu_norm2 = rng.uniform();
    const std::vector<BoundReport> reports{isolation_bound(p, rng.uniform()),
                                           meta_learning_bound(p, rng.uniform()),
                                           discrete_meta_bound(1 + static_cast<int>(rng.index(4)), 4, p.alpha, p.beta, p.n, static_cast<double>(p.T)),
                                           gaussian_meta_bound(p),
                                           gaussian_isolation_bound(p, rng.uniform(), 1.0 + rng.uniform()),
                                           mixture_meta_bound(p, rng.uniform() < 0.5)};
    for (const auto& r : reports) CHECK(std::fabs(r.value - sum_terms(r)) <= 1e-12 * std::max(1.0, std::fabs(r.value)));
  }
}
