#include <catch_amalgamated.hpp>

#include <cmath>

#include "ams/error.hpp"
#include "ams/rng.hpp"
#include "ams/stats.hpp"
#include "ams/variance.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::MatrixXd nearest_neighbour(std::size_t m) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    if (i > 0) q(i, i - 1) = 0.5;
    if (i + 1 < m) q(i, i + 1) = 0.5;
    q(i, i) = 1.0 - q.row(i).sum();
  }
  return q;
}

ams::FiniteChainSpec six_state() {
  std::vector<double> scores{0, 1, 2, 3, 4, 5};
  return ams::make_exact_alpha_chain(scores, Eigen::VectorXd::Ones(6), nearest_neighbour(6), {2.5}, 4.5, 0.5);
}

// random weights, random symmetric proposal, three levels
ams::FiniteChainSpec random_chain(std::uint32_t key, std::size_t m) {
  ams::Philox4x32 g({key, 77}, {});
  std::vector<double> scores(m);
  Eigen::VectorXd w(m);
  for (std::size_t i = 0; i < m; ++i) {
    scores[i] = static_cast<double>(i);
    w(i) = 0.2 + g.uniform_open();
  }
  w /= w.sum();
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) q(i, j) = q(j, i) = g.uniform_open() / m;
  for (std::size_t i = 0; i < m; ++i) q(i, i) = 1.0 - q.row(i).sum();
  ams::FiniteChainSpec c;
  c.scores = scores;
  c.eta0 = w;
  c.kernel = ams::metropolis_kernel(w, q);
  const double step = static_cast<double>(m) / 4.0;
  c.levels = {step - 0.5, 2 * step - 0.5, 3 * step - 0.5};
  c.target_level = static_cast<double>(m) - 1.5;
  return c;
}

Eigen::VectorXd test_function(std::size_t m) {
  Eigen::VectorXd f(m);
  for (std::size_t i = 0; i < m; ++i) f(i) = std::sin(1.0 + i) + 2.0;
  return f;
}

}  // namespace

TEST_CASE("without levels Gamma(f) is the prior variance") {
  auto c = random_chain(1, 8);
  c.levels.clear();
  const ams::FeynmanKacChain chain(c);
  const Eigen::VectorXd f = test_function(8);
  const double mean = c.eta0.dot(f);
  const double var = c.eta0.dot(f.cwiseProduct(f)) - mean * mean;
  CHECK_THAT(ams::gamma_functional(chain, f), WithinRel(var, 1e-12));
  CHECK(ams::gamma_functional(chain, Eigen::VectorXd::Zero(8)) == 0.0);
}

TEST_CASE("the three Feynman-Kac identities hold to rounding") {
  std::vector<ams::FiniteChainSpec> chains{six_state(), random_chain(2, 8), random_chain(3, 12), random_chain(4, 20)};
  for (const auto& c : chains) {
    const ams::FeynmanKacChain chain(c);
    for (const Eigen::VectorXd& f : {Eigen::VectorXd(chain.target_indicator()), test_function(c.states())}) {
      CHECK(ams::semigroup_identity_residual(chain, f) <= 1e-12);
      const Eigen::VectorXd centered = f.array() - chain.eta(chain.n()).dot(f);
      CHECK(std::abs(ams::gamma_functional(chain, centered) - ams::centered_gamma_direct(chain, f)) <= 1e-12);
      const double g = chain.gamma_one(chain.n());
      CHECK(std::abs(g * g * ams::gamma_functional(chain, f) - ams::unnormalized_variance(chain, f)) <= 1e-12);
    }
  }
}

TEST_CASE("the ratio transform is centered and vanishes for constant f") {
  const ams::FeynmanKacChain chain(random_chain(5, 12));
  const Eigen::VectorXd ind = chain.target_indicator();
  const double r = chain.r();
  const Eigen::VectorXd f = test_function(12).cwiseProduct(ind);
  const auto g = ams::ratio_estimator_variance_transform(f, ind, chain.eta(chain.n()).dot(f), r);
  CHECK(std::abs(chain.eta(chain.n()).dot(g)) < 1e-14);
  const Eigen::VectorXd c = 3.0 * ind;
  const auto g0 = ams::ratio_estimator_variance_transform(c, ind, chain.eta(chain.n()).dot(c), r);
  CHECK_THAT(ams::gamma_functional(chain, g0), WithinAbs(0.0, 1e-24));
}

TEST_CASE("exact-alpha chains realize alpha at every stage") {
  std::vector<double> scores(10);
  for (std::size_t i = 0; i < 10; ++i) scores[i] = static_cast<double>(i);
  const auto c = ams::make_exact_alpha_chain(scores, Eigen::VectorXd::Ones(10), nearest_neighbour(10),
                                             {1.5, 3.5, 5.5}, 7.5, 0.4, 0.7);
  ams::validate(c);
  const ams::FeynmanKacChain chain(c);
  for (std::size_t p = 0; p < 3; ++p) CHECK_THAT(chain.realized_alpha(p), WithinRel(0.4, 1e-12));
  CHECK_THAT(chain.r(), WithinRel(0.7, 1e-12));
  CHECK_THAT(chain.probability(), WithinRel(0.7 * 0.4 * 0.4 * 0.4, 1e-12));
}

TEST_CASE("incompressible bound examples") {
  CHECK_THAT(ams::incompressible_bound(2, 0.5, 0.8), WithinRel(1.25, 1e-15));
  CHECK_THAT(ams::incompressible_bound(1, 0.75, 1.0), WithinAbs(0.0, 1e-15));
  const double r = 1e-5 / std::pow(0.75, 40);
  CHECK_THAT(ams::incompressible_bound(40, 0.75, r), WithinAbs(13.0055, 5e-4));
}

TEST_CASE("relative variance display") {
  CHECK_THAT(ams::relative_variance(2, 0.5, 0.8, {0.0}, 0.0), WithinRel(1.25, 1e-15));
  CHECK_THAT(ams::relative_variance(2, 0.5, 0.8, {0.1}, 0.2), WithinRel(1.25 + 0.2 + 0.25, 1e-15));
  CHECK_THROWS_AS(ams::relative_variance(2, 0.5, 0.4, {0.0}, 0.0), ams::DomainError);
  CHECK_THROWS_AS(ams::relative_variance(2, 0.5, 1.0, {0.0}, 0.0), ams::DomainError);
  CHECK_THROWS_AS(ams::relative_variance(3, 0.5, 0.8, {0.0}, 0.0), ams::DomainError);
}

TEST_CASE("the breakdown decomposes the exact variance") {
  for (const auto& c : {six_state(), random_chain(6, 12), random_chain(7, 16)}) {
    const ams::FeynmanKacChain chain(c);
    const auto b = ams::relative_variance(chain);
    CHECK_THAT(b.decomposition, WithinRel(b.exact, 1e-10));
    CHECK(b.kernel_terms >= 0.0);
    double ideal = (1.0 - chain.r()) / chain.r();
    for (std::size_t p = 0; p < chain.n(); ++p) ideal += (1.0 - chain.realized_alpha(p)) / chain.realized_alpha(p);
    CHECK_THAT(b.exact - b.kernel_terms, WithinRel(ideal, 1e-10));
  }
  const auto b = ams::relative_variance(ams::FeynmanKacChain(six_state()));
  CHECK(b.exact >= b.idealized_shortcut);
  CHECK(b.middle_terms.empty());
}

TEST_CASE("clt interval examples") {
  const auto degenerate = ams::clt_interval(1e-5, 0.0, 1000, 0.95);
  CHECK(degenerate.first == 1e-5);
  CHECK(degenerate.second == 1e-5);
  const auto ci = ams::clt_interval(1e-5, 13.0055, 10000, 0.95);
  const double half = 1.959963984540054 * std::sqrt(13.0055 / 10000.0);
  CHECK_THAT(ci.first, WithinRel(1e-5 * (1 - half), 1e-12));
  CHECK_THAT(ci.second, WithinRel(1e-5 * (1 + half), 1e-12));
  CHECK(ams::clt_interval(1.0, 1e6, 1, 0.95).first == 0.0);
  CHECK_THROWS_AS(ams::clt_interval(1.0, 1.0, 10, 1.0), ams::DomainError);
}

TEST_CASE("finite chain simulation reproduces the exact probability") {
  const auto c = six_state();
  const ams::FeynmanKacChain chain(c);
  const auto reps = ams::simulate_fixed_levels(c, 200, 4000, 3, chain.target_indicator());
  const double m = ams::stats::mean(reps.p_hat);
  const double se = std::sqrt(ams::stats::sample_variance(reps.p_hat) / 4000.0);
  CHECK(std::abs(m - chain.probability()) < 5.0 * se);
}

TEST_CASE("variance report on the six-state chain") {
  const auto report = ams::variance_report(six_state(), std::nullopt, 200, 4000, 9);
  CHECK(report.identity_semigroup <= 1e-12);
  CHECK(report.identity_centered <= 1e-12);
  CHECK(report.identity_unnormalized <= 1e-12);
  CHECK(report.sigma_sq_rel >= report.incompressible_bound);
  REQUIRE(report.empirical_nvar);
  CHECK(std::abs(*report.empirical_nvar - report.sigma_sq_rel) < 4.0 * *report.empirical_nvar_se);
  REQUIRE(report.ci_coverage);
  CHECK(std::abs(*report.ci_coverage - 0.95) < 4.0 * std::sqrt(0.95 * 0.05 / 4000.0));
}

TEST_CASE("invalid chains are rejected") {
  auto c = six_state();
  c.kernel(0, 1) += 0.01;
  CHECK_THROWS_AS(ams::validate(c), ams::ConfigError);
  c = six_state();
  c.levels = {3.0, 2.0};
  CHECK_THROWS_AS(ams::validate(c), ams::ConfigError);
  Eigen::MatrixXd asym = nearest_neighbour(6);
  asym(0, 1) = 0.3;
  asym(0, 0) = 0.7;
  CHECK_THROWS_AS(ams::metropolis_kernel(Eigen::VectorXd::Constant(6, 1.0 / 6), asym), ams::ConfigError);
}
