#pragma once

// Asymptotic variance of multilevel splitting estimators, evaluated exactly
// on finite-state chains where every Feynman-Kac operator is a matrix.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ams/kernel.hpp"
#include "ams/model.hpp"

namespace ams {

/// Finite state space {0..m-1} with scores, initial law eta_0 and one
/// eta_0-reversible kernel K used at every stage.
struct FiniteChainSpec {
  std::vector<double> scores;
  Eigen::VectorXd eta0;
  Eigen::MatrixXd kernel;
  std::vector<double> levels;  // L_0 < ... < L_{n-1} < target_level
  double target_level = 0.0;

  std::size_t states() const noexcept { return scores.size(); }
  std::size_t n() const noexcept { return levels.size(); }
};

/// Row-stochastic, detailed balance within `tol`, ordered levels.
void validate(const FiniteChainSpec& chain, double tol = 1e-12);

/// Metropolis kernel K(i,j) = q(i,j) min(1, eta_j/eta_i) (i != j) for a
/// symmetric row-stochastic proposal q.
Eigen::MatrixXd metropolis_kernel(const Eigen::VectorXd& eta0, const Eigen::MatrixXd& proposal);

/// Rescales `base_weights` inside each level band so that every stage has
/// success probability exactly `alpha` and P(S >= L*) = r alpha^n, then
/// builds the Metropolis kernel for the adjusted law.  `r` defaults to the
/// conditional exceedance of the base weights.
FiniteChainSpec make_exact_alpha_chain(std::vector<double> scores, const Eigen::VectorXd& base_weights,
                                       const Eigen::MatrixXd& symmetric_proposal, std::vector<double> levels,
                                       double target_level, double alpha, std::optional<double> r = {});

/// The matrices and measures of the Feynman-Kac flow of a finite chain:
/// G_p = 1{S >= L_p}, M_p the kernel truncated at L_{p-1}, Q_p = diag(G_{p-1}) M_p,
/// Q_{p,n} = Q_{p+1} ... Q_n, eta_{p+1} = eta_p Q_{p+1} / eta_p(G_p).
class FeynmanKacChain {
 public:
  explicit FeynmanKacChain(FiniteChainSpec chain);

  const FiniteChainSpec& spec() const noexcept { return chain_; }
  std::size_t n() const noexcept { return chain_.n(); }

  const Eigen::VectorXd& potential(std::size_t p) const { return potentials_.at(p); }
  const Eigen::MatrixXd& mutation(std::size_t p) const { return mutations_.at(p - 1); }
  const Eigen::MatrixXd& semigroup(std::size_t p) const { return semigroups_.at(p); }  // Q_{p,n}
  const Eigen::RowVectorXd& eta(std::size_t p) const { return etas_.at(p); }
  /// gamma_p(1) = prod_{q<p} eta_q(G_q).
  double gamma_one(std::size_t p) const { return gammas_.at(p); }
  /// eta_p(G_p), the realized success probability of stage p.
  double realized_alpha(std::size_t p) const;
  Eigen::VectorXd target_indicator() const;
  /// r = eta_n(1{S >= L*}).
  double r() const;
  /// P = gamma_n(1) r.
  double probability() const;

 private:
  FiniteChainSpec chain_;
  std::vector<Eigen::VectorXd> potentials_;
  std::vector<Eigen::MatrixXd> mutations_;
  std::vector<Eigen::MatrixXd> semigroups_;
  std::vector<Eigen::RowVectorXd> etas_;
  std::vector<double> gammas_;
};

/// Gamma(f) = sum_{p=0}^n eta_p( Qbar_{p,n}(f)^2 - eta_n(f)^2 ) with
/// Qbar_{p,n} = Q_{p,n} / eta_p(Q_{p,n}(1)).
double gamma_functional(const FeynmanKacChain& chain, const Eigen::VectorXd& f);

/// sum_p eta_p(Qbar_{p,n}(f)^2) for a centered f (the alternative display
/// of Gamma(f - eta_n(f))).
double centered_gamma_direct(const FeynmanKacChain& chain, const Eigen::VectorXd& f);

/// sum_p gamma_p(1)^2 eta_p((Q_{p,n} f - eta_p(Q_{p,n} f))^2), which equals
/// gamma_n(1)^2 Gamma(f).
double unnormalized_variance(const FeynmanKacChain& chain, const Eigen::VectorXd& f);

/// |gamma_n(1) eta_n(f) - eta_0 Q_{0,n}(f)|.
double semigroup_identity_residual(const FeynmanKacChain& chain, const Eigen::VectorXd& f);

/// g = 1{S >= L*}/r (f - eta_n(f)/r); Gamma(g) is the asymptotic variance
/// of the conditional-expectation estimator.
Eigen::VectorXd ratio_estimator_variance_transform(const Eigen::VectorXd& f, const Eigen::VectorXd& target_indicator,
                                                   double eta_n_f, double r);

/// (n-1)(1-alpha)/alpha + (1-r)/r.
double incompressible_bound(std::size_t n, double alpha, double r);

/// Evaluates the four-term relative-variance display
///   (n-1)(1-a)/a + (1-r)/r + (1/a) sum_{p=0}^{n-2} middle[p] + (1/r) last
/// where middle[p] = E[(P(S(X_n) >= L* | X_{p+1}) / (r a^{n-p-1}) - 1)^2 | S(X_p) >= L_p]
/// and last = E[(P(S(X_n) >= L* | X_n)/r - 1)^2 | S(X_{n-1}) >= L_{n-1}].
/// Throws DomainError unless alpha < r < 1.
double relative_variance(std::size_t n, double alpha, double r, const std::vector<double>& middle, double last);

/// The pieces of the relative asymptotic variance on one finite chain.
struct RelativeVarianceBreakdown {
  double exact;             // gamma_n(1)^2 Gamma(1{S>=L*}) / P^2
  double decomposition;     // sum_p (1-a_p)/a_p + (1-r)/r + sum_p Var(M_{p+1} h_{p+1})/a_p
  double literal_display;   // relative_variance() with chain-exact conditional terms
  double idealized_shortcut;  // (n-1)(1-a)/a + (1-r)/r
  double kernel_terms;      // sum_p Var(M_{p+1} h_{p+1})/a_p, zero for ideal kernels
  std::vector<double> middle_terms;
  double last_term;
};
RelativeVarianceBreakdown relative_variance(const FeynmanKacChain& chain);

/// p_hat (1 -+ z sqrt(sigma^2/N)), clipped at 0.
std::pair<double, double> clt_interval(double p_hat, double sigma_sq_rel, std::size_t n, double confidence);

/// The finite chain as a sampleable target (state = index stored as double)
/// and its kernel as a Direct reversible kernel, so the generic splitting
/// engine can simulate it.
std::shared_ptr<const TargetModel> finite_chain_model(const FiniteChainSpec& chain);
ReversibleKernel finite_chain_kernel(const FiniteChainSpec& chain, std::shared_ptr<const TargetModel> model);

struct ChainReplications {
  std::vector<double> p_hat;
  std::vector<double> c_hat;  // NaN where undefined
  std::size_t extinctions = 0;
};

/// R independent fixed-level runs of the particle system on the chain.
ChainReplications simulate_fixed_levels(const FiniteChainSpec& chain, std::size_t n_particles,
                                        std::size_t replications, std::uint64_t master_seed,
                                        const Eigen::VectorXd& f, int threads = 0);

struct VarianceReport {
  std::size_t n = 0;
  double alpha = 0.0;
  double r = 0.0;
  double probability = 0.0;
  double gamma_f = 0.0;               // Gamma(f) for the requested f
  double gamma_indicator = 0.0;       // Gamma(1{S>=L*})
  double gamma_ratio = 0.0;           // Gamma(g) for the C estimator
  double sigma_sq_rel = 0.0;
  RelativeVarianceBreakdown breakdown;
  double incompressible_bound = 0.0;
  double identity_semigroup = 0.0;    // residuals of the three identities
  double identity_centered = 0.0;
  double identity_unnormalized = 0.0;
  std::size_t n_particles = 0;
  std::size_t replications = 0;
  std::optional<double> empirical_nvar;   // N Var(P_check) / P^2
  std::optional<double> empirical_nvar_se;
  std::pair<double, double> ci{0.0, 0.0};  // CLT interval around P at N
  std::optional<double> ci_coverage;
  std::optional<double> normality_stat;
  std::optional<double> normality_p;
};

/// Evaluates everything for `f` (defaults to the target indicator); runs
/// `replications` particle simulations when nonzero.
VarianceReport variance_report(const FiniteChainSpec& chain, std::optional<Eigen::VectorXd> f,
                               std::size_t n_particles, std::size_t replications, std::uint64_t seed,
                               double confidence = 0.95, int threads = 0);

}  // namespace ams
