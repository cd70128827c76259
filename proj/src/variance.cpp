#include "ams/variance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <omp.h>

#include "ams/error.hpp"
#include "ams/rng.hpp"
#include "ams/splitting.hpp"
#include "ams/stats.hpp"

namespace ams {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::VectorXd indicator_above(const std::vector<double>& scores, double level) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) g[static_cast<Eigen::Index>(i)] = scores[i] >= level ? 1.0 : 0.0;
  return g;
}

/// K truncated at `level`: moves below the level are replaced by staying put;
/// rows of states below the level are the identity.
Eigen::MatrixXd truncate(const Eigen::MatrixXd& kernel, const std::vector<double>& scores, double level) {
  const auto m = kernel.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (scores[static_cast<std::size_t>(i)] < level) {
      out(i, i) = 1.0;
      continue;
    }
    double stay = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (scores[static_cast<std::size_t>(j)] >= level) {
        out(i, j) += kernel(i, j);
      } else {
        stay += kernel(i, j);
      }
    }
    out(i, i) += stay;
  }
  return out;
}

}  // namespace

void validate(const FiniteChainSpec& chain, double tol) {
  const auto m = static_cast<Eigen::Index>(chain.states());
  if (m == 0) throw ConfigError("chain: no states");
  if (chain.eta0.size() != m) throw ConfigError("chain: eta0 length differs from the number of states");
  if (chain.kernel.rows() != m || chain.kernel.cols() != m) throw ConfigError("chain: kernel must be m x m");
  if ((chain.eta0.array() < 0.0).any()) throw ConfigError("chain: eta0 has negative entries");
  if (std::abs(chain.eta0.sum() - 1.0) > 1e-12) throw ConfigError("chain: eta0 must sum to 1");
  for (Eigen::Index i = 0; i < m; ++i) {
    if ((chain.kernel.row(i).array() < 0.0).any()) throw ConfigError("chain: kernel has negative entries");
    if (std::abs(chain.kernel.row(i).sum() - 1.0) > 1e-12) {
      throw ConfigError("chain: kernel row " + std::to_string(i) + " does not sum to 1");
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      const double flux = chain.eta0[i] * chain.kernel(i, j);
      const double back = chain.eta0[j] * chain.kernel(j, i);
      if (std::abs(flux - back) > tol) {
        throw ConfigError("chain: kernel violates detailed balance at (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
      }
    }
  }
  for (std::size_t p = 1; p < chain.levels.size(); ++p) {
    if (!(chain.levels[p] > chain.levels[p - 1])) throw ConfigError("chain: levels must be strictly increasing");
  }
  if (!chain.levels.empty() && !(chain.levels.back() < chain.target_level)) {
    throw ConfigError("chain: the last level must lie below target_level");
  }
}

Eigen::MatrixXd metropolis_kernel(const Eigen::VectorXd& eta0, const Eigen::MatrixXd& proposal) {
  const auto m = eta0.size();
  if (proposal.rows() != m || proposal.cols() != m) throw ConfigError("chain: proposal must be m x m");
  if ((proposal - proposal.transpose()).cwiseAbs().maxCoeff() > 1e-14) {
    throw ConfigError("chain: Metropolis proposal must be symmetric");
  }
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double off = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j || eta0[i] <= 0.0) continue;
      k(i, j) = proposal(i, j) * std::min(1.0, eta0[j] / eta0[i]);
      off += k(i, j);
    }
    k(i, i) = 1.0 - off;
  }
  return k;
}

FiniteChainSpec make_exact_alpha_chain(std::vector<double> scores, const Eigen::VectorXd& base_weights,
                                       const Eigen::MatrixXd& symmetric_proposal, std::vector<double> levels,
                                       double target_level, double alpha, std::optional<double> r) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  const std::size_t n = levels.size();
  // band b = number of thresholds (L_0..L_{n-1}, L*) at or below the score
  std::vector<double> thresholds = levels;
  thresholds.push_back(target_level);
  auto band_of = [&](double s) {
    return static_cast<std::size_t>(std::upper_bound(thresholds.begin(), thresholds.end(), s) - thresholds.begin());
  };
  std::vector<double> base_mass(n + 2, 0.0);
  for (std::size_t i = 0; i < scores.size(); ++i) base_mass[band_of(scores[i])] += base_weights[static_cast<Eigen::Index>(i)];

  double r_value;
  if (r) {
    r_value = *r;
  } else {
    const double above_last = base_mass[n] + base_mass[n + 1];
    if (above_last <= 0.0) throw ConfigError("chain: no mass above the last level");
    r_value = base_mass[n + 1] / above_last;
  }
  if (!(r_value > 0.0 && r_value <= 1.0)) throw ConfigError("chain: r must lie in (0,1]");

  // target mass per band
  std::vector<double> mass(n + 2, 0.0);
  for (std::size_t b = 0; b < n; ++b) {
    mass[b] = std::pow(alpha, static_cast<double>(b)) * (1.0 - alpha);  // L_{b-1} <= S < L_b
  }
  const double top = std::pow(alpha, static_cast<double>(n));
  mass[n] = top * (1.0 - r_value);
  mass[n + 1] = top * r_value;

  Eigen::VectorXd eta0(static_cast<Eigen::Index>(scores.size()));
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::size_t b = band_of(scores[i]);
    if (mass[b] > 0.0 && base_mass[b] <= 0.0) {
      throw ConfigError("chain: a level band carries no base weight");
    }
    eta0[static_cast<Eigen::Index>(i)] =
        base_mass[b] > 0.0 ? mass[b] * base_weights[static_cast<Eigen::Index>(i)] / base_mass[b] : 0.0;
  }
  eta0 /= eta0.sum();

  FiniteChainSpec chain;
  chain.scores = std::move(scores);
  chain.eta0 = eta0;
  chain.kernel = metropolis_kernel(eta0, symmetric_proposal);
  chain.levels = std::move(levels);
  chain.target_level = target_level;
  validate(chain);
  return chain;
}

// ---------------------------------------------------------------------------

FeynmanKacChain::FeynmanKacChain(FiniteChainSpec chain) : chain_(std::move(chain)) {
  validate(chain_);
  const std::size_t n = chain_.n();
  const auto m = static_cast<Eigen::Index>(chain_.states());

  for (std::size_t p = 0; p < n; ++p) potentials_.push_back(indicator_above(chain_.scores, chain_.levels[p]));
  for (std::size_t p = 1; p <= n; ++p) mutations_.push_back(truncate(chain_.kernel, chain_.scores, chain_.levels[p - 1]));

  std::vector<Eigen::MatrixXd> q;  // q[p-1] = Q_p
  for (std::size_t p = 1; p <= n; ++p) q.push_back(potentials_[p - 1].asDiagonal() * mutations_[p - 1]);

  semigroups_.assign(n + 1, Eigen::MatrixXd::Identity(m, m));
  for (std::size_t p = n; p-- > 0;) semigroups_[p] = q[p] * semigroups_[p + 1];

  etas_.push_back(chain_.eta0.transpose());
  gammas_.push_back(1.0);
  for (std::size_t p = 0; p < n; ++p) {
    const Eigen::RowVectorXd unnormalized = etas_[p] * q[p];
    const double mass = unnormalized.sum();
    if (!(mass > 0.0)) throw DegenerateChainError("chain: eta_p(G_p) = 0 at stage " + std::to_string(p));
    etas_.push_back(unnormalized / mass);
    gammas_.push_back(gammas_[p] * mass);
  }
}

double FeynmanKacChain::realized_alpha(std::size_t p) const { return etas_.at(p).dot(potentials_.at(p)); }

Eigen::VectorXd FeynmanKacChain::target_indicator() const {
  return indicator_above(chain_.scores, chain_.target_level);
}

double FeynmanKacChain::r() const { return etas_.back().dot(target_indicator()); }

double FeynmanKacChain::probability() const { return gammas_.back() * r(); }

double gamma_functional(const FeynmanKacChain& chain, const Eigen::VectorXd& f) {
  const std::size_t n = chain.n();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(f.size());
  const double eta_n_f = chain.eta(n).dot(f);
  double total = 0.0;
  for (std::size_t p = 0; p <= n; ++p) {
    const double norm = chain.eta(p).dot(chain.semigroup(p) * ones);
    if (!(norm > 0.0)) throw DegenerateChainError("chain: eta_p(Q_{p,n}(1)) = 0 at stage " + std::to_string(p));
    const Eigen::VectorXd qbar = chain.semigroup(p) * f / norm;
    total += chain.eta(p).dot(qbar.cwiseProduct(qbar)) - eta_n_f * eta_n_f;
  }
  return total;
}

double centered_gamma_direct(const FeynmanKacChain& chain, const Eigen::VectorXd& f) {
  const std::size_t n = chain.n();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(f.size());
  const Eigen::VectorXd centered = f.array() - chain.eta(n).dot(f);
  double total = 0.0;
  for (std::size_t p = 0; p <= n; ++p) {
    const double norm = chain.eta(p).dot(chain.semigroup(p) * ones);
    if (!(norm > 0.0)) throw DegenerateChainError("chain: eta_p(Q_{p,n}(1)) = 0 at stage " + std::to_string(p));
    const Eigen::VectorXd qbar = chain.semigroup(p) * centered / norm;
    total += chain.eta(p).dot(qbar.cwiseProduct(qbar));
  }
  return total;
}

double unnormalized_variance(const FeynmanKacChain& chain, const Eigen::VectorXd& f) {
  double total = 0.0;
  for (std::size_t p = 0; p <= chain.n(); ++p) {
    const Eigen::VectorXd v = chain.semigroup(p) * f;
    const double m = chain.eta(p).dot(v);
    const double g = chain.gamma_one(p);
    total += g * g * (chain.eta(p).dot(v.cwiseProduct(v)) - m * m);
  }
  return total;
}

double semigroup_identity_residual(const FeynmanKacChain& chain, const Eigen::VectorXd& f) {
  const std::size_t n = chain.n();
  const double lhs = chain.gamma_one(n) * chain.eta(n).dot(f);
  const double rhs = chain.eta(0).dot(chain.semigroup(0) * f);
  return std::abs(lhs - rhs);
}

Eigen::VectorXd ratio_estimator_variance_transform(const Eigen::VectorXd& f, const Eigen::VectorXd& target_indicator,
                                                   double eta_n_f, double r) {
  if (!(r > 0.0)) throw DomainError("ratio transform needs r > 0");
  return (target_indicator.array() / r * (f.array() - eta_n_f / r)).matrix();
}

double incompressible_bound(std::size_t n, double alpha, double r) {
  return (static_cast<double>(n) - 1.0) * (1.0 - alpha) / alpha + (1.0 - r) / r;
}

double relative_variance(std::size_t n, double alpha, double r, const std::vector<double>& middle, double last) {
  if (!(r > alpha && r < 1.0)) {
    throw DomainError("relative variance: r must lie in (alpha, 1), got r = " + std::to_string(r));
  }
  const std::size_t expected = n >= 2 ? n - 1 : 0;
  if (middle.size() != expected) {
    throw DomainError("relative variance: expected " + std::to_string(expected) + " middle terms");
  }
  double sum = 0.0;
  for (double t : middle) sum += t;
  return incompressible_bound(n, alpha, r) + sum / alpha + last / r;
}

RelativeVarianceBreakdown relative_variance(const FeynmanKacChain& chain) {
  const std::size_t n = chain.n();
  const Eigen::VectorXd f = chain.target_indicator();
  const double r = chain.r();
  if (!(r > 0.0)) throw DegenerateChainError("chain: no mass above the target level");

  RelativeVarianceBreakdown out{};
  out.exact = gamma_functional(chain, f) / (r * r);

  // h_p = Q_{p,n} f / eta_p(Q_{p,n} f); sigma^2 = sum_p (eta_p(h_p^2) - 1)
  double decomposition = (1.0 - r) / r;
  double kernel_terms = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double a = chain.realized_alpha(p);
    const Eigen::VectorXd q_next = chain.semigroup(p + 1) * f;
    const Eigen::VectorXd h_next = q_next / chain.eta(p + 1).dot(q_next);
    const Eigen::VectorXd m = chain.mutation(p + 1) * h_next;
    const Eigen::RowVectorXd restricted = chain.eta(p).cwiseProduct(chain.potential(p).transpose()) / a;
    const double mean = restricted.dot(m);
    const double var = restricted.dot(m.cwiseProduct(m)) - mean * mean;
    decomposition += (1.0 - a) / a + var / a;
    kernel_terms += var / a;
  }
  out.decomposition = decomposition;
  out.kernel_terms = kernel_terms;

  const double alpha = n > 0 ? chain.realized_alpha(0) : 0.0;
  out.idealized_shortcut = n > 0 ? incompressible_bound(n, alpha, r) : (1.0 - r) / r;

  // literal display, conditional exceedances read off the Feynman-Kac semigroup
  for (std::size_t p = 0; p + 2 <= n; ++p) {
    const Eigen::VectorXd ratio =
        (chain.semigroup(p + 1) * f).array() / (r * std::pow(alpha, static_cast<double>(n - p - 1))) - 1.0;
    out.middle_terms.push_back(chain.eta(p + 1).dot(ratio.cwiseProduct(ratio)));
  }
  const Eigen::VectorXd last = f.array() / r - 1.0;
  out.last_term = chain.eta(n).dot(last.cwiseProduct(last));
  if (n > 0 && r > alpha && r < 1.0) {
    out.literal_display = relative_variance(n, alpha, r, out.middle_terms, out.last_term);
  } else {
    out.literal_display = kNaN;
  }
  return out;
}

std::pair<double, double> clt_interval(double p_hat, double sigma_sq_rel, std::size_t n, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw DomainError("confidence must lie in (0,1)");
  if (sigma_sq_rel < 0.0 || n < 1) throw DomainError("clt interval needs sigma^2 >= 0 and N >= 1");
  const double z = stats::normal_quantile(0.5 + 0.5 * confidence);
  const double half = z * std::sqrt(sigma_sq_rel / static_cast<double>(n));
  return {std::max(0.0, p_hat * (1.0 - half)), p_hat * (1.0 + half)};
}

// ---------------------------------------------------------------------------

namespace {

std::size_t sample_categorical(const std::vector<double>& cumulative, double u) {
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u * cumulative.back());
  return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

std::vector<double> cumulative_of(const Eigen::RowVectorXd& row) {
  std::vector<double> c(static_cast<std::size_t>(row.size()));
  double acc = 0.0;
  for (Eigen::Index j = 0; j < row.size(); ++j) c[static_cast<std::size_t>(j)] = acc += row[j];
  return c;
}

std::size_t state_index(StateView x) { return static_cast<std::size_t>(x[0]); }

class FiniteChainModel final : public TargetModel {
 public:
  explicit FiniteChainModel(const FiniteChainSpec& chain)
      : scores_(chain.scores), eta0_(chain.eta0), cumulative_(cumulative_of(chain.eta0.transpose())) {}

  std::string name() const override { return "finite_chain"; }
  std::size_t dimension() const override { return 1; }
  double log_density(StateView x) const override { return std::log(eta0_[static_cast<Eigen::Index>(state_index(x))]); }
  double score(StateView x) const override { return scores_[state_index(x)]; }
  void sample(Philox4x32& rng, StateSpan out) const override {
    out[0] = static_cast<double>(sample_categorical(cumulative_, rng.uniform_open()));
  }

 private:
  std::vector<double> scores_;
  Eigen::VectorXd eta0_;
  std::vector<double> cumulative_;
};

class FiniteChainProposal final : public ProposalKernel {
 public:
  explicit FiniteChainProposal(const Eigen::MatrixXd& kernel) : kernel_(kernel) {
    for (Eigen::Index i = 0; i < kernel.rows(); ++i) rows_.push_back(cumulative_of(kernel.row(i)));
  }

  std::string name() const override { return "finite_chain"; }
  std::size_t dimension() const override { return 1; }
  double log_density(StateView from, StateView to) const override {
    return std::log(kernel_(static_cast<Eigen::Index>(state_index(from)), static_cast<Eigen::Index>(state_index(to))));
  }
  void sample(StateView from, Philox4x32& rng, StateSpan out) const override {
    out[0] = static_cast<double>(sample_categorical(rows_[state_index(from)], rng.uniform_open()));
  }

 private:
  Eigen::MatrixXd kernel_;
  std::vector<std::vector<double>> rows_;
};

}  // namespace

std::shared_ptr<const TargetModel> finite_chain_model(const FiniteChainSpec& chain) {
  validate(chain);
  return std::make_shared<FiniteChainModel>(chain);
}

ReversibleKernel finite_chain_kernel(const FiniteChainSpec& chain, std::shared_ptr<const TargetModel> model) {
  return ReversibleKernel::direct(std::make_shared<FiniteChainProposal>(chain.kernel), std::move(model));
}

ChainReplications simulate_fixed_levels(const FiniteChainSpec& chain, std::size_t n_particles,
                                        std::size_t replications, std::uint64_t master_seed,
                                        const Eigen::VectorXd& f, int threads) {
  const auto model = finite_chain_model(chain);
  const auto kernel = finite_chain_kernel(chain, model);
  const TestFunction test = [&f](StateView x) { return f[static_cast<Eigen::Index>(state_index(x))]; };

  ChainReplications out;
  out.p_hat.assign(replications, 0.0);
  out.c_hat.assign(replications, kNaN);
  std::vector<char> extinct(replications, 0);
  const int workers = threads > 0 ? threads : omp_get_max_threads();
  const auto count = static_cast<std::ptrdiff_t>(replications);
#pragma omp parallel for schedule(dynamic, 64) num_threads(workers)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    SplittingConfig config;
    config.mode = SplittingMode::Fixed;
    config.n_particles = n_particles;
    config.levels = chain.levels;
    config.target_level = chain.target_level;
    config.seed = replication_seed(master_seed, static_cast<std::uint64_t>(j));
    config.keep_final_system = false;
    const RunResult run = run_fixed(config, *model, &kernel, test, Execution::Serial);
    const auto k = static_cast<std::size_t>(j);
    out.p_hat[k] = run.estimates.p_hat;
    if (run.estimates.c_defined) out.c_hat[k] = run.estimates.c_hat;
    extinct[k] = run.extinct ? 1 : 0;
  }
  out.extinctions = static_cast<std::size_t>(std::count(extinct.begin(), extinct.end(), 1));
  return out;
}

VarianceReport variance_report(const FiniteChainSpec& spec, std::optional<Eigen::VectorXd> f_opt,
                               std::size_t n_particles, std::size_t replications, std::uint64_t seed,
                               double confidence, int threads) {
  const FeynmanKacChain chain(spec);
  const std::size_t n = chain.n();
  const Eigen::VectorXd indicator = chain.target_indicator();
  Eigen::VectorXd f = f_opt ? *f_opt : indicator;
  if (f.size() != indicator.size()) throw ConfigError("chain: f length differs from the number of states");
  f = f.cwiseProduct(indicator);

  VarianceReport report;
  report.n = n;
  report.alpha = n > 0 ? chain.realized_alpha(0) : 0.0;
  report.r = chain.r();
  report.probability = chain.probability();
  report.gamma_f = gamma_functional(chain, f);
  report.gamma_indicator = gamma_functional(chain, indicator);
  const double eta_n_f = chain.eta(n).dot(f);
  report.gamma_ratio = gamma_functional(chain, ratio_estimator_variance_transform(f, indicator, eta_n_f, report.r));
  report.breakdown = relative_variance(chain);
  report.sigma_sq_rel = report.breakdown.exact;
  report.incompressible_bound = n > 0 ? incompressible_bound(n, report.alpha, report.r) : (1.0 - report.r) / report.r;

  const double g = chain.gamma_one(n);
  report.identity_semigroup = semigroup_identity_residual(chain, f);
  report.identity_centered = std::abs(gamma_functional(chain, (f.array() - eta_n_f).matrix()) -
                                      centered_gamma_direct(chain, f));
  report.identity_unnormalized = std::abs(g * g * report.gamma_f - unnormalized_variance(chain, f));

  report.n_particles = n_particles;
  report.replications = replications;
  if (n_particles > 0) report.ci = clt_interval(report.probability, report.sigma_sq_rel, n_particles, confidence);

  if (replications > 0) {
    if (n_particles == 0) throw ConfigError("chain: n_particles must be positive to simulate replications");
    const auto sims = simulate_fixed_levels(spec, n_particles, replications, seed, f, threads);
    const double p = report.probability;
    const double scale = static_cast<double>(n_particles) / (p * p);
    if (replications >= 2) report.empirical_nvar = scale * stats::sample_variance(sims.p_hat);
    if (replications >= 4) report.empirical_nvar_se = scale * stats::variance_standard_error(sims.p_hat);
    std::size_t covered = 0;
    for (double v : sims.p_hat) {
      const auto [lo, hi] = clt_interval(v, report.sigma_sq_rel, n_particles, confidence);
      if (lo <= p && p <= hi) ++covered;
    }
    report.ci_coverage = static_cast<double>(covered) / static_cast<double>(replications);
    if (replications >= 50) {
      const auto ad = stats::anderson_darling_normal(sims.p_hat);
      report.normality_stat = ad.statistic;
      report.normality_p = ad.p_value;
    }
  }
  return report;
}

}  // namespace ams
