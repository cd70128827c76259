#include "ams/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "ams/error.hpp"
#include "ams/stats.hpp"

namespace ams {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double squared_distance(StateView a, StateView b, double scale_a) {
  double sq = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = b[k] - scale_a * a[k];
    sq += d * d;
  }
  return sq;
}

}  // namespace

double ProposalKernel::density(StateView from, StateView to) const { return std::exp(log_density(from, to)); }

GaussAR1Proposal::GaussAR1Proposal(double sigma, std::size_t dimension)
    : sigma_(sigma), dimension_(dimension) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("kernel.sigma must be positive");
  contraction_ = 1.0 / std::sqrt(1.0 + sigma * sigma);
  noise_sd_ = sigma * contraction_;
}

double GaussAR1Proposal::log_density(StateView from, StateView to) const {
  const double s2 = sigma_ * sigma_;
  const double precision = (1.0 + s2) / s2;
  const double d = static_cast<double>(dimension_);
  return 0.5 * d * std::log(precision / (2.0 * std::numbers::pi)) -
         0.5 * precision * squared_distance(from, to, contraction_);
}

void GaussAR1Proposal::sample(StateView from, Philox4x32& rng, StateSpan out) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < dimension_; ++k) out[k] = contraction_ * from[k] + noise_sd_ * normal(rng);
}

GaussianRandomWalk::GaussianRandomWalk(double step, std::size_t dimension) : step_(step), dimension_(dimension) {
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("kernel.step must be positive");
}

double GaussianRandomWalk::log_density(StateView from, StateView to) const {
  const double d = static_cast<double>(dimension_);
  return -0.5 * d * std::log(2.0 * std::numbers::pi * step_ * step_) -
         0.5 * squared_distance(from, to, 1.0) / (step_ * step_);
}

void GaussianRandomWalk::sample(StateView from, Philox4x32& rng, StateSpan out) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < dimension_; ++k) out[k] = from[k] + step_ * normal(rng);
}

// ---------------------------------------------------------------------------

ReversibleKernel::ReversibleKernel(Variant v, std::shared_ptr<const ProposalKernel> p,
                                   std::shared_ptr<const TargetModel> t)
    : variant_(v), proposal_(std::move(p)), target_(std::move(t)) {
  if (!proposal_ || !target_) throw ConfigError("kernel needs both a proposal and a target");
  if (proposal_->dimension() != target_->dimension()) {
    throw ConfigError("proposal dimension does not match the target dimension");
  }
}

ReversibleKernel ReversibleKernel::metropolis_hastings(std::shared_ptr<const ProposalKernel> proposal,
                                                       std::shared_ptr<const TargetModel> target) {
  return ReversibleKernel(Variant::MetropolisHastings, std::move(proposal), std::move(target));
}

ReversibleKernel ReversibleKernel::direct(std::shared_ptr<const ProposalKernel> proposal,
                                          std::shared_ptr<const TargetModel> target) {
  return ReversibleKernel(Variant::Direct, std::move(proposal), std::move(target));
}

double ReversibleKernel::acceptance_ratio(StateView x, StateView y) const {
  if (variant_ == Variant::Direct) return 1.0;
  const double forward = target_->log_density(x) + proposal_->log_density(x, y);
  const double backward = target_->log_density(y) + proposal_->log_density(y, x);
  if (std::isnan(forward) || std::isnan(backward)) {
    throw InvalidStateError("acceptance ratio: NaN density");
  }
  if (forward == kNegInf) return 1.0;
  if (backward == kNegInf) return 0.0;
  const double log_ratio = backward - forward;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

double ReversibleKernel::log_off_diagonal(StateView x, StateView y) const {
  const double a = acceptance_ratio(x, y);
  return a > 0.0 ? std::log(a) + proposal_->log_density(x, y) : kNegInf;
}

bool ReversibleKernel::step(StateView x, Philox4x32& rng, StateSpan out) const {
  proposal_->sample(x, rng, out);
  // drawn for both variants so Direct and MH stay stream-aligned
  const double u = rng.uniform_open();
  if (variant_ == Variant::Direct) return true;
  if (u < acceptance_ratio(x, out)) return true;
  std::copy(x.begin(), x.end(), out.begin());
  return false;
}

double acceptance_ratio(const ReversibleKernel& kernel, StateView x, StateView y) {
  return kernel.acceptance_ratio(x, y);
}

MhStep mh_step(const ReversibleKernel& kernel, StateView x, Philox4x32& rng) {
  MhStep result{std::vector<double>(x.size()), false};
  result.accepted = kernel.step(x, rng, result.state);
  return result;
}

namespace {

std::pair<double, double> fluxes(const ReversibleKernel& kernel, StateView x, StateView y) {
  const auto& eta = kernel.target();
  return {std::exp(eta.log_density(x) + kernel.log_off_diagonal(x, y)),
          std::exp(eta.log_density(y) + kernel.log_off_diagonal(y, x))};
}

}  // namespace

double detailed_balance_residual(const ReversibleKernel& kernel, StateView x, StateView y) {
  const auto [forward, backward] = fluxes(kernel, x, y);
  return forward - backward;
}

double relative_detailed_balance_residual(const ReversibleKernel& kernel, StateView x, StateView y) {
  const auto [forward, backward] = fluxes(kernel, x, y);
  const double scale = std::max(forward, backward);
  return scale > 0.0 ? std::abs(forward - backward) / scale : 0.0;
}

// ---------------------------------------------------------------------------

TruncatedOutcome TruncatedKernel::step(StateView x, double score_in, Philox4x32& rng, StateSpan out,
                                       double& score_out) const {
  score_out = score_in;
  if (score_in < level_) {
    std::copy(x.begin(), x.end(), out.begin());
    return TruncatedOutcome::Frozen;
  }
  if (!base_.step(x, rng, out)) return TruncatedOutcome::Rejected;
  const double s = checked_score(base_.target(), out);
  if (s < level_) {
    std::copy(x.begin(), x.end(), out.begin());
    return TruncatedOutcome::Truncated;
  }
  score_out = s;
  return TruncatedOutcome::Moved;
}

std::vector<double> truncated_step(const TruncatedKernel& kernel, StateView x, Philox4x32& rng) {
  std::vector<double> out(x.size());
  double score_out;
  kernel.step(x, checked_score(kernel.base().target(), x), rng, out, score_out);
  return out;
}

double invariance_check(const TargetModel& model, double level, const StepFunction& stepper,
                        std::size_t n_steps, std::size_t n_particles, Philox4x32& rng) {
  const AnalyticOracle* oracle = model.oracle();
  if (oracle == nullptr || !oracle->has_conditional_sampler()) {
    throw UnsupportedError("invariance check needs an exact conditional sampler");
  }
  std::vector<double> initial(n_particles), final_scores(n_particles);
  std::vector<double> x(model.dimension());
  for (std::size_t i = 0; i < n_particles; ++i) {
    oracle->conditional_sample(level, rng, x);
    initial[i] = checked_score(model, x);
    for (std::size_t s = 0; s < n_steps; ++s) stepper(x, rng);
    final_scores[i] = checked_score(model, x);
  }
  return stats::ks_two_sample(std::move(initial), std::move(final_scores));
}

double invariance_check(const TruncatedKernel& kernel, const AnalyticOracle& oracle, std::size_t n_steps,
                        std::size_t n_particles, Philox4x32& rng) {
  if (!oracle.has_conditional_sampler()) {
    throw UnsupportedError("invariance check needs an exact conditional sampler");
  }
  const TargetModel& model = kernel.base().target();
  std::vector<double> next(model.dimension());
  StepFunction stepper = [&](std::vector<double>& state, Philox4x32& r) {
    double s_out;
    kernel.step(state, checked_score(model, state), r, next, s_out);
    state.swap(next);
  };
  return invariance_check(model, kernel.level(), stepper, n_steps, n_particles, rng);
}

ReversibleKernel make_builtin_kernel(const std::string& type, double scale,
                                     std::shared_ptr<const TargetModel> target) {
  if (!target) throw ConfigError("kernel needs a target model");
  const std::size_t d = target->dimension();
  if (type == "gauss_ar1") {
    if (target->name() != "gauss_watermark") {
      throw ConfigError("kernel.type gauss_ar1 is only reversible for the standard Gaussian target");
    }
    return ReversibleKernel::direct(std::make_shared<GaussAR1Proposal>(scale, d), std::move(target));
  }
  if (type == "rw_metropolis") {
    return ReversibleKernel::metropolis_hastings(std::make_shared<GaussianRandomWalk>(scale, d), std::move(target));
  }
  throw ConfigError("unknown kernel.type '" + type + "' (expected gauss_ar1 or rw_metropolis)");
}

}  // namespace ams
