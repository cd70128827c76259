#pragma once

// eta-reversible exploration kernels and their level-truncated versions.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ams/model.hpp"
#include "ams/rng.hpp"

namespace ams {

/// Proposal k(x, x') dx' with a tractable density.
class ProposalKernel {
 public:
  virtual ~ProposalKernel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  /// log k(from, to); -infinity where the density vanishes.
  virtual double log_density(StateView from, StateView to) const = 0;
  virtual void sample(StateView from, Philox4x32& rng, StateSpan out) const = 0;

  double density(StateView from, StateView to) const;
};

/// Gaussian autoregressive move x' = x/sqrt(1+s^2) + sqrt(s^2/(1+s^2)) Z,
/// reversible for the standard Gaussian without any correction.
class GaussAR1Proposal final : public ProposalKernel {
 public:
  GaussAR1Proposal(double sigma, std::size_t dimension);

  std::string name() const override { return "gauss_ar1"; }
  std::size_t dimension() const override { return dimension_; }
  double log_density(StateView from, StateView to) const override;
  void sample(StateView from, Philox4x32& rng, StateSpan out) const override;

  double sigma() const noexcept { return sigma_; }

 private:
  double sigma_;
  std::size_t dimension_;
  double contraction_;  // 1/sqrt(1+s^2)
  double noise_sd_;     // sqrt(s^2/(1+s^2))
};

/// Symmetric Gaussian random walk x' = x + step Z.
class GaussianRandomWalk final : public ProposalKernel {
 public:
  GaussianRandomWalk(double step, std::size_t dimension);

  std::string name() const override { return "rw_metropolis"; }
  std::size_t dimension() const override { return dimension_; }
  double log_density(StateView from, StateView to) const override;
  void sample(StateView from, Philox4x32& rng, StateSpan out) const override;

 private:
  double step_;
  std::size_t dimension_;
};

/// An eta-reversible kernel K(x,dx') = k^a(x,x')dx' + r^a(x) delta_x(dx').
///
/// MetropolisHastings corrects the proposal with the acceptance ratio a;
/// Direct uses a proposal that is already eta-reversible (a == 1).  Both
/// consume exactly the same random draws per step, so on a reversible
/// proposal they produce identical trajectories from identical streams.
class ReversibleKernel {
 public:
  enum class Variant { MetropolisHastings, Direct };

  static ReversibleKernel metropolis_hastings(std::shared_ptr<const ProposalKernel> proposal,
                                              std::shared_ptr<const TargetModel> target);
  static ReversibleKernel direct(std::shared_ptr<const ProposalKernel> proposal,
                                 std::shared_ptr<const TargetModel> target);

  Variant variant() const noexcept { return variant_; }
  const ProposalKernel& proposal() const noexcept { return *proposal_; }
  const TargetModel& target() const noexcept { return *target_; }

  /// a(x, x') = min{eta(x')k(x',x) / (eta(x)k(x,x')), 1}; 1 when the
  /// denominator vanishes.  Direct kernels return 1.
  double acceptance_ratio(StateView x, StateView y) const;

  /// log of the off-diagonal density k^a(x,x') = a(x,x') k(x,x').
  double log_off_diagonal(StateView x, StateView y) const;

  /// One draw from K(x, .) into `out`; returns whether the proposal was kept.
  bool step(StateView x, Philox4x32& rng, StateSpan out) const;

 private:
  ReversibleKernel(Variant v, std::shared_ptr<const ProposalKernel> p, std::shared_ptr<const TargetModel> t);

  Variant variant_;
  std::shared_ptr<const ProposalKernel> proposal_;
  std::shared_ptr<const TargetModel> target_;
};

/// Metropolis-Hastings acceptance ratio (free-function form).
double acceptance_ratio(const ReversibleKernel& kernel, StateView x, StateView y);

struct MhStep {
  std::vector<double> state;
  bool accepted;
};
MhStep mh_step(const ReversibleKernel& kernel, StateView x, Philox4x32& rng);

/// eta(x)k^a(x,x') - eta(x')k^a(x',x) with unnormalized eta.
double detailed_balance_residual(const ReversibleKernel& kernel, StateView x, StateView y);

/// |residual| divided by the larger of the two fluxes (0 when both vanish).
double relative_detailed_balance_residual(const ReversibleKernel& kernel, StateView x, StateView y);

/// What happened during one truncated step.
enum class TruncatedOutcome {
  Frozen,     // input below the level: returned unchanged
  Rejected,   // base kernel kept x
  Truncated,  // base kernel moved below the level: x kept
  Moved,
};

/// M_L(x, dx') = K(x,dx')1{S(x') >= L} + K(x, {S < L}) delta_x(dx') for
/// S(x) >= L, and delta_x otherwise.  One step runs a full base-kernel step
/// and then applies the level test to its output.
class TruncatedKernel {
 public:
  TruncatedKernel(ReversibleKernel base, double level) : base_(std::move(base)), level_(level) {}

  double level() const noexcept { return level_; }
  const ReversibleKernel& base() const noexcept { return base_; }

  /// `score_in` must equal S(x); the score of the returned state is written
  /// to `score_out`.  `out` may not alias `x`.
  TruncatedOutcome step(StateView x, double score_in, Philox4x32& rng, StateSpan out, double& score_out) const;

 private:
  ReversibleKernel base_;
  double level_;
};

std::vector<double> truncated_step(const TruncatedKernel& kernel, StateView x, Philox4x32& rng);

/// Advances one state in place by one step of some Markov kernel.
using StepFunction = std::function<void(std::vector<double>& state, Philox4x32& rng)>;

/// Starts `n_particles` exact conditional draws above the kernel level,
/// applies `n_steps` steps to each, and returns the two-sample Kolmogorov
/// distance between initial and final score samples.
double invariance_check(const TruncatedKernel& kernel, const AnalyticOracle& oracle, std::size_t n_steps,
                        std::size_t n_particles, Philox4x32& rng);

/// Same check for an arbitrary stepping rule (used for negative controls).
double invariance_check(const TargetModel& model, double level, const StepFunction& stepper,
                        std::size_t n_steps, std::size_t n_particles, Philox4x32& rng);

/// Kernel factory by CLI identifier: "gauss_ar1" (Direct) or
/// "rw_metropolis" (MH around a symmetric random walk).
ReversibleKernel make_builtin_kernel(const std::string& type, double scale,
                                     std::shared_ptr<const TargetModel> target);

}  // namespace ams
