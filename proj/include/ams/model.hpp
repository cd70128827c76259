#pragma once

// Target distributions, score functions and their analytic tail oracles.

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ams/rng.hpp"

namespace ams {

using StateView = std::span<const double>;
using StateSpan = std::span<double>;

/// N states of fixed dimension in one contiguous buffer.
class StateBatch {
 public:
  StateBatch() = default;
  StateBatch(std::size_t count, std::size_t dimension)
      : dimension_(dimension), values_(count * dimension, 0.0) {}

  std::size_t size() const noexcept { return dimension_ == 0 ? 0 : values_.size() / dimension_; }
  std::size_t dimension() const noexcept { return dimension_; }

  StateView operator[](std::size_t i) const noexcept { return {values_.data() + i * dimension_, dimension_}; }
  StateSpan operator[](std::size_t i) noexcept { return {values_.data() + i * dimension_, dimension_}; }

  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  friend bool operator==(const StateBatch&, const StateBatch&) = default;

 private:
  std::size_t dimension_ = 0;
  std::vector<double> values_;
};

/// Closed-form knowledge about Y = S(X): tail function, its inverse, the
/// density f_Y, and (optionally) exact draws from eta conditioned on S >= L.
class AnalyticOracle {
 public:
  virtual ~AnalyticOracle() = default;

  /// Open interval (lo, hi) of the score.
  virtual std::pair<double, double> support() const = 0;

  /// P(S(X) >= level).  Throws DomainError outside the support closure.
  virtual double tail_probability(double level) const = 0;

  /// Level L with tail_probability(L) = p, for p in (0,1).
  virtual double level_for_probability(double p) const = 0;

  /// Density of Y at `level`.
  virtual double score_density(double level) const = 0;

  virtual bool has_conditional_sampler() const { return false; }

  /// Exact draw from eta( . | S >= level), written to `out`.
  virtual void conditional_sample(double level, Philox4x32& rng, StateSpan out) const;
};

/// A sampleable law eta on R^d with score S.
///
/// log_density is only needed up to an additive constant and must return
/// -infinity outside the support.  User models must make Y = S(X) have a
/// continuous, strictly positive density around every level used.
class TargetModel {
 public:
  virtual ~TargetModel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual double log_density(StateView x) const = 0;
  virtual double score(StateView x) const = 0;
  virtual void sample(Philox4x32& rng, StateSpan out) const = 0;

  /// nullptr when no closed form is known.
  virtual const AnalyticOracle* oracle() const { return nullptr; }
};

/// eta = Exponential(1) on R, S(x) = x.
class ExpLine final : public TargetModel, public AnalyticOracle {
 public:
  std::string name() const override { return "exp_line"; }
  std::size_t dimension() const override { return 1; }
  double log_density(StateView x) const override;
  double score(StateView x) const override { return x[0]; }
  void sample(Philox4x32& rng, StateSpan out) const override;
  const AnalyticOracle* oracle() const override { return this; }

  std::pair<double, double> support() const override;
  double tail_probability(double level) const override;
  double level_for_probability(double p) const override;
  double score_density(double level) const override;
  bool has_conditional_sampler() const override { return true; }
  void conditional_sample(double level, Philox4x32& rng, StateSpan out) const override;
};

/// Zero-bit watermarking detector: eta = N(0, I_d), S(x) = x_1 / |x|.
///
/// For d = 2, Y has density 1/(pi sqrt(1-s^2)) on (-1,1), so the tail is
/// arccos(L)/pi.  For d > 2 the tail comes from Y^2 ~ Beta(1/2, (d-1)/2)
/// with symmetric sign.
class GaussWatermark final : public TargetModel, public AnalyticOracle {
 public:
  explicit GaussWatermark(std::size_t dimension);

  std::string name() const override { return "gauss_watermark"; }
  std::size_t dimension() const override { return dimension_; }
  double log_density(StateView x) const override;
  double score(StateView x) const override;
  void sample(Philox4x32& rng, StateSpan out) const override;
  const AnalyticOracle* oracle() const override { return this; }

  std::pair<double, double> support() const override { return {-1.0, 1.0}; }
  double tail_probability(double level) const override;
  double level_for_probability(double p) const override;
  double score_density(double level) const override;
  bool has_conditional_sampler() const override { return true; }
  void conditional_sample(double level, Philox4x32& rng, StateSpan out) const override;

 private:
  std::size_t dimension_;
  double log_density_constant_;  // log of the normalizer of f_Y for d > 2
};

/// Builtin model by CLI identifier ("exp_line", "gauss_watermark").
std::shared_ptr<const TargetModel> make_builtin_model(std::string_view name, std::size_t dimension);

/// n i.i.d. draws from eta taken sequentially from `rng`.  Throws
/// InvalidStateError if any draw has a non-finite score or log-density.
StateBatch sample_prior(const TargetModel& model, std::size_t n, Philox4x32& rng);

/// Score of one state, rejecting NaN/infinite values.
double checked_score(const TargetModel& model, StateView x);

double tail_probability(const AnalyticOracle& oracle, double level);
double level_for_probability(const AnalyticOracle& oracle, double p);

/// Exact draw from eta( . | S >= level) ("idealized" exploration).
std::vector<double> idealized_conditional_sample(const TargetModel& model, double level, Philox4x32& rng);

}  // namespace ams
