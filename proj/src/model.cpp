#include "ams/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <boost/math/special_functions/beta.hpp>

#include "ams/error.hpp"

namespace ams {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("probability must lie in (0,1), got " + std::to_string(p));
  }
}

}  // namespace

void AnalyticOracle::conditional_sample(double, Philox4x32&, StateSpan) const {
  throw UnsupportedError("model does not provide an exact conditional sampler");
}

// ---------------------------------------------------------------------------
// ExpLine

double ExpLine::log_density(StateView x) const { return x[0] >= 0.0 ? -x[0] : -kInf; }

void ExpLine::sample(Philox4x32& rng, StateSpan out) const {
  std::exponential_distribution<double> exp1(1.0);
  out[0] = exp1(rng);
}

std::pair<double, double> ExpLine::support() const { return {0.0, kInf}; }

double ExpLine::tail_probability(double level) const {
  if (!(level >= 0.0)) {
    throw DomainError("exp_line: level must be >= 0, got " + std::to_string(level));
  }
  return std::exp(-level);
}

double ExpLine::level_for_probability(double p) const {
  require_probability(p);
  return -std::log(p);
}

double ExpLine::score_density(double level) const { return level >= 0.0 ? std::exp(-level) : 0.0; }

void ExpLine::conditional_sample(double level, Philox4x32& rng, StateSpan out) const {
  std::exponential_distribution<double> exp1(1.0);
  // memorylessness: (X | X >= L) = L + Exp(1)
  out[0] = std::max(level, 0.0) + exp1(rng);
}

// ---------------------------------------------------------------------------
// GaussWatermark

GaussWatermark::GaussWatermark(std::size_t dimension) : dimension_(dimension) {
  if (dimension < 2) {
    throw ConfigError("gauss_watermark: dimension must be >= 2");
  }
  const double b = 0.5 * static_cast<double>(dimension - 1);
  log_density_constant_ = -std::log(boost::math::beta(0.5, b));
}

double GaussWatermark::log_density(StateView x) const {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return -0.5 * sq;
}

double GaussWatermark::score(StateView x) const {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return x[0] / std::sqrt(sq);
}

void GaussWatermark::sample(Philox4x32& rng, StateSpan out) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : out) v = normal(rng);
}

double GaussWatermark::tail_probability(double level) const {
  if (!(level >= -1.0 && level <= 1.0)) {
    throw DomainError("gauss_watermark: level must lie in [-1,1], got " + std::to_string(level));
  }
  if (dimension_ == 2) {
    // arccos(L)/pi, written with asin for accuracy near |L| = 1
    if (level >= 0.0) return 2.0 * std::asin(std::sqrt(0.5 * (1.0 - level))) / std::numbers::pi;
    return 1.0 - 2.0 * std::asin(std::sqrt(0.5 * (1.0 + level))) / std::numbers::pi;
  }
  const double a = 0.5 * static_cast<double>(dimension_ - 1);
  const double one_minus_sq = (1.0 - level) * (1.0 + level);
  const double upper = 0.5 * boost::math::ibeta(a, 0.5, one_minus_sq);  // P(Y >= |L|)
  return level >= 0.0 ? upper : 1.0 - upper;
}

double GaussWatermark::level_for_probability(double p) const {
  require_probability(p);
  if (dimension_ == 2) {
    return std::cos(std::numbers::pi * p);
  }
  const double a = 0.5 * static_cast<double>(dimension_ - 1);
  if (p <= 0.5) {
    return std::sqrt(1.0 - boost::math::ibeta_inv(a, 0.5, 2.0 * p));
  }
  return -std::sqrt(1.0 - boost::math::ibeta_inv(a, 0.5, 2.0 * (1.0 - p)));
}

double GaussWatermark::score_density(double level) const {
  if (!(level > -1.0 && level < 1.0)) return 0.0;
  const double one_minus_sq = (1.0 - level) * (1.0 + level);
  if (dimension_ == 2) return 1.0 / (std::numbers::pi * std::sqrt(one_minus_sq));
  return std::exp(log_density_constant_ + 0.5 * (static_cast<double>(dimension_) - 3.0) * std::log(one_minus_sq));
}

void GaussWatermark::conditional_sample(double level, Philox4x32& rng, StateSpan out) const {
  const double clamped = std::clamp(level, -1.0, 1.0);
  const double tail = tail_probability(clamped);
  if (tail <= 0.0) {
    throw DomainError("gauss_watermark: conditioning event has probability 0");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  // Y from the inverse tail, direction orthogonal to e1 uniform, radius chi_d.
  for (;;) {
    const double u = rng.uniform_open();
    const double y = tail >= 1.0 ? level_for_probability(u) : level_for_probability(u * tail);
    double radius_sq = 0.0;
    double ortho_sq = 0.0;
    for (std::size_t k = 0; k < dimension_; ++k) {
      const double g = normal(rng);
      radius_sq += g * g;
      if (k > 0) {
        out[k] = g;
        ortho_sq += g * g;
      }
    }
    if (ortho_sq == 0.0) continue;
    const double radius = std::sqrt(radius_sq);
    const double ortho_scale = radius * std::sqrt((1.0 - y) * (1.0 + y) / ortho_sq);
    out[0] = radius * y;
    for (std::size_t k = 1; k < dimension_; ++k) out[k] *= ortho_scale;
    // rounding in S(x) can land a hair below the level; redraw
    if (score(out) >= level) return;
  }
}

// ---------------------------------------------------------------------------

std::shared_ptr<const TargetModel> make_builtin_model(std::string_view name, std::size_t dimension) {
  if (name == "exp_line") {
    if (dimension != 1) throw ConfigError("exp_line: dimension must be 1");
    return std::make_shared<ExpLine>();
  }
  if (name == "gauss_watermark") {
    return std::make_shared<GaussWatermark>(dimension);
  }
  throw ConfigError("unknown model '" + std::string(name) + "' (expected exp_line or gauss_watermark)");
}

double checked_score(const TargetModel& model, StateView x) {
  const double s = model.score(x);
  if (!std::isfinite(s)) {
    throw InvalidStateError(model.name() + ": score is not finite (" + std::to_string(s) + ")");
  }
  return s;
}

StateBatch sample_prior(const TargetModel& model, std::size_t n, Philox4x32& rng) {
  StateBatch batch(n, model.dimension());
  for (std::size_t i = 0; i < n; ++i) {
    model.sample(rng, batch[i]);
    checked_score(model, batch[i]);
    if (!std::isfinite(model.log_density(batch[i]))) {
      throw InvalidStateError(model.name() + ": sampler produced a state with zero density");
    }
  }
  return batch;
}

double tail_probability(const AnalyticOracle& oracle, double level) { return oracle.tail_probability(level); }

double level_for_probability(const AnalyticOracle& oracle, double p) { return oracle.level_for_probability(p); }

std::vector<double> idealized_conditional_sample(const TargetModel& model, double level, Philox4x32& rng) {
  const AnalyticOracle* oracle = model.oracle();
  if (oracle == nullptr || !oracle->has_conditional_sampler()) {
    throw UnsupportedError(model.name() + ": no exact conditional sampler");
  }
  std::vector<double> x(model.dimension());
  oracle->conditional_sample(level, rng, x);
  return x;
}

}  // namespace ams
