#include "ams/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ams/error.hpp"

namespace ams {

bool lex_less(ScoreTag a, ScoreTag b) {
  if (std::isnan(a.score) || std::isnan(b.score)) {
    throw InvalidStateError("lex_less: NaN score");
  }
  return a.score < b.score || (a.score == b.score && a.tag < b.tag);
}

std::size_t survivor_count(std::size_t n, double alpha) {
  const double x = static_cast<double>(n) * alpha;
  const double nearest = std::round(x);
  if (std::abs(x - nearest) <= 1e-9 * std::max(1.0, x)) return static_cast<std::size_t>(nearest);
  return static_cast<std::size_t>(std::ceil(x));
}

std::size_t quantile_order_index(std::size_t n, double alpha) {
  const std::size_t above = survivor_count(n, alpha);
  return above >= n ? 0 : n - above;
}

namespace {

void validate(const TaggedParticleSystem& system, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (system.tags.size() != system.scores.size()) throw InvalidStateError("scores and tags differ in length");
  if (quantile_order_index(system.size(), alpha) < 1) throw ConfigError("quantile index underflow");
}

struct IndexLess {
  const TaggedParticleSystem* system;
  bool operator()(std::size_t a, std::size_t b) const { return lex_less(system->key(a), system->key(b)); }
};

}  // namespace

EmpiricalQuantile empirical_quantile(const TaggedParticleSystem& system, double alpha) {
  validate(system, alpha);
  const std::size_t k = quantile_order_index(system.size(), alpha);
  std::vector<std::size_t> order(system.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto nth = order.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(order.begin(), nth, order.end(), IndexLess{&system});
  return {system.scores[*nth], system.tags[*nth], k};
}

EmpiricalQuantile empirical_quantile_sorted(const TaggedParticleSystem& system, double alpha) {
  validate(system, alpha);
  const std::size_t k = quantile_order_index(system.size(), alpha);
  std::vector<std::size_t> order(system.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), IndexLess{&system});
  const std::size_t i = order[k - 1];
  return {system.scores[i], system.tags[i], k};
}

std::vector<std::size_t> strictly_above(const TaggedParticleSystem& system, const EmpiricalQuantile& q) {
  std::vector<std::size_t> out;
  out.reserve(system.size() - std::min(system.size(), q.order_index));
  for (std::size_t i = 0; i < system.size(); ++i) {
    if (lex_less(q.key(), system.key(i))) out.push_back(i);
  }
  return out;
}

std::size_t selection_count_fixed(std::span<const double> scores, double level) {
  return static_cast<std::size_t>(std::count_if(scores.begin(), scores.end(), [level](double s) { return s >= level; }));
}

}  // namespace ams
