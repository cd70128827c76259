#pragma once

// Tie-broken order statistics over (score, tag) pairs.
//
// Every particle carries an auxiliary uniform tag.  Pairs are ordered
// lexicographically, so the empirical (1 - alpha) quantile always leaves
// exactly ceil(N alpha) particles strictly above it, even when clones share
// a score.

#include <cstddef>
#include <span>
#include <vector>

#include "ams/model.hpp"
#include "ams/rng.hpp"

namespace ams {

struct ScoreTag {
  double score;
  double tag;
};

/// a < b iff a.score < b.score, or equal scores and a.tag < b.tag.
/// Throws InvalidStateError on NaN scores.
bool lex_less(ScoreTag a, ScoreTag b);

/// N states with cached scores S(state) and uniform tags.
struct TaggedParticleSystem {
  StateBatch states;
  std::vector<double> scores;
  std::vector<double> tags;

  std::size_t size() const noexcept { return scores.size(); }
  ScoreTag key(std::size_t i) const noexcept { return {scores[i], tags[i]}; }

  friend bool operator==(const TaggedParticleSystem&, const TaggedParticleSystem&) = default;
};

struct EmpiricalQuantile {
  double level;
  double tag;
  std::size_t order_index;  // 1-based rank floor(N(1-alpha))

  ScoreTag key() const noexcept { return {level, tag}; }
};

/// ceil(N alpha), with N alpha snapped to the nearest integer when it is
/// within rounding distance of one (so that 10 * 0.9 counts as 9).
std::size_t survivor_count(std::size_t n, double alpha);

/// floor(N (1 - alpha)) computed as N - survivor_count(N, alpha).
std::size_t quantile_order_index(std::size_t n, double alpha);

/// The floor(N(1-alpha))-th smallest pair under lex_less, found by
/// selection (expected O(N)).  Throws ConfigError("quantile index
/// underflow") when floor(N(1-alpha)) < 1.
EmpiricalQuantile empirical_quantile(const TaggedParticleSystem& system, double alpha);

/// Reference implementation through a full sort; bit-identical result.
EmpiricalQuantile empirical_quantile_sorted(const TaggedParticleSystem& system, double alpha);

/// Indices strictly above q in the tagged order, in increasing index order.
std::vector<std::size_t> strictly_above(const TaggedParticleSystem& system, const EmpiricalQuantile& q);

/// #{i : scores[i] >= level}; the fixed-levels selection count (no tags).
std::size_t selection_count_fixed(std::span<const double> scores, double level);

}  // namespace ams
