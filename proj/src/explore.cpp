#include "ams/explore.hpp"

#include <algorithm>
#include <exception>
#include <limits>
#include <mutex>
#include <random>

#include "ams/error.hpp"

namespace ams {

namespace {

// Exceptions may not leave an OpenMP region.  Keep the one raised by the
// lowest particle index so the error reported matches the serial path.
class FirstError {
 public:
  void capture(std::size_t index) {
    std::lock_guard lock(mutex_);
    if (index < index_) {
      index_ = index;
      error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mutex_;
  std::size_t index_ = std::numeric_limits<std::size_t>::max();
  std::exception_ptr error_;
};

inline std::uint32_t index32(std::size_t i) { return static_cast<std::uint32_t>(i); }

inline void prior_one(TaggedParticleSystem& system, const TargetModel& model, const StreamFactory& streams,
                      std::size_t i) {
  auto rng = streams.stream(0, StreamRole::Prior, index32(i));
  auto x = system.states[i];
  model.sample(rng, x);
  system.scores[i] = checked_score(model, x);
}

inline void explore_one(TaggedParticleSystem& system, const TruncatedKernel& kernel, std::size_t inner_steps,
                        const StreamFactory& streams, std::uint32_t stage, std::size_t i, std::vector<double>& buf,
                        ExploreTelemetry& t) {
  auto rng = streams.stream(stage, StreamRole::Explore, index32(i));
  auto x = system.states[i];
  double score = system.scores[i];
  for (std::size_t s = 0; s < inner_steps; ++s) {
    double next_score;
    const auto outcome = kernel.step(x, score, rng, buf, next_score);
    if (outcome == TruncatedOutcome::Frozen) break;
    ++t.proposals;
    if (outcome != TruncatedOutcome::Rejected) ++t.accepted;
    if (outcome == TruncatedOutcome::Moved) {
      ++t.moved;
      std::copy(buf.begin(), buf.end(), x.begin());
      score = next_score;
    }
  }
  system.scores[i] = score;
}

inline void refresh_one(TaggedParticleSystem& system, const AnalyticOracle& oracle, const TargetModel& model,
                        double level, const StreamFactory& streams, std::uint32_t stage, std::size_t i) {
  auto rng = streams.stream(stage, StreamRole::Explore, index32(i));
  auto x = system.states[i];
  oracle.conditional_sample(level, rng, x);
  system.scores[i] = checked_score(model, x);
}

}  // namespace

void sample_prior_system(TaggedParticleSystem& system, const TargetModel& model, std::size_t n,
                         const StreamFactory& streams, Execution exec) {
  system.states = StateBatch(n, model.dimension());
  system.scores.assign(n, 0.0);
  system.tags.assign(n, 0.0);
  if (exec == Execution::Serial) {
    for (std::size_t i = 0; i < n; ++i) prior_one(system, model, streams, i);
    return;
  }
  FirstError error;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      prior_one(system, model, streams, static_cast<std::size_t>(i));
    } catch (...) {
      error.capture(static_cast<std::size_t>(i));
    }
  }
  error.rethrow();
}

void draw_tags(TaggedParticleSystem& system, const StreamFactory& streams, std::uint32_t stage, Execution exec) {
  const auto count = static_cast<std::ptrdiff_t>(system.size());
  system.tags.resize(system.size());
#pragma omp parallel for schedule(static) if (exec == Execution::Parallel)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    auto rng = streams.stream(stage, StreamRole::Tag, index32(static_cast<std::size_t>(i)));
    system.tags[static_cast<std::size_t>(i)] = rng.uniform_open();
  }
}

std::vector<std::size_t> multinomial_resample(std::span<const std::size_t> survivors, std::size_t n,
                                              const StreamFactory& streams, std::uint32_t stage, Execution exec) {
  if (survivors.empty()) throw DomainError("multinomial resampling from an empty survivor set (extinction)");
  std::vector<std::size_t> picks(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (exec == Execution::Parallel)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    auto rng = streams.stream(stage, StreamRole::Resample, index32(static_cast<std::size_t>(j)));
    std::uniform_int_distribution<std::size_t> pick(0, survivors.size() - 1);
    picks[static_cast<std::size_t>(j)] = survivors[pick(rng)];
  }
  return picks;
}

TaggedParticleSystem gather(const TaggedParticleSystem& source, std::span<const std::size_t> indices,
                            Execution exec) {
  const std::size_t d = source.states.dimension();
  TaggedParticleSystem out;
  out.states = StateBatch(indices.size(), d);
  out.scores.resize(indices.size());
  out.tags.assign(indices.size(), 0.0);
  const auto count = static_cast<std::ptrdiff_t>(indices.size());
#pragma omp parallel for schedule(static) if (exec == Execution::Parallel)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    const auto dst = static_cast<std::size_t>(j);
    const auto row = source.states[indices[dst]];
    std::copy(row.begin(), row.end(), out.states[dst].begin());
    out.scores[dst] = source.scores[indices[dst]];
  }
  return out;
}

ExploreTelemetry explore_serial(TaggedParticleSystem& system, const TruncatedKernel& kernel,
                                std::size_t inner_steps, const StreamFactory& streams, std::uint32_t stage) {
  ExploreTelemetry total;
  std::vector<double> buf(system.states.dimension());
  for (std::size_t i = 0; i < system.size(); ++i) explore_one(system, kernel, inner_steps, streams, stage, i, buf, total);
  return total;
}

ExploreTelemetry explore_parallel(TaggedParticleSystem& system, const TruncatedKernel& kernel,
                                  std::size_t inner_steps, const StreamFactory& streams, std::uint32_t stage) {
  std::size_t proposals = 0, accepted = 0, moved = 0;
  FirstError error;
  const auto count = static_cast<std::ptrdiff_t>(system.size());
#pragma omp parallel reduction(+ : proposals, accepted, moved)
  {
    std::vector<double> buf(system.states.dimension());
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
      ExploreTelemetry local;
      try {
        explore_one(system, kernel, inner_steps, streams, stage, static_cast<std::size_t>(i), buf, local);
      } catch (...) {
        error.capture(static_cast<std::size_t>(i));
      }
      proposals += local.proposals;
      accepted += local.accepted;
      moved += local.moved;
    }
  }
  error.rethrow();
  return {proposals, accepted, moved};
}

ExploreTelemetry explore(TaggedParticleSystem& system, const TruncatedKernel& kernel, std::size_t inner_steps,
                         const StreamFactory& streams, std::uint32_t stage, Execution exec) {
  return exec == Execution::Serial ? explore_serial(system, kernel, inner_steps, streams, stage)
                                   : explore_parallel(system, kernel, inner_steps, streams, stage);
}

void idealized_refresh(TaggedParticleSystem& system, const TargetModel& model, double level,
                       const StreamFactory& streams, std::uint32_t stage, Execution exec) {
  const AnalyticOracle* oracle = model.oracle();
  if (oracle == nullptr || !oracle->has_conditional_sampler()) {
    throw UnsupportedError(model.name() + ": idealized mode needs an exact conditional sampler");
  }
  if (exec == Execution::Serial) {
    for (std::size_t i = 0; i < system.size(); ++i) refresh_one(system, *oracle, model, level, streams, stage, i);
    return;
  }
  FirstError error;
  const auto count = static_cast<std::ptrdiff_t>(system.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      refresh_one(system, *oracle, model, level, streams, stage, static_cast<std::size_t>(i));
    } catch (...) {
      error.capture(static_cast<std::size_t>(i));
    }
  }
  error.rethrow();
}

}  // namespace ams
