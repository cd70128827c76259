#pragma once

// Per-particle kernels of one splitting iteration.
//
// Each kernel has a serial reference and an OpenMP version.  Particle i at
// stage p always draws from stream (seed, p, role, i), so both versions give
// bit-identical systems whatever the thread count.  Tests compare the two;
// bench/ times them.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ams/kernel.hpp"
#include "ams/model.hpp"
#include "ams/quantile.hpp"
#include "ams/rng.hpp"

namespace ams {

enum class Execution { Serial, Parallel };

struct ExploreTelemetry {
  std::size_t proposals = 0;  // base-kernel steps attempted above the level
  std::size_t accepted = 0;   // base-kernel proposals kept (before the level test)
  std::size_t moved = 0;      // steps that changed the state

  friend bool operator==(const ExploreTelemetry&, const ExploreTelemetry&) = default;
};

/// Fills `system` with n prior draws and cached scores (tags untouched).
void sample_prior_system(TaggedParticleSystem& system, const TargetModel& model, std::size_t n,
                         const StreamFactory& streams, Execution exec);

/// Fresh i.i.d. uniform tags for every particle of generation `stage`.
void draw_tags(TaggedParticleSystem& system, const StreamFactory& streams, std::uint32_t stage, Execution exec);

/// n i.i.d. uniform draws (with replacement) from `survivors`; slot j uses
/// its own stream, so the result depends only on (seed, stage).
/// Throws DomainError on an empty survivor set.
std::vector<std::size_t> multinomial_resample(std::span<const std::size_t> survivors, std::size_t n,
                                              const StreamFactory& streams, std::uint32_t stage,
                                              Execution exec = Execution::Serial);

/// New system made of the rows `indices` of `source` (tags reset to 0).
TaggedParticleSystem gather(const TaggedParticleSystem& source, std::span<const std::size_t> indices,
                            Execution exec);

/// `inner_steps` truncated-kernel steps applied to every particle.
ExploreTelemetry explore_serial(TaggedParticleSystem& system, const TruncatedKernel& kernel,
                                std::size_t inner_steps, const StreamFactory& streams, std::uint32_t stage);
ExploreTelemetry explore_parallel(TaggedParticleSystem& system, const TruncatedKernel& kernel,
                                  std::size_t inner_steps, const StreamFactory& streams, std::uint32_t stage);
ExploreTelemetry explore(TaggedParticleSystem& system, const TruncatedKernel& kernel, std::size_t inner_steps,
                         const StreamFactory& streams, std::uint32_t stage, Execution exec);

/// Replaces every particle by an exact draw from eta( . | S >= level).
void idealized_refresh(TaggedParticleSystem& system, const TargetModel& model, double level,
                       const StreamFactory& streams, std::uint32_t stage, Execution exec);

}  // namespace ams
