#pragma once

// Replicated experiments: many independent splitting runs, their summary
// statistics and the adaptive-versus-fixed comparison.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ams/kernel.hpp"
#include "ams/model.hpp"
#include "ams/splitting.hpp"
#include "ams/stats.hpp"

namespace ams {

struct ModelSpec {
  std::string name = "exp_line";
  std::size_t dimension = 1;
};

struct KernelSpec {
  std::string type;    // empty: none (idealized runs)
  double scale = 0.0;  // sigma for gauss_ar1, step for rw_metropolis
};

struct ExperimentSpec {
  ModelSpec model;
  KernelSpec kernel;
  SplittingConfig run;
  /// When set, target_level is derived from the oracle.
  std::optional<double> target_probability;
  /// Fixed mode: place levels at F^{-1}(1 - alpha^{p+1}) from the oracle.
  bool optimal_levels = false;
  std::size_t replications = 1;
  std::uint64_t master_seed = 0;
  int threads = 0;  // 0: OpenMP default
  /// sigma^2 used for the CLT intervals; the empirical value when unset.
  std::optional<double> reference_sigma_sq;
  double confidence = 0.95;
  bool timing = false;
  bool level_history = true;
};

/// An ExperimentSpec with its model, kernel, target level and fixed levels
/// resolved.
struct Experiment {
  ExperimentSpec spec;
  std::shared_ptr<const TargetModel> model;
  std::optional<ReversibleKernel> kernel;
  /// Oracle value of P(S >= L*), NaN without an oracle.
  double probability;
};

Experiment resolve(const ExperimentSpec& spec);

struct ReplicationRecord {
  std::size_t run_id = 0;
  std::uint64_t seed = 0;
  std::size_t n_hat = 0;
  double p_hat = 0.0;
  double e_hat = 0.0;
  double c_hat = 0.0;  // NaN when undefined
  bool extinct = false;
  bool failed = false;  // non-termination
  double wall_ms = 0.0;
  std::vector<double> levels;
};

struct ReplicationSummary {
  std::size_t replications = 0;
  std::size_t completed = 0;  // replications entering the statistics
  std::size_t failures = 0;
  std::size_t extinctions = 0;
  std::size_t n_particles = 0;
  double probability = 0.0;  // oracle P, NaN when unknown
  double mean = 0.0;
  double variance = 0.0;
  double rel_bias = 0.0;
  double n_times_relvar = 0.0;
  double n_times_relvar_se = 0.0;
  double mean_n_hat = 0.0;
  /// (n-1)(1-alpha)/alpha + (1-r)/r with n = floor(log P / log alpha).
  std::optional<double> incompressible_bound;
  double sigma_sq_used = 0.0;
  std::optional<double> coverage;
  std::optional<double> normality_stat;
  std::optional<double> normality_p;
};

struct ReplicationResult {
  std::vector<ReplicationRecord> records;
  ReplicationSummary summary;
};

/// Replication j uses seed replication_seed(master_seed, j) and runs
/// serially inside; replications run concurrently.  Output does not depend
/// on the worker count.
ReplicationResult run_replications(const Experiment& experiment);

/// Statistics over the non-failed records; a pure function of the records.
ReplicationSummary summarize(const Experiment& experiment, std::span<const ReplicationRecord> records);

/// Anderson-Darling on standardized values.  Throws InsufficientSampleError
/// below 50 values.
stats::NormalityResult normality_check(std::span<const double> values);

struct ComparisonReport {
  std::vector<double> fixed_levels;
  ReplicationResult adaptive;
  ReplicationResult fixed;
  double ratio = 0.0;  // n_times_relvar(adaptive) / n_times_relvar(fixed)
  double f_statistic = 0.0;
  double p_value = 0.0;
  bool rejected = false;  // at the 1% level
};

/// Runs the adaptive experiment and its fixed-level counterpart with oracle
/// levels, the same N, kernel and master seed.
ComparisonReport compare_adaptive_fixed(const ExperimentSpec& spec);

}  // namespace ams
