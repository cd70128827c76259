#pragma once

// Adaptive and fixed-levels multilevel splitting.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "ams/explore.hpp"
#include "ams/kernel.hpp"
#include "ams/model.hpp"
#include "ams/quantile.hpp"

namespace ams {

enum class SplittingMode { Adaptive, Fixed };

struct SplittingConfig {
  SplittingMode mode = SplittingMode::Adaptive;
  /// Replace the exploration kernel by exact conditional draws.
  bool idealized = false;
  std::size_t n_particles = 1000;
  double alpha = 0.75;
  /// Optional per-stage success probabilities alpha_p (adaptive mode); the
  /// last entry is reused beyond the end of the list.
  std::vector<double> alpha_schedule;
  double target_level = 0.0;
  /// Fixed mode: ascending L_0 < ... < L_{n-1} < target_level.
  std::vector<double> levels;
  std::size_t inner_steps = 1;
  /// 0 selects 10 * ceil(log P / log alpha) when an oracle is available.
  std::size_t max_iterations = 0;
  std::uint64_t seed = 0;
  bool keep_final_system = true;

  double alpha_at(std::size_t stage) const;
};

/// Throws ConfigError naming the offending field.
void validate(const SplittingConfig& config);

std::size_t default_max_iterations(double target_probability, double alpha);

/// n = floor(log P / log alpha) levels L_p = F_Y^{-1}(1 - alpha^{p+1}).
std::vector<double> optimal_fixed_levels(const AnalyticOracle& oracle, double target_level, double alpha);

/// f in E = E[f(X) 1{S(X) >= L*}]; an empty function means f == 1.
using TestFunction = std::function<double(StateView)>;

struct StageTelemetry {
  double level;           // L^N_p (adaptive) or L_p (fixed)
  std::size_t survivors;  // particles resampled from
  ExploreTelemetry explore;
};

struct Estimates {
  double e_hat = 0.0;
  double p_hat = 0.0;
  double c_hat = std::numeric_limits<double>::quiet_NaN();
  bool c_defined = false;
  std::size_t exceedances = 0;  // final particles with S >= L*
};

struct RunResult {
  SplittingMode mode = SplittingMode::Adaptive;
  bool idealized = false;
  /// Completed resample/explore rounds (adaptive); number of levels (fixed).
  std::size_t n_hat = 0;
  /// prod alpha_p over completed rounds (adaptive) or gamma_n^N(1) (fixed).
  double weight = 1.0;
  double target_level = 0.0;
  Estimates estimates;
  bool extinct = false;
  /// Adaptive: L^N_0 .. L^N_{n_hat}, the last entry being the first >= L*.
  /// Fixed: L_0 .. L_{n-1}.
  std::vector<double> level_history;
  /// Fixed mode: selection proportions eta_p^N(G_p).
  std::vector<double> selection_proportions;
  std::vector<StageTelemetry> stages;
  TaggedParticleSystem final_system;
};

/// E_hat = weight * mean f 1{S >= L*}, P_hat = weight * mean 1{S >= L*},
/// C_hat = their ratio when some final particle reaches L*.
Estimates estimate_all(const TaggedParticleSystem& final_system, double weight, double target_level,
                       const TestFunction& f);
Estimates estimate_all(const RunResult& result, const TestFunction& f);

/// `kernel` may be null in idealized mode.
RunResult run_adaptive(const SplittingConfig& config, const TargetModel& model, const ReversibleKernel* kernel,
                       const TestFunction& f = {}, Execution exec = Execution::Serial);

RunResult run_fixed(const SplittingConfig& config, const TargetModel& model, const ReversibleKernel* kernel,
                    const TestFunction& f = {}, Execution exec = Execution::Serial);

RunResult run_splitting(const SplittingConfig& config, const TargetModel& model, const ReversibleKernel* kernel,
                        const TestFunction& f = {}, Execution exec = Execution::Serial);

}  // namespace ams
