#include "ams/splitting.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ams/error.hpp"

namespace ams {

double SplittingConfig::alpha_at(std::size_t stage) const {
  if (alpha_schedule.empty()) return alpha;
  return alpha_schedule[std::min(stage, alpha_schedule.size() - 1)];
}

void validate(const SplittingConfig& config) {
  auto check_alpha = [&](double a, const char* key) {
    if (!(a > 0.0 && a < 1.0)) throw ConfigError(std::string(key) + " must lie in (0,1)");
    if (quantile_order_index(config.n_particles, a) < 1 && config.mode == SplittingMode::Adaptive) {
      throw ConfigError("quantile index underflow: n_particles * (1 - alpha) < 1");
    }
  };
  if (config.n_particles < 1) throw ConfigError("n_particles must be >= 1");
  if (config.n_particles > std::numeric_limits<std::uint32_t>::max()) {
    throw ConfigError("n_particles exceeds the stream index range");
  }
  check_alpha(config.alpha, "alpha");
  for (double a : config.alpha_schedule) check_alpha(a, "alpha_schedule entry");
  if (!std::isfinite(config.target_level)) throw ConfigError("target_level must be finite");
  if (config.mode == SplittingMode::Fixed) {
    for (std::size_t p = 0; p < config.levels.size(); ++p) {
      if (!std::isfinite(config.levels[p])) throw ConfigError("levels must be finite");
      if (p > 0 && !(config.levels[p] > config.levels[p - 1])) {
        throw ConfigError("levels must be strictly increasing");
      }
    }
    if (!config.levels.empty() && !(config.levels.back() < config.target_level)) {
      throw ConfigError("the last fixed level must lie below target_level");
    }
  }
}

std::size_t default_max_iterations(double target_probability, double alpha) {
  if (!(target_probability > 0.0 && target_probability < 1.0)) return 1000;
  const double rounds = std::ceil(std::log(target_probability) / std::log(alpha));
  return 10 * static_cast<std::size_t>(std::max(1.0, rounds));
}

std::vector<double> optimal_fixed_levels(const AnalyticOracle& oracle, double target_level, double alpha) {
  const double p = oracle.tail_probability(target_level);
  if (!(p > 0.0)) throw DomainError("target level has zero probability");
  std::vector<double> levels;
  if (p >= 1.0) return levels;
  const auto n = static_cast<std::size_t>(std::floor(std::log(p) / std::log(alpha)));
  for (std::size_t q = 0; q < n; ++q) {
    levels.push_back(oracle.level_for_probability(std::pow(alpha, static_cast<double>(q + 1))));
  }
  // guard against pow rounding when P sits exactly on alpha^n
  while (!levels.empty() && !(levels.back() < target_level)) levels.pop_back();
  return levels;
}

Estimates estimate_all(const TaggedParticleSystem& final_system, double weight, double target_level,
                       const TestFunction& f) {
  Estimates e;
  double f_sum = 0.0;
  for (std::size_t i = 0; i < final_system.size(); ++i) {
    if (final_system.scores[i] >= target_level) {
      ++e.exceedances;
      f_sum += f ? f(final_system.states[i]) : 1.0;
    }
  }
  const double n = static_cast<double>(final_system.size());
  if (n == 0) return e;
  e.p_hat = weight * static_cast<double>(e.exceedances) / n;
  e.e_hat = weight * f_sum / n;
  if (e.exceedances > 0) {
    e.c_defined = true;
    e.c_hat = f_sum / static_cast<double>(e.exceedances);
  }
  return e;
}

Estimates estimate_all(const RunResult& result, const TestFunction& f) {
  return estimate_all(result.final_system, result.weight, result.target_level, f);
}

namespace {

std::size_t resolve_max_iterations(const SplittingConfig& config, const TargetModel& model) {
  if (config.max_iterations > 0) return config.max_iterations;
  if (const AnalyticOracle* oracle = model.oracle()) {
    const auto [lo, hi] = oracle->support();
    if (config.target_level >= lo && config.target_level <= hi) {
      return default_max_iterations(oracle->tail_probability(config.target_level), config.alpha);
    }
  }
  return 1000;
}

void require_kernel(const SplittingConfig& config, const ReversibleKernel* kernel) {
  if (!config.idealized && kernel == nullptr) {
    throw ConfigError("non-idealized splitting needs an exploration kernel");
  }
}

void move_above(TaggedParticleSystem& system, const SplittingConfig& config, const TargetModel& model,
                const ReversibleKernel* kernel, double level, const StreamFactory& streams, std::uint32_t stage,
                Execution exec, StageTelemetry& telemetry) {
  if (config.idealized) {
    idealized_refresh(system, model, level, streams, stage, exec);
  } else {
    const TruncatedKernel truncated(*kernel, level);
    telemetry.explore = explore(system, truncated, config.inner_steps, streams, stage, exec);
  }
}

}  // namespace

RunResult run_adaptive(const SplittingConfig& config, const TargetModel& model, const ReversibleKernel* kernel,
                       const TestFunction& f, Execution exec) {
  validate(config);
  require_kernel(config, kernel);
  const std::size_t max_iterations = resolve_max_iterations(config, model);
  const StreamFactory streams(config.seed);
  const std::size_t n = config.n_particles;

  RunResult result;
  result.mode = SplittingMode::Adaptive;
  result.idealized = config.idealized;
  result.target_level = config.target_level;

  TaggedParticleSystem system;
  sample_prior_system(system, model, n, streams, exec);
  draw_tags(system, streams, 0, exec);

  std::size_t p = 0;
  double weight = 1.0;
  for (;;) {
    const double alpha_p = config.alpha_at(p);
    const EmpiricalQuantile q = empirical_quantile(system, alpha_p);
    result.level_history.push_back(q.level);
    if (q.level >= config.target_level) break;
    if (p >= max_iterations) {
      throw NonTerminationError("adaptive splitting did not reach the target level within " +
                                    std::to_string(max_iterations) + " iterations",
                                result.level_history);
    }
    const auto survivors = strictly_above(system, q);
    const auto stage = static_cast<std::uint32_t>(p);
    const auto picks = multinomial_resample(survivors, n, streams, stage, exec);
    system = gather(system, picks, exec);

    StageTelemetry telemetry{q.level, survivors.size(), {}};
    move_above(system, config, model, kernel, q.level, streams, stage, exec, telemetry);
    result.stages.push_back(telemetry);

    draw_tags(system, streams, stage + 1, exec);
    weight *= alpha_p;
    ++p;
  }

  result.n_hat = p;
  result.weight = weight;
  result.estimates = estimate_all(system, weight, config.target_level, f);
  if (config.keep_final_system) result.final_system = std::move(system);
  return result;
}

RunResult run_fixed(const SplittingConfig& config, const TargetModel& model, const ReversibleKernel* kernel,
                    const TestFunction& f, Execution exec) {
  validate(config);
  require_kernel(config, kernel);
  const StreamFactory streams(config.seed);
  const std::size_t n = config.n_particles;

  RunResult result;
  result.mode = SplittingMode::Fixed;
  result.idealized = config.idealized;
  result.target_level = config.target_level;
  result.level_history = config.levels;

  TaggedParticleSystem system;
  sample_prior_system(system, model, n, streams, exec);

  double weight = 1.0;
  for (std::size_t p = 0; p < config.levels.size(); ++p) {
    const double level = config.levels[p];
    std::vector<std::size_t> survivors;
    for (std::size_t i = 0; i < n; ++i) {
      if (system.scores[i] >= level) survivors.push_back(i);
    }
    const double proportion = static_cast<double>(survivors.size()) / static_cast<double>(n);
    result.selection_proportions.push_back(proportion);
    if (survivors.empty()) {
      result.extinct = true;
      result.n_hat = config.levels.size();
      result.weight = 0.0;
      result.estimates = Estimates{};
      if (config.keep_final_system) result.final_system = std::move(system);
      return result;
    }
    weight *= proportion;
    const auto stage = static_cast<std::uint32_t>(p);
    const auto picks = multinomial_resample(survivors, n, streams, stage, exec);
    system = gather(system, picks, exec);

    StageTelemetry telemetry{level, survivors.size(), {}};
    move_above(system, config, model, kernel, level, streams, stage, exec, telemetry);
    result.stages.push_back(telemetry);
  }

  result.n_hat = config.levels.size();
  result.weight = weight;
  result.estimates = estimate_all(system, weight, config.target_level, f);
  if (config.keep_final_system) result.final_system = std::move(system);
  return result;
}

RunResult run_splitting(const SplittingConfig& config, const TargetModel& model, const ReversibleKernel* kernel,
                        const TestFunction& f, Execution exec) {
  return config.mode == SplittingMode::Adaptive ? run_adaptive(config, model, kernel, f, exec)
                                                : run_fixed(config, model, kernel, f, exec);
}

}  // namespace ams
