#include "ams/harness.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>

#include <omp.h>

#include "ams/error.hpp"
#include "ams/rng.hpp"
#include "ams/variance.hpp"

namespace ams {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

ReplicationRecord run_one(const Experiment& experiment, std::size_t j) {
  const ExperimentSpec& spec = experiment.spec;
  ReplicationRecord record;
  record.run_id = j;
  record.seed = replication_seed(spec.master_seed, j);

  SplittingConfig config = spec.run;
  config.seed = record.seed;
  config.keep_final_system = false;
  const ReversibleKernel* kernel = experiment.kernel ? &*experiment.kernel : nullptr;

  const auto start = std::chrono::steady_clock::now();
  try {
    const RunResult run = run_splitting(config, *experiment.model, kernel, {}, Execution::Serial);
    record.n_hat = run.n_hat;
    record.p_hat = run.estimates.p_hat;
    record.e_hat = run.estimates.e_hat;
    record.c_hat = run.estimates.c_defined ? run.estimates.c_hat : kNaN;
    record.extinct = run.extinct;
    if (spec.level_history) record.levels = run.level_history;
  } catch (const NonTerminationError& e) {
    record.failed = true;
    record.p_hat = record.e_hat = record.c_hat = kNaN;
    if (spec.level_history) record.levels = e.level_history();
  }
  if (spec.timing) {
    record.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  }
  return record;
}

}  // namespace

Experiment resolve(const ExperimentSpec& spec_in) {
  Experiment experiment{spec_in, make_builtin_model(spec_in.model.name, spec_in.model.dimension), std::nullopt, kNaN};
  ExperimentSpec& spec = experiment.spec;
  const AnalyticOracle* oracle = experiment.model->oracle();
  validate(spec.run);

  if (spec.target_probability) {
    if (oracle == nullptr) throw ConfigError("target_probability needs a model with an analytic oracle");
    const double p = *spec.target_probability;
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("target_probability must lie in (0,1)");
    spec.run.target_level = oracle->level_for_probability(p);
  }
  if (oracle != nullptr) {
    const auto [lo, hi] = oracle->support();
    if (spec.run.target_level >= lo && spec.run.target_level <= hi) {
      experiment.probability = oracle->tail_probability(spec.run.target_level);
    }
  }
  if (spec.run.mode == SplittingMode::Fixed && spec.optimal_levels) {
    if (oracle == nullptr) throw ConfigError("optimal fixed levels need a model with an analytic oracle");
    spec.run.levels = optimal_fixed_levels(*oracle, spec.run.target_level, spec.run.alpha);
  }
  if (!spec.kernel.type.empty()) {
    experiment.kernel = make_builtin_kernel(spec.kernel.type, spec.kernel.scale, experiment.model);
  } else if (!spec.run.idealized) {
    throw ConfigError("kernel: a kernel type is required unless the run is idealized");
  }
  if (spec.replications < 1) throw ConfigError("replications must be >= 1");
  if (!(spec.confidence > 0.0 && spec.confidence < 1.0)) throw ConfigError("confidence must lie in (0,1)");
  validate(spec.run);
  return experiment;
}

ReplicationResult run_replications(const Experiment& experiment) {
  const std::size_t r = experiment.spec.replications;
  ReplicationResult result;
  result.records.resize(r);

  std::mutex mutex;
  std::size_t error_index = std::numeric_limits<std::size_t>::max();
  std::exception_ptr error;
  const int workers = experiment.spec.threads > 0 ? experiment.spec.threads : omp_get_max_threads();
  const auto count = static_cast<std::ptrdiff_t>(r);
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
  for (std::ptrdiff_t j = 0; j < count; ++j) {
    const auto k = static_cast<std::size_t>(j);
    try {
      result.records[k] = run_one(experiment, k);
    } catch (...) {
      std::lock_guard lock(mutex);
      if (k < error_index) {
        error_index = k;
        error = std::current_exception();
      }
    }
  }
  if (error) std::rethrow_exception(error);
  result.summary = summarize(experiment, result.records);
  return result;
}

ReplicationSummary summarize(const Experiment& experiment, std::span<const ReplicationRecord> records) {
  const ExperimentSpec& spec = experiment.spec;
  ReplicationSummary s;
  s.replications = records.size();
  s.n_particles = spec.run.n_particles;
  s.probability = experiment.probability;

  std::vector<double> values;
  double n_hat_sum = 0.0;
  for (const auto& rec : records) {  // fixed order keeps the sums bit-reproducible
    if (rec.failed) {
      ++s.failures;
      continue;
    }
    if (rec.extinct) ++s.extinctions;
    values.push_back(rec.p_hat);
    n_hat_sum += static_cast<double>(rec.n_hat);
  }
  s.completed = values.size();
  if (values.empty()) {
    s.mean = s.variance = s.rel_bias = s.n_times_relvar = s.n_times_relvar_se = s.mean_n_hat = kNaN;
    s.sigma_sq_used = kNaN;
    return s;
  }
  s.mean = stats::mean(values);
  s.mean_n_hat = n_hat_sum / static_cast<double>(values.size());
  const bool known = std::isfinite(s.probability);
  const double p = known ? s.probability : s.mean;
  s.rel_bias = known ? s.mean / p - 1.0 : kNaN;
  if (values.size() >= 2) {
    s.variance = stats::sample_variance(values);
    const double scale = static_cast<double>(s.n_particles) / (p * p);
    s.n_times_relvar = scale * s.variance;
    s.n_times_relvar_se = values.size() >= 4 ? scale * stats::variance_standard_error(values) : kNaN;
  } else {
    s.variance = s.n_times_relvar = s.n_times_relvar_se = kNaN;
  }

  if (known && s.probability < 1.0) {
    const double alpha = spec.run.alpha;
    const auto n = static_cast<std::size_t>(std::floor(std::log(s.probability) / std::log(alpha)));
    const double r = s.probability / std::pow(alpha, static_cast<double>(n));
    s.incompressible_bound = n >= 1 ? incompressible_bound(n, alpha, r) : (1.0 - r) / r;
  }

  s.sigma_sq_used = spec.reference_sigma_sq ? *spec.reference_sigma_sq : s.n_times_relvar;
  if (known && std::isfinite(s.sigma_sq_used)) {
    std::size_t covered = 0;
    for (double v : values) {
      const auto [lo, hi] = clt_interval(v, s.sigma_sq_used, s.n_particles, spec.confidence);
      if (lo <= s.probability && s.probability <= hi) ++covered;
    }
    s.coverage = static_cast<double>(covered) / static_cast<double>(values.size());
  }
  if (values.size() >= 50 && s.variance > 0.0) {
    const auto ad = normality_check(values);
    s.normality_stat = ad.statistic;
    s.normality_p = ad.p_value;
  }
  return s;
}

stats::NormalityResult normality_check(std::span<const double> values) {
  if (values.size() < 50) throw InsufficientSampleError("normality check needs at least 50 values");
  const double m = stats::mean(values);
  const double sd = std::sqrt(stats::sample_variance(values));
  if (!(sd > 0.0)) throw InsufficientSampleError("normality check needs values with positive spread");
  std::vector<double> z(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) z[i] = (values[i] - m) / sd;
  return stats::anderson_darling_normal(z);
}

ComparisonReport compare_adaptive_fixed(const ExperimentSpec& spec) {
  ExperimentSpec adaptive_spec = spec;
  adaptive_spec.run.mode = SplittingMode::Adaptive;
  ExperimentSpec fixed_spec = spec;
  fixed_spec.run.mode = SplittingMode::Fixed;
  fixed_spec.optimal_levels = true;

  const Experiment adaptive = resolve(adaptive_spec);
  const Experiment fixed = resolve(fixed_spec);

  ComparisonReport report;
  report.fixed_levels = fixed.spec.run.levels;
  report.adaptive = run_replications(adaptive);
  report.fixed = run_replications(fixed);

  auto completed = [](const ReplicationResult& r) {
    std::vector<double> v;
    for (const auto& rec : r.records) {
      if (!rec.failed) v.push_back(rec.p_hat);
    }
    return v;
  };
  const auto a = completed(report.adaptive);
  const auto b = completed(report.fixed);
  if (a.size() < 2 || b.size() < 2) throw InsufficientSampleError("comparison needs at least 2 replications per mode");
  report.ratio = report.adaptive.summary.n_times_relvar / report.fixed.summary.n_times_relvar;
  const auto test = stats::variance_ratio_test(a, b);
  report.f_statistic = test.f_statistic;
  report.p_value = test.p_value;
  report.rejected = test.p_value < 0.01;
  return report;
}

}  // namespace ams
