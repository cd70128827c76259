#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <set>

#include "ams/error.hpp"
#include "ams/harness.hpp"
#include "ams/rng.hpp"

namespace {

ams::ExperimentSpec gw_spec(std::size_t reps) {
  ams::ExperimentSpec s;
  s.model = {"gauss_watermark", 2};
  s.kernel = {"gauss_ar1", 0.3};
  s.run.n_particles = 300;
  s.target_probability = 1e-3;
  s.replications = reps;
  s.master_seed = 41;
  return s;
}

bool same_record(const ams::ReplicationRecord& a, const ams::ReplicationRecord& b) {
  const bool c_same = (std::isnan(a.c_hat) && std::isnan(b.c_hat)) || a.c_hat == b.c_hat;
  return a.run_id == b.run_id && a.seed == b.seed && a.n_hat == b.n_hat && a.p_hat == b.p_hat &&
         a.e_hat == b.e_hat && c_same && a.extinct == b.extinct && a.failed == b.failed &&
         a.wall_ms == b.wall_ms && a.levels == b.levels;
}

}  // namespace

TEST_CASE("replication output does not depend on the thread count") {
  auto spec = gw_spec(24);
  spec.threads = 1;
  const auto base = ams::run_replications(ams::resolve(spec));
  for (int threads : {4, 8}) {
    spec.threads = threads;
    const auto other = ams::run_replications(ams::resolve(spec));
    REQUIRE(other.records.size() == base.records.size());
    for (std::size_t j = 0; j < base.records.size(); ++j) CHECK(same_record(base.records[j], other.records[j]));
    CHECK(other.summary.mean == base.summary.mean);
    CHECK(other.summary.variance == base.summary.variance);
    CHECK(other.summary.mean_n_hat == base.summary.mean_n_hat);
  }
}

TEST_CASE("replications use distinct derived seeds") {
  const auto result = ams::run_replications(ams::resolve(gw_spec(30)));
  std::set<std::uint64_t> seeds;
  std::set<double> values;
  for (const auto& r : result.records) {
    CHECK(r.seed == ams::replication_seed(41, r.run_id));
    CHECK(r.wall_ms == 0.0);
    seeds.insert(r.seed);
    values.insert(r.p_hat);
  }
  CHECK(seeds.size() == 30);
  CHECK(values.size() > 20);
}

TEST_CASE("normality check") {
  std::mt19937_64 g(3);
  std::normal_distribution<double> normal(5.0, 2.0);
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> a(200), b(200);
  for (auto& v : a) v = normal(g);
  for (auto& v : b) v = expo(g);
  CHECK(ams::normality_check(a).p_value > 0.01);
  CHECK(ams::normality_check(b).p_value < 0.01);
  CHECK_THROWS_AS(ams::normality_check(std::vector<double>(49, 1.0)), ams::InsufficientSampleError);
}

TEST_CASE("summary statistics against hand computation") {
  ams::ExperimentSpec spec;
  spec.run.idealized = true;
  spec.run.n_particles = 100;
  spec.target_probability = 1e-2;
  spec.replications = 3;
  const auto experiment = ams::resolve(spec);
  std::vector<ams::ReplicationRecord> records(4);
  const double values[] = {0.009, 0.011, 0.010, 0.5};
  for (std::size_t j = 0; j < 4; ++j) {
    records[j].run_id = j;
    records[j].p_hat = values[j];
    records[j].n_hat = 15 + j;
  }
  records[3].failed = true;
  const auto s = ams::summarize(experiment, records);
  CHECK(s.replications == 4);
  CHECK(s.completed == 3);
  CHECK(s.failures == 1);
  CHECK_THAT(s.mean, Catch::Matchers::WithinRel(0.01, 1e-12));
  CHECK_THAT(s.variance, Catch::Matchers::WithinRel(1e-6, 1e-9));
  CHECK_THAT(s.rel_bias, Catch::Matchers::WithinAbs(0.0, 1e-12));
  CHECK_THAT(s.n_times_relvar, Catch::Matchers::WithinRel(100 * 1e-6 / 1e-4, 1e-9));
  CHECK(s.mean_n_hat == 16.0);
  REQUIRE(s.incompressible_bound);
  const double r = 1e-2 / std::pow(0.75, 16);
  CHECK_THAT(*s.incompressible_bound, Catch::Matchers::WithinRel(15.0 / 3.0 + (1 - r) / r, 1e-12));
  CHECK_FALSE(s.normality_p);
}

TEST_CASE("non-terminating replications are counted and excluded") {
  ams::ExperimentSpec spec;
  spec.run.idealized = true;
  spec.run.n_particles = 50;
  spec.run.max_iterations = 5;
  spec.target_probability = 1e-5;
  spec.replications = 6;
  const auto result = ams::run_replications(ams::resolve(spec));
  CHECK(result.summary.failures == 6);
  CHECK(result.summary.completed == 0);
  for (const auto& r : result.records) {
    CHECK(r.failed);
    CHECK(r.levels.size() == 6);
  }
}

TEST_CASE("fixed extinctions enter the statistics as zeros") {
  ams::ExperimentSpec spec;
  spec.run.mode = ams::SplittingMode::Fixed;
  spec.run.idealized = true;
  spec.run.n_particles = 5;
  spec.optimal_levels = true;
  spec.target_probability = 1e-4;
  spec.replications = 40;
  const auto result = ams::run_replications(ams::resolve(spec));
  CHECK(result.summary.extinctions > 0);
  CHECK(result.summary.completed == 40);
  for (const auto& r : result.records)
    if (r.extinct) CHECK(r.p_hat == 0.0);
}

TEST_CASE("resolution errors") {
  ams::ExperimentSpec spec;
  spec.target_probability = 1e-3;
  CHECK_THROWS_AS(ams::resolve(spec), ams::ConfigError);  // no kernel
  spec.run.idealized = true;
  spec.target_probability = 1.5;
  CHECK_THROWS_AS(ams::resolve(spec), ams::ConfigError);
  spec.target_probability = 1e-3;
  spec.run.alpha = 1.0;
  CHECK_THROWS_WITH(ams::resolve(spec), "alpha must lie in (0,1)");
}

TEST_CASE("adaptive against fixed comparison") {
  ams::ExperimentSpec spec;
  spec.run.idealized = true;
  spec.run.n_particles = 1000;
  spec.target_probability = 1e-4;
  spec.replications = 200;
  spec.master_seed = 8;
  const auto report = ams::compare_adaptive_fixed(spec);
  CHECK(report.fixed_levels.size() == 32);
  CHECK(report.adaptive.summary.completed == 200);
  CHECK(report.fixed.summary.completed == 200);
  CHECK(report.ratio > 0.7);
  CHECK(report.ratio < 1.4);
  CHECK(report.rejected == (report.p_value < 0.01));
}
