// Serial reference against the OpenMP paths.

#include <benchmark/benchmark.h>

#include <cmath>

#include "ams/explore.hpp"
#include "ams/splitting.hpp"

namespace {

struct Fixture {
  std::shared_ptr<const ams::TargetModel> model = ams::make_builtin_model("gauss_watermark", 5);
  ams::ReversibleKernel kernel = ams::make_builtin_kernel("gauss_ar1", 0.3, model);
  ams::StreamFactory streams{2024};
  ams::TaggedParticleSystem system;
  double level = model->oracle()->level_for_probability(0.1);

  explicit Fixture(std::size_t n) {
    ams::sample_prior_system(system, *model, n, streams, ams::Execution::Parallel);
    ams::draw_tags(system, streams, 0, ams::Execution::Parallel);
  }
};

void explore(benchmark::State& state, ams::Execution exec) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  const ams::TruncatedKernel truncated(f.kernel, f.level);
  std::uint32_t stage = 1;
  for (auto _ : state) {
    auto copy = f.system;
    benchmark::DoNotOptimize(ams::explore(copy, truncated, 5, f.streams, stage++, exec));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 5);
}

void quantile(benchmark::State& state, bool sorted) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(sorted ? ams::empirical_quantile_sorted(f.system, 0.75)
                                    : ams::empirical_quantile(f.system, 0.75));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void adaptive_run(benchmark::State& state, ams::Execution exec) {
  const auto model = ams::make_builtin_model("gauss_watermark", 2);
  const auto kernel = ams::make_builtin_kernel("gauss_ar1", 0.3, model);
  ams::SplittingConfig c;
  c.n_particles = static_cast<std::size_t>(state.range(0));
  c.inner_steps = 5;
  c.target_level = model->oracle()->level_for_probability(1e-4);
  c.keep_final_system = false;
  for (auto _ : state) {
    c.seed++;
    benchmark::DoNotOptimize(ams::run_adaptive(c, *model, &kernel, {}, exec).estimates.p_hat);
  }
}

}  // namespace

BENCHMARK_CAPTURE(explore, serial, ams::Execution::Serial)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(explore, parallel, ams::Execution::Parallel)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(quantile, select, false)->Arg(10000)->Arg(1000000)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(quantile, sort, true)->Arg(10000)->Arg(1000000)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(adaptive_run, serial, ams::Execution::Serial)->Arg(5000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(adaptive_run, parallel, ams::Execution::Parallel)->Arg(5000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
