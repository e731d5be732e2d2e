#include <memory>

#include <benchmark/benchmark.h>

#include "gii/criterion.hpp"

namespace {

gii::sim::StructuralConfig m1(int n) {
  gii::sim::StructuralConfig s;
  s.model = gii::sim::ModelId::M1;
  s.beta = Eigen::Vector2d(1.0, 0.4);
  s.n = n;
  s.periods = 5;
  return s;
}

void BM_AccumulateStats(benchmark::State& state) {
  const auto s = m1(static_cast<int>(state.range(0)));
  const gii::sim::ShockSet shocks(s, 1, 3);
  const auto data = gii::sim::generate_observed(s, shocks);
  const auto spec = gii::aux::make_spec(s.model, 3, s.periods);
  const gii::aux::FeatureCache cache(spec, shocks.covariates());
  for (auto _ : state) {
    benchmark::DoNotOptimize(gii::aux::accumulate_stats(spec, data.outcomes, cache));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_AccumulateStats)->Arg(1000)->Arg(4000);

void BM_CriterionValue(benchmark::State& state) {
  const auto s = m1(1000);
  const int sims = static_cast<int>(state.range(0));
  auto shocks = std::make_shared<const gii::sim::ShockSet>(s, sims, 3);
  const auto data = gii::sim::generate_observed(s, *shocks);
  gii::crit::CriterionConfig cfg;
  cfg.sims = sims;
  gii::crit::Criterion c(s, shocks, gii::aux::make_spec(s.model, 3, s.periods), data.outcomes,
                         cfg, gii::crit::Bounds::defaults(s.model));
  Eigen::Vector2d beta(1.0, 0.4);
  for (auto _ : state) {
    // Perturb so the memo never hits.
    beta[0] += 1e-9;
    benchmark::DoNotOptimize(c.value(beta));
  }
}
BENCHMARK(BM_CriterionValue)->Arg(10)->Arg(300)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
