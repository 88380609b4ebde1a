#include <random>

#include <benchmark/benchmark.h>

#include "otmpc/controllers.hpp"
#include "otmpc/envs.hpp"
#include "otmpc/random.hpp"
#include "otmpc/scd.hpp"
#include "otmpc/transport.hpp"

namespace {

Eigen::MatrixXd uniform(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(gen);
  return m;
}

// Particles x proposals, epsilon 0.05 of the median cost.
void BM_Sinkhorn(benchmark::State& state) {
  std::mt19937_64 gen(1);
  const auto n = state.range(0), m = state.range(1);
  const otmpc::CostMatrix c(uniform(gen, n, m, 0.0, 1.0));
  otmpc::SinkhornConfig cfg;
  cfg.epsilon = 0.05 * c.median();
  for (auto _ : state) {
    benchmark::DoNotOptimize(otmpc::sinkhorn(c, otmpc::Simplex::uniform(n), otmpc::Simplex::uniform(m), cfg));
  }
}
BENCHMARK(BM_Sinkhorn)->Args({5, 8})->Args({20, 200})->Args({50, 500});

// One SCD step at the controller's shape: 20 particles, 200 proposals, horizon 70 x 2 controls.
void BM_ScdStep(benchmark::State& state) {
  std::mt19937_64 gen(2);
  const otmpc::ParticleEnsemble e(uniform(gen, 20, 140, -1.0, 1.0));
  const otmpc::ProposalBatch b(uniform(gen, 200, 140, -1.0, 1.0), uniform(gen, 200, 1, -50.0, 0.0).col(0));
  otmpc::ScdConfig cfg = otmpc::ScdConfig::with_median_epsilon(0.05, e, b);
  cfg.track_objective = false;
  for (auto _ : state) benchmark::DoNotOptimize(otmpc::scd_step(e, b, cfg));
}
BENCHMARK(BM_ScdStep)->Unit(benchmark::kMicrosecond);

// Cost of a batch of bicycle sequences on an easy field.
void BM_RolloutCosts(benchmark::State& state) {
  otmpc::Rng rng(3);
  const otmpc::BicycleEnv env(otmpc::generate_obstacle_field(otmpc::Difficulty::kEasy, rng), otmpc::TaskCostWeights{});
  std::mt19937_64 gen(4);
  const Eigen::MatrixXd seqs = uniform(gen, state.range(0), 140, -0.5, 0.5);
  const otmpc::StateVector x0 = env.initial_state();
  for (auto _ : state) benchmark::DoNotOptimize(otmpc::rollout_costs(env, x0, seqs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RolloutCosts)->Arg(200)->Arg(800)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
