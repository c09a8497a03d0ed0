#include <benchmark/benchmark.h>

#include <mlgvar/ggm.hpp>
#include <mlgvar/gvar.hpp>
#include <mlgvar/linalg.hpp>
#include <mlgvar/lmm.hpp>
#include <mlgvar/simulation.hpp>

#include <random>

using namespace mlgvar;

namespace {

MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  MatrixXd x(rows, cols);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = z(rng);
  return x;
}

TimeSeries chain_series(int m, int t) {
  SimStudyConfig c;
  c.nodes = m;
  c.subjects = 1;
  c.occasions = t;
  return simulate_replication(c, 0).panel.subjects[0];
}

}  // namespace

static void BM_Glasso(benchmark::State& state) {
  const auto m = state.range(0);
  const CovMatrix s = sample_covariance(gaussian(5 * m, m, 1));
  for (auto _ : state) benchmark::DoNotOptimize(glasso(s, 0.1));
}
BENCHMARK(BM_Glasso)->Arg(8)->Arg(20)->Arg(50);

static void BM_EbicGlasso(benchmark::State& state) {
  const CovMatrix s = sample_covariance(gaussian(200, 8, 2));
  for (auto _ : state) benchmark::DoNotOptimize(ebic_glasso(s));
}
BENCHMARK(BM_EbicGlasso);

static void BM_Mrce(benchmark::State& state) {
  const LaggedDesign d = build_lagged_design(chain_series(8, static_cast<int>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(mrce_fit(d, 0.05, 0.05));
}
BENCHMARK(BM_Mrce)->Arg(100)->Arg(500);

static void BM_GvarSearch(benchmark::State& state) {
  const LaggedDesign d = build_lagged_design(chain_series(8, 200));
  for (auto _ : state) benchmark::DoNotOptimize(gvar_ebic_search(d));
}
BENCHMARK(BM_GvarSearch)->Unit(benchmark::kMillisecond);

static void BM_LmmReml(benchmark::State& state) {
  const auto groups = static_cast<int>(state.range(0)), per = 100;
  const MatrixXd x = gaussian(groups * per, 8, 3);
  const VectorXd y = x.col(0) * 0.3 + gaussian(groups * per, 1, 4).col(0);
  std::vector<int> g;
  for (int i = 0; i < groups; ++i) g.insert(g.end(), per, i);
  for (auto _ : state)
    benchmark::DoNotOptimize(fit_lmm_reml(y, x, MatrixXd(x.rows(), 0), g, RandomSpec::Correlated));
}
BENCHMARK(BM_LmmReml)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_Stationary(benchmark::State& state) {
  const auto m = state.range(0);
  MatrixXd b = gaussian(m, m, 5);
  b *= 0.5 / linalg::spectral_radius(b);
  const MatrixXd theta = MatrixXd::Identity(m, m);
  for (auto _ : state) benchmark::DoNotOptimize(stationary_covariance(b, theta));
}
BENCHMARK(BM_Stationary)->Arg(8)->Arg(20);

BENCHMARK_MAIN();
