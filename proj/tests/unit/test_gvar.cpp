#include "helpers.hpp"
#include "oracles.hpp"

#include <mlgvar/gvar.hpp>
#include <mlgvar/simulation.hpp>

using namespace mlgvar;
using testing::mat;
using testing::max_abs_diff;

namespace {

// y_t = B y_{t-1} + e_t with e_t ~ N(0, theta), started at zero with burn-in.
MatrixXd simulate_var(const MatrixXd& b, const MatrixXd& theta, int t_count, std::mt19937_64& rng) {
  const Eigen::Index m = b.rows();
  const MatrixXd e = oracle::gaussian_sample(theta, t_count + 200, rng);
  MatrixXd y(t_count, m);
  VectorXd prev = VectorXd::Zero(m);
  for (int t = 0; t < t_count + 200; ++t) {
    prev = b * prev + e.row(t).transpose();
    if (t >= 200) y.row(t - 200) = prev.transpose();
  }
  return y;
}

int spurious_edges(const GvarModel& model) {
  return static_cast<int>(model.temporal_included.count()) + model.contemporaneous.edge_count();
}

}  // namespace

TEST_SUITE("build_lagged_design") {
  TEST_CASE("three occasions give two rows") {
    const LaggedDesign d = build_lagged_design(TimeSeries::from_matrix(mat({{1, 2}, {3, 4}, {5, 6}})));
    CHECK(d.rows() == 2);
    CHECK(d.current(0, 0) == 3);
    CHECK(d.lagged(0, 0) == 1);
  }

  TEST_CASE("day boundaries are not bridged") {
    const TimeSeries s = TimeSeries::from_matrix(mat({{1}, {2}, {3}, {4}}), std::vector<long>{1, 1, 2, 2});
    CHECK(build_lagged_design(s, DayPolicy::Break).rows() == 2);
    CHECK(build_lagged_design(s, DayPolicy::Bridge).rows() == 3);
  }

  TEST_CASE("a missing cell removes both pairs that touch it") {
    MatrixXd v = mat({{1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}});
    v(1, 0) = std::numeric_limits<double>::quiet_NaN();
    const LaggedDesign d = build_lagged_design(TimeSeries::from_matrix(v));
    CHECK(d.rows() == 2);
    CHECK(d.occasion == std::vector<Eigen::Index>{3, 4});
  }

  TEST_CASE("too short") {
    CHECK_ERROR_CODE(build_lagged_design(TimeSeries::from_matrix(mat({{1}}))), ErrorCode::InsufficientData);
  }

  TEST_CASE("stacking") {
    const LaggedDesign a = build_lagged_design(TimeSeries::from_matrix(mat({{1}, {2}, {3}})));
    const LaggedDesign b = build_lagged_design(TimeSeries::from_matrix(mat({{7}, {8}})));
    const LaggedDesign both[] = {a, b};
    const LaggedDesign s = stack_designs(both);
    CHECK(s.rows() == 3);
    CHECK(s.current(2, 0) == 8);
  }
}

TEST_SUITE("fit_var_ols") {
  TEST_CASE("white noise") {
    std::mt19937_64 rng(1);
    const MatrixXd y = simulate_var(MatrixXd::Zero(4, 4), MatrixXd::Identity(4, 4), 10000, rng);
    const GvarModel m = fit_var_ols(build_lagged_design(TimeSeries::from_matrix(y)));
    CHECK(m.beta.cwiseAbs().maxCoeff() < 0.05);
  }

  TEST_CASE("univariate AR(1)") {
    std::mt19937_64 rng(2);
    const MatrixXd y = simulate_var(mat({{0.5}}), mat({{1}}), 10000, rng);
    const GvarModel m = fit_var_ols(build_lagged_design(TimeSeries::from_matrix(y)));
    CHECK(m.beta(0, 0) > 0.45);
    CHECK(m.beta(0, 0) < 0.55);
  }

  TEST_CASE("equals one regression per variable") {
    std::mt19937_64 rng(3);
    const MatrixXd b = oracle::random_stable(4, rng, 0.6);
    const MatrixXd y = simulate_var(b, oracle::random_spd(4, rng), 300, rng);
    const LaggedDesign d = build_lagged_design(TimeSeries::from_matrix(y));
    const GvarModel m = fit_var_ols(d);
    MatrixXd x(d.rows(), 5);
    x.col(0).setOnes();
    x.rightCols(4) = d.lagged;
    for (int i = 0; i < 4; ++i) {
      const VectorXd coef = x.colPivHouseholderQr().solve(d.current.col(i));
      CHECK(max_abs_diff(m.beta.row(i), coef.tail(4).transpose()) < 1e-10);
    }
  }

  TEST_CASE("residual covariance uses the T' denominator") {
    std::mt19937_64 rng(4);
    const MatrixXd y = simulate_var(MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2), 50, rng);
    const LaggedDesign d = build_lagged_design(TimeSeries::from_matrix(y));
    const GvarModel m = fit_var_ols(d);
    MatrixXd x(d.rows(), 3);
    x.col(0).setOnes();
    x.rightCols(2) = d.lagged;
    const MatrixXd coef = x.colPivHouseholderQr().solve(d.current);
    const MatrixXd r = d.current - x * coef;
    CHECK(max_abs_diff(m.theta, r.transpose() * r / static_cast<double>(d.rows())) < 1e-10);
  }
}

TEST_SUITE("mrce_fit") {
  TEST_CASE("full shrinkage") {
    std::mt19937_64 rng(5);
    const MatrixXd y = simulate_var(0.3 * MatrixXd::Identity(4, 4), MatrixXd::Identity(4, 4), 200, rng);
    const MrceFit f = mrce_fit(build_lagged_design(TimeSeries::from_matrix(y)), 1e3, 1e3);
    CHECK(f.model.beta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(f.model.contemporaneous.edge_count() == 0);
  }

  TEST_CASE("unpenalized limit equals OLS") {
    std::mt19937_64 rng(6);
    const MatrixXd y = simulate_var(oracle::random_stable(4, rng, 0.5), oracle::random_spd(4, rng), 400, rng);
    const LaggedDesign d = build_lagged_design(TimeSeries::from_matrix(y));
    const MrceFit f = mrce_fit(d, 0.0, 0.0);
    const GvarModel ols = fit_var_ols(d);
    CHECK(max_abs_diff(f.model.beta, ols.beta) < 1e-4);
    CHECK(max_abs_diff(f.model.theta, ols.theta) < 1e-4);
  }

  TEST_CASE("objective never increases") {
    std::mt19937_64 rng(7);
    const MatrixXd y = simulate_var(oracle::random_stable(5, rng, 0.5), oracle::random_spd(5, rng), 100, rng);
    const MrceFit f = mrce_fit(build_lagged_design(TimeSeries::from_matrix(y)), 0.05, 0.05);
    for (std::size_t i = 1; i < f.objective_trace.size(); ++i)
      CHECK(f.objective_trace[i] <= f.objective_trace[i - 1] + 1e-10);
  }

  TEST_CASE("chain generator: true edges recovered with the right sign") {
    SimStudyConfig c;
    c.nodes = 8;
    c.subjects = 1;
    c.occasions = 500;
    int true_edges = 0, recovered = 0;
    for (int seed = 0; seed < 100; ++seed) {
      c.seed = static_cast<std::uint64_t>(seed);
      const SimulatedData sim = simulate_replication(c, 0);
      const MrceFit f = mrce_fit(build_lagged_design(sim.panel.subjects[0]), 0.02, 0.02);
      const MatrixXd& b = sim.truth.beta[0];
      const MatrixXd& r = sim.truth.contemporaneous[0].partials;
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
          if (b(i, j) != 0.0) {
            ++true_edges;
            recovered += f.model.beta(i, j) * b(i, j) > 0.0;
          }
          if (j > i && r(i, j) != 0.0) {
            ++true_edges;
            recovered += f.model.contemporaneous.partials(i, j) * r(i, j) > 0.0;
          }
        }
      }
    }
    CHECK(static_cast<double>(recovered) / true_edges >= 0.9);
  }

  TEST_CASE("negative penalty") {
    std::mt19937_64 rng(8);
    const MatrixXd y = simulate_var(MatrixXd::Zero(2, 2), MatrixXd::Identity(2, 2), 20, rng);
    CHECK_ERROR_CODE(mrce_fit(build_lagged_design(TimeSeries::from_matrix(y)), -1.0, 0.0), ErrorCode::ConfigInvalid);
  }
}

TEST_SUITE("gvar_ebic_search") {
  TEST_CASE("white noise selects a nearly empty model") {
    int good = 0;
    for (int seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      const MatrixXd y = simulate_var(MatrixXd::Zero(6, 6), MatrixXd::Identity(6, 6), 200, rng);
      good += spurious_edges(gvar_ebic_search(build_lagged_design(TimeSeries::from_matrix(y))).model) <= 2;
    }
    CHECK(good >= 90);
  }

  TEST_CASE("chain condition at T = 200") {
    SimStudyConfig c;
    c.nodes = 8;
    c.subjects = 1;
    c.occasions = 200;
    double sens = 0.0, spec = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
      c.seed = static_cast<std::uint64_t>(seed);
      const SimulatedData sim = simulate_replication(c, 0);
      const GvarSearchResult r = gvar_ebic_search(build_lagged_design(sim.panel.subjects[0]));
      const Metrics t = score_network(sim.truth.beta[0], r.model.beta, true);
      const Metrics k = score_network(sim.truth.contemporaneous[0].partials, r.model.contemporaneous.partials, false);
      sens += t.sensitivity + k.sensitivity;
      spec += t.specificity + k.specificity;
    }
    CHECK(sens / 200.0 >= 0.8);
    CHECK(spec / 200.0 >= 0.8);
  }

  TEST_CASE("single-cell grid is the MRCE fit at that cell") {
    std::mt19937_64 rng(9);
    const MatrixXd y = simulate_var(oracle::random_stable(4, rng, 0.5), MatrixXd::Identity(4, 4), 150, rng);
    const LaggedDesign d = build_lagged_design(TimeSeries::from_matrix(y));
    GvarSearchOptions o;
    o.grid_beta = {0.04};
    o.grid_kappa = {0.03};
    const GvarSearchResult r = gvar_ebic_search(d, o);
    const MrceFit f = mrce_fit(d, 0.04, 0.03);
    CHECK(max_abs_diff(r.model.beta, f.model.beta) == 0.0);
    CHECK(max_abs_diff(r.model.theta_precision.values, f.model.theta_precision.values) == 0.0);
  }

  TEST_CASE("default grids are 10 x 10") {
    std::mt19937_64 rng(10);
    const MatrixXd y = simulate_var(MatrixXd::Zero(3, 3), MatrixXd::Identity(3, 3), 100, rng);
    const GvarSearchResult r = gvar_ebic_search(build_lagged_design(TimeSeries::from_matrix(y)));
    CHECK(r.grid_beta.size() == 10);
    CHECK(r.grid_kappa.size() == 10);
    CHECK(r.scores.rows() == 10);
    CHECK(r.scores.cols() == 10);
  }
}

TEST_SUITE("stationary_covariance") {
  TEST_CASE("no dynamics") {
    const MatrixXd theta = mat({{2, 0.5}, {0.5, 1}});
    CHECK(max_abs_diff(stationary_covariance(MatrixXd::Zero(2, 2), theta).values, theta) < 1e-15);
  }

  TEST_CASE("scalar AR(1) closed form") {
    const CovMatrix s = stationary_covariance(0.5 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2));
    CHECK(max_abs_diff(s.values, (4.0 / 3.0) * MatrixXd::Identity(2, 2)) < 1e-14);
  }

  TEST_CASE("agrees with the fixed-point iteration") {
    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 50; ++rep) {
      const MatrixXd b = oracle::random_stable(4, rng, 0.8);
      const MatrixXd theta = oracle::random_spd(4, rng);
      CHECK(max_abs_diff(stationary_covariance(b, theta).values, oracle::fixed_point_stationary(b, theta)) < 1e-8);
    }
  }

  TEST_CASE("explosive B") {
    CHECK_ERROR_CODE(stationary_covariance(1.01 * MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)),
                     ErrorCode::NonStationary);
  }
}

TEST_SUITE("standardize_temporal") {
  TEST_CASE("unit-variance process is left alone") {
    const MatrixXd b = mat({{0.3, 0.2}, {-0.1, 0.4}});
    GvarModel m;
    m.beta = b;
    m.theta = MatrixXd::Identity(2, 2) - b * b.transpose();
    CHECK(max_abs_diff(standardize_temporal(m), b) < 1e-12);
  }

  TEST_CASE("rescaling a variable leaves the standardized matrix unchanged") {
    std::mt19937_64 rng(13);
    GvarModel m;
    m.beta = oracle::random_stable(3, rng, 0.7);
    m.theta = oracle::random_spd(3, rng);
    const MatrixXd d = VectorXd{{1.0, 2.0, 1.0}}.asDiagonal();
    GvarModel scaled;
    scaled.beta = d * m.beta * d.inverse();
    scaled.theta = d * m.theta * d;
    CHECK(scaled.beta(1, 0) == doctest::Approx(2.0 * m.beta(1, 0)));
    CHECK(scaled.beta(0, 1) == doctest::Approx(0.5 * m.beta(0, 1)));
    CHECK(max_abs_diff(standardize_temporal(scaled), standardize_temporal(m)) < 1e-12);
  }

  TEST_CASE("two variables by hand") {
    GvarModel m;
    m.beta = mat({{0.5, 0.2}, {0.1, 0.3}});
    m.theta = MatrixXd::Identity(2, 2);
    const MatrixXd s = oracle::fixed_point_stationary(m.beta, m.theta, 2000);
    const double sd0 = std::sqrt(s(0, 0)), sd1 = std::sqrt(s(1, 1));
    const MatrixXd out = standardize_temporal(m);
    CHECK(out(0, 0) == doctest::Approx(0.5));
    CHECK(out(0, 1) == doctest::Approx(0.2 * sd1 / sd0).epsilon(1e-12));
    CHECK(out(1, 0) == doctest::Approx(0.1 * sd0 / sd1).epsilon(1e-12));
  }
}
