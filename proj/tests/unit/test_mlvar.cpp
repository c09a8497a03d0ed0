#include "helpers.hpp"
#include "oracles.hpp"

#include <mlgvar/mlvar.hpp>
#include <mlgvar/simulation.hpp>

#include <random>

using namespace mlgvar;
using testing::mat;
using testing::max_abs_diff;

namespace {

// Independent normal occasions around a subject-specific mean.
PanelData noise_panel(int subjects, int occasions, int m, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  PanelData p;
  p.labels = default_labels(m);
  for (int s = 0; s < subjects; ++s) {
    MatrixXd v(occasions, m);
    const VectorXd mu = VectorXd::NullaryExpr(m, [&](Eigen::Index) { return z(rng); });
    for (int t = 0; t < occasions; ++t)
      for (int j = 0; j < m; ++j) v(t, j) = mu(j) + z(rng);
    p.ids.push_back(std::to_string(s + 1));
    p.subjects.push_back(TimeSeries::from_matrix(v));
  }
  return p;
}

std::vector<MatrixXd> noise_residuals(int subjects, int rows, int m, std::mt19937_64& rng) {
  std::normal_distribution<double> z;
  std::vector<MatrixXd> out;
  for (int s = 0; s < subjects; ++s) out.push_back(MatrixXd::NullaryExpr(rows, m, [&](Eigen::Index, Eigen::Index) {
    return z(rng);
  }));
  return out;
}

GgmNetwork pair_network(double w) {
  GgmNetwork n = GgmNetwork::empty(2);
  n.partials(0, 1) = n.partials(1, 0) = w;
  n.included(0, 1) = n.included(1, 0) = true;
  return n;
}

}  // namespace

TEST_SUITE("within_center") {
  TEST_CASE("constant series") {
    PanelData p;
    p.labels = {"a", "b"};
    p.ids = {"1", "2"};
    p.subjects = {TimeSeries::from_matrix(mat({{1, 2}, {1, 2}, {1, 2}})),
                  TimeSeries::from_matrix(mat({{-3, 0.5}, {-3, 0.5}}))};
    const CenteredPanel c = within_center(p);
    CHECK(c.centered.subjects[0].values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(c.centered.subjects[1].values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(max_abs_diff(c.subject_means, mat({{1, 2}, {-3, 0.5}})) == 0.0);
  }

  TEST_CASE("shift invariance") {
    std::mt19937_64 rng(1);
    PanelData p = noise_panel(1, 20, 3, rng);
    p.ids.push_back("2");
    p.subjects.push_back(TimeSeries::from_matrix(p.subjects[0].values.array() + 5.0));
    const CenteredPanel c = within_center(p);
    CHECK(max_abs_diff(c.centered.subjects[0].values, c.centered.subjects[1].values) < 1e-12);
    CHECK(c.subject_means(1, 0) - c.subject_means(0, 0) == doctest::Approx(5.0));
  }

  TEST_CASE("grand mean is preserved on a balanced panel") {
    std::mt19937_64 rng(2);
    const PanelData p = noise_panel(7, 15, 4, rng);
    const CenteredPanel c = within_center(p);
    VectorXd raw = VectorXd::Zero(4);
    for (const auto& s : p.subjects) raw += s.values.colwise().sum().transpose();
    raw /= 7.0 * 15.0;
    CHECK(max_abs_diff(c.subject_means.colwise().mean().transpose(), raw) < 1e-12);
  }

  TEST_CASE("missing cells stay missing") {
    MatrixXd v = mat({{1, 2}, {3, 4}, {5, 6}});
    v(1, 1) = std::numeric_limits<double>::quiet_NaN();
    PanelData p{{"1"}, {TimeSeries::from_matrix(v)}, {"a", "b"}};
    const CenteredPanel c = within_center(p);
    CHECK(c.centered.subjects[0].missing(1, 1));
    CHECK(c.subject_means(0, 1) == doctest::Approx(4.0));
  }
}

TEST_SUITE("mlvar_step1") {
  TEST_CASE("no dynamics: nominal type-I rate") {
    int significant = 0, tested = 0;
    for (int seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      const PanelData p = noise_panel(20, 200, 3, rng);
      const Step1Result r = mlvar_step1(p, within_center(p), RandomSpec::Correlated);
      significant += static_cast<int>((r.temporal_p.array() < 0.05).count());
      tested += static_cast<int>(r.temporal_p.size());
    }
    CHECK(static_cast<double>(significant) / tested <= 0.05);
  }

  TEST_CASE("within-centering biases autoregressive effects by about -1/T") {
    double sum = 0.0;
    for (int seed = 0; seed < 50; ++seed) {
      std::mt19937_64 rng(seed);
      const PanelData p = noise_panel(50, 40, 3, rng);
      sum += mlvar_step1(p, within_center(p), RandomSpec::Correlated).temporal_fixed.diagonal().mean();
    }
    const double bias = sum / 50.0;
    CHECK(bias < -0.5 / 40.0);
    CHECK(bias > -1.5 / 40.0);
  }

  TEST_CASE("chain condition, 8 nodes, 100 subjects x 100 occasions") {
    SimStudyConfig c;
    double sens = 0.0, spec = 0.0;
    const int seeds = 3;
    for (int seed = 0; seed < seeds; ++seed) {
      c.seed = static_cast<std::uint64_t>(100 + seed);
      const SimulatedData sim = simulate_replication(c, 0);
      const Step1Result r = mlvar_step1(sim.panel, within_center(sim.panel), RandomSpec::Correlated);
      const MatrixXd est = r.temporal_fixed.array() * threshold_temporal(r.temporal_p, 0.05).cast<double>().array();
      const Metrics m = score_network(sim.truth.temporal_fixed, est, true);
      sens += m.sensitivity;
      spec += m.specificity;
    }
    CHECK(sens / seeds >= 0.8);
    CHECK(spec / seeds >= 0.8);
  }

  TEST_CASE("one subject with the fixed spec is the centered VAR") {
    std::mt19937_64 rng(3);
    SimStudyConfig c;
    c.nodes = 4;
    c.subjects = 1;
    c.occasions = 300;
    const SimulatedData sim = simulate_replication(c, 0);
    const CenteredPanel centered = within_center(sim.panel);
    const Step1Result r = mlvar_step1(sim.panel, centered, RandomSpec::Fixed);
    const GvarModel ols = fit_var_ols(build_lagged_design(centered.centered.subjects[0]));
    CHECK(max_abs_diff(r.temporal_fixed, ols.beta) < 1e-6);
    CHECK_FALSE(r.between_available);
  }
}

TEST_SUITE("between_network") {
  TEST_CASE("no level-2 coefficients") {
    const GgmNetwork n = between_network(MatrixXd::Zero(4, 4), VectorXd::Ones(4));
    CHECK(n.edge_count() == 0);
  }

  TEST_CASE("averaging rule") {
    const GgmNetwork n = between_network(mat({{0, 0.4}, {0.2, 0}}), VectorXd::Ones(2));
    CHECK(n.partials(0, 1) == doctest::Approx(0.3));
    CHECK(n.partials(1, 0) == doctest::Approx(0.3));
  }

  TEST_CASE("standardization by residual standard deviations") {
    // b_01 * sd_1 / sd_0 = 0.2 * 2 / 1, b_10 * sd_0 / sd_1 = 0.8 / 2
    const GgmNetwork n = between_network(mat({{0, 0.2}, {0.8, 0}}), VectorXd{{1.0, 4.0}});
    CHECK(n.partials(0, 1) == doctest::Approx(0.4));
  }

  TEST_CASE("recovers a sparse GGM of subject means") {
    std::mt19937_64 rng(4);
    const MatrixXd k = mat({{1, -0.4, 0, 0}, {-0.4, 1, 0.3, 0}, {0, 0.3, 1, 0.25}, {0, 0, 0.25, 1}});
    const GgmNetwork truth = partial_correlations({k});
    const MatrixXd means = oracle::gaussian_sample(k.inverse(), 2000, rng);
    const NodewiseRegression reg = nodewise_ols(means);
    const GgmNetwork n = between_network(reg.gamma, reg.residual_variances);
    CHECK(max_abs_diff(n.partials, truth.partials) < 0.05);
  }
}

TEST_SUITE("mlvar_step2") {
  TEST_CASE("independent residuals: nominal per-edge error rate") {
    int edges = 0, slots = 0, empty_pairs = 0;
    for (int seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      const Step2Result r = mlvar_step2(noise_residuals(30, 50, 4, rng), RandomSpec::Correlated);
      edges += threshold_rule(r.contemporaneous_fixed, r.contemporaneous_p, Rule::And, 0.05).edge_count();
      slots += 6;
      const Step2Result two = mlvar_step2(noise_residuals(30, 50, 2, rng), RandomSpec::Correlated);
      empty_pairs += threshold_rule(two.contemporaneous_fixed, two.contemporaneous_p, Rule::And, 0.05).edge_count() == 0;
    }
    CHECK(static_cast<double>(edges) / slots <= 0.05);
    CHECK(empty_pairs >= 90);
  }

  TEST_CASE("chain contemporaneous generator: recovered signs are correct") {
    SimStudyConfig c;
    c.nodes = 6;
    c.subjects = 30;
    int recovered = 0, wrong = 0;
    for (int seed = 0; seed < 100; ++seed) {
      c.seed = static_cast<std::uint64_t>(seed);
      std::mt19937_64 rng(c.seed);
      const TrueModel truth = build_true_model(c, rng);
      std::vector<MatrixXd> residuals;
      for (std::size_t p = 0; p < truth.subjects(); ++p)
        residuals.push_back(oracle::gaussian_sample(truth.theta[p], 50, rng));
      const Step2Result r = mlvar_step2(residuals, RandomSpec::Correlated);
      const GgmNetwork net = threshold_rule(r.contemporaneous_fixed, r.contemporaneous_p, Rule::And, 0.05);
      for (int i = 0; i < 6; ++i)
        for (int j = i + 1; j < 6; ++j) {
          const double t = truth.contemporaneous_fixed(i, j);
          if (t == 0.0 || !net.included(i, j)) continue;
          ++recovered;
          wrong += net.partials(i, j) * t < 0.0;
        }
    }
    CHECK(recovered > 0);
    CHECK(wrong == 0);
  }

  TEST_CASE("one subject with the fixed spec equals nodewise regressions") {
    std::mt19937_64 rng(5);
    const MatrixXd e = oracle::gaussian_sample(oracle::random_spd(4, rng), 200, rng);
    const MatrixXd residuals[] = {e};
    const Step2Result r = mlvar_step2(residuals, RandomSpec::Fixed);
    const GgmNetwork direct = partial_correlations(regression_to_precision(nodewise_ols(e)).precision);
    CHECK(max_abs_diff(r.contemporaneous_fixed.partials, direct.partials) < 1e-6);
  }
}

TEST_SUITE("threshold_rule") {
  TEST_CASE("printed pair survives both rules") {
    const MatrixXd p = mat({{0, 0.046}, {0.036, 0}});
    CHECK(threshold_rule(pair_network(0.2), p, Rule::And, 0.05).edge_count() == 1);
    CHECK(threshold_rule(pair_network(0.2), p, Rule::Or, 0.05).edge_count() == 1);
  }

  TEST_CASE("rules differ when one p-value is large") {
    const MatrixXd p = mat({{0, 0.01}, {0.2, 0}});
    CHECK(threshold_rule(pair_network(0.2), p, Rule::And, 0.05).edge_count() == 0);
    CHECK(threshold_rule(pair_network(0.2), p, Rule::Or, 0.05).edge_count() == 1);
  }

  TEST_CASE("alpha = 1 keeps every edge") {
    const MatrixXd p = mat({{0, 0.9}, {0.99, 0}});
    CHECK(threshold_rule(pair_network(0.2), p, Rule::And, 1.0).edge_count() == 1);
  }

  TEST_CASE("and is a subset of or") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u;
    for (int rep = 0; rep < 200; ++rep) {
      GgmNetwork n = GgmNetwork::empty(5);
      MatrixXd p(5, 5);
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
          p(i, j) = u(rng) * 0.2;
          if (i < j) {
            n.partials(i, j) = n.partials(j, i) = u(rng) - 0.5;
            n.included(i, j) = n.included(j, i) = true;
          }
        }
      const GgmNetwork a = threshold_rule(n, p, Rule::And, 0.05);
      const GgmNetwork o = threshold_rule(n, p, Rule::Or, 0.05);
      CHECK((a.included.array() && !o.included.array()).count() == 0);
      check_network_invariants(a);
    }
  }

  TEST_CASE("names") {
    CHECK(parse_rule("or") == Rule::Or);
    CHECK(to_string(Rule::And) == "and");
    CHECK_ERROR_CODE(parse_rule("xor"), ErrorCode::ConfigInvalid);
    CHECK(parse_adjustment("holm") == Adjustment::Holm);
  }
}

TEST_SUITE("adjust_pvalues") {
  TEST_CASE("Bonferroni multiplies by the number of tests") {
    const MatrixXd p = mat({{0.5, 0.01}, {0.02, 0.5}});
    const MatrixXd a = adjust_pvalues(p, Adjustment::Bonferroni, true);
    CHECK(a(0, 1) == doctest::Approx(0.02));
    CHECK(a(1, 0) == doctest::Approx(0.04));
    CHECK(a(0, 0) == 0.5);
  }

  TEST_CASE("Holm step-down") {
    const MatrixXd p = mat({{0.01, 0.04, 0.03}});
    const MatrixXd a = adjust_pvalues(p, Adjustment::Holm, false);
    CHECK(a(0, 0) == doctest::Approx(0.03));
    CHECK(a(0, 2) == doctest::Approx(0.06));
    CHECK(a(0, 1) == doctest::Approx(0.06));
  }

  TEST_CASE("adjusted thresholding is never looser") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u;
    const MatrixXd p = MatrixXd::NullaryExpr(6, 6, [&](Eigen::Index, Eigen::Index) { return u(rng) * 0.1; });
    const BoolMatrix none = threshold_temporal(p, 0.05);
    const BoolMatrix holm = threshold_temporal(p, 0.05, Adjustment::Holm);
    CHECK((holm.array() && !none.array()).count() == 0);
  }
}

TEST_SUITE("fit_mlvar") {
  TEST_CASE("shapes and labels") {
    std::mt19937_64 rng(8);
    const PanelData p = noise_panel(15, 30, 3, rng);
    const MlVarFit f = fit_mlvar(p);
    CHECK(f.temporal_fixed.rows() == 3);
    CHECK(f.temporal_subject.size() == 15);
    CHECK(f.contemporaneous_subject.size() == 15);
    CHECK(f.subject_ids == p.ids);
    CHECK(f.between_available);
    check_network_invariants(f.contemporaneous_fixed);
    check_network_invariants(f.between);
  }

  TEST_CASE("subject networks are saturated") {
    std::mt19937_64 rng(9);
    const PanelData p = noise_panel(10, 30, 3, rng);
    const MlVarFit f = fit_mlvar(p);
    for (const MatrixXd& b : f.temporal_subject) CHECK((b.array() != 0.0).all());
  }

  TEST_CASE("bad panels") {
    PanelData empty;
    CHECK_ERROR_CODE(fit_mlvar(empty), ErrorCode::InsufficientData);
    std::mt19937_64 rng(10);
    PanelData p = noise_panel(3, 10, 2, rng);
    p.labels.push_back("extra");
    CHECK_ERROR_CODE(fit_mlvar(p), ErrorCode::ShapeMismatch);
  }
}

TEST_SUITE("pooled_individual_lasso") {
  TEST_CASE("one subject: pooled and individual fits coincide, no between network") {
    SimStudyConfig c;
    c.nodes = 5;
    c.subjects = 1;
    c.occasions = 150;
    const SimulatedData sim = simulate_replication(c, 0);
    const PooledLassoFit f = pooled_individual_lasso(sim.panel);
    REQUIRE(f.subjects.size() == 1);
    REQUIRE(f.subjects[0].has_value());
    CHECK(max_abs_diff(f.pooled.model.beta, f.subjects[0]->model.beta) < 1e-12);
    CHECK(max_abs_diff(f.pooled.model.contemporaneous.partials, f.subjects[0]->model.contemporaneous.partials) < 1e-12);
    CHECK_FALSE(f.between.has_value());
  }

  TEST_CASE("200 x 200 chain condition: fixed networks correlate with truth") {
    SimStudyConfig c;
    c.subjects = 200;
    c.occasions = 200;
    PooledLassoOptions o;
    o.individual_limit = 0;
    double corr = 0.0;
    const int seeds = 2;
    for (int seed = 0; seed < seeds; ++seed) {
      c.seed = static_cast<std::uint64_t>(seed);
      const SimulatedData sim = simulate_replication(c, 0);
      const PooledLassoFit f = pooled_individual_lasso(sim.panel, o);
      corr += score_network(sim.truth.temporal_fixed, f.pooled.model.beta, true).correlation;
      corr += score_network(sim.truth.contemporaneous_fixed, f.pooled.model.contemporaneous.partials, false).correlation;
    }
    CHECK(corr / (2 * seeds) >= 0.9);
  }

  TEST_CASE("10 occasions: individual networks are near-empty") {
    SimStudyConfig c;
    c.subjects = 8;
    c.occasions = 10;
    const SimulatedData sim = simulate_replication(c, 0);
    const PooledLassoFit f = pooled_individual_lasso(sim.panel);
    double sens = 0.0, spec = 0.0;
    int n = 0;
    for (std::size_t p = 0; p < f.subjects.size(); ++p) {
      if (!f.subjects[p]) continue;
      const Metrics m = score_network(sim.truth.beta[p], f.subjects[p]->model.beta, true);
      sens += m.sensitivity;
      spec += m.specificity;
      ++n;
    }
    REQUIRE(n > 0);
    CHECK(sens / n < 0.5);
    CHECK(spec / n >= 0.9);
  }

  TEST_CASE("individual_limit") {
    SimStudyConfig c;
    c.nodes = 4;
    c.subjects = 6;
    c.occasions = 40;
    const SimulatedData sim = simulate_replication(c, 0);
    PooledLassoOptions o;
    o.individual_limit = 2;
    const PooledLassoFit f = pooled_individual_lasso(sim.panel, o);
    CHECK(f.subjects[1].has_value());
    CHECK_FALSE(f.subjects[2].has_value());
    CHECK(f.between.has_value());
  }
}
