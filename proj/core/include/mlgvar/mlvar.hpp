#pragma once

// Multilevel graphical VAR for panels of several subjects.
//
// Two-step estimation: (1) per variable, a univariate mixed model of y_t on
// the within-centered lag-1 values plus the other variables' subject means;
// (2) per variable, a mixed model of its step-1 residual on the other
// residuals at the same occasion. Nodewise coefficients are standardized and
// averaged into undirected networks.

#include "mlgvar/gvar.hpp"
#include "mlgvar/lmm.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mlgvar {

struct PanelData {
  std::vector<std::string> ids;
  std::vector<TimeSeries> subjects;
  std::vector<std::string> labels;

  std::size_t size() const { return subjects.size(); }
  Eigen::Index variables() const { return subjects.empty() ? 0 : subjects.front().variables(); }
};

/// Throws ShapeMismatch when subjects disagree on the number of variables.
void check_panel(const PanelData& panel);

struct CenteredPanel {
  PanelData centered;
  MatrixXd subject_means;  // subjects x variables
};

/// Subtracts each subject's per-variable mean of the non-missing cells.
/// Throws InsufficientData naming the subject and variable when a column is
/// entirely missing.
CenteredPanel within_center(const PanelData& panel);

enum class Rule { And, Or };
Rule parse_rule(std::string_view text);
std::string_view to_string(Rule rule);

enum class Adjustment { None, Bonferroni, Holm };
Adjustment parse_adjustment(std::string_view text);
std::string_view to_string(Adjustment adjustment);

struct MlVarOptions {
  RandomSpec temporal_random = RandomSpec::Correlated;
  RandomSpec contemporaneous_random = RandomSpec::Correlated;
  DayPolicy day_policy = DayPolicy::Break;
  LmmOptions lmm;
};

struct MlVarFit {
  std::vector<std::string> labels;
  std::vector<std::string> subject_ids;

  MatrixXd temporal_fixed;  // row = response at t, column = predictor at t-1
  MatrixXd temporal_se;
  MatrixXd temporal_p;
  MatrixXd temporal_sd;  // random-effect standard deviations
  std::vector<MatrixXd> temporal_subject;

  /// Saturated standardized fixed effects; p-values carry the pair per edge:
  /// contemporaneous_p(i, j) belongs to the regression of i on j.
  GgmNetwork contemporaneous_fixed;
  MatrixXd contemporaneous_p;
  MatrixXd contemporaneous_sd;
  std::vector<GgmNetwork> contemporaneous_subject;
  std::vector<bool> contemporaneous_subject_valid;  // implied precision is PD

  GgmNetwork between;
  MatrixXd between_p;
  bool between_available = false;

  MatrixXd subject_means;
  VectorXd residual_variances;  // step-2 level-1 residual variances
  std::vector<std::string> node_errors;
};

struct Step1Result {
  MatrixXd temporal_fixed, temporal_se, temporal_p, temporal_sd;
  std::vector<MatrixXd> temporal_subject;
  MatrixXd between_coef;     // B(mu): row i = level-2 coefficients of mean_i
  MatrixXd between_p;
  VectorXd mean_variances;   // random-intercept variances
  bool between_available = false;
  /// Residuals per subject, aligned with the subject's lagged rows.
  std::vector<MatrixXd> residuals;
  std::vector<std::string> node_errors;
};

Step1Result mlvar_step1(const PanelData& panel, const CenteredPanel& centered, RandomSpec random,
                        const MlVarOptions& options = {});

/// Standardized, averaged level-2 network: r_ij = b_ij * sd_j / sd_i, then
/// (r_ij + r_ji) / 2 clamped to [-1, 1].
GgmNetwork between_network(const MatrixXd& b_mu, const VectorXd& residual_variances,
                           std::vector<std::string> labels = {});

struct Step2Result {
  GgmNetwork contemporaneous_fixed;
  MatrixXd contemporaneous_p;
  MatrixXd contemporaneous_sd;
  std::vector<GgmNetwork> contemporaneous_subject;
  std::vector<bool> contemporaneous_subject_valid;
  VectorXd residual_variances;
  std::vector<std::string> node_errors;
};

Step2Result mlvar_step2(std::span<const MatrixXd> residuals, RandomSpec random, const MlVarOptions& options = {},
                        std::vector<std::string> labels = {});

MlVarFit fit_mlvar(const PanelData& panel, const MlVarOptions& options = {});

/// Keeps an undirected edge when both ("and") or either ("or") of its two
/// p-values fall below alpha. `pvalues(i, j)` and `pvalues(j, i)` form the pair.
GgmNetwork threshold_rule(const GgmNetwork& network, const MatrixXd& pvalues, Rule rule, double alpha,
                          Adjustment adjustment = Adjustment::None);

/// Directed variant for temporal networks: one p-value per edge.
BoolMatrix threshold_temporal(const MatrixXd& pvalues, double alpha, Adjustment adjustment = Adjustment::None);

/// Multiplicity-adjusted p-values over the finite entries of `pvalues`
/// (diagonal ignored when `skip_diagonal`).
MatrixXd adjust_pvalues(const MatrixXd& pvalues, Adjustment adjustment, bool skip_diagonal);

// Pooled and individual LASSO: GVAR on the pooled within-centered rows, GGM on
// the subject means, and an independent GVAR per subject.

struct PooledLassoOptions {
  GvarSearchOptions gvar;
  EbicGlassoOptions between;
  DayPolicy day_policy = DayPolicy::Break;
  /// Number of subjects (in panel order) that get an individual fit; negative
  /// means all.
  long individual_limit = -1;
};

struct PooledLassoFit {
  std::vector<std::string> labels;
  std::vector<std::string> subject_ids;
  GvarSearchResult pooled;
  std::optional<EbicGlassoResult> between;  // unavailable with one subject
  std::vector<std::optional<GvarSearchResult>> subjects;
  std::vector<std::string> subject_errors;  // empty string on success
  MatrixXd subject_means;
};

PooledLassoFit pooled_individual_lasso(const PanelData& panel, const PooledLassoOptions& options = {});

}  // namespace mlgvar
