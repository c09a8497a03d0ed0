#include "mlgvar/error.hpp"
#include "mlgvar/mlvar.hpp"

namespace mlgvar {

PooledLassoFit pooled_individual_lasso(const PanelData& panel, const PooledLassoOptions& options) {
  check_panel(panel);
  const Eigen::Index m = panel.variables();
  const CenteredPanel centered = within_center(panel);

  PooledLassoFit out;
  out.labels = panel.labels.size() == static_cast<std::size_t>(m) ? panel.labels : default_labels(m);
  out.subject_ids = panel.ids;
  out.subject_means = centered.subject_means;

  std::vector<LaggedDesign> designs;
  std::vector<std::optional<LaggedDesign>> per_subject(panel.size());
  for (std::size_t p = 0; p < panel.size(); ++p) {
    try {
      per_subject[p] = build_lagged_design(centered.centered.subjects[p], options.day_policy);
      designs.push_back(*per_subject[p]);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::InsufficientData) throw;
    }
  }
  if (designs.empty()) throw Error(ErrorCode::InsufficientData, "no subject has usable lagged pairs");

  // Data are already within-centered, so no further centering on the pooled rows.
  GvarSearchOptions pooled_opts = options.gvar;
  pooled_opts.center = false;
  out.pooled = gvar_ebic_search(stack_designs(designs), pooled_opts, out.labels);

  if (panel.size() >= 2) {
    CovMatrix s = sample_covariance(centered.subject_means);
    out.between = ebic_glasso(s, options.between, out.labels);
  }

  const std::size_t limit =
      options.individual_limit < 0 ? panel.size() : std::min(panel.size(), static_cast<std::size_t>(options.individual_limit));
  out.subjects.resize(panel.size());
  out.subject_errors.assign(panel.size(), "");
  for (std::size_t p = 0; p < panel.size(); ++p) {
    if (p >= limit) {
      out.subject_errors[p] = "not estimated";
      continue;
    }
    if (!per_subject[p]) {
      out.subject_errors[p] = "no usable lagged pairs";
      continue;
    }
    try {
      out.subjects[p] = gvar_ebic_search(*per_subject[p], pooled_opts, out.labels);
    } catch (const Error& e) {
      out.subject_errors[p] = std::string(to_string(e.code())) + ": " + e.what();
    }
  }
  return out;
}

}  // namespace mlgvar
