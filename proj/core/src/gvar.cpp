#include "mlgvar/gvar.hpp"

#include "mlgvar/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mlgvar {

TimeSeries TimeSeries::from_matrix(MatrixXd values, std::optional<std::vector<long>> day) {
  TimeSeries ts;
  ts.missing = values.array().isNaN();
  ts.values = std::move(values);
  ts.day = std::move(day);
  return ts;
}

LaggedDesign build_lagged_design(const TimeSeries& series, DayPolicy day_policy, MissingPolicy) {
  const Eigen::Index t_count = series.occasions();
  const Eigen::Index m = series.variables();
  if (t_count < 2) throw Error(ErrorCode::InsufficientData, "time series needs at least 2 occasions");
  if (series.missing.rows() != t_count || series.missing.cols() != m)
    throw Error(ErrorCode::ShapeMismatch, "missing mask shape does not match values");
  if (series.day && static_cast<Eigen::Index>(series.day->size()) != t_count)
    throw Error(ErrorCode::ShapeMismatch, "day index length does not match occasions");

  std::vector<Eigen::Index> keep;
  for (Eigen::Index t = 1; t < t_count; ++t) {
    if (day_policy == DayPolicy::Break && series.day && (*series.day)[t] != (*series.day)[t - 1]) continue;
    if (series.missing.row(t).any() || series.missing.row(t - 1).any()) continue;
    keep.push_back(t);
  }
  if (keep.empty()) throw Error(ErrorCode::InsufficientData, "no usable lagged pairs");

  LaggedDesign d;
  d.current.resize(static_cast<Eigen::Index>(keep.size()), m);
  d.lagged.resize(static_cast<Eigen::Index>(keep.size()), m);
  for (std::size_t r = 0; r < keep.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    d.current.row(row) = series.values.row(keep[r]);
    d.lagged.row(row) = series.values.row(keep[r] - 1);
  }
  d.occasion = std::move(keep);
  return d;
}

LaggedDesign stack_designs(std::span<const LaggedDesign> designs) {
  Eigen::Index rows = 0;
  Eigen::Index m = -1;
  for (const auto& d : designs) {
    if (m >= 0 && d.variables() != m) throw Error(ErrorCode::ShapeMismatch, "designs differ in width");
    m = d.variables();
    rows += d.rows();
  }
  LaggedDesign out;
  if (m < 0) return out;
  out.current.resize(rows, m);
  out.lagged.resize(rows, m);
  Eigen::Index r = 0;
  for (const auto& d : designs) {
    out.current.middleRows(r, d.rows()) = d.current;
    out.lagged.middleRows(r, d.rows()) = d.lagged;
    out.occasion.insert(out.occasion.end(), d.occasion.begin(), d.occasion.end());
    r += d.rows();
  }
  return out;
}

namespace {

struct Moments {
  MatrixXd sxx, sxy, syy;
  VectorXd mean_current;
  double n = 0.0;
};

Moments moments(const LaggedDesign& d, bool center) {
  Moments mo;
  mo.n = static_cast<double>(d.rows());
  mo.mean_current = d.current.colwise().mean().transpose();
  MatrixXd x = d.lagged;
  MatrixXd y = d.current;
  if (center) {
    x.rowwise() -= d.lagged.colwise().mean();
    y.rowwise() -= d.current.colwise().mean();
  }
  mo.sxx = linalg::symmetrize(x.transpose() * x / mo.n);
  mo.sxy = x.transpose() * y / mo.n;
  mo.syy = linalg::symmetrize(y.transpose() * y / mo.n);
  return mo;
}

// Residual covariance for coefficients bt (predictors x responses).
MatrixXd residual_cov(const Moments& mo, const MatrixXd& bt) {
  const MatrixXd cross = mo.sxy.transpose() * bt;
  return linalg::symmetrize(mo.syy - cross - cross.transpose() + bt.transpose() * mo.sxx * bt);
}

GvarModel assemble(MatrixXd beta, MatrixXd k, const Moments& mo, std::vector<std::string> labels) {
  GvarModel model;
  const Eigen::Index m = beta.rows();
  model.temporal_included = beta.array() != 0.0;
  model.beta = std::move(beta);
  model.theta = linalg::symmetrize(k.ldlt().solve(MatrixXd::Identity(m, m)));
  model.theta_precision.values = std::move(k);
  model.contemporaneous = partial_correlations(model.theta_precision, std::move(labels));
  model.means = mo.mean_current;
  model.rows_used = static_cast<long>(mo.n);
  return model;
}

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

double l1_offdiag(const MatrixXd& k) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j)
      if (i != j) s += std::abs(k(i, j));
  return s;
}

double mrce_objective(const Moments& mo, const MatrixXd& bt, const MatrixXd& k, double lb, double lk) {
  const MatrixXd sr = residual_cov(mo, bt);
  return (sr * k).trace() - linalg::log_det_spd(k) + lb * bt.cwiseAbs().sum() + lk * l1_offdiag(k);
}

// Coordinate descent on bt for fixed K. grad_part tracks Sxx * bt * K.
void beta_step(const Moments& mo, const MatrixXd& k, double lambda, MatrixXd& bt, const MrceOptions& opt) {
  const Eigen::Index p = bt.rows();
  const Eigen::Index q = bt.cols();
  const MatrixXd sxy_k = mo.sxy * k;
  MatrixXd sbk = mo.sxx * bt * k;
  for (int sweep = 0; sweep < opt.max_inner_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index c = 0; c < q; ++c) {
      for (Eigen::Index r = 0; r < p; ++r) {
        const double a = mo.sxx(r, r) * k(c, c);
        if (!(a > 0.0)) continue;
        const double g = -2.0 * sxy_k(r, c) + 2.0 * sbk(r, c);
        const double old = bt(r, c);
        const double updated = soft_threshold(2.0 * a * old - g, lambda) / (2.0 * a);
        if (updated != old) {
          const double delta = updated - old;
          bt(r, c) = updated;
          sbk.noalias() += delta * mo.sxx.col(r) * k.row(c);
          max_change = std::max(max_change, std::abs(delta));
        }
      }
    }
    if (max_change < opt.inner_tolerance) return;
  }
}

}  // namespace

GvarModel fit_var_ols(const LaggedDesign& design, bool center, std::vector<std::string> labels) {
  const Eigen::Index m = design.variables();
  const Eigen::Index n = design.rows();
  if (n <= m + 1) throw Error(ErrorCode::InsufficientData, "VAR fit needs more rows than m + 1");
  const Moments mo = moments(design, center);
  const Eigen::LDLT<MatrixXd> ldlt(mo.sxx);
  if (ldlt.info() != Eigen::Success || linalg::condition_number_sym(mo.sxx) > 1e12)
    throw Error(ErrorCode::SingularDesign, "lagged design is rank deficient");
  const MatrixXd bt = ldlt.solve(mo.sxy);
  const MatrixXd sr = residual_cov(mo, bt);
  const PrecisionMatrix k = precision_from_covariance({sr, static_cast<long>(n)});
  return assemble(bt.transpose(), k.values, mo, std::move(labels));
}

MrceFit mrce_fit(const LaggedDesign& design, double lambda_beta, double lambda_kappa, const MrceOptions& options,
                 const MrceFit* warm, bool center, std::vector<std::string> labels) {
  const Eigen::Index m = design.variables();
  if (design.rows() < 2) throw Error(ErrorCode::InsufficientData, "MRCE needs at least 2 rows");
  if (lambda_beta < 0.0 || lambda_kappa < 0.0) throw Error(ErrorCode::ConfigInvalid, "penalties must be >= 0");
  const Moments mo = moments(design, center);

  MatrixXd bt;
  GlassoFit kfit;
  if (warm != nullptr && warm->beta_t.rows() == m) {
    bt = warm->beta_t;
    kfit = warm->k_fit;
  } else {
    bt = MatrixXd::Zero(m, m);
    kfit.covariance = mo.syy.diagonal().asDiagonal();
    kfit.precision.values = mo.syy.diagonal().cwiseInverse().asDiagonal();
  }

  MrceFit fit;
  double previous = mrce_objective(mo, bt, kfit.precision.values, lambda_beta, lambda_kappa);
  bool converged = false;
  for (int it = 0; it < options.max_outer_iterations; ++it) {
    const MatrixXd bt_old = bt;
    const MatrixXd k_old = kfit.precision.values;
    beta_step(mo, kfit.precision.values, lambda_beta, bt, options);
    const CovMatrix sr{residual_cov(mo, bt), static_cast<long>(mo.n)};
    kfit = glasso(sr, lambda_kappa, options.glasso, &kfit);
    const double obj = mrce_objective(mo, bt, kfit.precision.values, lambda_beta, lambda_kappa);
    fit.objective_trace.push_back(obj);
    fit.iterations = it + 1;
    if (obj > previous + 1e-8 * (1.0 + std::abs(previous))) {
      throw ConvergenceError("MRCE objective increased between outer iterations", bt.transpose(),
                             fit.objective_trace);
    }
    previous = obj;
    const double change = std::max((bt - bt_old).cwiseAbs().maxCoeff(),
                                   (kfit.precision.values - k_old).cwiseAbs().maxCoeff());
    if (change < options.tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw ConvergenceError("MRCE did not converge", bt.transpose(), fit.objective_trace);
  }
  fit.beta_t = bt;
  fit.k_fit = kfit;
  fit.model = assemble(bt.transpose(), kfit.precision.values, mo, std::move(labels));
  return fit;
}

double gvar_ebic(const GvarModel& model, const MatrixXd& residual_cov, double n, double gamma) {
  const double m = static_cast<double>(model.beta.rows());
  const double e = static_cast<double>((model.beta.array() != 0.0).count() +
                                       offdiag_nonzeros(model.theta_precision.values));
  const double ll = gaussian_loglik(model.theta_precision.values, residual_cov, n);
  return -2.0 * ll + e * std::log(n) + 4.0 * e * gamma * std::log(m * m);
}

GvarSearchResult gvar_ebic_search(const LaggedDesign& design, const GvarSearchOptions& options,
                                  std::vector<std::string> labels) {
  const Eigen::Index m = design.variables();
  const Moments mo = moments(design, options.center);
  GvarSearchResult result;

  auto max_offdiag = [](const MatrixXd& s) {
    double v = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i)
      for (Eigen::Index j = i + 1; j < s.cols(); ++j) v = std::max(v, std::abs(s(i, j)));
    return v;
  };

  if (options.grid_kappa.empty() || options.grid_beta.empty()) {
    // Largest penalties that still give an empty model at B = 0.
    double kappa_max = max_offdiag(mo.syy);
    const Eigen::LDLT<MatrixXd> sxx(mo.sxx);
    if (sxx.info() == Eigen::Success && linalg::condition_number_sym(mo.sxx) < 1e12) {
      const MatrixXd bt_ols = sxx.solve(mo.sxy);
      kappa_max = std::max(kappa_max, max_offdiag(residual_cov(mo, bt_ols)));
    }
    const MatrixXd k_diag = mo.syy.diagonal().cwiseInverse().asDiagonal();
    double beta_max = (2.0 * mo.sxy * k_diag).cwiseAbs().maxCoeff();
    if (linalg::condition_number_sym(mo.syy) < 1e12) {
      const MatrixXd k_full = mo.syy.ldlt().solve(MatrixXd::Identity(m, m));
      beta_max = std::max(beta_max, (2.0 * mo.sxy * k_full).cwiseAbs().maxCoeff());
    }
    if (kappa_max <= 0.0) kappa_max = 1.0;
    if (beta_max <= 0.0) beta_max = 1.0;
    result.grid_kappa = options.grid_kappa.empty()
                            ? log_spaced_grid(kappa_max, options.min_ratio, options.grid_kappa_size)
                            : options.grid_kappa;
    result.grid_beta = options.grid_beta.empty()
                           ? log_spaced_grid(beta_max, options.min_ratio, options.grid_beta_size)
                           : options.grid_beta;
  } else {
    result.grid_kappa = options.grid_kappa;
    result.grid_beta = options.grid_beta;
  }
  std::sort(result.grid_kappa.begin(), result.grid_kappa.end(), std::greater<>());
  std::sort(result.grid_beta.begin(), result.grid_beta.end(), std::greater<>());
  if (result.grid_kappa.empty() || result.grid_beta.empty())
    throw Error(ErrorCode::ConfigInvalid, "GVAR tuning grids must be nonempty");

  const auto nk = static_cast<Eigen::Index>(result.grid_kappa.size());
  const auto nb = static_cast<Eigen::Index>(result.grid_beta.size());
  result.scores = MatrixXd::Constant(nk, nb, std::numeric_limits<double>::quiet_NaN());

  std::optional<MrceFit> best;
  double best_score = std::numeric_limits<double>::infinity();
  long best_edges = std::numeric_limits<long>::max();
  std::optional<MrceFit> row_start;
  std::optional<Error> last_error;
  for (Eigen::Index a = 0; a < nk; ++a) {
    std::optional<MrceFit> previous = row_start;
    for (Eigen::Index b = 0; b < nb; ++b) {
      const double lk = result.grid_kappa[static_cast<std::size_t>(a)];
      const double lb = result.grid_beta[static_cast<std::size_t>(b)];
      try {
        MrceFit fit = mrce_fit(design, lb, lk, options.mrce, previous ? &*previous : nullptr, options.center, labels);
        const MatrixXd sr = residual_cov(mo, fit.beta_t);
        const double score = gvar_ebic(fit.model, sr, mo.n, options.gamma);
        result.scores(a, b) = score;
        const long edges = static_cast<long>((fit.model.beta.array() != 0.0).count()) +
                           offdiag_nonzeros(fit.model.theta_precision.values);
        if (score < best_score || (score == best_score && edges < best_edges)) {
          best_score = score;
          best_edges = edges;
          best = fit;
          result.lambda_beta = lb;
          result.lambda_kappa = lk;
        }
        if (b == 0) row_start = fit;
        previous = std::move(fit);
      } catch (const Error& e) {
        last_error = e;
        previous.reset();
      }
    }
  }
  if (!best) {
    throw ConvergenceError(std::string("every GVAR grid cell failed: ") + (last_error ? last_error->what() : ""),
                           MatrixXd());
  }
  result.model = std::move(best->model);
  return result;
}

CovMatrix stationary_covariance(const MatrixXd& beta, const MatrixXd& theta) {
  const Eigen::Index m = beta.rows();
  if (beta.cols() != m || theta.rows() != m || theta.cols() != m)
    throw Error(ErrorCode::ShapeMismatch, "stationary covariance needs square B and Theta of equal size");
  const double radius = linalg::spectral_radius(beta);
  if (!(radius < 1.0)) {
    throw Error(ErrorCode::NonStationary, "spectral radius of B is " + std::to_string(radius) + " (>= 1)");
  }
  const Eigen::Index mm = m * m;
  MatrixXd system = MatrixXd::Identity(mm, mm);
  // (B (x) B)(i*m + k, j*m + l) = B(i, j) B(k, l) for column-major Vec.
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < m; ++i) {
      const double bij = beta(i, j);
      if (bij == 0.0) continue;
      system.block(i * m, j * m, m, m) -= bij * beta;
    }
  const Eigen::PartialPivLU<MatrixXd> lu(system);
  const Eigen::Map<const VectorXd> vec_theta(theta.data(), mm);
  VectorXd vec_sigma = lu.solve(vec_theta);
  // Two rounds of iterative refinement on the defining equation.
  for (int r = 0; r < 2; ++r) {
    const VectorXd residual = vec_theta - system * vec_sigma;
    vec_sigma += lu.solve(residual);
  }
  MatrixXd sigma = Eigen::Map<MatrixXd>(vec_sigma.data(), m, m);
  return {linalg::symmetrize(sigma), 0};
}

MatrixXd standardize_temporal(const GvarModel& model) {
  const CovMatrix sigma = stationary_covariance(model.beta, model.theta);
  const VectorXd sd = sigma.values.diagonal().cwiseSqrt();
  MatrixXd out = model.beta;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = model.beta(i, j) * sd(j) / sd(i);
  return out;
}

}  // namespace mlgvar
