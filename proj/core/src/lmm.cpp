#include "mlgvar/lmm.hpp"

#include "mlgvar/error.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_map>

namespace mlgvar {

std::string_view to_string(RandomSpec spec) {
  switch (spec) {
    case RandomSpec::Unique: return "unique";
    case RandomSpec::Correlated: return "correlated";
    case RandomSpec::Orthogonal: return "orthogonal";
    case RandomSpec::Fixed: return "fixed";
  }
  return "fixed";
}

RandomSpec parse_random_spec(std::string_view text) {
  if (text == "unique") return RandomSpec::Unique;
  if (text == "correlated") return RandomSpec::Correlated;
  if (text == "orthogonal") return RandomSpec::Orthogonal;
  if (text == "fixed") return RandomSpec::Fixed;
  throw Error(ErrorCode::ConfigInvalid, "unknown random effects spec '" + std::string(text) + "'");
}

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

struct GroupStats {
  MatrixXd xtx;  // p x p
  VectorXd xty;
  double yty = 0.0;
  Eigen::Index n = 0;
};

// Sufficient statistics; the random design is the first q columns of X.
struct Problem {
  Eigen::Index n = 0, p = 0, q = 0;
  MatrixXd xtx;
  VectorXd xty;
  double yty = 0.0;
  std::vector<GroupStats> groups;
};

struct Evaluation {
  double deviance = std::numeric_limits<double>::infinity();
  VectorXd beta;
  MatrixXd a_inv;
  double sigma2 = 0.0;
  MatrixXd grad_psi;  // d deviance / d Psi, q x q
  std::vector<MatrixXd> shrink;  // Lambda M^-1 Lambda^T per group
  bool ok = false;
};

Evaluation evaluate(const Problem& pr, const MatrixXd& lambda, bool want_gradient) {
  Evaluation ev;
  const Eigen::Index p = pr.p, q = pr.q;
  MatrixXd a = pr.xtx;
  VectorXd c = pr.xty;
  double yvy = pr.yty;
  double logdet_m = 0.0;
  ev.shrink.resize(pr.groups.size());
  if (q > 0) {
    const MatrixXd iq = MatrixXd::Identity(q, q);
    for (std::size_t g = 0; g < pr.groups.size(); ++g) {
      const GroupStats& gs = pr.groups[g];
      const auto ztz = gs.xtx.topLeftCorner(q, q);
      const auto ztx = gs.xtx.topRows(q);
      const auto zty = gs.xty.head(q);
      const MatrixXd m = iq + lambda.transpose() * ztz * lambda;
      const Eigen::LLT<MatrixXd> llt(m);
      if (llt.info() != Eigen::Success) return ev;
      logdet_m += 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      MatrixXd k = lambda * llt.solve(lambda.transpose());
      const MatrixXd k_ztx = k * ztx;
      a.noalias() -= ztx.transpose() * k_ztx;
      c.noalias() -= k_ztx.transpose() * zty;
      yvy -= zty.dot(k * zty);
      ev.shrink[g] = std::move(k);
    }
  }
  const Eigen::LLT<MatrixXd> a_llt(a);
  if (a_llt.info() != Eigen::Success) return ev;
  ev.beta = a_llt.solve(c);
  const double r2 = yvy - c.dot(ev.beta);
  const double dof = static_cast<double>(pr.n - p);
  if (!(r2 > 0.0) || dof <= 0.0) return ev;
  const double logdet_a = 2.0 * a_llt.matrixLLT().diagonal().array().log().sum();
  ev.sigma2 = r2 / dof;
  ev.deviance = logdet_m + logdet_a + dof * (1.0 + kLog2Pi + std::log(r2 / dof));
  ev.a_inv = a_llt.solve(MatrixXd::Identity(p, p));
  ev.ok = std::isfinite(ev.deviance);

  if (want_gradient && q > 0) {
    ev.grad_psi = MatrixXd::Zero(q, q);
    for (std::size_t g = 0; g < pr.groups.size(); ++g) {
      const GroupStats& gs = pr.groups[g];
      const auto ztz = gs.xtx.topLeftCorner(q, q);
      const auto ztx = gs.xtx.topRows(q);
      const VectorXd ztr = gs.xty.head(q) - ztx * ev.beta;
      const MatrixXd ztz_k = ztz * ev.shrink[g];
      const MatrixXd qg = ztz - ztz_k * ztz;
      const MatrixXd rg = ztx - ztz_k * ztx;
      const VectorXd ug = ztr - ztz_k * ztr;
      ev.grad_psi += qg - rg * ev.a_inv * rg.transpose() - ug * ug.transpose() / ev.sigma2;
    }
  }
  return ev;
}

// Parameter layout: diag of Lambda first, then the strict lower triangle
// (column-major) when correlated. Entries are unconstrained; Psi = Lambda
// Lambda^T does not depend on column signs, and a zero diagonal is a regular
// point, so boundary fits end at finite values.
struct Parameterization {
  Eigen::Index q = 0;
  bool correlated = false;

  Eigen::Index size() const { return correlated ? q + q * (q - 1) / 2 : q; }

  MatrixXd lambda(const VectorXd& theta) const {
    MatrixXd l = MatrixXd::Zero(q, q);
    for (Eigen::Index i = 0; i < q; ++i) l(i, i) = theta(i);
    if (correlated) {
      Eigen::Index k = q;
      for (Eigen::Index j = 0; j < q; ++j)
        for (Eigen::Index i = j + 1; i < q; ++i) l(i, j) = theta(k++);
    }
    return l;
  }

  VectorXd gradient(const MatrixXd& grad_psi, const MatrixXd& l) const {
    const MatrixXd d = 2.0 * grad_psi * l;
    VectorXd g(size());
    for (Eigen::Index i = 0; i < q; ++i) g(i) = d(i, i);
    if (correlated) {
      Eigen::Index k = q;
      for (Eigen::Index j = 0; j < q; ++j)
        for (Eigen::Index i = j + 1; i < q; ++i) g(k++) = d(i, j);
    }
    return g;
  }
};

struct GroupIndex {
  std::vector<int> labels;
  std::vector<std::size_t> of_row;
};

GroupIndex index_groups(std::span<const int> groups) {
  GroupIndex gi;
  std::unordered_map<int, std::size_t> seen;
  gi.of_row.reserve(groups.size());
  for (int label : groups) {
    auto [it, inserted] = seen.try_emplace(label, gi.labels.size());
    if (inserted) gi.labels.push_back(label);
    gi.of_row.push_back(it->second);
  }
  return gi;
}

double p_value(double estimate, double se, PValueMethod method, double dof) {
  if (!std::isfinite(se) || se <= 0.0) return 1.0;
  const double z = estimate / se;
  if (method == PValueMethod::WaldT && dof > 0.0) {
    const boost::math::students_t dist(dof);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(z)));
  }
  return linalg::two_sided_normal_p(z);
}

LmmFit fit_unique(const VectorXd& y, const MatrixXd& xw, const MatrixXd& xb, const std::vector<bool>& keep_b,
                  const GroupIndex& gi, const LmmOptions& options) {
  const Eigen::Index pw = xw.cols();
  const Eigen::Index qw = 1 + pw;
  const std::size_t ng = gi.labels.size();
  std::vector<std::vector<Eigen::Index>> rows(ng);
  for (std::size_t r = 0; r < gi.of_row.size(); ++r) rows[gi.of_row[r]].push_back(static_cast<Eigen::Index>(r));

  LmmFit fit;
  fit.group_labels = gi.labels;
  fit.residuals = VectorXd::Constant(y.size(), std::numeric_limits<double>::quiet_NaN());
  fit.group_residual_variance = VectorXd::Constant(static_cast<Eigen::Index>(ng),
                                                   std::numeric_limits<double>::quiet_NaN());
  std::vector<VectorXd> coefs;
  std::vector<std::size_t> used;
  double rss_total = 0.0;
  Eigen::Index dof_total = 0;
  for (std::size_t g = 0; g < ng; ++g) {
    const auto ng_rows = static_cast<Eigen::Index>(rows[g].size());
    if (ng_rows <= qw) {
      fit.excluded_groups.push_back(gi.labels[g]);
      continue;
    }
    MatrixXd x(ng_rows, qw);
    VectorXd yy(ng_rows);
    for (Eigen::Index r = 0; r < ng_rows; ++r) {
      const Eigen::Index row = rows[g][static_cast<std::size_t>(r)];
      x(r, 0) = 1.0;
      x.row(r).tail(pw) = xw.row(row);
      yy(r) = y(row);
    }
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
    if (qr.rank() < qw) {
      fit.excluded_groups.push_back(gi.labels[g]);
      continue;
    }
    const VectorXd b = qr.solve(yy);
    const VectorXd res = yy - x * b;
    for (Eigen::Index r = 0; r < ng_rows; ++r) fit.residuals(rows[g][static_cast<std::size_t>(r)]) = res(r);
    fit.group_residual_variance(static_cast<Eigen::Index>(g)) = res.squaredNorm() / static_cast<double>(ng_rows - qw);
    rss_total += res.squaredNorm();
    dof_total += ng_rows - qw;
    coefs.push_back(b);
    used.push_back(g);
  }
  if (coefs.size() < 2) throw Error(ErrorCode::InsufficientData, "unique fits need at least 2 usable groups");

  const auto gu = static_cast<Eigen::Index>(coefs.size());
  MatrixXd c(gu, qw);
  for (Eigen::Index g = 0; g < gu; ++g) c.row(g) = coefs[static_cast<std::size_t>(g)].transpose();
  const VectorXd mean = c.colwise().mean().transpose();
  const MatrixXd centered = c.rowwise() - mean.transpose();
  const MatrixXd cov = centered.transpose() * centered / static_cast<double>(gu - 1);

  // Level-2 regression of subject intercepts on the between predictors.
  std::vector<Eigen::Index> bcols;
  for (Eigen::Index j = 0; j < xb.cols(); ++j)
    if (keep_b[static_cast<std::size_t>(j)]) bcols.push_back(j);
  const auto pb = static_cast<Eigen::Index>(bcols.size());
  MatrixXd x2(gu, 1 + pb);
  VectorXd y2(gu);
  for (Eigen::Index g = 0; g < gu; ++g) {
    const Eigen::Index row = rows[used[static_cast<std::size_t>(g)]].front();
    x2(g, 0) = 1.0;
    for (Eigen::Index j = 0; j < pb; ++j) x2(g, 1 + j) = xb(row, bcols[static_cast<std::size_t>(j)]);
    y2(g) = c(g, 0);
  }
  if (gu <= 1 + pb) throw Error(ErrorCode::InsufficientData, "too few usable groups for the between regression");
  const Eigen::ColPivHouseholderQR<MatrixXd> qr2(x2);
  if (qr2.rank() < 1 + pb) throw Error(ErrorCode::SingularDesign, "between-subject design is rank deficient");
  const VectorXd b2 = qr2.solve(y2);
  const double s2_level2 = (y2 - x2 * b2).squaredNorm() / static_cast<double>(gu - 1 - pb);
  const MatrixXd cov_b2 = s2_level2 * (x2.transpose() * x2).inverse();

  const Eigen::Index p = qw + xb.cols();
  fit.fixed = VectorXd::Zero(p);
  fit.fixed_se = VectorXd::Constant(p, std::numeric_limits<double>::infinity());
  fit.fixed_p = VectorXd::Ones(p);
  fit.fixed(0) = b2(0);
  fit.fixed_se(0) = std::sqrt(cov_b2(0, 0));
  for (Eigen::Index j = 1; j < qw; ++j) {
    fit.fixed(j) = mean(j);
    fit.fixed_se(j) = std::sqrt(cov(j, j) / static_cast<double>(gu));
  }
  for (Eigen::Index j = 0; j < pb; ++j) {
    const Eigen::Index col = qw + bcols[static_cast<std::size_t>(j)];
    fit.fixed(col) = b2(1 + j);
    fit.fixed_se(col) = std::sqrt(cov_b2(1 + j, 1 + j));
  }
  for (Eigen::Index j = 0; j < p; ++j)
    fit.fixed_p(j) = p_value(fit.fixed(j), fit.fixed_se(j), options.pvalues, static_cast<double>(gu - 1));

  fit.random_cov = cov;
  fit.random_cov(0, 0) = s2_level2;
  fit.random_cov.row(0).tail(pw).setZero();
  fit.random_cov.col(0).tail(pw).setZero();
  fit.blups = MatrixXd::Constant(static_cast<Eigen::Index>(ng), qw, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index g = 0; g < gu; ++g) {
    const std::size_t gidx = used[static_cast<std::size_t>(g)];
    VectorXd dev = c.row(g).transpose();
    dev(0) -= x2.row(g).dot(b2);
    dev.tail(pw) -= mean.tail(pw);
    fit.blups.row(static_cast<Eigen::Index>(gidx)) = dev.transpose();
  }
  fit.residual_variance = dof_total > 0 ? rss_total / static_cast<double>(dof_total) : 0.0;
  fit.reml_deviance = std::numeric_limits<double>::quiet_NaN();
  return fit;
}

Problem build_problem(const VectorXd& y, const MatrixXd& x, Eigen::Index q, const GroupIndex& gi) {
  Problem pr;
  pr.n = x.rows();
  pr.p = x.cols();
  pr.q = q;
  pr.groups.resize(gi.labels.size());
  for (auto& g : pr.groups) {
    g.xtx = MatrixXd::Zero(pr.p, pr.p);
    g.xty = VectorXd::Zero(pr.p);
  }
  for (Eigen::Index r = 0; r < pr.n; ++r) {
    GroupStats& g = pr.groups[gi.of_row[static_cast<std::size_t>(r)]];
    g.xtx.selfadjointView<Eigen::Lower>().rankUpdate(x.row(r).transpose());
    g.xty.noalias() += x.row(r).transpose() * y(r);
    g.yty += y(r) * y(r);
    ++g.n;
  }
  pr.xtx = MatrixXd::Zero(pr.p, pr.p);
  pr.xty = VectorXd::Zero(pr.p);
  for (auto& g : pr.groups) {
    g.xtx.triangularView<Eigen::StrictlyUpper>() = g.xtx.transpose();
    pr.xtx += g.xtx;
    pr.xty += g.xty;
    pr.yty += g.yty;
  }
  return pr;
}

}  // namespace

double reml_deviance_at(const VectorXd& y, const MatrixXd& x_within, const MatrixXd& x_between,
                        std::span<const int> groups, const MatrixXd& psi) {
  const Eigen::Index n = y.size();
  MatrixXd x(n, 1 + x_within.cols() + x_between.cols());
  x.col(0).setOnes();
  x.middleCols(1, x_within.cols()) = x_within;
  x.rightCols(x_between.cols()) = x_between;
  const GroupIndex gi = index_groups(groups);
  const Problem pr = build_problem(y, x, psi.rows(), gi);
  const Eigen::SelfAdjointEigenSolver<MatrixXd> es(psi);
  const MatrixXd lambda =
      es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  return evaluate(pr, lambda, false).deviance;
}

LmmFit fit_lmm_reml(const VectorXd& y, const MatrixXd& x_within, const MatrixXd& x_between,
                    std::span<const int> groups, RandomSpec random, const LmmOptions& options) {
  const Eigen::Index n = y.size();
  if (x_within.rows() != n || x_between.rows() != n || static_cast<Eigen::Index>(groups.size()) != n)
    throw Error(ErrorCode::ShapeMismatch, "LMM inputs differ in row count");
  const GroupIndex gi = index_groups(groups);
  const auto ng = static_cast<Eigen::Index>(gi.labels.size());
  const Eigen::Index pw = x_within.cols();

  std::vector<bool> keep_b(static_cast<std::size_t>(x_between.cols()));
  for (Eigen::Index j = 0; j < x_between.cols(); ++j)
    keep_b[static_cast<std::size_t>(j)] = (x_between.col(j).array() != 0.0).any();

  if (random == RandomSpec::Unique) return fit_unique(y, x_within, x_between, keep_b, gi, options);

  if (random != RandomSpec::Fixed && ng < 2)
    throw Error(ErrorCode::InsufficientData, "random effects need at least 2 groups");
  if (random == RandomSpec::Correlated && pw > options.max_correlated_predictors)
    throw Error(ErrorCode::ConfigInvalid, "correlated random effects support at most " +
                                              std::to_string(options.max_correlated_predictors) + " predictors");

  std::vector<Eigen::Index> bcols;
  for (Eigen::Index j = 0; j < x_between.cols(); ++j)
    if (keep_b[static_cast<std::size_t>(j)]) bcols.push_back(j);
  const Eigen::Index p = 1 + pw + static_cast<Eigen::Index>(bcols.size());
  if (n <= p) throw Error(ErrorCode::InsufficientData, "LMM needs more observations than fixed effects");
  MatrixXd x(n, p);
  x.col(0).setOnes();
  x.middleCols(1, pw) = x_within;
  for (std::size_t j = 0; j < bcols.size(); ++j) x.col(1 + pw + static_cast<Eigen::Index>(j)) = x_between.col(bcols[j]);
  {
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
    if (qr.rank() < p) throw Error(ErrorCode::SingularDesign, "fixed-effects design is rank deficient");
  }

  Eigen::Index q = 0;
  if (random == RandomSpec::Fixed) q = ng >= 2 ? 1 : 0;
  else q = 1 + pw;
  const Problem pr = build_problem(y, x, q, gi);
  const Parameterization par{q, random == RandomSpec::Correlated};

  LmmFit fit;
  VectorXd theta = VectorXd::Zero(par.size());
  for (Eigen::Index i = 0; i < q; ++i) {
    const double mean_sq = pr.xtx(i, i) / static_cast<double>(n);
    theta(i) = 0.5 / std::sqrt(std::max(mean_sq, 1e-12));
  }
  Evaluation ev = evaluate(pr, par.lambda(theta), true);
  if (!ev.ok) throw Error(ErrorCode::SingularDesign, "REML deviance is not finite at the starting point");
  fit.deviance_trace.push_back(ev.deviance);

  if (par.size() > 0) {
    VectorXd grad = par.gradient(ev.grad_psi, par.lambda(theta));
    MatrixXd h = MatrixXd::Identity(par.size(), par.size());
    bool fresh_h = true;  // rescale by s'y / y'y at the first update
    bool converged = false;
    int it = 0;
    for (; it < options.max_iterations; ++it) {
      if (grad.cwiseAbs().maxCoeff() < options.gradient_tolerance) {
        converged = true;
        break;
      }
      VectorXd dir = -h * grad;
      if (grad.dot(dir) >= 0.0) {
        h.setIdentity();
        fresh_h = true;
        dir = -grad;
      }
      const double max_step = dir.cwiseAbs().maxCoeff();
      double t = max_step > 2.0 ? 2.0 / max_step : 1.0;
      const double slope = grad.dot(dir);
      Evaluation trial;
      VectorXd theta_new;
      bool accepted = false;
      for (int ls = 0; ls < 50; ++ls) {
        theta_new = theta + t * dir;
        trial = evaluate(pr, par.lambda(theta_new), true);
        if (trial.ok && trial.deviance <= ev.deviance + 1e-4 * t * slope) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) {
        // No decrease possible along the quasi-Newton direction: stationary to
        // working precision.
        converged = grad.cwiseAbs().maxCoeff() < 1e3 * options.gradient_tolerance ||
                    std::abs(slope) < 1e-10 * (1.0 + std::abs(ev.deviance));
        break;
      }
      const VectorXd grad_new = par.gradient(trial.grad_psi, par.lambda(theta_new));
      const VectorXd s = theta_new - theta;
      const VectorXd yv = grad_new - grad;
      const double sy = s.dot(yv);
      if (sy > 1e-12) {
        const double rho = 1.0 / sy;
        const MatrixXd id = MatrixXd::Identity(par.size(), par.size());
        if (fresh_h) {
          h = id * (sy / yv.squaredNorm());
          fresh_h = false;
        }
        h = (id - rho * s * yv.transpose()) * h * (id - rho * yv * s.transpose()) + rho * s * s.transpose();
      }
      const double improvement = ev.deviance - trial.deviance;
      theta = theta_new;
      ev = std::move(trial);
      grad = grad_new;
      fit.deviance_trace.push_back(ev.deviance);
      if (improvement < 1e-12 * (1.0 + std::abs(ev.deviance)) &&
          grad.cwiseAbs().maxCoeff() < 1e2 * options.gradient_tolerance) {
        converged = true;
        break;
      }
      // Flat ridges toward a singular Psi: stop once the deviance has stalled.
      const std::size_t steps = fit.deviance_trace.size();
      if (steps > options.stall_window &&
          fit.deviance_trace[steps - 1 - options.stall_window] - ev.deviance <
              options.stall_tolerance * (1.0 + std::abs(ev.deviance))) {
        converged = true;
        break;
      }
    }
    fit.iterations = it;
    if (!converged) {
      throw ConvergenceError("REML optimizer did not converge", par.lambda(theta), fit.deviance_trace);
    }
  }

  const MatrixXd lambda = par.lambda(theta);
  fit.reml_deviance = ev.deviance;
  fit.residual_variance = ev.sigma2;

  const Eigen::Index qw = 1 + pw;
  fit.fixed = VectorXd::Zero(qw + x_between.cols());
  fit.fixed_se = VectorXd::Constant(fit.fixed.size(), std::numeric_limits<double>::infinity());
  fit.fixed_p = VectorXd::Ones(fit.fixed.size());
  const VectorXd se = (ev.sigma2 * ev.a_inv.diagonal()).cwiseSqrt();
  auto place = [&](Eigen::Index from, Eigen::Index to) {
    fit.fixed(to) = ev.beta(from);
    fit.fixed_se(to) = se(from);
    fit.fixed_p(to) = p_value(ev.beta(from), se(from), options.pvalues, static_cast<double>(n - p));
  };
  for (Eigen::Index j = 0; j < qw; ++j) place(j, j);
  for (std::size_t j = 0; j < bcols.size(); ++j) place(qw + static_cast<Eigen::Index>(j), qw + bcols[j]);

  fit.random_cov = MatrixXd::Zero(qw, qw);
  if (q > 0) fit.random_cov.topLeftCorner(q, q) = ev.sigma2 * lambda * lambda.transpose();
  if (random == RandomSpec::Orthogonal) {
    const VectorXd d = fit.random_cov.diagonal();
    fit.random_cov = d.asDiagonal();
  }
  for (Eigen::Index i = 0; i < q; ++i)
    if (std::sqrt(fit.random_cov(i, i) / ev.sigma2) < options.boundary_tolerance) fit.boundary = true;

  fit.group_labels = gi.labels;
  fit.blups = MatrixXd::Zero(ng, qw);
  for (Eigen::Index g = 0; g < ng && q > 0; ++g) {
    const GroupStats& gs = pr.groups[static_cast<std::size_t>(g)];
    const VectorXd ztr = gs.xty.head(q) - gs.xtx.topRows(q) * ev.beta;
    fit.blups.row(g).head(q) = (ev.shrink[static_cast<std::size_t>(g)] * ztr).transpose();
  }
  fit.residuals = y - x * ev.beta;
  fit.group_residual_variance = VectorXd::Zero(ng);
  VectorXd counts = VectorXd::Zero(ng);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto g = static_cast<Eigen::Index>(gi.of_row[static_cast<std::size_t>(r)]);
    if (q > 0) fit.residuals(r) -= x.row(r).head(q).dot(fit.blups.row(g).head(q));
    fit.group_residual_variance(g) += fit.residuals(r) * fit.residuals(r);
    counts(g) += 1.0;
  }
  fit.group_residual_variance = fit.group_residual_variance.cwiseQuotient(counts);
  return fit;
}

}  // namespace mlgvar
