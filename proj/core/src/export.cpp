#include "mlgvar/error.hpp"
#include "mlgvar/io.hpp"
#include "mlgvar/version.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace mlgvar {
namespace {

using Json = nlohmann::ordered_json;

Json matrix(const MatrixXd& a) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json mask(const BoolMatrix& a) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(static_cast<bool>(a(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json vec(const std::vector<double>& v) { return Json(v); }

Json network(const GgmNetwork& net) {
  return Json{{"labels", net.labels}, {"partials", matrix(net.partials)}, {"included", mask(net.included)},
              {"edge_count", net.edge_count()}};
}

Json gvar_model(const GvarModel& m) {
  return Json{{"labels", m.contemporaneous.labels},
              {"beta", matrix(m.beta)},
              {"temporal_included", mask(m.temporal_included)},
              {"theta_precision", matrix(m.theta_precision.values)},
              {"contemporaneous", network(m.contemporaneous)},
              {"means", matrix(m.means.transpose())},
              {"rows_used", m.rows_used}};
}

Json gvar_search(const GvarSearchResult& r) {
  return Json{{"model", gvar_model(r.model)},
              {"lambda_beta", r.lambda_beta},
              {"lambda_kappa", r.lambda_kappa},
              {"grid_beta", vec(r.grid_beta)},
              {"grid_kappa", vec(r.grid_kappa)},
              {"ebic", matrix(r.scores)}};
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

std::string csv_field(double v) { return std::isfinite(v) ? format_shortest(v) : std::string(); }

}  // namespace

std::string format_shortest(double value) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string network_json(const GgmNetwork& net) { return dump(network(net)); }

std::string ggm_json(const EbicGlassoResult& r, long n) {
  Json j{{"estimator", "ggm"},
         {"version", kVersion},
         {"n", n},
         {"rho", r.rho},
         {"network", network(r.network)},
         {"precision", matrix(r.precision.values)},
         {"rho_grid", vec(r.rho_grid)},
         {"ebic", vec(r.scores)},
         {"edge_counts", r.edge_counts}};
  return dump(j);
}

std::string gvar_json(const GvarSearchResult& r) {
  Json j = gvar_search(r);
  j["estimator"] = "gvar";
  j["version"] = kVersion;
  return dump(j);
}

std::string mlvar_json(const MlVarFit& fit, double alpha, Rule rule) {
  Json subjects = Json::array();
  for (std::size_t p = 0; p < fit.subject_ids.size(); ++p) {
    subjects.push_back(Json{{"id", fit.subject_ids[p]},
                            {"means", matrix(fit.subject_means.row(static_cast<Eigen::Index>(p)))},
                            {"temporal", matrix(fit.temporal_subject[p])},
                            {"contemporaneous", matrix(fit.contemporaneous_subject[p].partials)},
                            {"contemporaneous_valid", static_cast<bool>(fit.contemporaneous_subject_valid[p])}});
  }
  const BoolMatrix temporal_keep = threshold_temporal(fit.temporal_p, alpha);
  Json j{{"estimator", "mlvar-two-step"},
         {"version", kVersion},
         {"labels", fit.labels},
         {"alpha", alpha},
         {"rule", to_string(rule)},
         {"temporal",
          {{"fixed", matrix(fit.temporal_fixed)},
           {"se", matrix(fit.temporal_se)},
           {"p", matrix(fit.temporal_p)},
           {"significant", mask(temporal_keep)},
           {"random_sd", matrix(fit.temporal_sd)}}},
         {"contemporaneous",
          {{"fixed", network(fit.contemporaneous_fixed)},
           {"thresholded", network(threshold_rule(fit.contemporaneous_fixed, fit.contemporaneous_p, rule, alpha))},
           {"p", matrix(fit.contemporaneous_p)},
           {"random_sd", matrix(fit.contemporaneous_sd)},
           {"residual_variances", matrix(fit.residual_variances.transpose())}}},
         {"between",
          {{"available", fit.between_available},
           {"network", network(fit.between)},
           {"thresholded", fit.between_available
                               ? network(threshold_rule(fit.between, fit.between_p, rule, alpha))
                               : Json(nullptr)},
           {"p", matrix(fit.between_p)}}},
         {"subjects", subjects},
         {"node_errors", fit.node_errors}};
  return dump(j);
}

std::string pooled_json(const PooledLassoFit& fit) {
  Json subjects = Json::array();
  for (std::size_t p = 0; p < fit.subject_ids.size(); ++p) {
    Json s{{"id", fit.subject_ids[p]}, {"means", matrix(fit.subject_means.row(static_cast<Eigen::Index>(p)))}};
    if (fit.subjects[p]) s["fit"] = gvar_search(*fit.subjects[p]);
    else s["error"] = fit.subject_errors[p];
    subjects.push_back(std::move(s));
  }
  Json j{{"estimator", "mlvar-pooled-lasso"},
         {"version", kVersion},
         {"labels", fit.labels},
         {"pooled", gvar_search(fit.pooled)},
         {"between", fit.between ? Json{{"rho", fit.between->rho}, {"network", network(fit.between->network)}}
                                 : Json(nullptr)},
         {"subjects", subjects}};
  return dump(j);
}

std::string true_model_json(const TrueModel& model) {
  Json subjects = Json::array();
  for (std::size_t p = 0; p < model.subjects(); ++p) {
    subjects.push_back(Json{{"beta", matrix(model.beta[p])},
                            {"kappa", matrix(model.kappa[p])},
                            {"contemporaneous", matrix(model.contemporaneous[p].partials)},
                            {"mu", matrix(model.mu.row(static_cast<Eigen::Index>(p)))}});
  }
  Json j{{"version", kVersion},
         {"temporal_fixed", matrix(model.temporal_fixed)},
         {"contemporaneous_fixed", matrix(model.contemporaneous_fixed)},
         {"between_precision", matrix(model.between_precision)},
         {"between", matrix(model.between.partials)},
         {"omega", matrix(model.omega)},
         {"subjects", subjects}};
  return dump(j);
}

std::string undirected_dot(const GgmNetwork& net, const std::string& name) {
  std::ostringstream out;
  out << "graph " << quoted(name) << " {\n";
  for (const auto& l : net.labels) out << "  " << quoted(l) << ";\n";
  for (Eigen::Index i = 0; i < net.dim(); ++i)
    for (Eigen::Index j = i + 1; j < net.dim(); ++j) {
      if (!net.included(i, j)) continue;
      const double w = net.partials(i, j);
      out << "  " << quoted(net.labels[static_cast<std::size_t>(i)]) << " -- "
          << quoted(net.labels[static_cast<std::size_t>(j)]) << " [weight=" << fixed4(w) << ", sign=\""
          << (w < 0.0 ? "-" : "+") << "\"];\n";
    }
  out << "}\n";
  return out.str();
}

std::string directed_dot(const MatrixXd& beta, const BoolMatrix& included, const std::vector<std::string>& labels,
                         const std::string& name) {
  std::ostringstream out;
  out << "digraph " << quoted(name) << " {\n";
  for (const auto& l : labels) out << "  " << quoted(l) << ";\n";
  // Column = predictor at t-1, row = response at t.
  for (Eigen::Index from = 0; from < beta.cols(); ++from)
    for (Eigen::Index to = 0; to < beta.rows(); ++to) {
      if (!included(to, from) || beta(to, from) == 0.0) continue;
      const double w = beta(to, from);
      out << "  " << quoted(labels[static_cast<std::size_t>(from)]) << " -> "
          << quoted(labels[static_cast<std::size_t>(to)]) << " [weight=" << fixed4(w) << ", sign=\""
          << (w < 0.0 ? "-" : "+") << "\"];\n";
    }
  out << "}\n";
  return out.str();
}

std::vector<EdgeRow> undirected_edges(const GgmNetwork& net, const MatrixXd* pvalues, const std::string& type) {
  std::vector<EdgeRow> rows;
  for (Eigen::Index i = 0; i < net.dim(); ++i)
    for (Eigen::Index j = i + 1; j < net.dim(); ++j) {
      if (!net.included(i, j)) continue;
      EdgeRow r;
      r.from = net.labels[static_cast<std::size_t>(i)];
      r.to = net.labels[static_cast<std::size_t>(j)];
      r.weight = net.partials(i, j);
      if (pvalues) {
        r.p1 = (*pvalues)(i, j);
        r.p2 = (*pvalues)(j, i);
      }
      r.network_type = type;
      rows.push_back(std::move(r));
    }
  return rows;
}

std::vector<EdgeRow> directed_edges(const MatrixXd& beta, const BoolMatrix& included, const MatrixXd* pvalues,
                                    const std::vector<std::string>& labels, const std::string& type) {
  std::vector<EdgeRow> rows;
  for (Eigen::Index from = 0; from < beta.cols(); ++from)
    for (Eigen::Index to = 0; to < beta.rows(); ++to) {
      if (!included(to, from) || beta(to, from) == 0.0) continue;
      EdgeRow r;
      r.from = labels[static_cast<std::size_t>(from)];
      r.to = labels[static_cast<std::size_t>(to)];
      r.weight = beta(to, from);
      if (pvalues) r.p1 = (*pvalues)(to, from);
      r.network_type = type;
      rows.push_back(std::move(r));
    }
  return rows;
}

std::string edges_csv(const std::vector<EdgeRow>& rows) {
  std::ostringstream out;
  out << "from,to,weight,p1,p2,network_type\n";
  for (const auto& r : rows)
    out << r.from << ',' << r.to << ',' << format_shortest(r.weight) << ',' << csv_field(r.p1) << ','
        << csv_field(r.p2) << ',' << r.network_type << '\n';
  return out.str();
}

}  // namespace mlgvar
