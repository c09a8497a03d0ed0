#pragma once

// Long-format CSV ingestion and JSON / DOT / CSV export.

#include "mlgvar/mlvar.hpp"
#include "mlgvar/simulation.hpp"

#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mlgvar {

struct IngestSpec {
  std::string path;
  std::string id_column;  // empty: every row belongs to one subject
  std::optional<std::string> day_column;
  std::optional<std::string> time_column;  // orders rows within a subject
  std::vector<std::string> variables;      // empty: all remaining columns
  std::vector<std::string> missing_tokens{"", "NA"};
  bool standardize = true;
};

/// Parses CSV text. Rows are grouped by id in order of first appearance and
/// kept in file order within a subject unless a time column is given.
/// Throws ParseError(row, column) for malformed numbers and
/// DuplicateOccasion for a repeated (id, time) pair.
PanelData parse_panel_csv(const std::string& text, const IngestSpec& spec);

/// Reads spec.path (Io on failure) and parses it; standardizes when requested.
PanelData ingest(const IngestSpec& spec);

/// Per-variable z-scores over all subjects and occasions (n - 1 denominator).
void standardize_panel(PanelData& panel);

/// Complete rows of all subjects stacked (for cross-sectional estimation).
MatrixXd complete_rows(const PanelData& panel);

/// id,time,<labels...>; shortest round-trip numbers, NA for missing cells.
std::string panel_csv(const PanelData& panel);

/// Shortest decimal string that round-trips to the same double.
std::string format_shortest(double value);

// JSON documents (matrices row-major, with labels).
std::string network_json(const GgmNetwork& network);
std::string ggm_json(const EbicGlassoResult& result, long n);
std::string gvar_json(const GvarSearchResult& result);
std::string mlvar_json(const MlVarFit& fit, double alpha, Rule rule);
std::string pooled_json(const PooledLassoFit& fit);
std::string true_model_json(const TrueModel& model);

// DOT graphs: stable node order, weights with 4 decimals, sign="+"/"-".
std::string undirected_dot(const GgmNetwork& network, const std::string& name = "network");
std::string directed_dot(const MatrixXd& beta, const BoolMatrix& included, const std::vector<std::string>& labels,
                         const std::string& name = "temporal");

/// Edge list rows for one network; p2 is empty for directed edges.
struct EdgeRow {
  std::string from, to;
  double weight = 0.0;
  double p1 = std::numeric_limits<double>::quiet_NaN();
  double p2 = std::numeric_limits<double>::quiet_NaN();
  std::string network_type;
};

std::vector<EdgeRow> undirected_edges(const GgmNetwork& network, const MatrixXd* pvalues, const std::string& type);
std::vector<EdgeRow> directed_edges(const MatrixXd& beta, const BoolMatrix& included, const MatrixXd* pvalues,
                                    const std::vector<std::string>& labels, const std::string& type);
/// from,to,weight,p1,p2,network_type
std::string edges_csv(const std::vector<EdgeRow>& rows);

void write_file(const std::string& path, const std::string& contents);
std::string read_file(const std::string& path);

}  // namespace mlgvar
