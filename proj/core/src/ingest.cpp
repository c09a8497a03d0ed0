#include "mlgvar/error.hpp"
#include "mlgvar/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace mlgvar {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// RFC 4180 style: quoted fields may contain commas, doubled quotes and newlines.
std::vector<std::vector<std::string>> split_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      row.push_back(std::move(field));
      field.clear();
      if (any || row.size() > 1 || !row.front().empty()) rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field += c;
      if (c != '\r') any = true;
    }
  }
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw Error(ErrorCode::ConfigInvalid, "column '" + name + "' not found in header");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

PanelData parse_panel_csv(const std::string& text, const IngestSpec& spec) {
  auto rows = split_csv(text);
  if (rows.empty()) throw ParseError(0, "", "empty CSV input");
  std::vector<std::string> header;
  for (const auto& h : rows.front()) header.emplace_back(trim(h));

  const std::optional<std::size_t> id_col =
      spec.id_column.empty() ? std::nullopt : std::optional(column_index(header, spec.id_column));
  const std::optional<std::size_t> day_col =
      spec.day_column ? std::optional(column_index(header, *spec.day_column)) : std::nullopt;
  const std::optional<std::size_t> time_col =
      spec.time_column ? std::optional(column_index(header, *spec.time_column)) : std::nullopt;

  std::vector<std::size_t> var_cols;
  std::vector<std::string> labels;
  if (spec.variables.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (c == id_col || c == day_col || c == time_col) continue;
      var_cols.push_back(c);
      labels.push_back(header[c]);
    }
  } else {
    for (const auto& v : spec.variables) {
      var_cols.push_back(column_index(header, v));
      labels.push_back(v);
    }
  }
  if (var_cols.empty()) throw Error(ErrorCode::ConfigInvalid, "no variable columns selected");

  auto is_missing = [&](std::string_view cell) {
    const std::string_view t = trim(cell);
    return std::find(spec.missing_tokens.begin(), spec.missing_tokens.end(), t) != spec.missing_tokens.end();
  };

  struct Row {
    std::vector<double> values;
    std::vector<bool> missing;
    double time = 0.0;
    long day = 0;
  };
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> id_index;
  std::vector<std::vector<Row>> grouped;
  std::unordered_map<std::string, long> day_codes;

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() != header.size())
      throw ParseError(r + 1, "", "row " + std::to_string(r + 1) + " has " + std::to_string(cells.size()) +
                                      " fields, expected " + std::to_string(header.size()));
    const std::string id = id_col ? std::string(trim(cells[*id_col])) : std::string("1");
    auto [it, inserted] = id_index.try_emplace(id, ids.size());
    if (inserted) {
      ids.push_back(id);
      grouped.emplace_back();
    }
    Row row;
    if (time_col) {
      const auto t = parse_number(cells[*time_col]);
      if (!t) throw ParseError(r + 1, header[*time_col], "malformed time value at row " + std::to_string(r + 1));
      row.time = *t;
    }
    if (day_col) {
      const std::string_view cell = trim(cells[*day_col]);
      long code = 0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), code);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size() || cell.empty()) {
        auto [d, fresh] = day_codes.try_emplace(std::string(cell), static_cast<long>(day_codes.size()));
        code = d->second;
      }
      row.day = code;
    }
    for (std::size_t k = 0; k < var_cols.size(); ++k) {
      const std::string& cell = cells[var_cols[k]];
      if (is_missing(cell)) {
        row.values.push_back(0.0);
        row.missing.push_back(true);
        continue;
      }
      const auto v = parse_number(cell);
      if (!v)
        throw ParseError(r + 1, labels[k], "malformed numeric cell '" + cell + "' at row " + std::to_string(r + 1) +
                                               ", column " + labels[k]);
      row.values.push_back(*v);
      row.missing.push_back(false);
    }
    grouped[it->second].push_back(std::move(row));
  }
  if (ids.empty()) throw Error(ErrorCode::InsufficientData, "CSV has no data rows");

  PanelData panel;
  panel.labels = labels;
  panel.ids = ids;
  const auto m = static_cast<Eigen::Index>(var_cols.size());
  for (std::size_t g = 0; g < grouped.size(); ++g) {
    auto& subject_rows = grouped[g];
    if (time_col) {
      std::stable_sort(subject_rows.begin(), subject_rows.end(),
                       [](const Row& a, const Row& b) { return a.time < b.time; });
      for (std::size_t k = 1; k < subject_rows.size(); ++k)
        if (subject_rows[k].time == subject_rows[k - 1].time)
          throw Error(ErrorCode::DuplicateOccasion,
                      "subject '" + ids[g] + "' has two rows at time " + format_shortest(subject_rows[k].time));
    }
    TimeSeries ts;
    const auto t_count = static_cast<Eigen::Index>(subject_rows.size());
    ts.values.resize(t_count, m);
    ts.missing.resize(t_count, m);
    if (day_col) ts.day.emplace();
    for (Eigen::Index t = 0; t < t_count; ++t) {
      const Row& row = subject_rows[static_cast<std::size_t>(t)];
      for (Eigen::Index j = 0; j < m; ++j) {
        ts.values(t, j) = row.values[static_cast<std::size_t>(j)];
        ts.missing(t, j) = row.missing[static_cast<std::size_t>(j)];
      }
      if (ts.day) ts.day->push_back(row.day);
    }
    panel.subjects.push_back(std::move(ts));
  }
  return panel;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << contents;
  if (!out) throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

PanelData ingest(const IngestSpec& spec) {
  PanelData panel = parse_panel_csv(read_file(spec.path), spec);
  if (spec.standardize) standardize_panel(panel);
  return panel;
}

void standardize_panel(PanelData& panel) {
  const Eigen::Index m = panel.variables();
  for (Eigen::Index j = 0; j < m; ++j) {
    double sum = 0.0;
    long count = 0;
    for (const auto& s : panel.subjects)
      for (Eigen::Index t = 0; t < s.occasions(); ++t)
        if (!s.missing(t, j)) {
          sum += s.values(t, j);
          ++count;
        }
    if (count < 2) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const auto& s : panel.subjects)
      for (Eigen::Index t = 0; t < s.occasions(); ++t)
        if (!s.missing(t, j)) ss += (s.values(t, j) - mean) * (s.values(t, j) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(count - 1));
    for (auto& s : panel.subjects)
      for (Eigen::Index t = 0; t < s.occasions(); ++t)
        if (!s.missing(t, j)) s.values(t, j) = sd > 0.0 ? (s.values(t, j) - mean) / sd : s.values(t, j) - mean;
  }
}

MatrixXd complete_rows(const PanelData& panel) {
  const Eigen::Index m = panel.variables();
  Eigen::Index n = 0;
  for (const auto& s : panel.subjects)
    for (Eigen::Index t = 0; t < s.occasions(); ++t)
      if (!s.missing.row(t).any()) ++n;
  MatrixXd out(n, m);
  Eigen::Index r = 0;
  for (const auto& s : panel.subjects)
    for (Eigen::Index t = 0; t < s.occasions(); ++t)
      if (!s.missing.row(t).any()) out.row(r++) = s.values.row(t);
  return out;
}

std::string panel_csv(const PanelData& panel) {
  std::ostringstream out;
  out << "id,time";
  const bool any_day = std::any_of(panel.subjects.begin(), panel.subjects.end(), [](const TimeSeries& s) { return s.day.has_value(); });
  if (any_day) out << ",day";
  for (const auto& l : panel.labels) out << ',' << l;
  out << '\n';
  for (std::size_t p = 0; p < panel.size(); ++p) {
    const TimeSeries& s = panel.subjects[p];
    for (Eigen::Index t = 0; t < s.occasions(); ++t) {
      out << panel.ids[p] << ',' << t + 1;
      if (any_day) out << ',' << (s.day ? (*s.day)[static_cast<std::size_t>(t)] : 0L);
      for (Eigen::Index j = 0; j < s.variables(); ++j) {
        out << ',';
        if (s.missing(t, j)) out << "NA";
        else out << format_shortest(s.values(t, j));
      }
      out << '\n';
    }
  }
  return out.str();
}

}  // namespace mlgvar
