#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "nvsim/errors.hpp"
#include "nvsim/workbench.hpp"

namespace nvsim {

std::vector<double> Table::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw SchemaError("table has no column '" + name + "'");
  const auto k = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[k]);
  return out;
}

bool Table::has_column(const std::string& name) const {
  return std::find(columns.begin(), columns.end(), name) != columns.end();
}

const CsvSchema& csv_schema(const std::string& name) {
  static const std::vector<CsvSchema> schemas = {
      {"ramsey", {"tau_us", "signal"}, {}},
      {"rabi", {"duration_us", "signal"}, {}},
      {"odnmr", {"rf_mhz", "signal"}, {}},
      {"odmr", {"mw_mhz", "signal"}, {}},
      {"contrast", {"b_gauss", "contrast"}, {}},
      {"trace", {"t_us", "rate_plus1_per_us", "rate_0_per_us", "rate_minus1_per_us"}, {}},
      {"pump", {"b_gauss", "p_0_plus1", "p_nuc_plus1", "p_nuc_0", "p_nuc_minus1"}, {}},
      {"field-series", {"b_gauss", "f1_mhz", "f2_mhz"}, {"sigma_mhz"}},
      {"temp-series", {"t_kelvin", "f1_mhz", "f2_mhz"}, {}},
      {"d-table", {"t_kelvin", "d_mhz"}, {}},
  };
  for (const auto& s : schemas)
    if (s.name == name) return s;
  throw InvalidParameter("unknown CSV schema '" + name + "'");
}

std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string to_csv(const Table& t) {
  std::string s;
  for (const auto& c : t.comments) s += "# " + c + "\n";
  for (std::size_t i = 0; i < t.columns.size(); ++i) s += (i ? "," : "") + t.columns[i];
  s += "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) s += ",";
      s += format_number(r[i]);
    }
    s += "\n";
  }
  return s;
}

void write_csv(const std::string& path, const Table& t) { write_file(path, to_csv(t)); }

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line, const std::string& col) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  if (!s.empty() && *b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (s.empty() || ec != std::errc() || ptr != e || !std::isfinite(v))
    throw SchemaError("line " + std::to_string(line) + ": column '" + col + "': '" + s + "' is not a finite number");
  return v;
}

}  // namespace

Table parse_csv(const std::string& text, const CsvSchema& schema) {
  Table t;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string tl = trim(line);
    if (tl.empty()) continue;
    if (tl[0] == '#') {
      t.comments.push_back(trim(std::string_view(tl).substr(1)));
      continue;
    }
    if (!have_header) {
      t.columns = split(tl);
      std::vector<std::string> allowed = schema.required;
      allowed.insert(allowed.end(), schema.optional.begin(), schema.optional.end());
      for (const auto& req : schema.required)
        if (std::find(t.columns.begin(), t.columns.end(), req) == t.columns.end())
          throw SchemaError("line " + std::to_string(lineno) + ": " + schema.name + " header is missing column '" +
                            req + "'");
      for (std::size_t i = 0; i < t.columns.size(); ++i) {
        if (std::find(allowed.begin(), allowed.end(), t.columns[i]) == allowed.end())
          throw SchemaError("line " + std::to_string(lineno) + ": unexpected column '" + t.columns[i] + "' for " +
                            schema.name);
        if (std::find(t.columns.begin(), t.columns.begin() + static_cast<long>(i), t.columns[i]) !=
            t.columns.begin() + static_cast<long>(i))
          throw SchemaError("line " + std::to_string(lineno) + ": duplicate column '" + t.columns[i] + "'");
      }
      have_header = true;
      continue;
    }
    const auto cells = split(tl);
    if (cells.size() != t.columns.size())
      throw SchemaError("line " + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                        " fields, found " + std::to_string(cells.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) row.push_back(parse_double(cells[i], lineno, t.columns[i]));
    t.rows.push_back(std::move(row));
  }
  if (!have_header) throw SchemaError(schema.name + " file has no header line");
  if (t.rows.empty()) throw SchemaError(schema.name + " file has no data rows");
  return t;
}

Table read_csv(const std::string& path, const CsvSchema& schema) { return parse_csv(read_file(path), schema); }

Table trace_table(const Trace& tr) {
  tr.validate();
  Table t;
  t.columns = {tr.abscissa_name, tr.signal_name};
  t.rows.reserve(tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i) t.rows.push_back({tr.abscissa[i], tr.signal[i]});
  return t;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw IoError("error reading '" + path + "'");
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("error writing '" + path + "'");
}

}  // namespace nvsim
