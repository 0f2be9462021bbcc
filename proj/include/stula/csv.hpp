#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include "stula/errors.hpp"
#include "stula/grid.hpp"

namespace stula {

// RFC-4180 CSV: CRLF row endings, quoting only where required, header row
// mandatory. Floats carry 17 significant digits so files round-trip doubles.
namespace csv {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

using Field = std::variant<std::string, double, std::int64_t, bool>;

inline std::string field_to_string(const Field& f) {
  if (std::holds_alternative<std::string>(f))
    return quote_if_needed(std::get<std::string>(f));
  if (std::holds_alternative<double>(f)) return fmt_double(std::get<double>(f));
  if (std::holds_alternative<std::int64_t>(f))
    return std::to_string(std::get<std::int64_t>(f));
  return std::get<bool>(f) ? "true" : "false";
}

class Writer {
 public:
  explicit Writer(std::vector<std::string> header) : n_cols_(header.size()) {
    if (header.empty()) throw InvalidInput("csv: header row is mandatory");
    append_row_of_strings(header);
  }

  void row(const std::vector<Field>& fields) {
    if (fields.size() != n_cols_)
      throw InvalidInput("csv: row width " + std::to_string(fields.size()) +
                         " does not match header width " + std::to_string(n_cols_));
    std::vector<std::string> cells;
    cells.reserve(fields.size());
    for (const auto& f : fields) cells.push_back(field_to_string(f));
    buf_ += join(cells);
  }

  const std::string& str() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("csv: cannot open '" + path + "' for writing");
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw InvalidInput("csv: write to '" + path + "' failed");
  }

 private:
  static std::string join(const std::vector<std::string>& cells) {
    std::string line;
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    line += "\r\n";
    return line;
  }
  void append_row_of_strings(const std::vector<std::string>& cells) {
    std::vector<std::string> quoted;
    quoted.reserve(cells.size());
    for (const auto& c : cells) quoted.push_back(quote_if_needed(c));
    buf_ += join(quoted);
  }

  size_t n_cols_;
  std::string buf_;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw SchemaError("csv: missing column '" + name + "'");
  }

  std::vector<double> numeric_column(const std::string& name) const {
    const int c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (size_t r = 0; r < rows.size(); ++r) {
      try {
        size_t pos = 0;
        const double v = std::stod(rows[r][c], &pos);
        if (pos != rows[r][c].size()) throw std::invalid_argument("trailing");
        out.push_back(v);
      } catch (const std::exception&) {
        throw SchemaError("csv: column '" + name + "' row " + std::to_string(r + 1) +
                          " is not numeric: '" + rows[r][c] + "'");
      }
    }
    return out;
  }
};

inline Table parse(const std::string& text) {
  Table t;
  std::vector<std::string> cur;
  std::string cell;
  bool in_quotes = false;
  bool row_has_data = false;
  auto end_cell = [&] {
    cur.push_back(cell);
    cell.clear();
  };
  auto end_row = [&] {
    end_cell();
    if (t.header.empty()) t.header = cur;
    else t.rows.push_back(cur);
    cur.clear();
    row_has_data = false;
  };
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_data = true;
        break;
      case ',':
        end_cell();
        row_has_data = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_has_data || !cell.empty() || !cur.empty()) end_row();
        break;
      default:
        cell += c;
        row_has_data = true;
    }
  }
  if (row_has_data || !cell.empty() || !cur.empty()) end_row();
  if (in_quotes) throw SchemaError("csv: unterminated quoted field");
  if (t.header.empty()) throw SchemaError("csv: no header row");
  for (size_t r = 0; r < t.rows.size(); ++r)
    if (t.rows[r].size() != t.header.size())
      throw SchemaError("csv: row " + std::to_string(r + 1) + " has " +
                        std::to_string(t.rows[r].size()) + " fields, header has " +
                        std::to_string(t.header.size()));
  return t;
}

inline Table load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("csv: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse(text);
}

}  // namespace csv

// Cell-level export of a reference law: per-axis cell index, midpoint
// coordinates, probability mass, and the log of the continuous density.
inline csv::Writer grid_to_csv(const GridDensity& g) {
  std::vector<std::string> header;
  if (g.dim == 1) header = {"i0", "x0", "mass", "log_density"};
  else header = {"i0", "i1", "x0", "x1", "mass", "log_density"};
  csv::Writer w(header);
  const double log_vol = std::log(g.cell_volume());
  for (int i0 = 0; i0 < g.n[0]; ++i0)
    for (int i1 = 0; i1 < g.n[1]; ++i1) {
      const std::int64_t idx = g.index(i0, i1);
      const double logd = g.log_mass(idx) - log_vol;
      if (g.dim == 1) {
        w.row({static_cast<std::int64_t>(i0), g.mid(0, i0), g.cell_mass[idx], logd});
      } else {
        w.row({static_cast<std::int64_t>(i0), static_cast<std::int64_t>(i1),
               g.mid(0, i0), g.mid(1, i1), g.cell_mass[idx], logd});
      }
    }
  return w;
}

}  // namespace stula
