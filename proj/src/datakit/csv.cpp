#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "fbttr/data/dataset.hpp"

namespace fbttr::data {

namespace {

using Row = std::vector<std::string>;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

// RFC 4180 records: quoted fields, doubled quotes, CRLF or LF endings.
std::vector<Row> parse_records(const std::string& text) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool in_quotes = false, was_quoted = false;
  auto end_field = [&] {
    row.push_back(was_quoted ? field : trim(field));
    field.clear();
    was_quoted = false;
  };
  auto end_row = [&] {
    const bool blank = row.empty() && !was_quoted && trim(field).empty();
    end_field();
    if (!blank) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = text.starts_with("\xEF\xBB\xBF") ? 3 : 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c != '"') {
        field += c;
      } else if (i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else {
        in_quotes = false;
      }
    } else if (c == ',') {
      end_field();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else if (c == '"' && !was_quoted && trim(field).empty()) {
      field.clear();
      in_quotes = was_quoted = true;
    } else if (!was_quoted) {
      field += c;  // text after a closing quote is dropped
    }
  }
  if (in_quotes) throw DataError("unterminated quoted field at end of file");
  if (!row.empty() || was_quoted || !trim(field).empty()) end_row();
  return rows;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  if (*b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && std::isfinite(out);
}

std::size_t column_of(const Row& header, const std::string& name, const std::string& role) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw DataError(role + " column '" + name + "' not found in header");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto records = parse_records(buffer.str());
  if (records.empty()) throw DataError(path + ": empty file");
  const Row& header = records.front();
  if (records.size() < 2) throw DataError(path + ": no data rows");
  {
    std::set<std::string> seen;
    for (const auto& h : header) {
      if (!seen.insert(h).second) throw DataError(path + ": duplicate column '" + h + "'");
    }
  }
  if (schema.responses.empty() && !schema.responses_optional) {
    throw ConfigError("schema must name at least one response column");
  }
  if (schema.task == Task::Survival && schema.responses.size() != 1) {
    throw ConfigError("survival schema needs exactly one time column");
  }
  if (schema.task == Task::Survival && schema.event_column.empty()) {
    throw ConfigError("survival schema needs an event column");
  }

  std::set<std::string> reserved(schema.ignore.begin(), schema.ignore.end());
  std::vector<std::size_t> response_cols;
  bool have_responses = true;
  for (const auto& r : schema.responses) {
    if (std::find(header.begin(), header.end(), r) == header.end() && schema.responses_optional) {
      have_responses = false;
      break;
    }
  }
  if (have_responses) {
    for (const auto& r : schema.responses) response_cols.push_back(column_of(header, r, "response"));
  }
  reserved.insert(schema.responses.begin(), schema.responses.end());
  std::optional<std::size_t> event_col, site_col;
  if (!schema.event_column.empty()) {
    reserved.insert(schema.event_column);
    if (have_responses) event_col = column_of(header, schema.event_column, "event");
  }
  if (!schema.site_column.empty()) {
    site_col = column_of(header, schema.site_column, "site");
    reserved.insert(schema.site_column);
  }
  std::set<std::string> categorical(schema.categorical.begin(), schema.categorical.end());
  for (const auto& c : schema.categorical) column_of(header, c, "categorical");

  std::vector<std::size_t> feature_cols;
  if (schema.features.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (!reserved.contains(header[c])) feature_cols.push_back(c);
    }
  } else {
    for (const auto& f : schema.features) feature_cols.push_back(column_of(header, f, "feature"));
  }

  const std::size_t n = records.size() - 1;
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != header.size()) {
      throw DataError(path + ": row " + std::to_string(r + 1) + " has " + std::to_string(records[r].size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
  }

  // Categorical levels, sorted for a stable encoding.
  std::map<std::size_t, std::vector<std::string>> levels;
  for (auto c : feature_cols) {
    if (!categorical.contains(header[c])) continue;
    std::set<std::string> values;
    for (std::size_t r = 1; r < records.size(); ++r) values.insert(records[r][c]);
    levels[c] = {values.begin(), values.end()};
  }

  Dataset ds;
  ds.task = schema.task;
  for (auto c : feature_cols) {
    if (levels.contains(c)) {
      for (const auto& l : levels[c]) ds.feature_names.push_back(header[c] + "=" + l);
    } else {
      ds.feature_names.push_back(header[c]);
    }
  }
  const std::size_t features = ds.feature_names.size();
  if (features == 0) throw DataError(path + ": no feature columns");

  std::vector<double> xdata;
  xdata.reserve(n * features);
  Matrix y(static_cast<Eigen::Index>(n), have_responses ? static_cast<Eigen::Index>(response_cols.size() + (event_col ? 1 : 0)) : 0);
  auto number = [&](std::size_t r, std::size_t c, const std::string& role) {
    double v = 0.0;
    if (!parse_number(records[r][c], v)) {
      throw DataError(path + ": row " + std::to_string(r + 1) + ", " + role + " column '" + header[c] +
                      "': cannot parse '" + records[r][c] + "' as a number");
    }
    return v;
  };
  for (std::size_t r = 1; r < records.size(); ++r) {
    for (auto c : feature_cols) {
      if (levels.contains(c)) {
        for (const auto& l : levels[c]) xdata.push_back(records[r][c] == l ? 1.0 : 0.0);
      } else {
        xdata.push_back(number(r, c, "feature"));
      }
    }
    const auto row = static_cast<Eigen::Index>(r - 1);
    Eigen::Index col = 0;
    if (have_responses) {
      for (auto c : response_cols) y(row, col++) = number(r, c, "response");
      if (event_col) y(row, col++) = number(r, *event_col, "event");
    }
    if (site_col) ds.sites.push_back(records[r][*site_col]);
  }

  Extents shape{n};
  if (schema.feature_shape.empty()) {
    shape.push_back(features);
  } else {
    if (product(schema.feature_shape) != features) {
      throw DataError(path + ": feature_shape holds " + std::to_string(product(schema.feature_shape)) +
                      " values but " + std::to_string(features) + " feature columns were read");
    }
    shape.insert(shape.end(), schema.feature_shape.begin(), schema.feature_shape.end());
  }
  ds.x = Tensor(shape, std::move(xdata));
  ds.y = std::move(y);
  if (have_responses) {
    ds.response_names = schema.responses;
    if (event_col) ds.response_names.push_back(schema.event_column);
    if (schema.task == Task::Survival) {
      for (Eigen::Index i = 0; i < ds.y.rows(); ++i) {
        const double e = ds.y(i, 1);
        if (e != 0.0 && e != 1.0) {
          throw DataError(path + ": row " + std::to_string(i + 2) + ", event column must be 0 or 1");
        }
      }
    }
    if (schema.task == Task::Binary) {
      for (Eigen::Index i = 0; i < ds.y.size(); ++i) {
        const double v = ds.y.data()[i];
        if (v != 0.0 && v != 1.0) throw DataError(path + ": binary response values must be 0 or 1");
      }
    }
  } else {
    ds.y = Matrix(static_cast<Eigen::Index>(n), 0);
  }
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.precision(17);
  std::vector<std::string> header;
  if (!ds.sites.empty()) header.push_back("site");
  const std::size_t features = ds.x.size() / std::max<std::size_t>(1, ds.samples());
  for (std::size_t f = 0; f < features; ++f) {
    header.push_back(f < ds.feature_names.size() ? ds.feature_names[f] : "x" + std::to_string(f));
  }
  for (Eigen::Index m = 0; m < ds.y.cols(); ++m) {
    const auto i = static_cast<std::size_t>(m);
    header.push_back(i < ds.response_names.size() ? ds.response_names[i] : "y" + std::to_string(m));
  }
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  const auto data = ds.x.data();
  for (std::size_t s = 0; s < ds.samples(); ++s) {
    bool first = true;
    auto sep = [&] {
      if (!first) out << ',';
      first = false;
    };
    if (!ds.sites.empty()) {
      sep();
      out << ds.sites[s];
    }
    for (std::size_t f = 0; f < features; ++f) {
      sep();
      out << data[s * features + f];
    }
    for (Eigen::Index m = 0; m < ds.y.cols(); ++m) {
      sep();
      out << ds.y(static_cast<Eigen::Index>(s), m);
    }
    out << '\n';
  }
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace fbttr::data
