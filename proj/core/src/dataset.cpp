#include "esp/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "esp/errors.hpp"

namespace esp {

namespace {

std::string trim(const std::string& s) {
  auto b = s.begin(), e = s.end();
  while (b != e && std::isspace(static_cast<unsigned char>(*b))) ++b;
  while (e != b && std::isspace(static_cast<unsigned char>(*(e - 1)))) --e;
  return std::string(b, e);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

double parse_field(const std::string& field, const std::string& origin, std::size_t lineno) {
  double value = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(Errc::invalid_input, origin + ": line " + std::to_string(lineno) +
                                         ": cannot parse numeric field '" + field + "'");
  }
  return value;
}

}  // namespace

Dataset::Dataset(Eigen::MatrixXd rows, std::vector<std::string> column_names)
    : rows_(std::move(rows)), column_names_(std::move(column_names)) {
  if (rows_.rows() < 2) {
    throw Error(Errc::invalid_input, "dataset needs at least 2 observations, got " +
                                         std::to_string(rows_.rows()));
  }
  if (rows_.cols() < 1) {
    throw Error(Errc::invalid_input, "dataset needs at least one column");
  }
  if (!column_names_.empty() &&
      static_cast<Eigen::Index>(column_names_.size()) != rows_.cols()) {
    throw Error(Errc::invalid_input, "column_names size does not match column count");
  }
  for (Eigen::Index t = 0; t < rows_.rows(); ++t) {
    for (Eigen::Index j = 0; j < rows_.cols(); ++j) {
      if (!std::isfinite(rows_(t, j))) {
        throw Error(Errc::invalid_input, "non-finite entry at row " + std::to_string(t) +
                                             ", column " + std::to_string(j));
      }
    }
  }
}

Dataset Dataset::from_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::io_error, "cannot open '" + path + "'");
  }
  return from_csv_stream(in, path);
}

Dataset Dataset::from_csv_stream(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(Errc::invalid_input, origin + ": empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> names = split_csv_line(line);
  const std::size_t p = names.size();

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != p) {
      throw Error(Errc::invalid_input,
                  origin + ": line " + std::to_string(lineno) + ": expected " +
                      std::to_string(p) + " fields, got " + std::to_string(fields.size()));
    }
    for (const std::string& f : fields) values.push_back(parse_field(f, origin, lineno));
    ++rows;
  }
  if (rows < 2) {
    throw Error(Errc::invalid_input, origin + ": needs at least 2 data rows");
  }
  Eigen::MatrixXd m(rows, p);
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t j = 0; j < p; ++j) m(t, j) = values[t * p + j];
  return Dataset(std::move(m), std::move(names));
}

Eigen::Index Dataset::column_index(const std::string& name) const {
  auto it = std::find(column_names_.begin(), column_names_.end(), name);
  if (it == column_names_.end()) return -1;
  return static_cast<Eigen::Index>(it - column_names_.begin());
}

}  // namespace esp
