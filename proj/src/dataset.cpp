#include "colloc/dataset.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "colloc/errors.hpp"

namespace colloc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& s, int line, bool allow_missing) {
  if (s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan") {
    if (!allow_missing) throw ParseError(line, "missing time value");
    return std::numeric_limits<double>::quiet_NaN();
  }
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(v)) {
    throw ParseError(line, "cannot parse number '" + s + "'");
  }
  return v;
}

}  // namespace

Observations read_csv(std::istream& in) {
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!trim(line).empty() && trim(line)[0] != '#') {
      header = split(line);
      break;
    }
  }
  if (header.size() < 2) throw ParseError(lineno, "header needs a time column and at least one component");
  if (header[0] != "time" && header[0] != "t") throw ParseError(lineno, "first column must be 'time'");

  Observations data;
  data.names.assign(header.begin() + 1, header.end());
  const std::size_t ncol = header.size();
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    const auto cells = split(line);
    if (cells.size() != ncol) {
      throw ParseError(lineno, "expected " + std::to_string(ncol) + " fields, got " + std::to_string(cells.size()));
    }
    std::vector<double> row(ncol);
    row[0] = parse_number(cells[0], lineno, false);
    if (!data.times.empty() && !(row[0] > data.times.back())) {
      throw ParseError(lineno, "times must be strictly increasing");
    }
    for (std::size_t c = 1; c < ncol; ++c) row[c] = parse_number(cells[c], lineno, true);
    data.times.push_back(row[0]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(lineno, "no data rows");
  data.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncol - 1));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 1; c < ncol; ++c) {
      data.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c - 1)) = rows[r][c];
    }
  }
  return data;
}

Observations read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "cannot open " + path);
  return read_csv(in);
}

void write_csv(std::ostream& out, const Observations& data) {
  out << "time";
  for (int i = 0; i < data.num_components(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    out << ',' << (k < data.names.size() ? data.names[k] : "x" + std::to_string(i + 1));
  }
  out << '\n' << std::setprecision(17);
  for (int j = 0; j < data.num_times(); ++j) {
    out << data.times[static_cast<std::size_t>(j)];
    for (int i = 0; i < data.num_components(); ++i) {
      out << ',';
      if (!std::isnan(data.values(j, i))) out << data.values(j, i);
    }
    out << '\n';
  }
}

void write_csv_file(const std::string& path, const Observations& data) {
  std::ofstream out(path);
  if (!out) throw ParseError(0, "cannot write " + path);
  write_csv(out, data);
}

}  // namespace colloc
