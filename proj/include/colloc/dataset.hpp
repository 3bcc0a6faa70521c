/**
 * @file dataset.hpp
 * @brief CSV observation tables: `time,<comp1>,<comp2>,...`, one row per
 *        time, empty cell or NA for a missing value.
 */
#pragma once

#include <iosfwd>
#include <string>

#include "colloc/posterior.hpp"

namespace colloc {

/// Throws ParseError with a 1-based line number on malformed input.
Observations read_csv(std::istream& in);
Observations read_csv_file(const std::string& path);

/// Missing values are written as empty cells. 17 significant digits.
void write_csv(std::ostream& out, const Observations& data);
void write_csv_file(const std::string& path, const Observations& data);

}  // namespace colloc
