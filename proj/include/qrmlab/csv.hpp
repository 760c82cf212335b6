#pragma once

#include <string>
#include <vector>

namespace qrmlab::csv {

// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);

double parse_double(const std::string& s);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws if absent
};

// Commas separate, '\n' terminates, UTF-8, no quoting (values written by
// this project never contain separators).
void write(const std::string& path, const Table& table);
Table read(const std::string& path);

}  // namespace qrmlab::csv
