#pragma once

#include <string>
#include <vector>

namespace gecal::csv {

// Minimal CSV support: UTF-8, '.' decimal separator, header row required,
// values written with 17 significant digits so weight files round-trip.

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;          // -1 if absent
  int require_column(const std::string& name) const;  // throws if absent
};

Table read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows);

std::string format_double(double value);
std::vector<std::string> split_line(const std::string& line);
double parse_double(const std::string& text, const std::string& context);

}  // namespace gecal::csv
