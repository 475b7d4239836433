#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace tabguide::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Reads a UTF-8 CSV with a header row. Lines starting with '#' are treated as
/// provenance comments and skipped. Fields may be double-quoted.
Table read(std::istream& in);
Table read_file(const std::filesystem::path& path);

/// Writes `comment` (if non-empty) as a leading "# ..." line, then the table.
void write(std::ostream& out, const Table& table, const std::string& comment = {});
void write_file(const std::filesystem::path& path, const Table& table,
                const std::string& comment = {});

/// Shortest round-trippable text for a double.
std::string format_double(double v);

}  // namespace tabguide::csv
