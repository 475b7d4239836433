#include "tabguide/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "tabguide/errors.hpp"

namespace tabguide::csv {

namespace {

// RFC 4180 fields on one line: quoted fields may hold commas and doubled quotes.
std::vector<std::string> split_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c != '"') {
        field += c;
      } else if (i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else {
        quoted = false;
      }
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
      was_quoted = false;
    } else if (c == '"' && field.empty() && !was_quoted) {
      quoted = true;
      was_quoted = true;
    } else if (was_quoted) {
      throw DataError("CSV line " + std::to_string(line_no) + ": text after a closing quote");
    } else {
      field += c;
    }
  }
  if (quoted) throw DataError("CSV line " + std::to_string(line_no) + ": unterminated quoted field");
  out.push_back(std::move(field));
  return out;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  q += '"';
  return q;
}

}  // namespace

Table read(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    if (!have_header) {
      // Strip a UTF-8 byte-order mark.
      if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
      t.header = split_line(line, line_no);
      have_header = true;
      continue;
    }
    auto fields = split_line(line, line_no);
    if (fields.size() != t.header.size()) {
      throw DataError("CSV line " + std::to_string(line_no) + ": expected " +
                      std::to_string(t.header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (!have_header) throw DataError("CSV input has no header row");
  return t;
}

Table read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path.string() + "'");
  try {
    return read(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write(std::ostream& out, const Table& table, const std::string& comment) {
  if (!comment.empty()) out << "# " << comment << "\n";
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    out << (i ? "," : "") << quote_if_needed(table.header[i]);
  }
  out << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << quote_if_needed(row[i]);
    out << "\n";
  }
}

void write_file(const std::filesystem::path& path, const Table& table, const std::string& comment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write CSV file '" + path.string() + "'");
  write(out, table, comment);
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace tabguide::csv
