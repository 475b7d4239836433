#include "tabguide/tabular_codec.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <set>

#include "tabguide/errors.hpp"

namespace tabguide {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

const char* kind_name(ColumnKind k) {
  return k == ColumnKind::Continuous ? "continuous" : "categorical";
}

}  // namespace

bool is_missing_token(const std::string& raw) {
  const std::string s = trim(raw);
  return s.empty() || s == "?" || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

void TabularSchema::validate() const {
  if (columns.empty()) throw DataError("schema has no columns");
  std::set<std::string> seen;
  for (const auto& c : columns) {
    if (c.name.empty()) throw DataError("schema column with empty name");
    if (!seen.insert(c.name).second) throw DataError("duplicate column name '" + c.name + "'");
    if (c.kind == ColumnKind::Categorical) {
      if (c.cardinality == 1 || (!c.categories.empty() && c.categories.size() < 2)) {
        throw DataError("categorical column '" + c.name + "' needs cardinality >= 2");
      }
      if (!c.categories.empty() && c.cardinality != 0 && c.cardinality != c.categories.size()) {
        throw DataError("categorical column '" + c.name + "': cardinality " +
                        std::to_string(c.cardinality) + " disagrees with " +
                        std::to_string(c.categories.size()) + " listed categories");
      }
      std::set<std::string> cats(c.categories.begin(), c.categories.end());
      if (cats.size() != c.categories.size()) {
        throw DataError("categorical column '" + c.name + "' lists a category twice");
      }
    }
  }
  if (target_column && !seen.count(*target_column)) {
    throw DataError("target column '" + *target_column + "' is not in the schema");
  }
  if (modeled_columns().empty()) throw DataError("schema has no modeled columns");
}

std::vector<ColumnSpec> TabularSchema::modeled_columns() const {
  std::vector<ColumnSpec> out;
  for (const auto& c : columns) {
    if (target_column && c.name == *target_column) continue;
    out.push_back(c);
  }
  return out;
}

TabularSchema TabularSchema::from_json(const nlohmann::json& j) {
  TabularSchema s;
  if (!j.contains("columns") || !j["columns"].is_array()) {
    throw DataError("schema JSON needs a \"columns\" array");
  }
  for (const auto& c : j["columns"]) {
    ColumnSpec col;
    col.name = c.at("name").get<std::string>();
    const auto kind = c.at("kind").get<std::string>();
    if (kind == "continuous") {
      col.kind = ColumnKind::Continuous;
    } else if (kind == "categorical") {
      col.kind = ColumnKind::Categorical;
      if (c.contains("cardinality")) col.cardinality = c["cardinality"].get<std::size_t>();
      if (c.contains("categories")) col.categories = c["categories"].get<std::vector<std::string>>();
    } else {
      throw DataError("column '" + col.name + "': unknown kind '" + kind + "'");
    }
    s.columns.push_back(std::move(col));
  }
  if (j.contains("target") && !j["target"].is_null()) s.target_column = j["target"].get<std::string>();
  s.validate();
  return s;
}

nlohmann::json TabularSchema::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : columns) {
    nlohmann::json jc{{"name", c.name}, {"kind", kind_name(c.kind)}};
    if (c.kind == ColumnKind::Categorical) {
      if (c.cardinality) jc["cardinality"] = c.cardinality;
      if (!c.categories.empty()) jc["categories"] = c.categories;
    }
    cols.push_back(std::move(jc));
  }
  nlohmann::json j{{"columns", cols}};
  j["target"] = target_column ? nlohmann::json(*target_column) : nlohmann::json(nullptr);
  return j;
}

TabularSchema TabularSchema::infer(const csv::Table& table, const std::optional<std::string>& target) {
  TabularSchema s;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    ColumnSpec col;
    col.name = table.header[c];
    bool numeric = true;
    for (const auto& row : table.rows) {
      if (is_missing_token(row[c])) continue;
      if (!parse_number(row[c])) {
        numeric = false;
        break;
      }
    }
    col.kind = numeric ? ColumnKind::Continuous : ColumnKind::Categorical;
    s.columns.push_back(std::move(col));
  }
  s.target_column = target;
  s.validate();
  return s;
}

Dataset load_dataset(const csv::Table& table, const TabularSchema& schema) {
  schema.validate();
  Dataset ds;
  ds.columns = schema.modeled_columns();
  std::vector<std::size_t> source(ds.columns.size());
  for (std::size_t i = 0; i < ds.columns.size(); ++i) {
    auto it = std::find(table.header.begin(), table.header.end(), ds.columns[i].name);
    if (it == table.header.end()) {
      throw DataError("CSV header lacks schema column '" + ds.columns[i].name + "'");
    }
    source[i] = static_cast<std::size_t>(it - table.header.begin());
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    RawRow row;
    row.reserve(ds.columns.size());
    bool missing = false;
    for (std::size_t i = 0; i < ds.columns.size() && !missing; ++i) {
      const std::string& cell = cells[source[i]];
      if (is_missing_token(cell)) {
        missing = true;
        break;
      }
      if (ds.columns[i].kind == ColumnKind::Continuous) {
        auto v = parse_number(cell);
        if (!v) {
          throw DataError("row " + std::to_string(r + 1) + ", column '" + ds.columns[i].name +
                          "': '" + cell + "' is not numeric");
        }
        row.emplace_back(*v);
      } else {
        row.emplace_back(trim(cell));
      }
    }
    if (missing) {
      ++ds.dropped_rows;
      continue;
    }
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

csv::Table to_table(const std::vector<ColumnSpec>& columns, const std::vector<RawRow>& rows) {
  csv::Table t;
  for (const auto& c : columns) t.header.push_back(c.name);
  for (const auto& row : rows) {
    std::vector<std::string> cells;
    cells.reserve(row.size());
    for (const auto& v : row) {
      if (const double* d = std::get_if<double>(&v)) {
        cells.push_back(csv::format_double(*d));
      } else {
        cells.push_back(std::get<std::string>(v));
      }
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

Encoder Encoder::fit(const TabularSchema& schema, const std::vector<RawRow>& train_rows) {
  schema.validate();
  const auto cols = schema.modeled_columns();
  if (train_rows.size() < 2) throw DataError("fit needs at least two rows");
  Encoder enc;
  std::size_t offset = 0;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    ColumnBlock block;
    block.column = cols[c];
    block.offset = offset;
    if (cols[c].kind == ColumnKind::Continuous) {
      double sum = 0.0;
      for (const auto& row : train_rows) {
        if (row.size() != cols.size()) throw DataError("row width does not match schema");
        const double* v = std::get_if<double>(&row[c]);
        if (!v) throw DataError("column '" + cols[c].name + "' expects numeric values");
        sum += *v;
      }
      const double mean = sum / static_cast<double>(train_rows.size());
      double ss = 0.0;
      for (const auto& row : train_rows) {
        const double dv = std::get<double>(row[c]) - mean;
        ss += dv * dv;
      }
      const double sd = std::sqrt(ss / static_cast<double>(train_rows.size()));
      if (!(sd > 0.0)) {
        throw DataError("continuous column '" + cols[c].name + "' is constant; cannot standardize");
      }
      block.mean = mean;
      block.stddev = sd;
      block.width = 1;
    } else {
      std::set<std::string> observed;
      for (const auto& row : train_rows) {
        const std::string* v = std::get_if<std::string>(&row[c]);
        if (!v) throw DataError("column '" + cols[c].name + "' expects category labels");
        observed.insert(*v);
      }
      auto& cats = block.column.categories;
      if (cats.empty()) {
        cats.assign(observed.begin(), observed.end());
        if (cols[c].cardinality != 0 && cats.size() != cols[c].cardinality) {
          throw DataError("categorical column '" + cols[c].name + "' declares cardinality " +
                          std::to_string(cols[c].cardinality) + " but the data has " +
                          std::to_string(cats.size()) + " classes");
        }
      } else {
        for (const auto& o : observed) {
          if (std::find(cats.begin(), cats.end(), o) == cats.end()) {
            throw DataError("column '" + cols[c].name + "': value '" + o +
                            "' is not among the declared categories");
          }
        }
      }
      if (cats.size() < 2) {
        throw DataError("categorical column '" + cols[c].name + "' has fewer than two classes");
      }
      block.column.cardinality = cats.size();
      block.width = cats.size();
    }
    offset += block.width;
    enc.blocks_.push_back(std::move(block));
  }
  enc.dim_ = offset;
  return enc;
}

std::vector<ColumnSpec> Encoder::columns() const {
  std::vector<ColumnSpec> out;
  for (const auto& b : blocks_) out.push_back(b.column);
  return out;
}

std::size_t Encoder::category_index(std::size_t col, const std::string& value) const {
  const auto& cats = blocks_.at(col).column.categories;
  auto it = std::find(cats.begin(), cats.end(), value);
  if (it == cats.end()) {
    throw DataError("column '" + blocks_[col].column.name + "': unseen category '" + value + "'");
  }
  return static_cast<std::size_t>(it - cats.begin());
}

std::size_t Encoder::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].column.name == name) return i;
  }
  throw DataError("unknown column '" + name + "'");
}

Matrix Encoder::encode(const RawRow& row) const {
  if (row.size() != blocks_.size()) {
    throw DataError("row has " + std::to_string(row.size()) + " values, schema has " +
                    std::to_string(blocks_.size()) + " modeled columns");
  }
  Matrix out = Matrix::Zero(1, static_cast<Eigen::Index>(dim_));
  for (std::size_t c = 0; c < blocks_.size(); ++c) {
    const auto& b = blocks_[c];
    const auto off = static_cast<Eigen::Index>(b.offset);
    if (b.column.kind == ColumnKind::Continuous) {
      const double* v = std::get_if<double>(&row[c]);
      if (!v) throw DataError("column '" + b.column.name + "' expects a numeric value");
      out(0, off) = (*v - b.mean) / b.stddev;
    } else {
      const std::string* v = std::get_if<std::string>(&row[c]);
      if (!v) throw DataError("column '" + b.column.name + "' expects a category label");
      out(0, off + static_cast<Eigen::Index>(category_index(c, *v))) = 1.0;
    }
  }
  return out;
}

Matrix Encoder::encode_rows(const std::vector<RawRow>& rows) const {
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim_));
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = encode(rows[r]);
  return out;
}

RawRow Encoder::decode(const Matrix& vec) const {
  if (vec.rows() != 1 || vec.cols() != static_cast<Eigen::Index>(dim_)) {
    throw DataError("decode expects a 1x" + std::to_string(dim_) + " vector");
  }
  if (!vec.allFinite()) throw DataError("decode: vector has non-finite entries");
  RawRow row;
  row.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    const auto off = static_cast<Eigen::Index>(b.offset);
    if (b.column.kind == ColumnKind::Continuous) {
      row.emplace_back(vec(0, off) * b.stddev + b.mean);
    } else {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(b.width); ++k) {
        if (vec(0, off + k) > vec(0, off + best)) best = k;
      }
      row.emplace_back(b.column.categories[static_cast<std::size_t>(best)]);
    }
  }
  return row;
}

std::vector<RawRow> Encoder::decode_rows(const Matrix& batch) const {
  std::vector<RawRow> out;
  out.reserve(static_cast<std::size_t>(batch.rows()));
  for (Eigen::Index r = 0; r < batch.rows(); ++r) out.push_back(decode(batch.row(r)));
  return out;
}

Matrix Encoder::mask_to_ambient(std::span<const std::uint8_t> column_mask) const {
  if (column_mask.size() != blocks_.size()) {
    throw DataError("column mask has " + std::to_string(column_mask.size()) + " entries, expected " +
                    std::to_string(blocks_.size()));
  }
  Matrix out = Matrix::Zero(1, static_cast<Eigen::Index>(dim_));
  for (std::size_t c = 0; c < blocks_.size(); ++c) {
    if (!column_mask[c]) continue;
    out.block(0, static_cast<Eigen::Index>(blocks_[c].offset), 1,
              static_cast<Eigen::Index>(blocks_[c].width))
        .setOnes();
  }
  return out;
}

Matrix Encoder::mask_to_ambient(const BitMatrix& column_masks) const {
  if (column_masks.cols() != static_cast<Eigen::Index>(blocks_.size())) {
    throw DataError("mask has " + std::to_string(column_masks.cols()) + " columns, expected " +
                    std::to_string(blocks_.size()));
  }
  Matrix out(column_masks.rows(), static_cast<Eigen::Index>(dim_));
  for (Eigen::Index r = 0; r < column_masks.rows(); ++r) {
    std::span<const std::uint8_t> row(column_masks.row(r).data(), blocks_.size());
    out.row(r) = mask_to_ambient(row);
  }
  return out;
}

Matrix Encoder::column_features(const Matrix& encoded) const {
  Matrix out(encoded.rows(), static_cast<Eigen::Index>(blocks_.size()));
  for (Eigen::Index r = 0; r < encoded.rows(); ++r) {
    for (std::size_t c = 0; c < blocks_.size(); ++c) {
      const auto& b = blocks_[c];
      const auto off = static_cast<Eigen::Index>(b.offset);
      const auto col = static_cast<Eigen::Index>(c);
      if (b.column.kind == ColumnKind::Continuous) {
        out(r, col) = encoded(r, off);
      } else {
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < static_cast<Eigen::Index>(b.width); ++k) {
          if (encoded(r, off + k) > encoded(r, off + best)) best = k;
        }
        out(r, col) = static_cast<double>(best);
      }
    }
  }
  return out;
}

Matrix Encoder::snap(const Matrix& encoded) const {
  Matrix out = encoded;
  for (const auto& b : blocks_) {
    if (b.column.kind != ColumnKind::Categorical) continue;
    const auto off = static_cast<Eigen::Index>(b.offset);
    const auto w = static_cast<Eigen::Index>(b.width);
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < w; ++k) {
        if (encoded(r, off + k) > encoded(r, off + best)) best = k;
      }
      out.block(r, off, 1, w).setZero();
      out(r, off + best) = 1.0;
    }
  }
  return out;
}

nlohmann::json Encoder::to_json() const {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& b : blocks_) {
    nlohmann::json jc{{"name", b.column.name},
                      {"kind", kind_name(b.column.kind)},
                      {"offset", b.offset},
                      {"width", b.width}};
    if (b.column.kind == ColumnKind::Continuous) {
      jc["mean"] = b.mean;
      jc["std"] = b.stddev;
    } else {
      jc["categories"] = b.column.categories;
    }
    cols.push_back(std::move(jc));
  }
  return nlohmann::json{{"dim", dim_}, {"columns", cols}};
}

Encoder Encoder::from_json(const nlohmann::json& j) {
  Encoder enc;
  std::size_t offset = 0;
  for (const auto& jc : j.at("columns")) {
    ColumnBlock b;
    b.column.name = jc.at("name").get<std::string>();
    const auto kind = jc.at("kind").get<std::string>();
    b.offset = jc.at("offset").get<std::size_t>();
    b.width = jc.at("width").get<std::size_t>();
    if (b.offset != offset) throw DataError("encoder JSON: non-contiguous block layout");
    if (kind == "continuous") {
      b.column.kind = ColumnKind::Continuous;
      b.mean = jc.at("mean").get<double>();
      b.stddev = jc.at("std").get<double>();
      if (!(b.stddev > 0.0) || b.width != 1) throw DataError("encoder JSON: bad continuous block");
    } else {
      b.column.kind = ColumnKind::Categorical;
      b.column.categories = jc.at("categories").get<std::vector<std::string>>();
      b.column.cardinality = b.column.categories.size();
      if (b.width != b.column.categories.size() || b.width < 2) {
        throw DataError("encoder JSON: bad categorical block '" + b.column.name + "'");
      }
    }
    offset += b.width;
    enc.blocks_.push_back(std::move(b));
  }
  enc.dim_ = offset;
  if (j.at("dim").get<std::size_t>() != offset) throw DataError("encoder JSON: dim mismatch");
  return enc;
}

}  // namespace tabguide
