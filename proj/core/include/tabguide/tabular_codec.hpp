#pragma once

// Column typing, standard scaling, one-hot blocks, and the map between raw
// rows and ambient vectors in R^d.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabguide/csv.hpp"
#include "tabguide/grad_engine.hpp"

namespace tabguide {

using BitMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ColumnKind { Continuous, Categorical };

struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::Continuous;
  /// Categorical only. 0 means "take it from the data".
  std::size_t cardinality = 0;
  /// Categorical only, optional explicit category order.
  std::vector<std::string> categories;
};

struct TabularSchema {
  std::vector<ColumnSpec> columns;
  std::optional<std::string> target_column;

  /// Unique names, K >= 2 where declared, target (if any) present.
  void validate() const;
  /// Columns that are modeled, i.e. everything except the target.
  std::vector<ColumnSpec> modeled_columns() const;

  static TabularSchema from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  /// Numeric-parse → Continuous, otherwise Categorical.
  static TabularSchema infer(const csv::Table& table,
                             const std::optional<std::string>& target = std::nullopt);
};

using Value = std::variant<double, std::string>;
/// One row over the modeled columns, in schema order.
using RawRow = std::vector<Value>;

/// Raw rows restricted to the modeled columns.
struct Dataset {
  std::vector<ColumnSpec> columns;
  std::vector<RawRow> rows;
  std::size_t dropped_rows = 0;
};

/// Treats "", "?", "NA", "NaN" and "null" as missing.
bool is_missing_token(const std::string& s);

/// Maps the CSV header onto the schema and drops rows with missing values.
Dataset load_dataset(const csv::Table& table, const TabularSchema& schema);
csv::Table to_table(const std::vector<ColumnSpec>& columns, const std::vector<RawRow>& rows);

struct ColumnBlock {
  ColumnSpec column;
  std::size_t offset = 0;
  std::size_t width = 1;
  double mean = 0.0;
  double stddev = 1.0;
};

class Encoder {
 public:
  /// Fits means/stds (population formula) and category dictionaries on the
  /// training rows. Throws DataError for constant continuous columns, for
  /// categorical columns with fewer than two classes, and for fewer than two rows.
  static Encoder fit(const TabularSchema& schema, const std::vector<RawRow>& train_rows);

  std::size_t dim() const { return dim_; }
  std::size_t num_columns() const { return blocks_.size(); }
  const std::vector<ColumnBlock>& blocks() const { return blocks_; }
  std::vector<ColumnSpec> columns() const;

  Matrix encode(const RawRow& row) const;
  Matrix encode_rows(const std::vector<RawRow>& rows) const;
  /// Argmax per categorical block (lowest index wins ties).
  RawRow decode(const Matrix& vec) const;
  std::vector<RawRow> decode_rows(const Matrix& batch) const;

  /// Expands a per-column bit vector to ambient dimensions.
  Matrix mask_to_ambient(std::span<const std::uint8_t> column_mask) const;
  Matrix mask_to_ambient(const BitMatrix& column_masks) const;

  /// Class index of `value` in categorical column `col`.
  std::size_t category_index(std::size_t col, const std::string& value) const;
  std::size_t column_index(const std::string& name) const;

  /// rows × columns numeric view: standardized value for continuous columns,
  /// class index for categorical ones.
  Matrix column_features(const Matrix& encoded) const;

  /// Replaces each categorical block by the one-hot vector of its argmax.
  Matrix snap(const Matrix& encoded) const;

  nlohmann::json to_json() const;
  static Encoder from_json(const nlohmann::json& j);

 private:
  std::vector<ColumnBlock> blocks_;
  std::size_t dim_ = 0;
};

}  // namespace tabguide
