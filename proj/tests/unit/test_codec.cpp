#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "tabguide/csv.hpp"
#include "tabguide/errors.hpp"
#include "tabguide/tabular_codec.hpp"

namespace tabguide {
namespace {

TabularSchema mixed_schema() {
  return TabularSchema::from_json(nlohmann::json::parse(R"({
    "columns": [
      {"name": "age", "kind": "continuous"},
      {"name": "job", "kind": "categorical"},
      {"name": "hours", "kind": "continuous"},
      {"name": "label", "kind": "categorical"}
    ],
    "target": "label"
  })"));
}

std::vector<RawRow> mixed_rows() {
  return {{20.0, std::string("a"), 40.0}, {30.0, std::string("b"), 35.0},
          {40.0, std::string("c"), 50.0}, {50.0, std::string("a"), 45.0}};
}

TEST(Csv, ParsesQuotedFieldsAndSkipsComments) {
  std::istringstream in("# seed=1\nname,note\nx,\"a, b\"\ny,\"say \"\"hi\"\"\"\n");
  const csv::Table t = csv::read(in);
  ASSERT_EQ(t.header, (std::vector<std::string>{"name", "note"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][1], "a, b");
  EXPECT_EQ(t.rows[1][1], "say \"hi\"");
}

TEST(Csv, RejectsMalformedQuoting) {
  std::istringstream open_quote("a,b\n\"x,1\n");
  EXPECT_THROW(csv::read(open_quote), DataError);
  std::istringstream trailing("a,b\n\"x\"y,1\n");
  EXPECT_THROW(csv::read(trailing), DataError);
  std::istringstream ragged("a,b\n1\n");
  EXPECT_THROW(csv::read(ragged), DataError);
}

TEST(Csv, WriteReadRoundTrip) {
  csv::Table t{{"a", "b"}, {{"1", "x,y"}, {"2.5", "say \"hi\""}, {"", "z"}}};
  std::ostringstream out;
  csv::write(out, t, "seed=3");
  EXPECT_EQ(out.str().rfind("# seed=3\n", 0), 0u);
  std::istringstream in(out.str());
  const csv::Table back = csv::read(in);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
}

TEST(Csv, FormatDoubleRoundTrips) {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 12345.678, 0.0}) {
    EXPECT_EQ(std::stod(csv::format_double(v)), v);
  }
  EXPECT_EQ(csv::format_double(0.5), "0.5");
}

TEST(Schema, InfersKindsFromValues) {
  csv::Table t{{"x", "c"}, {{"1.5", "red"}, {"2", "blue"}}};
  const TabularSchema s = TabularSchema::infer(t);
  ASSERT_EQ(s.columns.size(), 2u);
  EXPECT_EQ(s.columns[0].kind, ColumnKind::Continuous);
  EXPECT_EQ(s.columns[1].kind, ColumnKind::Categorical);
}

TEST(Schema, RejectsDuplicatesAndUnknownKinds) {
  EXPECT_THROW(TabularSchema::from_json(nlohmann::json::parse(
                   R"({"columns": [{"name": "a", "kind": "continuous"}, {"name": "a", "kind": "continuous"}]})")),
               DataError);
  EXPECT_THROW(TabularSchema::from_json(nlohmann::json::parse(R"({"columns": [{"name": "a", "kind": "text"}]})")),
               DataError);
}

TEST(Schema, TargetIsExcludedFromModeling) {
  const auto cols = mixed_schema().modeled_columns();
  ASSERT_EQ(cols.size(), 3u);
  EXPECT_EQ(cols.back().name, "hours");
}

TEST(Dataset, DropsRowsWithMissingTokens) {
  csv::Table t{{"label", "hours", "age", "job"},
               {{"y", "40", "20", "a"}, {"n", "?", "30", "b"}, {"y", "35", "NA", "c"}, {"n", "50", "40", "c"}}};
  const Dataset d = load_dataset(t, mixed_schema());
  EXPECT_EQ(d.dropped_rows, 2u);
  ASSERT_EQ(d.rows.size(), 2u);
  // Columns follow schema order regardless of the header order.
  EXPECT_EQ(std::get<double>(d.rows[1][0]), 40.0);
  EXPECT_EQ(std::get<std::string>(d.rows[1][1]), "c");
}

TEST(Encoder, LayoutAndStandardization) {
  const Encoder enc = Encoder::fit(mixed_schema(), mixed_rows());
  ASSERT_EQ(enc.num_columns(), 3u);
  EXPECT_EQ(enc.dim(), 5u);
  EXPECT_EQ(enc.blocks()[1].offset, 1u);
  EXPECT_EQ(enc.blocks()[1].width, 3u);
  EXPECT_EQ(enc.blocks()[2].offset, 4u);
  EXPECT_DOUBLE_EQ(enc.blocks()[0].mean, 35.0);
  EXPECT_DOUBLE_EQ(enc.blocks()[0].stddev, std::sqrt(125.0));

  const Matrix x = enc.encode_rows(mixed_rows());
  EXPECT_NEAR(x.col(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR(x.col(0).squaredNorm() / 4.0, 1.0, 1e-12);
  EXPECT_EQ(x.block(0, 1, 4, 3).rowwise().sum(), Matrix::Ones(4, 1));
}

TEST(Encoder, DecodeInvertsEncode) {
  const Encoder enc = Encoder::fit(mixed_schema(), mixed_rows());
  const auto back = enc.decode_rows(enc.encode_rows(mixed_rows()));
  for (std::size_t r = 0; r < back.size(); ++r) {
    EXPECT_NEAR(std::get<double>(back[r][0]), std::get<double>(mixed_rows()[r][0]), 1e-12);
    EXPECT_EQ(std::get<std::string>(back[r][1]), std::get<std::string>(mixed_rows()[r][1]));
    EXPECT_NEAR(std::get<double>(back[r][2]), std::get<double>(mixed_rows()[r][2]), 1e-12);
  }
}

TEST(Encoder, DecodeTakesArgmaxWithLowestIndexOnTies) {
  const Encoder enc = Encoder::fit(mixed_schema(), mixed_rows());
  Matrix v = Matrix::Zero(1, 5);
  v(0, 2) = 0.4;
  v(0, 3) = 0.4;
  EXPECT_EQ(std::get<std::string>(enc.decode(v)[1]), "b");
  const Matrix snapped = enc.snap(v);
  EXPECT_EQ(snapped(0, 2), 1.0);
  EXPECT_EQ(snapped(0, 3), 0.0);
}

TEST(Encoder, MaskExpandsOverBlocks) {
  const Encoder enc = Encoder::fit(mixed_schema(), mixed_rows());
  const std::uint8_t cols[] = {0, 1, 0};
  const Matrix m = enc.mask_to_ambient(cols);
  Matrix want(1, 5);
  want << 0, 1, 1, 1, 0;
  EXPECT_EQ(m, want);
}

TEST(Encoder, ColumnFeaturesUseClassIndex) {
  const Encoder enc = Encoder::fit(mixed_schema(), mixed_rows());
  const Matrix f = enc.column_features(enc.encode_rows(mixed_rows()));
  ASSERT_EQ(f.cols(), 3);
  EXPECT_EQ(f(2, 1), 2.0);
  EXPECT_EQ(f(3, 1), 0.0);
}

TEST(Encoder, RejectsDegenerateColumns) {
  std::vector<RawRow> constant{{1.0, std::string("a"), 2.0}, {1.0, std::string("b"), 3.0}};
  EXPECT_THROW(Encoder::fit(mixed_schema(), constant), DataError);
  std::vector<RawRow> one_class{{1.0, std::string("a"), 2.0}, {2.0, std::string("a"), 3.0}};
  EXPECT_THROW(Encoder::fit(mixed_schema(), one_class), DataError);
}

TEST(Encoder, UnknownCategoryIsAnError) {
  const Encoder enc = Encoder::fit(mixed_schema(), mixed_rows());
  EXPECT_THROW(enc.encode({1.0, std::string("zzz"), 2.0}), DataError);
  EXPECT_THROW(enc.column_index("nope"), DataError);
}

TEST(Encoder, JsonRoundTrip) {
  const Encoder enc = Encoder::fit(mixed_schema(), mixed_rows());
  const Encoder back = Encoder::from_json(enc.to_json());
  EXPECT_EQ(back.to_json(), enc.to_json());
  EXPECT_EQ(back.encode_rows(mixed_rows()), enc.encode_rows(mixed_rows()));
}

}  // namespace
}  // namespace tabguide
