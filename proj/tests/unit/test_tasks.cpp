#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tabguide/errors.hpp"
#include "tabguide/metrics.hpp"
#include "tabguide/tasks.hpp"

namespace tabguide {
namespace {

using testing::random_matrix;

TEST(Masks, McarFractionAndDeterminism) {
  const MaskTask a = gen_mcar(2000, 10, 0.3, 5);
  const MaskTask b = gen_mcar(2000, 10, 0.3, 5);
  EXPECT_NEAR(a.missing_fraction(), 0.3, 0.02);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(gen_mcar(10, 3, 0.0, 1).mask.cast<int>().sum(), 0);
  EXPECT_THROW(gen_mcar(10, 3, 1.0, 1), TaskError);
  EXPECT_THROW(gen_mcar(10, 3, -0.1, 1), TaskError);
}

TEST(Masks, ObservedColumnDefault) {
  EXPECT_EQ(default_observed_columns(10), 3u);
  EXPECT_EQ(default_observed_columns(2), 1u);
  EXPECT_EQ(default_observed_columns(4), 2u);
}

TEST(Masks, MarKeepsDrivingColumnsAndHitsRatio) {
  Rng rng(2);
  const Matrix features = random_matrix(rng, 3000, 8);
  for (double ratio : {0.1, 0.25, 0.5}) {
    const MaskTask m = gen_mar(features, ratio, 3, 11);
    ASSERT_EQ(m.observed_columns.size(), 3u);
    for (std::size_t c : m.observed_columns) {
      EXPECT_EQ(m.mask.col(static_cast<Eigen::Index>(c)).cast<int>().sum(), 0);
    }
    // Realized fraction over the maskable cells.
    const double maskable = 3000.0 * 5.0;
    EXPECT_NEAR(m.mask.cast<double>().sum() / maskable, ratio, 0.02) << ratio;
  }
}

TEST(Masks, MarDependsOnObservedValues) {
  Rng rng(3);
  const Matrix features = random_matrix(rng, 5000, 2);
  const MaskTask m = gen_mar(features, 0.3, 1, 4);
  const auto driver = static_cast<Eigen::Index>(m.observed_columns[0]);
  const Eigen::Index other = 1 - driver;
  double hi = 0.0;
  double lo = 0.0;
  double n_hi = 0.0;
  double n_lo = 0.0;
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    if (features(r, driver) > 0.0) {
      hi += m.mask(r, other);
      n_hi += 1.0;
    } else {
      lo += m.mask(r, other);
      n_lo += 1.0;
    }
  }
  EXPECT_GT(std::abs(hi / n_hi - lo / n_lo), 0.05);
}

TEST(Masks, MarRejectsBadArguments) {
  Rng rng(1);
  const Matrix features = random_matrix(rng, 50, 3);
  EXPECT_THROW(gen_mar(features, 0.0, 1, 1), TaskError);
  EXPECT_THROW(gen_mar(features, 1.0, 1, 1), TaskError);
  EXPECT_THROW(gen_mar(features, 0.3, 3, 1), TaskError);
  EXPECT_THROW(gen_mar(features, 0.3, 0, 1), TaskError);
}

TEST(Masks, MnarOverallFraction) {
  Rng rng(5);
  const Matrix features = random_matrix(rng, 4000, 6);
  const MaskTask m = gen_mnar(features, 0.3, 9);
  EXPECT_NEAR(m.missing_fraction(), 0.3, 0.02);
  EXPECT_EQ(m.observed_columns.size() + m.logistic_columns.size(), 6u);
  EXPECT_THROW(gen_mnar(random_matrix(rng, 10, 1), 0.3, 1), TaskError);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.8), 3.4);
  EXPECT_DOUBLE_EQ(quantile({7}, 0.3), 7.0);
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3}, 1.0), 3.0);
}

class ScenarioTest : public ::testing::Test {
 protected:
  void SetUp() override {
    schema = TabularSchema::from_json(nlohmann::json::parse(
        R"({"columns": [{"name": "x", "kind": "continuous"}, {"name": "c", "kind": "categorical"}]})"));
    Rng rng(1);
    for (int i = 0; i < 500; ++i) {
      const double v = uniform01(rng);
      const char* cat = v < 0.6 ? "a" : (v < 0.85 ? "b" : "c");
      rows.push_back({uniform01(rng) * 10.0, std::string(cat)});
    }
    enc = Encoder::fit(schema, rows);
  }
  TabularSchema schema;
  std::vector<RawRow> rows;
  Encoder enc;
};

TEST_F(ScenarioTest, RangeUsesUpperQuantile) {
  const auto sc = gen_constraint_scenario(ScenarioKind::Range, rows, enc, 3);
  EXPECT_EQ(sc.range_column, "x");
  ASSERT_TRUE(sc.threshold.has_value());
  EXPECT_NEAR(sc.coverage, 0.2, 0.01);
  EXPECT_EQ(sc.spec_json["type"], "inequality");
  const ConstraintSpec spec = parse_constraint(sc.spec_json, enc);
  EXPECT_NEAR(violation_rate(spec, enc.encode_rows(rows)), 80.0, 1.0);
}

TEST_F(ScenarioTest, CategoryAvoidsMajority) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto sc = gen_constraint_scenario(ScenarioKind::Category, rows, enc, seed);
    ASSERT_TRUE(sc.category.has_value());
    EXPECT_NE(*sc.category, "a");
  }
}

TEST_F(ScenarioTest, CompositesCarryChildren) {
  const auto both = gen_constraint_scenario(ScenarioKind::Conjunction, rows, enc, 2);
  EXPECT_EQ(both.spec_json["type"], "and");
  EXPECT_EQ(both.spec_json["children"].size(), 2u);
  EXPECT_EQ(both.child_coverage.size(), 2u);
  const auto either = gen_constraint_scenario(ScenarioKind::Disjunction, rows, enc, 2);
  EXPECT_EQ(either.spec_json["type"], "or");
  EXPECT_GE(either.coverage, both.coverage);
}

TEST_F(ScenarioTest, ExplicitOptionsOverrideDefaults) {
  ScenarioOptions opts;
  opts.threshold = 4.0;
  const auto sc = gen_constraint_scenario(ScenarioKind::Range, rows, enc, 1, opts);
  EXPECT_EQ(*sc.threshold, 4.0);
  opts.category = "zzz";
  EXPECT_THROW(gen_constraint_scenario(ScenarioKind::Category, rows, enc, 1, opts), Error);
}

TEST(Scenario, NeedsAColumnOfTheRightKind) {
  const TabularSchema schema = TabularSchema::from_json(
      nlohmann::json::parse(R"({"columns": [{"name": "x", "kind": "continuous"}, {"name": "y", "kind": "continuous"}]})"));
  const std::vector<RawRow> rows{{1.0, 2.0}, {2.0, 1.0}, {3.0, 5.0}};
  const Encoder enc = Encoder::fit(schema, rows);
  EXPECT_THROW(gen_constraint_scenario(ScenarioKind::Category, rows, enc, 1), TaskError);
}

TEST(Scenario, ParsesNames) {
  EXPECT_EQ(parse_scenario("and"), ScenarioKind::Conjunction);
  EXPECT_EQ(parse_mechanism("mnar"), MaskMechanism::MNAR);
  EXPECT_THROW(parse_scenario("xor"), Error);
  EXPECT_THROW(parse_mechanism("random"), Error);
}

}  // namespace
}  // namespace tabguide
