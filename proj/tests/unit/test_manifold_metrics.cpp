#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/QR>

#include "support.hpp"
#include "tabguide/errors.hpp"
#include "tabguide/manifold.hpp"
#include "tabguide/metrics.hpp"

namespace tabguide {
namespace {

using testing::central_difference;
using testing::random_matrix;

Matrix random_orthonormal_rows(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd(random_matrix(rng, d, n)));
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, n);
  return q.transpose();
}

TEST(Manifold, SphereSamplesLieOnTheSphere) {
  const auto m = SyntheticManifold::sphere(2.5, 2, 5);
  const Matrix x = m.sample(100, 3);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    EXPECT_NEAR(x.row(r).norm(), 2.5, 1e-12);
    EXPECT_EQ(x(r, 3), 0.0);
    EXPECT_EQ(x(r, 4), 0.0);
  }
  EXPECT_LE((m.project(x) - x).norm(), 1e-12);
}

TEST(Manifold, TangentAndNormalAreOrthonormalComplements) {
  Rng rng(1);
  const std::vector<SyntheticManifold> shapes{
      SyntheticManifold::sphere(1.0, 2, 4),
      SyntheticManifold::affine(random_orthonormal_rows(rng, 2, 5), random_matrix(rng, 1, 5))};
  for (const auto& m : shapes) {
    const Matrix p = m.sample(1, 7);
    const Matrix tb = m.tangent_basis(p);
    const Matrix nb = m.normal_basis(p);
    ASSERT_EQ(static_cast<std::size_t>(tb.rows()), m.intrinsic_dim());
    ASSERT_EQ(static_cast<std::size_t>(nb.rows()), m.ambient_dim() - m.intrinsic_dim());
    Matrix all(tb.rows() + nb.rows(), tb.cols());
    all << tb, nb;
    const auto d = static_cast<Eigen::Index>(m.ambient_dim());
    EXPECT_LE((all * all.transpose() - Matrix::Identity(d, d)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Manifold, ProjectionIsTheNearestPoint) {
  Rng rng(2);
  const std::vector<SyntheticManifold> shapes{
      SyntheticManifold::circle(1.5, 3),
      SyntheticManifold::affine(random_orthonormal_rows(rng, 2, 4), random_matrix(rng, 1, 4))};
  for (const auto& m : shapes) {
    const Matrix x = random_matrix(rng, 20, static_cast<Eigen::Index>(m.ambient_dim()), 2.0);
    const Matrix p = m.project(x);
    EXPECT_LE((m.project(p) - p).norm(), 1e-12);
    const Matrix others = m.sample(500, 4, 3.0);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double best = (x.row(r) - p.row(r)).norm();
      for (Eigen::Index k = 0; k < others.rows(); ++k) {
        EXPECT_LE(best, (x.row(r) - others.row(k)).norm() + 1e-12);
      }
      // The residual is normal to the manifold.
      const Matrix tb = m.tangent_basis(p.row(r));
      EXPECT_LE((tb * (x.row(r) - p.row(r)).transpose()).norm(), 1e-10);
    }
  }
}

TEST(Manifold, RejectsNonOrthonormalBasis) {
  Matrix b(1, 3);
  b << 1.0, 1.0, 0.0;
  EXPECT_THROW(SyntheticManifold::affine(b, Matrix::Zero(1, 3)), ConfigError);
  EXPECT_THROW(SyntheticManifold::sphere(1.0, 2, 2), DimensionError);
}

TEST(ProjectorModel, DirtyEstimateIsTheProjection) {
  Rng rng(3);
  const auto flat = SyntheticManifold::affine(random_orthonormal_rows(rng, 2, 5), random_matrix(rng, 1, 5));
  const NoiseSchedule sched = build_schedule(200, 0.9999, 0.98);
  const AffineProjectorModel model(flat, sched);
  const Matrix x = random_matrix(rng, 6, 5, 3.0);
  for (int t : {1, 90, 200}) {
    const Matrix want = flat.project(x / std::sqrt(sched.alpha_bar(t)));
    EXPECT_LE((dirty_estimate(model, sched, x, t) - want).cwiseAbs().maxCoeff(), 1e-10);
    ad::Tape tape;
    ad::Var out = model.record(tape, tape.leaf(x, false), t);
    EXPECT_LE((tape.value(out) - model.predict(x, t)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(ProjectorModel, GuidanceGradientIsTangent) {
  Rng rng(4);
  const auto flat = SyntheticManifold::affine(random_orthonormal_rows(rng, 2, 6), random_matrix(rng, 1, 6));
  const NoiseSchedule sched = build_schedule(200, 0.9999, 0.98);
  const AffineProjectorModel model(flat, sched);
  const Matrix x = random_matrix(rng, 4, 6);
  const ConstraintSpec spec{Imputation{Matrix::Ones(1, 6), random_matrix(rng, 4, 6), Norm::L2}};
  const Matrix g = guidance_gradient(model, sched, spec, x, 30);
  const Matrix nb = flat.normal_basis(flat.project(x.row(0)));
  EXPECT_LE((g * nb.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  const Matrix fd = central_difference(
      [&](const Matrix& p) { return eval_loss(spec, dirty_estimate(model, sched, p, 30)); }, x);
  EXPECT_LE(testing::relative_error(g, fd), 1e-6);
}

TEST(Angles, Basics) {
  Matrix a(1, 2);
  a << 1.0, 0.0;
  Matrix b(1, 2);
  b << 0.0, 2.0;
  EXPECT_NEAR(*angle_between(a, b), 90.0, 1e-12);
  EXPECT_NEAR(*angle_between(a, -a), 180.0, 1e-12);
  EXPECT_FALSE(angle_between(a, Matrix::Zero(1, 2)).has_value());
}

TEST(Shell, DistanceMatchesCodimension) {
  const auto circle = SyntheticManifold::circle(10.0, 100);
  const ShellCheck c = shell_distance_at(circle, 0.5, 2000, 1);
  EXPECT_NEAR(c.measured / c.predicted, 1.0, 0.02);
  EXPECT_THROW(shell_distance_at(circle, 0.0, 10, 1), ConfigError);
}

TEST(Metrics, ViolationOfUniformAgainstUpperTail) {
  Rng rng(9);
  Matrix x(10000, 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, 0) = uniform01(rng);
  Inequality s;
  s.selector = AffineSelector::coordinate(0);
  s.lower = 0.9;
  EXPECT_NEAR(violation_rate({s}, x), 90.0, 1.0);
}

TEST(Metrics, CompositeSatisfaction) {
  Matrix x(3, 1);
  x << 0.0, 1.0, 2.0;
  Inequality lo;
  lo.selector = AffineSelector::coordinate(0);
  lo.lower = 0.5;
  Inequality hi = lo;
  hi.lower.reset();
  hi.upper = 1.5;
  EXPECT_EQ(satisfied({Conjunction{{{lo}, {hi}}}}, x), (std::vector<bool>{false, true, false}));
  EXPECT_EQ(satisfied({Disjunction{{{lo}, {hi}}}}, x), (std::vector<bool>{true, true, true}));
  EXPECT_THROW(satisfied({Imputation{Matrix::Ones(1, 1), Matrix::Zero(1, 1), Norm::L1}}, x), SpecError);
}

class ImputationMetrics : public ::testing::Test {
 protected:
  void SetUp() override {
    schema = TabularSchema::from_json(nlohmann::json::parse(
        R"({"columns": [{"name": "x", "kind": "continuous"}, {"name": "c", "kind": "categorical"}]})"));
    Rng rng(5);
    std::normal_distribution<double> normal(0.0, 1.0);
    const char* cats[] = {"a", "b", "c", "d"};
    for (int i = 0; i < 4000; ++i) {
      rows.push_back({normal(rng), std::string(cats[rng() % 4])});
    }
    enc = Encoder::fit(schema, rows);
    truth = enc.encode_rows(rows);
    mask = gen_mask(truth.rows());
  }
  static BitMatrix gen_mask(Eigen::Index rows) {
    BitMatrix m(rows, 2);
    for (Eigen::Index r = 0; r < rows; ++r) {
      m(r, 0) = r % 2;
      m(r, 1) = (r + 1) % 2;
    }
    return m;
  }
  TabularSchema schema;
  std::vector<RawRow> rows;
  Encoder enc;
  Matrix truth;
  BitMatrix mask;
};

TEST_F(ImputationMetrics, MeanImputerScoresAboutOne) {
  Matrix imputed = truth;
  imputed.col(0).setZero();
  EXPECT_NEAR(imputation_mse(imputed, truth, mask, enc), 1.0, 0.08);
  EXPECT_EQ(imputation_mse(truth, truth, mask, enc), 0.0);
}

TEST_F(ImputationMetrics, RandomGuessAccuracyIsAQuarter) {
  Rng rng(6);
  Matrix guess = truth;
  guess.block(0, 1, guess.rows(), 4) = random_matrix(rng, guess.rows(), 4);
  const double acc = imputation_accuracy(enc.decode_rows(guess), rows, mask);
  EXPECT_NEAR(acc, 25.0, 3.0);
  EXPECT_EQ(imputation_accuracy(rows, rows, mask), 100.0);
}

TEST_F(ImputationMetrics, EmptyMasksThrow) {
  const BitMatrix none = BitMatrix::Zero(truth.rows(), 2);
  EXPECT_THROW(imputation_mse(truth, truth, none, enc), EmptyMetricError);
  EXPECT_THROW(imputation_accuracy(rows, rows, none), EmptyMetricError);
}

TEST_F(ImputationMetrics, ReportSplitsColumns) {
  const EvalReport rep = evaluate_imputation(enc, truth, truth, mask);
  ASSERT_TRUE(rep.continuous_mse.has_value());
  EXPECT_EQ(*rep.continuous_mse, 0.0);
  EXPECT_EQ(*rep.categorical_accuracy, 100.0);
  EXPECT_EQ(rep.masked_continuous, 2000u);
  EXPECT_EQ(rep.masked_categorical, 2000u);
  EXPECT_TRUE(rep.column_mse.count("x"));
  EXPECT_TRUE(rep.column_accuracy.count("c"));
}

}  // namespace
}  // namespace tabguide
