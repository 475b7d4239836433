#include <gtest/gtest.h>

#include <filesystem>

#include "tabguide/checkpoint.hpp"
#include "tabguide/csv.hpp"
#include "tabguide/errors.hpp"
#include "tabguide/experiment.hpp"

namespace tabguide {
namespace {

namespace fs = std::filesystem;

class PipelineTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir = fs::temp_directory_path() / "tabguide_pipeline_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    RunConfig synth = base();
    synth.synth = "mixture";
    synth.rows = 300;
    synth.test_fraction = 0.2;
    cmd_synth(synth);
    RunConfig train = base();
    train.data = (dir / "train.csv").string();
    train.schema = (dir / "schema.json").string();
    train.hidden = 16;
    train.time_hidden = 8;
    train.embed_dim = 8;
    train.epochs = 3;
    train.batch_size = 64;
    train.optimizer = "adam";
    train.learning_rate = 1e-3;
    cmd_train(train);
  }

  static RunConfig base() {
    RunConfig cfg;
    cfg.seed = 5;
    cfg.output_dir = dir.string();
    cfg.steps = 10;
    return cfg;
  }

  static RunConfig with_checkpoint() {
    RunConfig cfg = base();
    cfg.checkpoint = (dir / "model.json").string();
    cfg.data = (dir / "test.csv").string();
    return cfg;
  }

  static inline fs::path dir;
};

TEST_F(PipelineTest, SynthAndTrainWriteArtifacts) {
  for (const char* f : {"train.csv", "test.csv", "schema.json", "manifold.json", "model.json", "train_loss.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  const csv::Table loss = csv::read_file(dir / "train_loss.csv");
  EXPECT_EQ(loss.rows.size(), 3u);
  const Checkpoint ckpt = load_checkpoint((dir / "model.json").string());
  EXPECT_EQ(ckpt.encoder.dim(), 2u + 2u * 3u);
  EXPECT_EQ(ckpt.schedule.steps(), 10);
}

TEST_F(PipelineTest, ImputeAnchorsObservedCells) {
  RunConfig cfg = with_checkpoint();
  cfg.mechanism = "mcar";
  cfg.ratio = 0.3;
  const auto out = cmd_impute(cfg);
  EXPECT_TRUE(out.contains("provenance"));
  const csv::Table truth = csv::read_file(dir / "test.csv");
  const csv::Table imputed = csv::read_file(dir / "imputed.csv");
  const csv::Table mask = csv::read_file(dir / "mask.csv");
  ASSERT_EQ(imputed.rows.size(), truth.rows.size());
  std::size_t masked = 0;
  for (std::size_t r = 0; r < truth.rows.size(); ++r) {
    for (std::size_t c = 0; c < truth.header.size(); ++c) {
      if (mask.rows[r][c] == "1") {
        ++masked;
        continue;
      }
      EXPECT_EQ(imputed.rows[r][c], truth.rows[r][c]) << r << "," << c;
    }
  }
  EXPECT_GT(masked, 0u);
  EXPECT_TRUE(fs::exists(dir / "report.json"));
}

TEST_F(PipelineTest, ImputeRejectsRatioOutsideOpenInterval) {
  RunConfig cfg = with_checkpoint();
  cfg.ratio = 1.0;
  EXPECT_THROW(cmd_impute(cfg), UsageError);
  cfg.ratio = 0.0;
  EXPECT_THROW(cmd_impute(cfg), UsageError);
}

TEST_F(PipelineTest, ConstrainWithControlAndEval) {
  RunConfig cfg = with_checkpoint();
  cfg.num_samples = 40;
  cfg.control = true;
  const auto out = cmd_constrain(cfg);
  EXPECT_TRUE(fs::exists(dir / "samples.csv"));
  EXPECT_EQ(csv::read_file(dir / "samples.csv").rows.size(), 40u);
  EXPECT_TRUE(out.dump().find("violation") != std::string::npos);
}

TEST(Config, HashIgnoresSeedAndOutputDir) {
  RunConfig a;
  RunConfig b;
  b.seed = 99;
  b.output_dir = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.eta = 0.3;
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Config, ProvenanceComment) {
  const Provenance p{7, "abc", ""};
  EXPECT_EQ(p.comment(), "seed=7 config=abc checkpoint=none");
}

TEST(Config, DiagValidatesNames) {
  RunConfig cfg;
  cfg.output_dir = (fs::temp_directory_path() / "tabguide_diag_names").string();
  cfg.diag = "volume";
  EXPECT_THROW(cmd_diag(cfg), UsageError);
  cfg.diag = "angles";
  cfg.diag_loss = "hinge";
  EXPECT_THROW(cmd_diag(cfg), UsageError);
}

TEST(Config, ShellDiagWritesTable) {
  RunConfig cfg;
  cfg.output_dir = (fs::temp_directory_path() / "tabguide_diag_shell").string();
  cfg.diag = "shell";
  cfg.diag_samples = 50;
  cfg.t_grid = {10, 100};
  cmd_diag(cfg);
  const csv::Table t = csv::read_file(fs::path(cfg.output_dir) / "diag_shell.csv");
  // Measured and predicted rows per step.
  EXPECT_EQ(t.rows.size(), 4u);
}

TEST(MaskCsv, RoundTrip) {
  const TabularSchema schema = TabularSchema::from_json(nlohmann::json::parse(
      R"({"columns": [{"name": "x", "kind": "continuous"}, {"name": "c", "kind": "categorical"}]})"));
  const Encoder enc = Encoder::fit(schema, {{1.0, std::string("a")}, {2.0, std::string("b")}});
  BitMatrix m(2, 2);
  m << 1, 0, 0, 1;
  const csv::Table t = mask_to_table(enc, m);
  EXPECT_EQ(t.header, (std::vector<std::string>{"x", "c"}));
  EXPECT_EQ(mask_from_table(enc, t), m);
  csv::Table bad = t;
  bad.rows[0][0] = "2";
  EXPECT_THROW(mask_from_table(enc, bad), Error);
}

}  // namespace
}  // namespace tabguide
