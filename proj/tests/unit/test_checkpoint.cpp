#include <gtest/gtest.h>

#include <filesystem>

#include "tabguide/checkpoint.hpp"
#include "tabguide/errors.hpp"

namespace tabguide {
namespace {

Checkpoint small_checkpoint() {
  const TabularSchema schema = TabularSchema::from_json(nlohmann::json::parse(
      R"({"columns": [{"name": "x", "kind": "continuous"}, {"name": "c", "kind": "categorical"}]})"));
  const std::vector<RawRow> rows{{1.0, std::string("a")}, {2.0, std::string("b")}, {4.0, std::string("a")}};
  Encoder enc = Encoder::fit(schema, rows);
  DenoiserNet net(DenoiserConfig{enc.dim(), 8, 6, 4}, 3);
  TrainConfig tc;
  tc.epochs = 5;
  tc.seed = 2;
  return Checkpoint{schema, enc, build_schedule(30, 0.999, 0.97), net, tc, 42};
}

TEST(Base64, KnownVectors) {
  const std::string text = "foobar";
  EXPECT_EQ(base64_encode({text.begin(), text.end()}), "Zm9vYmFy");
  const std::string two = "fo";
  EXPECT_EQ(base64_encode({two.begin(), two.end()}), "Zm8=");
  const auto back = base64_decode("Zm8=");
  EXPECT_EQ(std::string(back.begin(), back.end()), "fo");
  EXPECT_TRUE(base64_decode("").empty());
  EXPECT_THROW(base64_decode("abc"), Error);
}

TEST(Sha256, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(MatrixBlob, RoundTripIsExact) {
  Matrix m(2, 3);
  m << 0.1, -2.5, 1e-300, 3.0, -0.0, 7.0 / 3.0;
  const Matrix back = decode_matrix(encode_matrix(m), 2, 3);
  EXPECT_EQ(back, m);
  EXPECT_THROW(decode_matrix(encode_matrix(m), 3, 3), Error);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
  const Checkpoint a = small_checkpoint();
  const std::string text = checkpoint_to_string(a);
  const Checkpoint b = checkpoint_from_string(text);
  EXPECT_EQ(checkpoint_to_string(b), text);
  EXPECT_EQ(b.seed, 42u);
  EXPECT_EQ(b.schedule.steps(), 30);
  EXPECT_EQ(b.schedule.alpha_bar(30), a.schedule.alpha_bar(30));
  ASSERT_EQ(b.net.parameters().size(), a.net.parameters().size());
  for (std::size_t i = 0; i < a.net.parameters().size(); ++i) {
    EXPECT_EQ(b.net.parameters()[i], a.net.parameters()[i]);
  }
  EXPECT_EQ(b.encoder.to_json(), a.encoder.to_json());
}

TEST(Checkpoint, SerializationIsDeterministic) {
  EXPECT_EQ(checkpoint_to_string(small_checkpoint()), checkpoint_to_string(small_checkpoint()));
}

TEST(Checkpoint, RejectsForeignOrCorruptInput) {
  EXPECT_THROW(checkpoint_from_string("not json"), Error);
  EXPECT_THROW(checkpoint_from_string(R"({"format": "other"})"), Error);
  auto j = nlohmann::json::parse(checkpoint_to_string(small_checkpoint()));
  j["version"] = 99;
  EXPECT_THROW(checkpoint_from_string(j.dump()), Error);
  j = nlohmann::json::parse(checkpoint_to_string(small_checkpoint()));
  j["network"]["parameters"][0]["rows"] = 1;
  EXPECT_THROW(checkpoint_from_string(j.dump()), Error);
}

TEST(Checkpoint, FileRoundTripAndMissingPath) {
  const auto path = std::filesystem::temp_directory_path() / "tabguide_ckpt_test.json";
  save_checkpoint(small_checkpoint(), path.string());
  const Checkpoint back = load_checkpoint(path.string());
  EXPECT_EQ(checkpoint_to_string(back), checkpoint_to_string(small_checkpoint()));
  std::filesystem::remove(path);
  try {
    load_checkpoint(path.string());
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(path.string()), std::string::npos);
  }
}

}  // namespace
}  // namespace tabguide
