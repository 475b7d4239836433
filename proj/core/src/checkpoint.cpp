#include "tabguide/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>

#include "tabguide/errors.hpp"

namespace tabguide {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume little-endian");

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw Error("base64 payload length is not a multiple of 4");
  std::vector<unsigned char> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw Error("malformed base64 payload");
  std::size_t len = static_cast<std::size_t>(n);
  // EVP_DecodeBlock keeps the zero bytes produced by '=' padding.
  if (!text.empty() && text[text.size() - 1] == '=') --len;
  if (text.size() > 1 && text[text.size() - 2] == '=') --len;
  out.resize(len);
  return out;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

std::string encode_matrix(const Matrix& m) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(m.size()) * sizeof(double));
  if (!bytes.empty()) std::memcpy(bytes.data(), m.data(), bytes.size());
  return base64_encode(bytes);
}

Matrix decode_matrix(const std::string& text, Eigen::Index rows, Eigen::Index cols) {
  const auto bytes = base64_decode(text);
  if (bytes.size() != static_cast<std::size_t>(rows * cols) * sizeof(double)) {
    throw Error("weight blob holds " + std::to_string(bytes.size()) + " bytes; expected " +
                std::to_string(rows * cols * static_cast<Eigen::Index>(sizeof(double))));
  }
  Matrix m(rows, cols);
  if (!bytes.empty()) std::memcpy(m.data(), bytes.data(), bytes.size());
  return m;
}

namespace {

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  using nlohmann::json;
  const auto& cfg = ckpt.net.config();
  json layers = json::array();
  const auto names = ckpt.net.parameter_names();
  const auto& params = ckpt.net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    layers.push_back({{"name", names[i]},
                      {"rows", params[i].rows()},
                      {"cols", params[i].cols()},
                      {"data", encode_matrix(params[i])}});
  }
  json j{{"format", "tabguide-checkpoint"},
         {"version", kCheckpointVersion},
         {"seed", ckpt.seed},
         {"schema", ckpt.schema.to_json()},
         {"encoder", ckpt.encoder.to_json()},
         {"schedule",
          {{"steps", ckpt.schedule.steps()},
           {"alpha_1", ckpt.schedule.alpha_first()},
           {"alpha_T", ckpt.schedule.alpha_last()},
           {"interpolation", ckpt.schedule.interpolation()}}},
         {"network",
          {{"data_dim", cfg.data_dim},
           {"hidden", cfg.hidden},
           {"time_hidden", cfg.time_hidden},
           {"embed_dim", cfg.embed_dim},
           {"dtype", "float64-le"},
           {"parameters", layers}}},
         {"train",
          {{"epochs", ckpt.train.epochs},
           {"batch_size", ckpt.train.batch_size},
           {"learning_rate", ckpt.train.learning_rate},
           {"optimizer", optimizer_name(ckpt.train.optimizer)},
           {"seed", ckpt.train.seed}}}};
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.value("format", "") != "tabguide-checkpoint") throw Error("not a tabguide checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw Error("unsupported checkpoint version " + std::to_string(version));
    }
    const auto& s = j.at("schedule");
    if (s.at("interpolation").get<std::string>() != "linear") {
      throw Error("unsupported schedule interpolation '" + s.at("interpolation").get<std::string>() + "'");
    }
    const auto& n = j.at("network");
    DenoiserConfig cfg;
    cfg.data_dim = n.at("data_dim").get<std::size_t>();
    cfg.hidden = n.at("hidden").get<std::size_t>();
    cfg.time_hidden = n.at("time_hidden").get<std::size_t>();
    cfg.embed_dim = n.at("embed_dim").get<std::size_t>();
    DenoiserNet net(cfg, 0);
    const auto names = net.parameter_names();
    const auto& layers = n.at("parameters");
    if (layers.size() != names.size()) throw Error("checkpoint parameter count mismatch");
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& l = layers[i];
      if (l.at("name").get<std::string>() != names[i]) {
        throw Error("parameter " + std::to_string(i) + " is '" + l.at("name").get<std::string>() +
                    "'; expected '" + names[i] + "'");
      }
      Matrix& p = net.parameters()[i];
      const auto rows = l.at("rows").get<Eigen::Index>();
      const auto cols = l.at("cols").get<Eigen::Index>();
      if (rows != p.rows() || cols != p.cols()) throw Error("parameter '" + names[i] + "' has the wrong shape");
      p = decode_matrix(l.at("data").get<std::string>(), rows, cols);
    }
    const auto& t = j.at("train");
    TrainConfig train;
    train.epochs = t.at("epochs").get<int>();
    train.batch_size = t.at("batch_size").get<std::size_t>();
    train.learning_rate = t.at("learning_rate").get<double>();
    train.optimizer = t.at("optimizer").get<std::string>() == "adam" ? OptimizerKind::Adam : OptimizerKind::Sgd;
    train.seed = t.at("seed").get<std::uint64_t>();
    Checkpoint ckpt{TabularSchema::from_json(j.at("schema")),
                    Encoder::from_json(j.at("encoder")),
                    build_schedule(s.at("steps").get<int>(), s.at("alpha_1").get<double>(),
                                   s.at("alpha_T").get<double>()),
                    std::move(net),
                    train,
                    j.at("seed").get<std::uint64_t>()};
    if (ckpt.encoder.dim() != cfg.data_dim) throw Error("encoder dimension differs from the network input");
    return ckpt;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << contents;
  if (!out) throw Error("failed writing '" + path + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  write_file(path, checkpoint_to_string(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return checkpoint_from_string(text);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace tabguide
