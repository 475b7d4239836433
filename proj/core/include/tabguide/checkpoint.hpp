#pragma once

// Versioned JSON checkpoints and content hashes.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tabguide/diffusion.hpp"
#include "tabguide/tabular_codec.hpp"

namespace tabguide {

inline constexpr int kCheckpointVersion = 1;

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(const std::string& bytes);

/// Raw little-endian doubles of a row-major matrix, base64 encoded.
std::string encode_matrix(const Matrix& m);
Matrix decode_matrix(const std::string& text, Eigen::Index rows, Eigen::Index cols);

struct Checkpoint {
  TabularSchema schema;
  Encoder encoder;
  NoiseSchedule schedule;
  DenoiserNet net;
  TrainConfig train;
  std::uint64_t seed = 0;
};

/// Deterministic serialization: equal checkpoints give equal bytes.
std::string checkpoint_to_string(const Checkpoint& ckpt);
Checkpoint checkpoint_from_string(const std::string& text);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
/// Throws Error with the path in the message on I/O or format errors.
Checkpoint load_checkpoint(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace tabguide
