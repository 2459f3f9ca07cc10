#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ecr/tensor.hpp"

namespace ecr {

// Self-describing binary container: string metadata plus named float32
// tensors. Layout (little-endian):
//
//   "ECRCKPT\0" u32 version
//   u32 n_meta   { u32 len, key, u32 len, value }*
//   u32 n_tensor { u32 len, name, u32 rank, u64 dims[rank], f32 data[] }*
//
// Values are stored verbatim, so write followed by read is bit-exact.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>& tensor(const std::string& name) const;
  const std::string& get(const std::string& key) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Writes to a sibling temporary and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_binary_file(const std::filesystem::path& path);

}  // namespace ecr
