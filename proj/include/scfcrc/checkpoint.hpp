#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scfcrc/nn.hpp"

namespace scfcrc {

// Parameter container shared by the filter and the head:
//   "SCFCRCCK" | u32 version | u32 kind length | kind | u32 config length |
//   config (JSON text) | u32 tensor count | per tensor: u32 name length, name,
//   u32 rows, u32 cols, rows*cols float32 little-endian, row-major.
inline constexpr char kCheckpointMagic[8] = {'S', 'C', 'F', 'C', 'R', 'C', 'C', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;
  std::string config;  // JSON echo of the configuration that built the model
  std::vector<std::pair<std::string, nn::Mat>> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const std::string& config,
                      const nn::ParamList& params);
Checkpoint read_checkpoint(const std::filesystem::path& path);
// Copies tensors into params in declaration order; names and shapes must match.
void load_parameters(const Checkpoint& ckpt, const nn::ParamList& params);

}  // namespace scfcrc
