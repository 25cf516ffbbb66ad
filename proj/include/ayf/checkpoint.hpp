#pragma once

#include <filesystem>
#include <string>

#include "ayf/net.hpp"

// Binary model container (all integers and floats little-endian):
//
//   8 bytes   magic "AYFCKPT1"
//   u32       format version (1)
//   u32       header length H
//   H bytes   JSON header: dim, classes, hidden, embed_width, freqs,
//             config_hash, tool_version
//   u64       parameter count P
//   P x f64   flat parameters; every weight matrix row-major
//   u64       FNV-1a over header bytes then parameter bytes
namespace ayf::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct Loaded {
  net::MlpFlowMap model;
  std::string config_hash;
  std::string tool_version;
};

void save(const std::filesystem::path& path, const net::MlpFlowMap& model,
          const std::string& config_hash);

// Throws IoError when unreadable, IntegrityError on bad magic, version,
// truncation or checksum.
Loaded load(const std::filesystem::path& path);

}  // namespace ayf::checkpoint
