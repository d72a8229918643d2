#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "scgan/networks.hpp"
#include "scgan/optim.hpp"

namespace scgan {

constexpr int kCheckpointVersion = 1;

/// Network + optimizer state + epoch counter, as stored on disk.
struct Checkpoint {
  Model model;
  Adam optimizer;
  int epoch = 0;
  nlohmann::json meta = nlohmann::json::object();
};

/// Binary container: 8-byte magic, u32 version, u64 header length, a JSON
/// header (version, NetworkSpec, epoch, optimizer settings, array directory),
/// then the named float64 arrays in directory order, little-endian.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const Adam& optimizer, int epoch,
                     const nlohmann::json& meta = nlohmann::json::object());

Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

/// FNV-1a 64-bit digest of the file contents, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

}  // namespace scgan
