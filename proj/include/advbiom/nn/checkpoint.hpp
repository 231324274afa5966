#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "advbiom/core/random.hpp"
#include "advbiom/nn/layers.hpp"

namespace advbiom::nn {

/// On-disk layout: "ADVBCKPT", u32 version, u64 header length, JSON header, then the
/// float64 payload of every array at the offsets listed in the header.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor> arrays;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes to a temporary sibling and renames, so a crash never leaves a torn file.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameters and buffers into `arrays` as "<prefix><name>".
void export_parameters(const ParameterSet& ps, const std::string& prefix,
                       std::map<std::string, Tensor>& arrays);
/// Overwrites values in place; every entry must be present with a matching shape.
void import_parameters(ParameterSet& ps, const std::string& prefix,
                       const std::map<std::string, Tensor>& arrays);

std::string serialize_rng(const Rng& rng);
void restore_rng(Rng& rng, const std::string& state);

}  // namespace advbiom::nn
