#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtb/params.hpp"

namespace mtb {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  std::string group;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<CheckpointTensor> tensors;
  nlohmann::json meta = nlohmann::json::object();
};

/// Writes dir/model.bin (magic, version, then name/group/shape/float64 values
/// per tensor in registration order) and dir/manifest.json (tensor index,
/// offsets, FNV-1a checksum of model.bin, caller metadata).
void save_checkpoint(const std::filesystem::path& dir, const ParamStore& store,
                     const nlohmann::json& meta = nlohmann::json::object());

/// Reads and cross-checks both files. Throws DataError on any mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Copies every tensor whose name starts with `prefix` into the store. With
/// `require_all`, every store parameter under the prefix must be present.
/// Returns the number of tensors copied.
std::size_t restore(ParamStore& store, const Checkpoint& ckpt, const std::string& prefix = "",
                    bool require_all = true);

}  // namespace mtb
