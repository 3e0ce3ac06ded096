#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "inpaint/nn/adam.hpp"
#include "inpaint/nn/module.hpp"

namespace inpaint::cli {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> data;
};

/// Zip container: "manifest.json" plus one little-endian float32 blob per
/// array under "arrays/".
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  std::string model;
  std::string config_hash;
  std::int64_t step = 0;
  std::vector<CheckpointArray> arrays;
  nlohmann::json extra = nlohmann::json::object(); ///< e.g. optimizer step counts

  const CheckpointArray *find(const std::string &name) const;
};

void save_checkpoint(const std::string &path, const Checkpoint &ckpt);
/// Throws TruncatedFile, VersionMismatch, ShapeMismatch (entry bytes differ
/// from its shape).
Checkpoint load_checkpoint(const std::string &path);

/// Appends every parameter of `module` as "<prefix>.<name>".
void add_module(Checkpoint &ckpt, const std::string &prefix, const nn::Module &module);
/// Copies "<prefix>.<name>" arrays into the module's parameters.
/// Throws ShapeMismatch for a missing or differently shaped entry.
void restore_module(const Checkpoint &ckpt, const std::string &prefix, nn::Module &module);

/// Adam moments as "adam.<prefix>.m.<name>" / ".v.", step count in extra.
void add_adam(Checkpoint &ckpt, const std::string &prefix, const nn::Module &module,
              const nn::AdamState &state);
void restore_adam(const Checkpoint &ckpt, const std::string &prefix, const nn::Module &module,
                  nn::AdamState &state);

} // namespace inpaint::cli
