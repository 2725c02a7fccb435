#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "deskrl/model.hpp"

namespace deskrl {

// One serialized model: architecture descriptor plus the flat parameter
// array. `role` distinguishes the trained head from frozen companions.
struct ModelBlob {
  std::string role;  // "policy" | "value" | "reference" | "reward"
  ModelSpec spec;
  std::vector<double> params;
};

// A full training snapshot. Doubles survive the JSON round trip bit-exactly
// (shortest-round-trip formatting), which the resume tests rely on.
struct Checkpoint {
  std::string algorithm;
  int step = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_position = 0;
  std::vector<ModelBlob> models;

  const ModelBlob* find(const std::string& role) const;
  const ModelBlob& require(const std::string& role) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

PolicyModel policy_from_blob(const ModelBlob& blob);
ValueModel value_from_blob(const ModelBlob& blob);
RewardModel reward_from_blob(const ModelBlob& blob);

}  // namespace deskrl
