#include "deskrl/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "deskrl/error.hpp"

namespace deskrl {

namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "deskrl-checkpoint-v1";

json spec_to_json(const ModelSpec& spec) {
  return json{{"arch", arch_name(spec.arch)},
              {"vocab_size", spec.vocab_size},
              {"context_window", spec.context_window},
              {"hidden_width", spec.hidden_width},
              {"output_dim", spec.output_dim}};
}

ModelSpec spec_from_json(const json& j) {
  ModelSpec spec;
  spec.arch = arch_from_name(j.at("arch").get<std::string>());
  spec.vocab_size = j.at("vocab_size").get<int>();
  spec.context_window = j.at("context_window").get<int>();
  spec.hidden_width = j.at("hidden_width").get<int>();
  spec.output_dim = j.at("output_dim").get<int>();
  validate_spec(spec);
  return spec;
}

}  // namespace

const ModelBlob* Checkpoint::find(const std::string& role) const {
  for (const ModelBlob& m : models) {
    if (m.role == role) return &m;
  }
  return nullptr;
}

const ModelBlob& Checkpoint::require(const std::string& role) const {
  const ModelBlob* m = find(role);
  if (!m) throw ConfigError("checkpoint is missing a '" + role + "' model");
  return *m;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json j;
  j["format"] = kFormatTag;
  j["algorithm"] = ckpt.algorithm;
  j["step"] = ckpt.step;
  j["rng"] = json{{"seed", ckpt.rng_seed}, {"position", ckpt.rng_position}};
  json models = json::array();
  for (const ModelBlob& m : ckpt.models) {
    json mj = spec_to_json(m.spec);
    mj["role"] = m.role;
    mj["params"] = m.params;
    models.push_back(std::move(mj));
  }
  j["models"] = std::move(models);

  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path.string());
  out << j.dump() << '\n';
  if (!out) throw ConfigError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kFormatTag) {
      throw ConfigError("unrecognized checkpoint format in " + path.string());
    }
    Checkpoint ckpt;
    ckpt.algorithm = j.at("algorithm").get<std::string>();
    ckpt.step = j.at("step").get<int>();
    ckpt.rng_seed = j.at("rng").at("seed").get<std::uint64_t>();
    ckpt.rng_position = j.at("rng").at("position").get<std::uint64_t>();
    for (const json& mj : j.at("models")) {
      ModelBlob m;
      m.role = mj.at("role").get<std::string>();
      m.spec = spec_from_json(mj);
      m.params = mj.at("params").get<std::vector<double>>();
      if (m.params.size() != param_count(m.spec)) {
        throw ConfigError("checkpoint '" + m.role + "' parameter count mismatch");
      }
      ckpt.models.push_back(std::move(m));
    }
    return ckpt;
  } catch (const json::exception& e) {
    throw ConfigError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

PolicyModel policy_from_blob(const ModelBlob& blob) {
  if (blob.spec.output_dim != blob.spec.vocab_size) {
    throw ConfigError("'" + blob.role + "' model is not a policy head");
  }
  return PolicyModel{blob.spec, blob.params};
}

ValueModel value_from_blob(const ModelBlob& blob) {
  if (blob.spec.output_dim != 1) throw ConfigError("'" + blob.role + "' model is not a scalar head");
  return ValueModel{blob.spec, blob.params};
}

RewardModel reward_from_blob(const ModelBlob& blob) {
  if (blob.spec.output_dim != 1) throw ConfigError("'" + blob.role + "' model is not a scalar head");
  return RewardModel{blob.spec, blob.params};
}

}  // namespace deskrl
