#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "cmt/model.hpp"
#include "cmt/params.hpp"

namespace cmt {

nlohmann::json to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults; unknown keys are ignored here and
/// rejected by the CLI config reader.
ModelConfig model_config_from_json(const nlohmann::json& j);

struct Checkpoint {
    ModelConfig config;
    ParamSet params;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
};

/// <dir>/manifest.json plus one float32 file per parameter.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
/// Accepts the checkpoint directory or its manifest.json. Throws
/// IntegrityError when files are damaged or the stored tensors do not match
/// the parameter layout implied by the stored model config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cmt
