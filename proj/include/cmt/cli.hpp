#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmt/model.hpp"
#include "cmt/trainer.hpp"

namespace cmt {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitUsage = 2 };

/// Flat JSON run configuration. Keys:
///   model:  bands channels heads cmab_blocks resnet_extract resnet_aggregate
///           ratio dffn_expansion variant, plus "preset" ("toy" or "default")
///   train:  lr epochs batch_size lr_period seed checkpoint_interval
///   loss:   lambda1 lambda2 wavelet_levels
/// Unknown keys throw ConfigError.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j, const ModelConfig& base = {});
    static RunConfig from_file(const std::filesystem::path& path, const ModelConfig& base = {});
};

/// Runs one command; never throws. argv[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace cmt
