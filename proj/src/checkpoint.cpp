#include "cmt/checkpoint.hpp"

#include <fmt/format.h>

#include "cmt/data.hpp"
#include "cmt/errors.hpp"

namespace cmt {

namespace fs = std::filesystem;
using json = nlohmann::json;

json to_json(const ModelConfig& cfg) {
    return {{"bands", cfg.bands},
            {"channels", cfg.channels},
            {"heads", cfg.heads},
            {"cmab_blocks", cfg.cmab_blocks},
            {"resnet_extract", cfg.resnet_extract},
            {"resnet_aggregate", cfg.resnet_aggregate},
            {"ratio", cfg.ratio},
            {"dffn_expansion", cfg.dffn_expansion},
            {"variant", to_string(cfg.variant)}};
}

ModelConfig model_config_from_json(const json& j) {
    ModelConfig cfg;
    try {
        auto read = [&j](const char* key, std::size_t& dst) {
            if (j.contains(key)) dst = j.at(key).get<std::size_t>();
        };
        read("bands", cfg.bands);
        read("channels", cfg.channels);
        read("heads", cfg.heads);
        read("cmab_blocks", cfg.cmab_blocks);
        read("resnet_extract", cfg.resnet_extract);
        read("resnet_aggregate", cfg.resnet_aggregate);
        read("ratio", cfg.ratio);
        read("dffn_expansion", cfg.dffn_expansion);
        if (j.contains("variant")) cfg.variant = parse_variant(j.at("variant").get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("model config: {}", e.what()));
    }
    return cfg;
}

namespace {

std::string tensor_file(const std::string& name) { return name + ".f32"; }

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IntegrityError(fmt::format("cannot create checkpoint directory {}: {}", dir.string(), ec.message()));
    json tensors = json::array();
    for (const auto& [name, value] : ckpt.params) {
        const TensorEntry e = write_tensor_file(dir, name, tensor_file(name), value);
        tensors.push_back({{"name", e.name},
                           {"file", e.file},
                           {"shape", e.shape},
                           {"offset", e.offset},
                           {"bytes", e.bytes},
                           {"encoding", e.encoding}});
    }
    const json j = {{"kind", "checkpoint"},
                    {"version", 1},
                    {"model_config", to_json(ckpt.config)},
                    {"seed", ckpt.seed},
                    {"epoch", ckpt.epoch},
                    {"tensors", std::move(tensors)}};
    write_json_file(dir / "manifest.json", j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& path) {
    const fs::path dir = fs::is_directory(path) ? path : path.parent_path();
    const fs::path manifest = dir / "manifest.json";
    if (!fs::exists(manifest)) throw IntegrityError(fmt::format("missing checkpoint manifest {}", manifest.string()));
    Checkpoint ckpt;
    std::vector<TensorEntry> entries;
    try {
        const json j = json::parse(read_text_file(manifest));
        if (j.at("kind").get<std::string>() != "checkpoint")
            throw IntegrityError(fmt::format("{} does not describe a checkpoint", manifest.string()));
        if (j.at("version").get<int>() != 1)
            throw IntegrityError(fmt::format("{}: unsupported checkpoint version", manifest.string()));
        ckpt.config = model_config_from_json(j.at("model_config"));
        ckpt.seed = j.at("seed").get<std::uint64_t>();
        ckpt.epoch = j.at("epoch").get<std::size_t>();
        for (const auto& t : j.at("tensors")) {
            TensorEntry e;
            e.name = t.at("name").get<std::string>();
            e.file = t.at("file").get<std::string>();
            e.shape = t.at("shape").get<Shape>();
            e.offset = t.at("offset").get<std::uint64_t>();
            e.bytes = t.at("bytes").get<std::uint64_t>();
            e.encoding = t.at("encoding").get<std::string>();
            if (e.file.find('/') != std::string::npos)
                throw IntegrityError(fmt::format("checkpoint tensor file '{}' must not contain a path", e.file));
            entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw IntegrityError(fmt::format("malformed checkpoint manifest {}: {}", manifest.string(), e.what()));
    } catch (const ConfigError& e) {
        throw IntegrityError(fmt::format("checkpoint {} has an invalid model config: {}", manifest.string(), e.what()));
    }

    // The stored tensors must be exactly the layout the config implies.
    Rng rng(0);
    ParamSet expected;
    try {
        expected = init_params(ckpt.config, rng);
    } catch (const ConfigError& e) {
        throw IntegrityError(fmt::format("checkpoint {} has an invalid model config: {}", manifest.string(), e.what()));
    }
    if (entries.size() != expected.size())
        throw IntegrityError(fmt::format("checkpoint {} stores {} tensors, model config implies {}", manifest.string(),
                                         entries.size(), expected.size()));
    for (const auto& e : entries) {
        if (ckpt.params.contains(e.name))
            throw IntegrityError(fmt::format("checkpoint tensor '{}' is listed twice", e.name));
        if (!expected.contains(e.name))
            throw IntegrityError(fmt::format("checkpoint tensor '{}' is not a parameter of the model config", e.name));
        if (expected.at(e.name).shape() != e.shape)
            throw IntegrityError(fmt::format("checkpoint tensor '{}' has shape {}, model config implies {}", e.name,
                                             shape_str(e.shape), shape_str(expected.at(e.name).shape())));
        ckpt.params.add(e.name, read_tensor_file(dir, e));
    }
    return ckpt;
}

}  // namespace cmt
