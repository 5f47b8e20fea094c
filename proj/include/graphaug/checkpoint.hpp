#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphaug/errors.hpp"
#include "graphaug/nn.hpp"

namespace graphaug {

inline constexpr int kCheckpointFormatVersion = 1;

/// Serialized model: version, seed, free-form metadata, and every named
/// parameter with shape and values. Doubles round-trip exactly through the
/// JSON writer's shortest-representation encoding.
struct Checkpoint {
    std::uint64_t seed = 0;
    nlohmann::ordered_json metadata;  // generator_kind / classifier kind / dims ...
    std::vector<std::pair<std::string, std::pair<Shape, std::vector<double>>>> parameters;

    static Checkpoint from_params(const ParameterSet& params,
                                  nlohmann::ordered_json metadata) {
        Checkpoint ckpt;
        ckpt.seed = params.seed();
        ckpt.metadata = std::move(metadata);
        for (const auto& [name, tensor] : params.entries()) {
            ckpt.parameters.emplace_back(
                name, std::make_pair(tensor.shape(),
                                     std::vector<double>(tensor.values().begin(),
                                                         tensor.values().end())));
        }
        return ckpt;
    }

    /// Copies stored values into an already-constructed ParameterSet; names
    /// and shapes must match exactly.
    void restore_into(const ParameterSet& params) const {
        if (parameters.size() != params.entries().size()) {
            throw CorruptFile("checkpoint parameter count does not match the model");
        }
        for (const auto& [name, payload] : parameters) {
            if (!params.contains(name)) {
                throw CorruptFile("checkpoint has unknown parameter: " + name);
            }
            Tensor t = params.get(name);
            if (t.shape() != payload.first) {
                throw CorruptFile("checkpoint shape mismatch for " + name);
            }
            auto values = t.mutable_values();
            std::copy(payload.second.begin(), payload.second.end(), values.begin());
        }
    }
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["format"] = "graphaug.checkpoint";
    j["version"] = kCheckpointFormatVersion;
    j["seed"] = ckpt.seed;
    j["metadata"] = ckpt.metadata;
    auto params = nlohmann::ordered_json::array();
    for (const auto& [name, payload] : ckpt.parameters) {
        nlohmann::ordered_json p;
        p["name"] = name;
        p["shape"] = payload.first;
        p["values"] = payload.second;
        params.push_back(std::move(p));
    }
    j["parameters"] = std::move(params);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    out << j.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read checkpoint: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "graphaug.checkpoint") {
            throw CorruptFile("not a checkpoint file: " + path.string());
        }
        if (j.at("version").get<int>() != kCheckpointFormatVersion) {
            throw UnsupportedVersion("checkpoint version " +
                                     std::to_string(j.at("version").get<int>()) +
                                     " is not supported");
        }
        Checkpoint ckpt;
        ckpt.seed = j.at("seed").get<std::uint64_t>();
        ckpt.metadata = j.at("metadata");
        for (const auto& p : j.at("parameters")) {
            ckpt.parameters.emplace_back(
                p.at("name").get<std::string>(),
                std::make_pair(p.at("shape").get<Shape>(),
                               p.at("values").get<std::vector<double>>()));
        }
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFile("checkpoint " + path.string() + " is truncated or malformed: " +
                          e.what());
    }
}

}  // namespace graphaug
