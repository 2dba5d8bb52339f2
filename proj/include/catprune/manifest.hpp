#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "catprune/errors.hpp"
#include "catprune/sha256.hpp"
#include "catprune/version.hpp"

namespace catprune {

// Sidecar provenance record: hashes chain every artifact back to the raw
// corpus files that produced it. Wall-clock makes manifests the only
// artifacts that differ between otherwise identical runs.
struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::pair<std::string, std::string>> input_hashes;  // path, sha256
    std::vector<std::pair<std::string, std::string>> output_hashes; // path, sha256
    double wall_seconds = 0.0;
};

inline std::string manifest_path_for(const std::string& artifact_path) {
    return artifact_path + ".manifest.json";
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [path, hash] : m.input_hashes) inputs[path] = hash;
    nlohmann::json outputs = nlohmann::json::object();
    for (const auto& [path, hash] : m.output_hashes) outputs[path] = hash;
    return {{"tool", kToolName},
            {"version", kToolVersion},
            {"command", m.command},
            {"config", m.config},
            {"inputs", inputs},
            {"outputs", outputs},
            {"wall_seconds", m.wall_seconds}};
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    os << manifest_to_json(m).dump(2) << '\n';
    os.flush();
    if (!os) throw Error("write failed for " + path);
}

inline void add_input(RunManifest& m, const std::string& path) {
    m.input_hashes.emplace_back(path, sha256_file_hex(path));
}

inline void add_output(RunManifest& m, const std::string& path) {
    m.output_hashes.emplace_back(path, sha256_file_hex(path));
}

} // namespace catprune
