#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "imae/common.hpp"

namespace imae::util {

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);
void ensure_dir(const std::string& dir);

/// Per-command provenance record: inputs, config hash, checkpoint hashes,
/// output files.
struct Manifest {
    std::string command;
    std::string config_sha256;
    nlohmann::json inputs = nlohmann::json::object();
    std::vector<std::string> outputs;

    void write(const std::string& out_dir) const;
};

}  // namespace imae::util
