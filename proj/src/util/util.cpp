#include "imae/util.hpp"

#include <filesystem>
#include <fstream>

namespace imae::util {

namespace fs = std::filesystem;

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot read " + path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DataError("cannot create directory: " + dir);
}

void Manifest::write(const std::string& out_dir) const {
    nlohmann::json j;
    j["command"] = command;
    j["config_sha256"] = config_sha256;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    write_text_file(out_dir + "/manifest.json", j.dump(2) + "\n");
}

}  // namespace imae::util
