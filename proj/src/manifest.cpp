#include "minnsa/manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace minnsa {

using json = nlohmann::json;

std::string RunManifest::to_json() const {
    json j;
    j["format_version"] = format_version;
    j["tool_version"] = tool_version;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
    json j = json::parse(text);
    RunManifest m;
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) {
        throw Error("manifest: unsupported format version " +
                    std::to_string(m.format_version));
    }
    m.tool_version = j.at("tool_version").get<std::string>();
    m.subcommand = j.at("subcommand").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    return m;
}

void RunManifest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << to_json();
    if (!out) throw Error("manifest: write failed");
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json(buf.str());
}

std::uint64_t RunManifest::config_hash() const {
    std::string canon = subcommand + "|" + std::to_string(seed);
    for (const auto& [k, v] : config) canon += "|" + k + "=" + v;
    return fnv1a64(canon);
}

}  // namespace minnsa
