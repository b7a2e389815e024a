#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "minnsa/common.hpp"

namespace minnsa {

/// Everything needed to re-execute a CLI run: the subcommand, every flag with
/// defaults materialized, and the involved paths. Persisted as JSON next to
/// each run's outputs.
struct RunManifest {
    int format_version = 1;
    std::string tool_version;
    std::string subcommand;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config;   // resolved flag -> value (as text)
    std::map<std::string, std::string> inputs;   // role -> path
    std::map<std::string, std::string> outputs;  // role -> path

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);

    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);

    /// FNV-1a hash of the canonical config dump; recorded in run summaries.
    std::uint64_t config_hash() const;
};

}  // namespace minnsa
