#pragma once

#include "cocge/common.hpp"
#include "cocge/dataio.hpp"
#include "cocge/trainer.hpp"

#include <map>
#include <optional>
#include <string>

namespace cocge {

/// Parsed key-value config file: `[section]` headers, `key = value` lines,
/// `#` comments. Keys are addressed as "section.key".
struct ConfigFile {
    std::map<std::string, std::string> values;

    static ConfigFile parse_file(const std::string& path);
    static ConfigFile parse_text(const std::string& text, const std::string& origin = "<text>");

    bool has(const std::string& key) const { return values.count(key) > 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
};

/// [synth] section -> SynthSpec. Group/state lists use `;` between groups
/// and `,` or `-` ranges inside: `0-4;5-9`.
SynthSpec synth_spec_from_config(const ConfigFile& cfg);

/// [model]/[loss]/[train] sections -> TrainConfig.
TrainConfig train_config_from_config(const ConfigFile& cfg);

std::string train_config_to_text(const TrainConfig& cfg);
std::string synth_spec_to_text(const SynthSpec& spec);

/// Reproducibility record written next to every command's outputs.
struct RunManifest {
    std::string command;
    std::string config_text;     // resolved key-value config
    std::uint64_t seed = 0;
    std::map<std::string, std::string> artifacts;
    std::string tool_version;
    std::optional<double> wall_clock_sec;  // omitted where outputs must be byte-stable

    std::string to_json() const;
    void write(const std::string& path) const;
};

extern const char* kToolVersion;

}  // namespace cocge
