#pragma once

#include <json.hpp>

#include <iosfwd>
#include <string>
#include <vector>

namespace vmstab::cli {

using nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

/// Every accepted key with its default value. The thread count is not part of
/// the configuration: artifacts must not depend on it.
json default_config();

/// Parses a config file; an empty file is the empty object. Throws ConfigError
/// with the line of a syntax error.
json load_config_file(const std::string& path);

/// Merges `user` over the defaults. Unknown keys, wrong types and out-of-range
/// values throw ConfigError naming the key (and its line when `source` is given).
json resolve_config(const json& user, const std::string& source = {});

/// Applies "a.b.c=value"; the value is read as JSON when it parses, else as a string.
void apply_override(json& cfg, const std::string& assignment);

struct RunConfig {
    std::string command;  ///< equilibrium, criterion, sweep, mode, ergodic, demo
    std::string config_path;
    std::string out_dir = "out";
    std::vector<std::string> overrides;
    int threads = 1;
    bool emit_plots = false;
};

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPipeline = 3;
inline constexpr int kExitAudit = 4;

/// Runs one command and writes its artifacts plus manifest.json into out_dir.
/// Progress and errors go to `log`.
int run(const RunConfig& rc, std::ostream& log);

}  // namespace vmstab::cli
