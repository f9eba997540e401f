#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace degforge::pipeline {

// Exit codes shared by the CLI.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kPreconditionError = 3;
inline constexpr int kRuntimeFailure = 4;

// Config schema violation; the message carries the offending key path.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Valid config, but the world is not in the required state (missing
// checkpoint, existing output without --overwrite, ...).
struct PreconditionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flag-level overrides; flags win over the config file.
struct Overrides {
    std::optional<uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out;
    bool dry_run = false;
    bool overwrite = false;
};

// Parsed run configuration. The file is schema-validated up front: unknown
// keys anywhere are rejected with their full key path.
struct RunConfig {
    nlohmann::ordered_json raw;
    uint64_t seed = 1;
    int workers = 1;
    std::string out = "run";
    std::string cache;  // from config or $DEGFORGE_CACHE; empty disables caching
    bool dry_run = false;
    bool overwrite = false;

    static RunConfig load(const std::string& path, const Overrides& ov);
    static RunConfig from_json(const nlohmann::ordered_json& j, const Overrides& ov);

    // Command section accessor; returns an empty object when absent.
    nlohmann::ordered_json section(const std::string& name) const;
};

void cmd_toyworld(const RunConfig& cfg, std::ostream& log);
void cmd_stats(const RunConfig& cfg, std::ostream& log);
void cmd_train_gen(const RunConfig& cfg, std::ostream& log);
void cmd_train_scm(const RunConfig& cfg, std::ostream& log);
void cmd_synth(const RunConfig& cfg, std::ostream& log);
void cmd_mix(const RunConfig& cfg, std::ostream& log);
void cmd_train_restore(const RunConfig& cfg, std::ostream& log);
void cmd_eval(const RunConfig& cfg, std::ostream& log);

// Dispatch by name; translates exceptions into the exit-code contract and
// writes a structured error line to err.
int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log,
                std::ostream& err);

}  // namespace degforge::pipeline
