#pragma once

// Command-line front end: index, refactor, detect, eval, replay.
//
// Exit codes: 0 success; 1 check failed (detect --expect, replay mismatch);
// 2 review_exhausted; 3 repair_exhausted; 4 backend_error; 64 usage;
// 65 malformed input or --strict rejection; 66 missing input;
// 69 build tool unavailable.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "refagent/agents.hpp"

namespace refagent {

inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 64;
inline constexpr int kExitDataError = 65;
inline constexpr int kExitNoInput = 66;
inline constexpr int kExitUnavailable = 69;

struct LlmConfig {
    std::string endpoint;
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    int timeout = 120;  // seconds
};

struct CliConfig {
    LlmConfig llm;
    std::string store_dir;  // empty: no retrieval
    PipelineConfig pipeline;
    std::optional<BuildSystemKind> build_kind;  // detected when unset
};

// Applies a config document on top of `config`. Unknown keys and wrong value
// types throw ConfigError.
void apply_config(CliConfig& config, const nlohmann::json& doc);
nlohmann::json to_json_value(const CliConfig& config);

// Entry point. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace refagent
