#pragma once

// Build-system detection, sandboxed compile/test subprocesses and log parsing.

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace refagent {

enum class BuildSystemKind { Maven, Gradle, Command };

std::string_view to_string(BuildSystemKind kind);
// Throws ConfigError.
BuildSystemKind parse_build_system_kind(std::string_view text);

struct BuildCommands {
    BuildSystemKind kind = BuildSystemKind::Command;
    std::string compile_cmd;
    std::string test_cmd;
    std::chrono::seconds timeout{600};
};

struct CompileError {
    std::string path;
    int line = 0;
    std::string message;

    bool operator==(const CompileError&) const = default;
};

struct TestFailure {
    std::string test_id;
    std::string message;
    std::string stack_excerpt;

    bool operator==(const TestFailure&) const = default;
};

struct BuildReport {
    bool compiled = false;
    bool tests_passed = false;
    bool timed_out = false;
    int exit_code = 0;
    std::vector<TestFailure> failures;
    std::vector<CompileError> compile_errors;
    std::string raw_log;
    double duration = 0.0;  // seconds

    bool green() const { return compiled && tests_passed; }
};

nlohmann::json to_json_value(const BuildReport& report);

// Maven if pom.xml is at the root, Gradle if build.gradle(.kts) is, otherwise
// Command. Throws ConfigError when both descriptors exist and
// PreconditionError when root is not a directory.
BuildSystemKind detect_build_system(const std::filesystem::path& root);

// Fills in default commands for Maven and Gradle. Command kind needs both
// commands (ConfigError otherwise). `kind` overrides detection.
BuildCommands resolve_build_commands(const std::filesystem::path& root, std::optional<BuildSystemKind> kind,
                                     const std::string& compile_cmd, const std::string& test_cmd,
                                     std::chrono::seconds timeout = std::chrono::seconds(600));

struct ParsedLog {
    std::vector<CompileError> compile_errors;
    std::vector<TestFailure> failures;
};

// javac-style `Path.java:N: error: msg` lines are recognized for every kind;
// Maven adds `[ERROR] path:[N,C] msg` and Surefire `<<< FAILURE!` blocks,
// Gradle adds `Class > test FAILED`, and Command adds `FAILED: <id>` blocks.
ParsedLog parse_log(std::string_view raw_log, BuildSystemKind kind);

struct ProcessResult {
    int exit_code = 0;
    bool timed_out = false;
    std::string output;  // stdout and stderr interleaved
    double seconds = 0.0;
};

// Runs `/bin/sh -c command` in `cwd` with HOME set to `cwd`, in its own
// process group; the group is killed when `timeout` expires.
ProcessResult run_process(const std::string& command, const std::filesystem::path& cwd, std::chrono::seconds timeout,
                          const std::map<std::string, std::string>& env = {});

// Exclusive advisory lock on `<workspace>/.refagent-build.lock`.
class WorkspaceLock {
public:
    explicit WorkspaceLock(const std::filesystem::path& workspace);
    ~WorkspaceLock();
    WorkspaceLock(const WorkspaceLock&) = delete;
    WorkspaceLock& operator=(const WorkspaceLock&) = delete;

private:
    int fd_ = -1;
};

inline constexpr std::string_view kBuildLogName = "build.log";
inline constexpr std::string_view kLockFileName = ".refagent-build.lock";

// Compile only. Output is written to `<workspace>/build.log`. Throws
// EnvironmentError when the build tool is missing (exit status 127).
BuildReport compile(const std::filesystem::path& workspace, const BuildCommands& commands);
// Compile, then tests when compilation succeeded.
BuildReport run_tests(const std::filesystem::path& workspace, const BuildCommands& commands);

}  // namespace refagent
