#pragma once

/**
 * Developer / Reviewer / Repair pipeline.
 *
 * Layer 1 alternates Developer generation and Reviewer checks (refactoring
 * verification, then style) for up to max_review_rounds. A candidate that
 * passes both is built and tested; a failing build enters the repair loop
 * (Layer 2).
 *
 * Candidates and patches are whole-file replacements written by the model as
 * fenced blocks:
 *
 *   ```java src/com/shop/Order.java
 *   ...complete file...
 *   ```
 *
 * All prompts use workspace-relative paths so a recorded session replays in a
 * different directory.
 */

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "refagent/build_harness.hpp"
#include "refagent/errors.hpp"
#include "refagent/llm_gateway.hpp"
#include "refagent/refactoring_detect.hpp"
#include "refagent/retrieval.hpp"
#include "refagent/style_check.hpp"

namespace refagent {

struct PipelineConfig {
    int max_review_rounds = 5;
    int max_repair_attempts = 20;
    int max_tool_rounds = 15;
    std::size_t retrieval_n = 3;
    int rrf_k = kRrfK;
    std::string style_rules = std::string(kDefaultRuleSet);
    BuildCommands build;

    // Throws ConfigError when a bound is below 1.
    void validate() const;
};

nlohmann::json to_json_value(const PipelineConfig& config);

struct RefactoringTask {
    std::filesystem::path workspace;  // private copy of the repository
    MethodRef target;
    RefactoringType requested_type = RefactoringType::ExtractMethod;
    PipelineConfig config;
};

// Whole-file replacements keyed by workspace-relative path.
using FileEdits = std::map<std::string, std::string>;

// Fenced blocks tagged `java <path>`, `java path=<path>` or `java:<path>`.
// A later block for the same path wins.
FileEdits parse_file_blocks(std::string_view text);
std::string render_file_blocks(const FileEdits& files);

// Throws PreconditionError for absolute paths, `..` components or paths that
// name the build log or lock file.
void check_edit_path(std::string_view path);

struct Finding {
    std::string location;
    std::string message;
};

struct FeedbackReport {
    enum class Stage { Verification, Style };

    int round = 0;
    Stage stage = Stage::Verification;
    bool passed = false;
    std::vector<Finding> findings;

    std::string render() const;
};

std::string_view to_string(FeedbackReport::Stage stage);
nlohmann::json to_json_value(const FeedbackReport& report);

struct RepairEpisode {
    int attempt = 0;
    std::string error_log;
    std::string reflection;  // empty on attempt 1
    std::string plan;
    FileEdits patch;
    std::string apply_error;  // set when the patch could not be applied
    BuildReport build_after;
};

nlohmann::json to_json_value(const RepairEpisode& episode);

enum class PipelineStatus { Success, ReviewExhausted, RepairExhausted, BackendError };

std::string_view to_string(PipelineStatus status);
// 0, 2, 3, 4
int exit_code(PipelineStatus status);

struct PipelineResult {
    PipelineStatus status = PipelineStatus::BackendError;
    int review_rounds = 0;
    std::string final_diff;  // unified diff of the workspace against its baseline
    std::vector<RepairEpisode> episodes;
    std::vector<FeedbackReport> feedback_history;
    std::optional<BuildReport> last_build;
    std::string error;  // backend failure message
    std::vector<std::string> retrieved_ids;
    std::map<std::string, std::string> before_files;  // baseline text of every touched file
    std::map<std::string, std::string> after_files;   // final text; deleted files are absent
    double seconds = 0.0;
};

nlohmann::json to_json_value(const PipelineResult& result);

// Unified diff with three context lines, files in path order. Paths present
// on one side only diff against /dev/null.
std::string unified_diff(const std::map<std::string, std::string>& before,
                         const std::map<std::string, std::string>& after);

struct PipelineDeps {
    const IndexedCorpus* corpus = nullptr;  // optional
    const Embedder* embedder = nullptr;     // required when corpus is set
};

// Structural context the Developer's tools answer from.
struct DeveloperContext {
    const SourceTree* tree = nullptr;
    const CallGraph* graph = nullptr;
    MethodRef target;
    RefactoringType type = RefactoringType::ExtractMethod;
    std::vector<RefactoringRecord> examples;
};

std::vector<ToolSpec> developer_tools();

// Result of one tool call; unknown tools and bad arguments produce an
// `error: ...` text rather than an exception.
std::string run_developer_tool(const DeveloperContext& context, const ToolCall& call);

// Initial Developer conversation: system prompt and the four-step task
// prompt, with the method, operation and similar-refactoring tool outputs
// already included.
std::vector<ChatMessage> developer_prompt(const DeveloperContext& context);

struct Candidate {
    FileEdits files;
    std::string text;
    int tool_rounds = 0;
};

// Thrown when the Developer produces no usable candidate.
class GenerationError : public Error {
public:
    using Error::Error;
};

// Runs the tool loop on `messages` (which is extended with every assistant and
// tool message). Throws GenerationError when the tool-round cap is exceeded or
// the final reply has no file block; BackendError from the backend.
Candidate developer_generate(const DeveloperContext& context, std::vector<ChatMessage>& messages, LlmBackend& llm,
                             int max_tool_rounds = 15);

// Verification then style; the first failing stage ends the review. Style
// counts only findings absent from the baseline of the touched files.
struct ReviewOutcome {
    std::vector<FeedbackReport> reports;
    bool build_triggered = false;
};

ReviewOutcome reviewer_review(const SourceTree& before, const SourceTree& after, RefactoringType expected,
                              const std::vector<std::string>& touched, std::string_view style_rules, int round);

// Build outcome as text for prompts; absolute workspace paths are stripped.
std::string error_log(const BuildReport& report, const std::filesystem::path& workspace);

// Task workspace that remembers the baseline text of every file it writes.
class Workspace {
public:
    explicit Workspace(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    // Validates every path first; nothing is written when one is rejected.
    void apply(const FileEdits& edits);
    // Puts every touched file back to its baseline text.
    void reset();
    std::vector<std::string> touched() const;
    const std::map<std::string, std::optional<std::string>>& baseline() const { return baseline_; }
    std::map<std::string, std::string> baseline_files() const;
    std::map<std::string, std::string> current_files() const;
    std::string diff() const { return unified_diff(baseline_files(), current_files()); }

private:
    std::filesystem::path root_;
    std::map<std::string, std::optional<std::string>> baseline_;  // nullopt: did not exist
};

struct RepairOutcome {
    bool green = false;  // built, tested and still verified
    std::vector<RepairEpisode> episodes;
    BuildReport last_build;
};

// Attempt 1 is one initial-analysis call; later attempts make a reflection,
// a planning and an acting call. Each patch is applied on top of the current
// workspace, then rebuilt, retested and re-verified against `before`.
RepairOutcome repair_loop(const RefactoringTask& task, Workspace& workspace, const SourceTree& before,
                          const BuildReport& first_build, LlmBackend& llm);

// Runs the whole pipeline in task.workspace. Throws PreconditionError when the
// baseline is not green or the target does not resolve.
PipelineResult run_pipeline(const RefactoringTask& task, LlmBackend& llm, const PipelineDeps& deps = {});

}  // namespace refagent
