#pragma once

// Completion backends (HTTP chat endpoint, scripted queue, transcript replay)
// and a transcript-recording wrapper.

#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace refagent {

using Json = nlohmann::json;

enum class Role { System, User, Assistant, Tool };

std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct ToolCall {
    std::string id;
    std::string name;
    std::map<std::string, std::string> arguments;

    bool operator==(const ToolCall&) const = default;
};

struct ChatMessage {
    Role role = Role::User;
    std::string content;
    std::vector<ToolCall> tool_calls;  // assistant messages requesting tools
    std::string tool_name;             // tool messages
    std::string tool_call_id;          // tool messages

    bool operator==(const ChatMessage&) const = default;

    static ChatMessage system(std::string text) { return {Role::System, std::move(text), {}, {}, {}}; }
    static ChatMessage user(std::string text) { return {Role::User, std::move(text), {}, {}, {}}; }
    static ChatMessage assistant(std::string text, std::vector<ToolCall> calls = {}) {
        return {Role::Assistant, std::move(text), std::move(calls), {}, {}};
    }
    static ChatMessage tool(const ToolCall& call, std::string result) {
        return {Role::Tool, std::move(result), {}, call.name, call.id};
    }
};

struct ToolParam {
    std::string name;
    std::string type;  // JSON schema type, e.g. "string"
    std::string description;
    bool required = true;

    bool operator==(const ToolParam&) const = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    std::vector<ToolParam> parameters;

    bool operator==(const ToolSpec&) const = default;
};

struct CompletionRequest {
    std::vector<ChatMessage> messages;
    std::vector<ToolSpec> tools;
    double temperature = 0.0;
    int max_attempts = 3;
};

struct CompletionResponse {
    std::string content;
    std::vector<ToolCall> tool_calls;

    bool operator==(const CompletionResponse&) const = default;
};

void to_json(Json& j, const ToolCall& v);
void from_json(const Json& j, ToolCall& v);
void to_json(Json& j, const ChatMessage& v);
void from_json(const Json& j, ChatMessage& v);
void to_json(Json& j, const ToolSpec& v);
void from_json(const Json& j, ToolSpec& v);
void to_json(Json& j, const CompletionRequest& v);
void from_json(const Json& j, CompletionRequest& v);
void to_json(Json& j, const CompletionResponse& v);
void from_json(const Json& j, CompletionResponse& v);

// Tool calls written as fenced blocks for backends without native tool
// support:
//
//   ```tool
//   {"name": "get_file_content", "arguments": {"path": "src/A.java"}}
//   ```
std::vector<ToolCall> parse_text_tool_calls(std::string_view content);
// Describes `tools` and the fenced-block convention for a system prompt.
std::string render_text_tool_protocol(const std::vector<ToolSpec>& tools);

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    // Safe to call concurrently.
    virtual CompletionResponse complete(const CompletionRequest& request) = 0;
    virtual std::string id() const = 0;
};

class ScriptedBackend : public LlmBackend {
public:
    explicit ScriptedBackend(std::vector<CompletionResponse> responses);
    // One response per line: a JSON string (assistant text) or a
    // CompletionResponse object. Throws IoError / ParseError.
    static std::unique_ptr<ScriptedBackend> from_jsonl(const std::filesystem::path& path);

    CompletionResponse complete(const CompletionRequest& request) override;
    std::string id() const override { return "scripted"; }
    std::size_t remaining() const;

private:
    mutable std::mutex mu_;
    std::deque<CompletionResponse> queue_;
    std::size_t served_ = 0;
};

struct TranscriptEntry {
    CompletionRequest request;
    CompletionResponse response;
};

std::vector<TranscriptEntry> read_transcript(const std::filesystem::path& path);

// Forwards to `inner` and appends one `{"request", "response"}` line per call
// to `path`, flushing after every line.
class RecordingBackend : public LlmBackend {
public:
    RecordingBackend(std::shared_ptr<LlmBackend> inner, const std::filesystem::path& path);

    CompletionResponse complete(const CompletionRequest& request) override;
    std::string id() const override { return inner_->id(); }
    std::size_t calls() const;
    void close();

private:
    std::shared_ptr<LlmBackend> inner_;
    mutable std::mutex mu_;
    std::ofstream out_;
    std::filesystem::path path_;
    std::size_t calls_ = 0;
};

class ReplayBackend : public LlmBackend {
public:
    explicit ReplayBackend(std::vector<TranscriptEntry> entries);
    static std::unique_ptr<ReplayBackend> from_file(const std::filesystem::path& path);

    // Throws ReplayDivergenceError when the request differs from the next
    // recorded one or the transcript is exhausted.
    CompletionResponse complete(const CompletionRequest& request) override;
    std::string id() const override { return "replay"; }
    std::size_t remaining() const;

private:
    mutable std::mutex mu_;
    std::vector<TranscriptEntry> entries_;
    std::size_t next_ = 0;
};

// First JSON path where `a` and `b` differ, empty when equal.
std::string first_difference(const Json& a, const Json& b, const std::string& prefix = "");

struct HttpConfig {
    std::string endpoint;  // full URL of the chat-completions resource
    std::string model;
    std::string api_key;   // sent as a bearer token when non-empty
    std::chrono::seconds timeout{120};
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{1000};  // doubled after each failed attempt
    bool native_tools = true;
};

class HttpBackend : public LlmBackend {
public:
    explicit HttpBackend(HttpConfig config);

    CompletionResponse complete(const CompletionRequest& request) override;
    std::string id() const override { return "http:" + config_.model; }

    // Wire body for one request.
    Json wire_request(const CompletionRequest& request) const;
    CompletionResponse parse_wire_response(const Json& body) const;

private:
    HttpConfig config_;
    std::string base_;
    std::string path_;
};

}  // namespace refagent
