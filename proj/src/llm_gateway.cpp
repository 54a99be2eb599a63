#include "refagent/llm_gateway.hpp"

#include <httplib.h>

#include <thread>

#include "refagent/errors.hpp"

namespace refagent {

std::string_view to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "user";
}

Role parse_role(std::string_view text) {
    if (text == "system") return Role::System;
    if (text == "user") return Role::User;
    if (text == "assistant") return Role::Assistant;
    if (text == "tool") return Role::Tool;
    throw ConfigError("unknown chat role '" + std::string(text) + "'");
}

void to_json(Json& j, const ToolCall& v) {
    j = Json{{"id", v.id}, {"name", v.name}, {"arguments", v.arguments}};
}

void from_json(const Json& j, ToolCall& v) {
    v.id = j.value("id", "");
    v.name = j.at("name").get<std::string>();
    v.arguments.clear();
    if (j.contains("arguments")) {
        for (const auto& [k, val] : j.at("arguments").items()) {
            v.arguments[k] = val.is_string() ? val.get<std::string>() : val.dump();
        }
    }
}

void to_json(Json& j, const ChatMessage& v) {
    j = Json{{"role", to_string(v.role)}, {"content", v.content}};
    if (!v.tool_calls.empty()) j["tool_calls"] = v.tool_calls;
    if (!v.tool_name.empty()) j["tool_name"] = v.tool_name;
    if (!v.tool_call_id.empty()) j["tool_call_id"] = v.tool_call_id;
}

void from_json(const Json& j, ChatMessage& v) {
    v.role = parse_role(j.at("role").get<std::string>());
    v.content = j.value("content", "");
    v.tool_calls = j.value("tool_calls", std::vector<ToolCall>{});
    v.tool_name = j.value("tool_name", "");
    v.tool_call_id = j.value("tool_call_id", "");
}

void to_json(Json& j, const ToolSpec& v) {
    Json params = Json::array();
    for (const auto& p : v.parameters) {
        params.push_back({{"name", p.name}, {"type", p.type}, {"description", p.description}, {"required", p.required}});
    }
    j = Json{{"name", v.name}, {"description", v.description}, {"parameters", params}};
}

void from_json(const Json& j, ToolSpec& v) {
    v.name = j.at("name").get<std::string>();
    v.description = j.value("description", "");
    v.parameters.clear();
    for (const auto& p : j.value("parameters", Json::array())) {
        v.parameters.push_back({p.at("name").get<std::string>(), p.value("type", "string"), p.value("description", ""),
                                p.value("required", true)});
    }
}

void to_json(Json& j, const CompletionRequest& v) {
    j = Json{{"messages", v.messages}, {"tools", v.tools}, {"temperature", v.temperature},
             {"max_attempts", v.max_attempts}};
}

void from_json(const Json& j, CompletionRequest& v) {
    v.messages = j.at("messages").get<std::vector<ChatMessage>>();
    v.tools = j.value("tools", std::vector<ToolSpec>{});
    v.temperature = j.value("temperature", 0.0);
    v.max_attempts = j.value("max_attempts", 3);
}

void to_json(Json& j, const CompletionResponse& v) {
    j = Json{{"content", v.content}};
    if (!v.tool_calls.empty()) j["tool_calls"] = v.tool_calls;
}

void from_json(const Json& j, CompletionResponse& v) {
    v.content = j.value("content", "");
    v.tool_calls = j.value("tool_calls", std::vector<ToolCall>{});
}

std::vector<ToolCall> parse_text_tool_calls(std::string_view content) {
    std::vector<ToolCall> out;
    std::size_t pos = 0;
    while ((pos = content.find("```tool", pos)) != std::string_view::npos) {
        const std::size_t line_end = content.find('\n', pos);
        if (line_end == std::string_view::npos) break;
        if (content.substr(pos + 7, line_end - pos - 7).find_first_not_of(" \t\r") != std::string_view::npos) {
            pos = line_end;
            continue;
        }
        const std::size_t close = content.find("```", line_end + 1);
        if (close == std::string_view::npos) break;
        const auto parsed = Json::parse(content.substr(line_end + 1, close - line_end - 1), nullptr, false);
        if (parsed.is_object() && parsed.contains("name") && parsed["name"].is_string()) {
            ToolCall call;
            from_json(parsed, call);
            out.push_back(std::move(call));
        }
        pos = close + 3;
    }
    return out;
}

std::string render_text_tool_protocol(const std::vector<ToolSpec>& tools) {
    std::string out =
        "You can call tools. To call one, reply with a fenced block tagged `tool` holding a JSON object with "
        "\"name\" and \"arguments\", for example:\n```tool\n{\"name\": \"get_file_content\", \"arguments\": "
        "{\"path\": \"src/Main.java\"}}\n```\nAvailable tools:\n";
    for (const auto& t : tools) {
        out += "- " + t.name + ": " + t.description;
        if (!t.parameters.empty()) {
            out += " Arguments:";
            for (const auto& p : t.parameters) out += " " + p.name + (p.required ? "" : " (optional)");
            out += ".";
        }
        out += "\n";
    }
    return out;
}

ScriptedBackend::ScriptedBackend(std::vector<CompletionResponse> responses)
    : queue_(responses.begin(), responses.end()) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read script " + path.string());
    std::vector<CompletionResponse> responses;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = Json::parse(line);
            if (j.is_string()) {
                responses.push_back({j.get<std::string>(), {}});
            } else {
                responses.push_back(j.get<CompletionResponse>());
            }
        } catch (const Json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
    return std::make_unique<ScriptedBackend>(std::move(responses));
}

CompletionResponse ScriptedBackend::complete(const CompletionRequest&) {
    std::lock_guard lock(mu_);
    if (queue_.empty()) {
        throw ScriptExhaustedError("scripted backend has no response left (served " + std::to_string(served_) + ")");
    }
    auto r = std::move(queue_.front());
    queue_.pop_front();
    ++served_;
    return r;
}

std::size_t ScriptedBackend::remaining() const {
    std::lock_guard lock(mu_);
    return queue_.size();
}

std::vector<TranscriptEntry> read_transcript(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read transcript " + path.string());
    std::vector<TranscriptEntry> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = Json::parse(line);
            out.push_back({j.at("request").get<CompletionRequest>(), j.at("response").get<CompletionResponse>()});
        } catch (const Json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
    return out;
}

RecordingBackend::RecordingBackend(std::shared_ptr<LlmBackend> inner, const std::filesystem::path& path)
    : inner_(std::move(inner)), out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw IoError("cannot open transcript " + path.string());
}

CompletionResponse RecordingBackend::complete(const CompletionRequest& request) {
    auto response = inner_->complete(request);
    std::lock_guard lock(mu_);
    out_ << Json{{"request", request}, {"response", response}}.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("cannot write transcript " + path_.string());
    ++calls_;
    return response;
}

std::size_t RecordingBackend::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

void RecordingBackend::close() {
    std::lock_guard lock(mu_);
    if (out_.is_open()) out_.close();
}

ReplayBackend::ReplayBackend(std::vector<TranscriptEntry> entries) : entries_(std::move(entries)) {}

std::unique_ptr<ReplayBackend> ReplayBackend::from_file(const std::filesystem::path& path) {
    return std::make_unique<ReplayBackend>(read_transcript(path));
}

CompletionResponse ReplayBackend::complete(const CompletionRequest& request) {
    std::lock_guard lock(mu_);
    if (next_ >= entries_.size()) {
        throw ReplayDivergenceError("", "replay transcript exhausted after " + std::to_string(entries_.size()) +
                                            " entries");
    }
    const Json recorded = entries_[next_].request;
    const Json actual = request;
    const auto diff = first_difference(recorded, actual);
    if (!diff.empty()) {
        throw ReplayDivergenceError(diff, "replay diverged at entry " + std::to_string(next_ + 1) + ", field " + diff);
    }
    return entries_[next_++].response;
}

std::size_t ReplayBackend::remaining() const {
    std::lock_guard lock(mu_);
    return entries_.size() - next_;
}

std::string first_difference(const Json& a, const Json& b, const std::string& prefix) {
    const std::string here = prefix.empty() ? "$" : prefix;
    if (a.type() != b.type()) return here;
    if (a.is_object()) {
        for (const auto& [k, v] : a.items()) {
            const std::string path = prefix.empty() ? k : prefix + "." + k;
            if (!b.contains(k)) return path;
            auto d = first_difference(v, b.at(k), path);
            if (!d.empty()) return d;
        }
        for (const auto& [k, v] : b.items()) {
            if (!a.contains(k)) return prefix.empty() ? k : prefix + "." + k;
        }
        return "";
    }
    if (a.is_array()) {
        const std::size_t n = std::min(a.size(), b.size());
        for (std::size_t i = 0; i < n; ++i) {
            auto d = first_difference(a[i], b[i], prefix + "[" + std::to_string(i) + "]");
            if (!d.empty()) return d;
        }
        if (a.size() != b.size()) return prefix + "[" + std::to_string(n) + "]";
        return "";
    }
    return a == b ? "" : here;
}

namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("endpoint must be an http(s) URL: " + url);
    const auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, "/"};
    return {url.substr(0, slash), url.substr(slash)};
}

std::string render_call_block(const ToolCall& call) {
    return "```tool\n" + Json{{"name", call.name}, {"arguments", call.arguments}}.dump() + "\n```";
}

}  // namespace

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
    std::tie(base_, path_) = split_url(config_.endpoint);
}

Json HttpBackend::wire_request(const CompletionRequest& request) const {
    Json messages = Json::array();
    const bool text_tools = !config_.native_tools && !request.tools.empty();
    if (text_tools) {
        messages.push_back({{"role", "system"}, {"content", render_text_tool_protocol(request.tools)}});
    }
    for (const auto& m : request.messages) {
        Json w{{"role", to_string(m.role)}, {"content", m.content}};
        if (m.role == Role::Assistant && !m.tool_calls.empty()) {
            if (text_tools) {
                std::string content = m.content;
                for (const auto& c : m.tool_calls) content += (content.empty() ? "" : "\n") + render_call_block(c);
                w["content"] = content;
            } else {
                Json calls = Json::array();
                for (const auto& c : m.tool_calls) {
                    calls.push_back({{"id", c.id},
                                     {"type", "function"},
                                     {"function", {{"name", c.name}, {"arguments", Json(c.arguments).dump()}}}});
                }
                w["tool_calls"] = calls;
            }
        }
        if (m.role == Role::Tool) {
            if (text_tools) {
                w = Json{{"role", "user"}, {"content", "Result of tool " + m.tool_name + ":\n" + m.content}};
            } else {
                w["tool_call_id"] = m.tool_call_id;
                w["name"] = m.tool_name;
            }
        }
        messages.push_back(std::move(w));
    }
    Json body{{"model", config_.model}, {"messages", messages}, {"temperature", request.temperature}};
    if (!text_tools && !request.tools.empty()) {
        Json tools = Json::array();
        for (const auto& t : request.tools) {
            Json props = Json::object();
            Json required = Json::array();
            for (const auto& p : t.parameters) {
                props[p.name] = {{"type", p.type}, {"description", p.description}};
                if (p.required) required.push_back(p.name);
            }
            tools.push_back({{"type", "function"},
                             {"function",
                              {{"name", t.name},
                               {"description", t.description},
                               {"parameters", {{"type", "object"}, {"properties", props}, {"required", required}}}}}});
        }
        body["tools"] = tools;
    }
    return body;
}

CompletionResponse HttpBackend::parse_wire_response(const Json& body) const {
    if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
        throw BackendError("completion response has no choices", 200, body.dump());
    }
    const Json& msg = body["choices"][0].value("message", Json::object());
    CompletionResponse out;
    if (msg.contains("content") && msg["content"].is_string()) out.content = msg["content"].get<std::string>();
    for (const auto& c : msg.value("tool_calls", Json::array())) {
        ToolCall call;
        call.id = c.value("id", "");
        const Json fn = c.value("function", Json::object());
        call.name = fn.value("name", "");
        Json args = fn.value("arguments", Json::object());
        if (args.is_string()) args = Json::parse(args.get<std::string>(), nullptr, false);
        if (args.is_object()) {
            for (const auto& [k, v] : args.items()) call.arguments[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
        out.tool_calls.push_back(std::move(call));
    }
    if (out.tool_calls.empty()) out.tool_calls = parse_text_tool_calls(out.content);
    return out;
}

CompletionResponse HttpBackend::complete(const CompletionRequest& request) {
    const std::string payload = wire_request(request).dump();
    const int attempts = std::max(1, request.max_attempts > 0 ? request.max_attempts : config_.max_attempts);
    auto delay = config_.base_delay;
    int last_status = 0;
    std::string last_body;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        httplib::Client client(base_);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
        const auto res = client.Post(path_, headers, payload, "application/json");
        bool retriable = true;
        if (!res) {
            last_status = 0;
            last_body = httplib::to_string(res.error());
        } else {
            last_status = res->status;
            last_body = res->body;
            if (res->status >= 200 && res->status < 300) {
                const auto body = Json::parse(res->body, nullptr, false);
                if (body.is_discarded()) throw BackendError("completion response is not JSON", res->status, res->body);
                return parse_wire_response(body);
            }
            retriable = res->status == 429 || res->status >= 500;
        }
        if (!retriable) break;
        if (attempt < attempts) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
    }
    throw BackendError("completion request to " + config_.endpoint + " failed (status " + std::to_string(last_status) +
                           "): " + last_body.substr(0, 500),
                       last_status, last_body, last_status == 0 || last_status == 429 || last_status >= 500);
}

}  // namespace refagent
