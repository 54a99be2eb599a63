#include "refagent/agents.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "refagent/errors.hpp"

namespace refagent {

namespace fs = std::filesystem;
using nlohmann::json;

void PipelineConfig::validate() const {
    if (max_review_rounds < 1) throw ConfigError("pipeline.max_review_rounds must be >= 1");
    if (max_repair_attempts < 1) throw ConfigError("pipeline.max_repair_attempts must be >= 1");
    if (max_tool_rounds < 1) throw ConfigError("max_tool_rounds must be >= 1");
    if (retrieval_n < 1) throw ConfigError("retrieval.n must be >= 1");
    if (rrf_k < 1) throw ConfigError("retrieval.rrf_k must be >= 1");
    rule_ids(style_rules);
}

json to_json_value(const PipelineConfig& c) {
    return {{"max_review_rounds", c.max_review_rounds},
            {"max_repair_attempts", c.max_repair_attempts},
            {"max_tool_rounds", c.max_tool_rounds},
            {"retrieval_n", c.retrieval_n},
            {"rrf_k", c.rrf_k},
            {"style_rules", c.style_rules},
            {"build",
             {{"kind", to_string(c.build.kind)},
              {"compile_cmd", c.build.compile_cmd},
              {"test_cmd", c.build.test_cmd},
              {"timeout_secs", c.build.timeout.count()}}}};
}

// ---------------------------------------------------------------- file blocks

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Path named on a ```java opening line, or empty.
std::string fence_path(std::string_view info) {
    if (info.substr(0, 4) != "java") return {};
    info.remove_prefix(4);
    if (!info.empty() && info.front() == ':') info.remove_prefix(1);
    std::string rest = trim(info);
    if (rest.rfind("path=", 0) == 0) rest = trim(rest.substr(5));
    if (rest.size() >= 2 && (rest.front() == '"' || rest.front() == '\'') && rest.back() == rest.front()) {
        rest = rest.substr(1, rest.size() - 2);
    }
    if (rest.find_first_of(" \t") != std::string::npos) return {};
    return rest;
}

}  // namespace

FileEdits parse_file_blocks(std::string_view text) {
    FileEdits out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) break;
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        const std::string t = trim(line);
        if (t.rfind("```", 0) != 0) continue;
        const std::string path = fence_path(std::string_view(t).substr(3));
        // skip to the closing fence
        std::size_t body_start = pos, close = std::string_view::npos;
        while (pos < text.size()) {
            std::size_t e = text.find('\n', pos);
            const std::size_t stop = e == std::string_view::npos ? text.size() : e;
            if (trim(text.substr(pos, stop - pos)) == "```") {
                close = pos;
                pos = e == std::string_view::npos ? text.size() : e + 1;
                break;
            }
            pos = e == std::string_view::npos ? text.size() : e + 1;
        }
        if (close == std::string_view::npos) break;
        if (!path.empty()) out[path] = std::string(text.substr(body_start, close - body_start));
    }
    return out;
}

std::string render_file_blocks(const FileEdits& files) {
    std::string out;
    for (const auto& [path, text] : files) {
        out += "```java " + path + "\n" + text;
        if (!text.empty() && text.back() != '\n') out += '\n';
        out += "```\n";
    }
    return out;
}

void check_edit_path(std::string_view path) {
    if (path.empty()) throw PreconditionError("empty file path");
    const fs::path p{std::string(path)};
    if (p.is_absolute() || path.front() == '/' || path.front() == '~') {
        throw PreconditionError("path escapes the workspace: " + std::string(path));
    }
    for (const auto& part : p) {
        if (part == "..") throw PreconditionError("path escapes the workspace: " + std::string(path));
    }
    const std::string name = p.filename().string();
    if (p == fs::path(std::string(kBuildLogName)) || name == kLockFileName) {
        throw PreconditionError("path is reserved: " + std::string(path));
    }
}

// ------------------------------------------------------------------- reports

std::string_view to_string(FeedbackReport::Stage stage) {
    return stage == FeedbackReport::Stage::Verification ? "verification" : "style";
}

std::string FeedbackReport::render() const {
    std::string out = "Reviewer feedback, round " + std::to_string(round) + ", " + std::string(to_string(stage)) +
                      ": " + (passed ? "passed" : "FAILED") + "\n";
    for (const auto& f : findings) out += "- " + (f.location.empty() ? "" : f.location + ": ") + f.message + "\n";
    return out;
}

json to_json_value(const FeedbackReport& r) {
    json findings = json::array();
    for (const auto& f : r.findings) findings.push_back({{"location", f.location}, {"message", f.message}});
    return {{"round", r.round}, {"stage", to_string(r.stage)}, {"passed", r.passed}, {"findings", findings}};
}

json to_json_value(const RepairEpisode& e) {
    json patch = json::array();
    for (const auto& [path, _] : e.patch) patch.push_back(path);
    auto build = to_json_value(e.build_after);
    build.erase("raw_log");
    return {{"attempt", e.attempt},   {"error_log", e.error_log},     {"reflection", e.reflection},
            {"plan", e.plan},         {"patched_files", patch},       {"apply_error", e.apply_error},
            {"build_after", build}};
}

std::string_view to_string(PipelineStatus s) {
    switch (s) {
        case PipelineStatus::Success: return "success";
        case PipelineStatus::ReviewExhausted: return "review_exhausted";
        case PipelineStatus::RepairExhausted: return "repair_exhausted";
        case PipelineStatus::BackendError: return "backend_error";
    }
    return "backend_error";
}

int exit_code(PipelineStatus s) {
    switch (s) {
        case PipelineStatus::Success: return 0;
        case PipelineStatus::ReviewExhausted: return 2;
        case PipelineStatus::RepairExhausted: return 3;
        case PipelineStatus::BackendError: return 4;
    }
    return 4;
}

json to_json_value(const PipelineResult& r) {
    json feedback = json::array(), episodes = json::array();
    for (const auto& f : r.feedback_history) feedback.push_back(to_json_value(f));
    for (const auto& e : r.episodes) episodes.push_back(to_json_value(e));
    json out = {{"status", to_string(r.status)},
                {"exit_code", exit_code(r.status)},
                {"review_rounds", r.review_rounds},
                {"repair_attempts", r.episodes.size()},
                {"feedback_history", feedback},
                {"episodes", episodes},
                {"retrieved_examples", r.retrieved_ids},
                {"seconds", r.seconds},
                {"diff", r.final_diff}};
    if (r.last_build) {
        auto b = to_json_value(*r.last_build);
        b.erase("raw_log");
        out["last_build"] = b;
    }
    if (!r.error.empty()) out["error"] = r.error;
    return out;
}

// ---------------------------------------------------------------------- diff

namespace {

struct Lines {
    std::vector<std::string> lines;
    bool trailing_newline = true;
};

Lines split_lines(const std::string& text) {
    Lines out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            out.lines.push_back(text.substr(pos));
            out.trailing_newline = false;
            break;
        }
        out.lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return out;
}

struct DiffOp {
    char tag;  // ' ', '-', '+'
    int a;     // 0-based line in before (for ' ' and '-')
    int b;     // 0-based line in after (for ' ' and '+')
};

std::vector<DiffOp> diff_ops(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::size_t pre = 0;
    while (pre < a.size() && pre < b.size() && a[pre] == b[pre]) ++pre;
    std::size_t suf = 0;
    while (suf < a.size() - pre && suf < b.size() - pre && a[a.size() - 1 - suf] == b[b.size() - 1 - suf]) ++suf;
    const std::size_t n = a.size() - pre - suf, m = b.size() - pre - suf;
    std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = m; j-- > 0;) {
            lcs[i][j] = a[pre + i] == b[pre + j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
        }
    }
    std::vector<DiffOp> ops;
    for (std::size_t k = 0; k < pre; ++k) ops.push_back({' ', int(k), int(k)});
    std::size_t i = 0, j = 0;
    while (i < n || j < m) {
        if (i < n && j < m && a[pre + i] == b[pre + j]) {
            ops.push_back({' ', int(pre + i), int(pre + j)});
            ++i, ++j;
        } else if (j < m && (i == n || lcs[i][j + 1] > lcs[i + 1][j])) {
            ops.push_back({'+', -1, int(pre + j)});
            ++j;
        } else {
            ops.push_back({'-', int(pre + i), -1});
            ++i;
        }
    }
    for (std::size_t k = 0; k < suf; ++k) {
        ops.push_back({' ', int(a.size() - suf + k), int(b.size() - suf + k)});
    }
    return ops;
}

std::string file_diff(const std::string& path, const std::optional<std::string>& before,
                      const std::optional<std::string>& after) {
    const Lines a = before ? split_lines(*before) : Lines{};
    const Lines b = after ? split_lines(*after) : Lines{};
    auto ops = diff_ops(a.lines, b.lines);
    // A changed final-newline status makes the last line differ.
    if (before && after && a.trailing_newline != b.trailing_newline && !a.lines.empty() && !b.lines.empty() &&
        !ops.empty() && ops.back().tag == ' ') {
        const auto last = ops.back();
        ops.pop_back();
        ops.push_back({'-', last.a, -1});
        ops.push_back({'+', -1, last.b});
    }
    if (std::none_of(ops.begin(), ops.end(), [](const DiffOp& o) { return o.tag != ' '; })) return {};

    std::string out = "--- " + (before ? "a/" + path : std::string("/dev/null")) + "\n";
    out += "+++ " + (after ? "b/" + path : std::string("/dev/null")) + "\n";
    constexpr int kContext = 3;
    std::size_t k = 0;
    while (k < ops.size()) {
        while (k < ops.size() && ops[k].tag == ' ') ++k;
        if (k == ops.size()) break;
        std::size_t start = k >= kContext ? k - kContext : 0;
        std::size_t end = k;
        // extend while changes are within 2 * context of each other
        while (true) {
            while (end < ops.size() && ops[end].tag != ' ') ++end;
            std::size_t run = end;
            while (run < ops.size() && ops[run].tag == ' ' && run - end < 2 * kContext) ++run;
            if (run < ops.size() && ops[run].tag != ' ' && run - end <= 2 * kContext) {
                end = run;
                continue;
            }
            end = std::min(ops.size(), end + kContext);
            break;
        }
        int a_start = 0, a_len = 0, b_start = 0, b_len = 0;
        bool a_set = false, b_set = false;
        for (std::size_t x = start; x < end; ++x) {
            if (ops[x].tag != '+') {
                if (!a_set) a_start = ops[x].a, a_set = true;
                ++a_len;
            }
            if (ops[x].tag != '-') {
                if (!b_set) b_start = ops[x].b, b_set = true;
                ++b_len;
            }
        }
        if (!a_set) {
            // pure insertion: position after the preceding before line
            a_start = 0;
            for (std::size_t x = start; x-- > 0;) {
                if (ops[x].tag != '+') {
                    a_start = ops[x].a + 1;
                    break;
                }
            }
        } else {
            ++a_start;
        }
        if (!b_set) {
            b_start = 0;
            for (std::size_t x = start; x-- > 0;) {
                if (ops[x].tag != '-') {
                    b_start = ops[x].b + 1;
                    break;
                }
            }
        } else {
            ++b_start;
        }
        out += "@@ -" + std::to_string(a_start) + "," + std::to_string(a_len) + " +" + std::to_string(b_start) + "," +
               std::to_string(b_len) + " @@\n";
        for (std::size_t x = start; x < end; ++x) {
            const auto& op = ops[x];
            const std::string& text = op.tag == '+' ? b.lines[op.b] : a.lines[op.a];
            out += op.tag;
            out += text + "\n";
            const bool last_a = op.tag != '+' && op.a == int(a.lines.size()) - 1 && !a.trailing_newline;
            const bool last_b = op.tag != '-' && op.b == int(b.lines.size()) - 1 && !b.trailing_newline;
            if ((op.tag == '-' && last_a) || (op.tag == '+' && last_b) || (op.tag == ' ' && (last_a || last_b))) {
                out += "\\ No newline at end of file\n";
            }
        }
        k = end;
    }
    return out;
}

}  // namespace

std::string unified_diff(const std::map<std::string, std::string>& before,
                         const std::map<std::string, std::string>& after) {
    std::set<std::string> paths;
    for (const auto& [p, _] : before) paths.insert(p);
    for (const auto& [p, _] : after) paths.insert(p);
    std::string out;
    for (const auto& p : paths) {
        const auto b = before.find(p);
        const auto a = after.find(p);
        out += file_diff(p, b == before.end() ? std::nullopt : std::optional<std::string>(b->second),
                         a == after.end() ? std::nullopt : std::optional<std::string>(a->second));
    }
    return out;
}

// ----------------------------------------------------------------- workspace

Workspace::Workspace(fs::path root) : root_(std::move(root)) {
    if (!fs::is_directory(root_)) throw PreconditionError("workspace is not a directory: " + root_.string());
}

void Workspace::apply(const FileEdits& edits) {
    for (const auto& [path, _] : edits) check_edit_path(path);
    for (const auto& [path, text] : edits) {
        const fs::path full = root_ / fs::path(path);
        if (!baseline_.count(path)) {
            baseline_[path] = fs::is_regular_file(full) ? std::optional<std::string>(read_file(full)) : std::nullopt;
        }
        fs::create_directories(full.parent_path());
        std::ofstream out(full, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw IoError("cannot write " + full.string());
    }
}

void Workspace::reset() {
    for (const auto& [path, text] : baseline_) {
        const fs::path full = root_ / fs::path(path);
        if (text) {
            std::ofstream out(full, std::ios::binary | std::ios::trunc);
            out << *text;
            if (!out) throw IoError("cannot write " + full.string());
        } else {
            std::error_code ec;
            fs::remove(full, ec);
        }
    }
}

std::vector<std::string> Workspace::touched() const {
    std::vector<std::string> out;
    for (const auto& [p, _] : baseline_) out.push_back(p);
    return out;
}

std::map<std::string, std::string> Workspace::baseline_files() const {
    std::map<std::string, std::string> out;
    for (const auto& [p, t] : baseline_) {
        if (t) out[p] = *t;
    }
    return out;
}

std::map<std::string, std::string> Workspace::current_files() const {
    std::map<std::string, std::string> out;
    for (const auto& [p, _] : baseline_) {
        const fs::path full = root_ / fs::path(p);
        if (fs::is_regular_file(full)) out[p] = read_file(full);
    }
    return out;
}

// --------------------------------------------------------------- developer

namespace {

std::string type_summary(RefactoringType t) {
    switch (t) {
        case RefactoringType::ExtractMethod:
            return "Move a contiguous group of statements of the method into a new method of the same class and "
                   "replace them with one call to it.";
        case RefactoringType::InlineMethod:
            return "Replace the single call of the method with its body and delete the method.";
        case RefactoringType::MoveMethod:
            return "Move the method unchanged to another class and remove it from its current class.";
        case RefactoringType::ExtractAndMoveMethod:
            return "Extract a contiguous group of statements into a new method that lives in a different class, "
                   "and replace them with one call to it.";
        case RefactoringType::MoveAndInlineMethod:
            return "Inline a method of another class into its caller, replacing the call with the body, and delete "
                   "the method.";
        case RefactoringType::MoveAndRenameMethod:
            return "Move the method to another class under a new name, keeping its parameters and body.";
    }
    return {};
}

const SourceUnit* unit_of_method(const SourceTree& tree, const MethodRef& ref) {
    return tree.unit_of_class(ref.qualified_class);
}

std::string render_examples(const std::vector<RefactoringRecord>& examples) {
    if (examples.empty()) return "No similar refactorings found.\n";
    std::string out;
    int k = 0;
    for (const auto& r : examples) {
        out += "Example " + std::to_string(++k) + " (" + std::string(to_string(r.type)) + "):\n";
        out += "Description: " + r.description + "\n";
        out += "Before:\n" + r.before_code;
        if (!r.before_code.empty() && r.before_code.back() != '\n') out += '\n';
        out += "After:\n" + r.after_code;
        if (!r.after_code.empty() && r.after_code.back() != '\n') out += '\n';
        out += '\n';
    }
    return out;
}

std::string arg(const ToolCall& call, const std::string& name) {
    const auto it = call.arguments.find(name);
    return it == call.arguments.end() ? std::string() : it->second;
}

std::string resolve_class(const SourceTree& tree, const std::string& name) {
    if (tree.find_class(name)) return name;
    std::string found;
    for (const auto& u : tree.units) {
        for (const auto& c : u.classes) {
            if (c.name != name) continue;
            if (!found.empty()) throw LookupError("class name '" + name + "' is ambiguous; use the qualified name");
            found = c.qualified_name;
        }
    }
    if (found.empty()) throw LookupError("class not found: " + name);
    return found;
}

std::string list_refs(const std::vector<MethodRef>& refs) {
    if (refs.empty()) return "  (none)\n";
    std::string out;
    for (const auto& r : refs) out += "  " + r.str() + "\n";
    return out;
}

}  // namespace

std::vector<ToolSpec> developer_tools() {
    return {
        {"get_refactoring_operation", "The requested refactoring type and what it means.", {}},
        {"get_method_to_be_refactored", "Source code, file path and reference of the method to refactor.", {}},
        {"get_class_content",
         "Source text of a class.",
         {{"class_name", "string", "qualified or simple class name; defaults to the target's class", false}}},
        {"get_project_structure", "Directory tree of the project.", {}},
        {"get_similar_refactoring", "Similar past refactorings retrieved as examples.", {}},
        {"get_file_content", "Exact text of a project file.", {{"path", "string", "project-relative path", true}}},
        {"get_call_graph",
         "Direct callers and callees of a method.",
         {{"method", "string", "Class#name/arity; defaults to the target method", false}}},
    };
}

std::string run_developer_tool(const DeveloperContext& ctx, const ToolCall& call) {
    const SourceTree& tree = *ctx.tree;
    try {
        if (call.name == "get_refactoring_operation") {
            return "Refactoring type: " + std::string(to_string(ctx.type)) + "\n" + type_summary(ctx.type) + "\n";
        }
        if (call.name == "get_method_to_be_refactored") {
            const MethodDecl* m = tree.find_method(ctx.target);
            if (!m) throw LookupError("method not found: " + ctx.target.str());
            const SourceUnit* u = unit_of_method(tree, ctx.target);
            return "Method: " + ctx.target.str() + "\nFile: " + (u ? u->path : std::string("?")) + "\nLines: " +
                   std::to_string(m->span.start) + "-" + std::to_string(m->span.end) + "\n\n" + m->text + "\n";
        }
        if (call.name == "get_class_content") {
            std::string name = arg(call, "class_name");
            if (name.empty()) name = ctx.target.qualified_class;
            return class_content(tree.units, resolve_class(tree, name));
        }
        if (call.name == "get_project_structure") return tree.structure.render();
        if (call.name == "get_similar_refactoring") return render_examples(ctx.examples);
        if (call.name == "get_file_content") {
            const std::string path = arg(call, "path");
            if (path.empty()) throw LookupError("missing argument 'path'");
            return file_content(tree.structure, path);
        }
        if (call.name == "get_call_graph") {
            const std::string m = arg(call, "method");
            const MethodRef ref = m.empty() ? ctx.target : MethodRef::parse(m);
            return "Method: " + ref.str() + "\nCallers:\n" + list_refs(direct_callers(*ctx.graph, ref)) +
                   "Callees:\n" + list_refs(direct_callees(*ctx.graph, ref));
        }
        return "error: unknown tool '" + call.name + "'";
    } catch (const Error& e) {
        return std::string("error: ") + e.what();
    }
}

std::vector<ChatMessage> developer_prompt(const DeveloperContext& ctx) {
    const std::string system =
        "You are the Developer Agent, an experienced Java engineer who performs method-level refactorings. "
        "Use the provided tools to inspect the project when you need more context. When you are finished, reply "
        "with the complete new content of every file you change or create, each in its own fenced block opened "
        "with ```java <path> (path relative to the project root) and closed with ```. Do not change behavior.";
    const MethodDecl* m = ctx.tree->find_method(ctx.target);
    if (!m) throw PreconditionError("method not found: " + ctx.target.str());

    std::string user =
        "### Task: Code Refactoring Based on a Specified Refactoring Type\n\n"
        "### Instructions: Please follow the Step-by-Step Analysis:\n"
        "Step 1: Code Analysis. Analyze the specific code segment that needs to be refactored. And output a concise "
        "summary of the code to be refactored.\n"
        "Step 2: Refactoring Method Reference. Search and retrieve up to three similar refactoring examples from "
        "the RAG system.\n"
        "Step 3: Structure Information Extraction. Based on the refactoring type and code summary, use the provided "
        "tools to collect any structural information you need. This may include code structure information as "
        "well as project structure information.\n"
        "Step 4: Refactoring Execution. Using the extracted structural information and retrieved examples to "
        "generate the refactored code.\n\n"
        "### Input:\n"
        "Refactoring Type: " +
        std::string(to_string(ctx.type)) + "\nCode to be Refactored:\n" + m->text + "\n\n";
    for (const char* tool : {"get_refactoring_operation", "get_method_to_be_refactored", "get_similar_refactoring"}) {
        user += "[" + std::string(tool) + "]\n" + run_developer_tool(ctx, ToolCall{"", tool, {}});
        if (user.back() != '\n') user += '\n';
        user += '\n';
    }
    user += "### Response:\n";
    return {ChatMessage::system(system), ChatMessage::user(user)};
}

Candidate developer_generate(const DeveloperContext& ctx, std::vector<ChatMessage>& messages, LlmBackend& llm,
                             int max_tool_rounds) {
    const auto tools = developer_tools();
    int rounds = 0;
    std::size_t call_ids = 0;
    for (const auto& msg : messages) call_ids += msg.tool_calls.size();
    while (true) {
        CompletionRequest req;
        req.messages = messages;
        req.tools = tools;
        CompletionResponse resp = llm.complete(req);
        auto calls = resp.tool_calls;
        if (calls.empty()) calls = parse_text_tool_calls(resp.content);
        if (!calls.empty()) {
            if (++rounds > max_tool_rounds) {
                messages.push_back(ChatMessage::assistant(resp.content, calls));
                throw GenerationError("tool-round limit of " + std::to_string(max_tool_rounds) + " exceeded");
            }
            for (auto& c : calls) {
                if (c.id.empty()) c.id = "call_" + std::to_string(++call_ids);
            }
            messages.push_back(ChatMessage::assistant(resp.content, calls));
            for (const auto& c : calls) messages.push_back(ChatMessage::tool(c, run_developer_tool(ctx, c)));
            continue;
        }
        messages.push_back(ChatMessage::assistant(resp.content));
        Candidate cand;
        cand.files = parse_file_blocks(resp.content);
        cand.text = resp.content;
        cand.tool_rounds = rounds;
        if (cand.files.empty()) throw GenerationError("the reply contains no ```java <path> file block");
        return cand;
    }
}

// ------------------------------------------------------------------ reviewer

namespace {

std::string line_text(const std::string& text, int line) {
    std::size_t pos = 0;
    for (int l = 1; l < line; ++l) {
        pos = text.find('\n', pos);
        if (pos == std::string::npos) return {};
        ++pos;
    }
    const auto end = text.find('\n', pos);
    return text.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
}

std::vector<StyleFinding> new_style_findings(const SourceTree& before, const SourceTree& after,
                                             const std::vector<std::string>& touched, std::string_view rules) {
    std::vector<SourceUnit> old_units, new_units;
    for (const auto& p : touched) {
        if (const auto* u = before.unit(p)) old_units.push_back(*u);
        if (const auto* u = after.unit(p)) new_units.push_back(*u);
    }
    std::multiset<std::tuple<std::string, std::string, std::string>> baseline;
    for (const auto& f : check(old_units, rules)) {
        baseline.insert({f.path, f.rule_id, line_text(before.unit(f.path)->text, f.line)});
    }
    std::vector<StyleFinding> out;
    for (const auto& f : check(new_units, rules)) {
        const auto it = baseline.find({f.path, f.rule_id, line_text(after.unit(f.path)->text, f.line)});
        if (it != baseline.end()) {
            baseline.erase(it);
        } else {
            out.push_back(f);
        }
    }
    return out;
}

}  // namespace

ReviewOutcome reviewer_review(const SourceTree& before, const SourceTree& after, RefactoringType expected,
                              const std::vector<std::string>& touched, std::string_view style_rules, int round) {
    ReviewOutcome out;
    FeedbackReport v{round, FeedbackReport::Stage::Verification, false, {}};
    if (!after.ok()) {
        for (const auto& f : after.failures) {
            v.findings.push_back({f.path + ":" + std::to_string(f.line), "parse error: " + f.message});
        }
        out.reports.push_back(v);
        return out;
    }
    const VerifyResult vr = verify(before, after, expected);
    if (!vr.verified) {
        v.findings.push_back({"", vr.report});
        out.reports.push_back(v);
        return out;
    }
    v.passed = true;
    out.reports.push_back(v);

    FeedbackReport s{round, FeedbackReport::Stage::Style, false, {}};
    for (const auto& f : new_style_findings(before, after, touched, style_rules)) {
        s.findings.push_back({f.path + ":" + std::to_string(f.line), f.rule_id + " " + f.message});
    }
    s.passed = s.findings.empty();
    out.reports.push_back(s);
    out.build_triggered = s.passed;
    return out;
}

// -------------------------------------------------------------------- repair

std::string error_log(const BuildReport& r, const fs::path& workspace) {
    std::string out;
    if (r.timed_out) out += "The build timed out.\n";
    if (!r.compiled) {
        out += "Compilation failed.\n";
    } else if (!r.tests_passed) {
        out += "Compilation succeeded; tests failed.\n";
    } else {
        out += "Compilation and tests succeeded.\n";
    }
    for (const auto& e : r.compile_errors) {
        out += "error: " + e.path + ":" + std::to_string(e.line) + ": " + e.message + "\n";
    }
    for (const auto& f : r.failures) {
        out += "test failure: " + f.test_id + (f.message.empty() ? "" : ": " + f.message) + "\n";
        if (!f.stack_excerpt.empty()) out += f.stack_excerpt + "\n";
    }
    // tail of the raw log
    constexpr std::size_t kTailLines = 60;
    std::vector<std::string> lines;
    std::istringstream in(r.raw_log);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    const std::size_t from = lines.size() > kTailLines ? lines.size() - kTailLines : 0;
    out += "Build log:\n";
    for (std::size_t i = from; i < lines.size(); ++i) out += lines[i] + "\n";

    std::string ws = workspace.string();
    if (!ws.empty()) {
        for (const std::string& prefix : {ws + "/", ws}) {
            std::size_t pos = 0;
            while ((pos = out.find(prefix, pos)) != std::string::npos) out.erase(pos, prefix.size());
        }
    }
    return out;
}

namespace {

constexpr const char* kRepairSystem =
    "You are the Repair Agent. You fix Java code that no longer compiles or passes its tests after a refactoring. "
    "You should not modify the code's functionality and only focus on repair.";

constexpr const char* kPatchFormat =
    "Reply with the complete new content of every file you change, each in a fenced block opened with "
    "```java <path> and closed with ```.";

std::string reply_text(LlmBackend& llm, const std::string& user) {
    CompletionRequest req;
    req.messages = {ChatMessage::system(kRepairSystem), ChatMessage::user(user)};
    return llm.complete(req).content;
}

// Text outside file blocks.
std::string prose(const std::string& text) {
    std::string out;
    bool in_block = false;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) {
        if (trim(l).rfind("```", 0) == 0) {
            in_block = !in_block;
            continue;
        }
        if (!in_block) out += l + "\n";
    }
    return trim(out);
}

std::string current_code(const Workspace& ws, const BuildReport& build) {
    FileEdits files = ws.current_files();
    for (const auto& e : build.compile_errors) {
        std::string p = e.path;
        const std::string root = ws.root().string() + "/";
        if (p.rfind(root, 0) == 0) p = p.substr(root.size());
        if (files.count(p)) continue;
        try {
            check_edit_path(p);
        } catch (const PreconditionError&) {
            continue;
        }
        if (fs::is_regular_file(ws.root() / p)) files[p] = read_file(ws.root() / p);
    }
    return render_file_blocks(files);
}

std::string class_text(const Workspace& ws, const MethodRef& target) {
    try {
        const SourceTree t = parse_tree(ws.root());
        std::string q = target.qualified_class;
        return class_content(t.units, q);
    } catch (const Error&) {
        return "(class not available)\n";
    }
}

}  // namespace

RepairOutcome repair_loop(const RefactoringTask& task, Workspace& ws, const SourceTree& before,
                          const BuildReport& first_build, LlmBackend& llm) {
    RepairOutcome out;
    out.last_build = first_build;
    std::string log = error_log(first_build, ws.root());
    for (int attempt = 1; attempt <= task.config.max_repair_attempts; ++attempt) {
        RepairEpisode ep;
        ep.attempt = attempt;
        ep.error_log = log;
        const std::string code = current_code(ws, out.last_build);
        const std::string cls = class_text(ws, task.target);
        std::string act;
        if (attempt == 1) {
            act = reply_text(llm, "### Initial analysis\nThe refactored code below fails to build or pass its tests.\n\n"
                                  "### Refactored code\n" + code + "\n### Class containing the refactored method\n" +
                                      cls + "\n### Error log\n" + log + "\nAnalyze the errors and write a patch. " +
                                      kPatchFormat);
            ep.plan = prose(act);
        } else {
            const RepairEpisode& prev = out.episodes.back();
            ep.reflection = reply_text(
                llm, "### Self-reflection\nYour previous patch did not make the build green.\n\n### Previous patch\n" +
                         render_file_blocks(prev.patch) +
                         (prev.apply_error.empty() ? "" : "The patch could not be applied: " + prev.apply_error + "\n") +
                         "\n### Errors before the patch\n" + prev.error_log + "\n### Errors after the patch\n" + log +
                         "\nCompare the code and the errors before and after the patch and explain why it did not "
                         "resolve the failure, referencing the lines named in the errors. Do not write code.");
            ep.plan = reply_text(llm, "### Planning\n### Self-reflection\n" + ep.reflection + "\n\n### Current code\n" +
                                          code + "\n### Current errors\n" + log +
                                          "\nWrite a concrete repair plan listing the code modifications needed. Do "
                                          "not write code.");
            act = reply_text(llm, "### Acting\n### Plan\n" + ep.plan + "\n\n### Current code\n" + code +
                                      "\n### Class containing the refactored method\n" + cls + "\n### Current errors\n" +
                                      log + "\nApply the plan. " + kPatchFormat);
        }
        ep.patch = parse_file_blocks(act);
        if (ep.patch.empty()) ep.apply_error = "the reply contains no ```java <path> file block";
        if (ep.apply_error.empty()) {
            try {
                ws.apply(ep.patch);
            } catch (const PreconditionError& e) {
                ep.apply_error = e.what();
            }
        }
        if (!ep.apply_error.empty()) {
            ep.build_after = out.last_build;
            log = "The patch could not be applied: " + ep.apply_error + "\n" + error_log(out.last_build, ws.root());
            out.episodes.push_back(std::move(ep));
            continue;
        }
        ep.build_after = run_tests(ws.root(), task.config.build);
        out.last_build = ep.build_after;
        log = error_log(ep.build_after, ws.root());
        if (ep.build_after.green()) {
            const SourceTree after = parse_tree(ws.root());
            const VerifyResult vr = after.ok() ? verify(before, after, task.requested_type)
                                               : VerifyResult{false, "the refactored code does not parse"};
            if (vr.verified) {
                out.episodes.push_back(std::move(ep));
                out.green = true;
                return out;
            }
            log += "Refactoring verification failed: " + vr.report + "\n";
        }
        out.episodes.push_back(std::move(ep));
    }
    return out;
}

// ------------------------------------------------------------------ pipeline

PipelineResult run_pipeline(const RefactoringTask& task, LlmBackend& llm, const PipelineDeps& deps) {
    const auto start = std::chrono::steady_clock::now();
    task.config.validate();
    if (deps.corpus && !deps.embedder) throw PreconditionError("a corpus needs an embedder");

    const SourceTree before = parse_tree(task.workspace);
    if (!before.ok()) {
        throw PreconditionError("workspace does not parse: " + before.failures.front().path + ":" +
                                std::to_string(before.failures.front().line) + ": " + before.failures.front().message);
    }
    if (!before.find_method(task.target)) throw PreconditionError("method not found: " + task.target.str());
    const BuildReport baseline = run_tests(task.workspace, task.config.build);
    if (!baseline.green()) throw PreconditionError("workspace not green");

    const CallGraph graph = build_call_graph(before.units);
    Workspace ws(task.workspace);
    PipelineResult result;
    auto finish = [&](PipelineStatus status) {
        result.status = status;
        result.final_diff = ws.diff();
        result.before_files = ws.baseline_files();
        result.after_files = ws.current_files();
        result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return result;
    };

    DeveloperContext ctx{&before, &graph, task.target, task.requested_type, {}};
    try {
        if (deps.corpus && !deps.corpus->empty()) {
            const MethodContext mc = method_context(before, graph, task.target);
            const std::string description =
                describe_for_index(mc.code, mc.callers_callees, mc.class_info, llm);
            ctx.examples = retrieve_similar(*deps.corpus, *deps.embedder, {mc.code, description, mc.callers_callees},
                                            task.config.retrieval_n, task.config.rrf_k);
            for (const auto& r : ctx.examples) result.retrieved_ids.push_back(r.id);
        }

        auto messages = developer_prompt(ctx);
        for (int round = 1; round <= task.config.max_review_rounds; ++round) {
            result.review_rounds = round;
            ws.reset();
            Candidate cand;
            try {
                cand = developer_generate(ctx, messages, llm, task.config.max_tool_rounds);
                ws.apply(cand.files);
            } catch (const GenerationError& e) {
                FeedbackReport r{round, FeedbackReport::Stage::Verification, false, {{"", e.what()}}};
                result.feedback_history.push_back(r);
                messages.push_back(ChatMessage::user(r.render() + "\nPlease try again."));
                continue;
            } catch (const PreconditionError& e) {
                FeedbackReport r{round, FeedbackReport::Stage::Verification, false,
                                 {{"", std::string("candidate could not be applied: ") + e.what()}}};
                result.feedback_history.push_back(r);
                messages.push_back(ChatMessage::user(r.render() + "\nPlease revise the refactoring."));
                continue;
            }

            const SourceTree after = parse_tree(task.workspace);
            const auto review =
                reviewer_review(before, after, task.requested_type, ws.touched(), task.config.style_rules, round);
            for (const auto& r : review.reports) result.feedback_history.push_back(r);
            if (!review.build_triggered) {
                messages.push_back(ChatMessage::user(review.reports.back().render() +
                                                     "\nPlease revise the refactoring and reply with the complete "
                                                     "content of every changed file."));
                continue;
            }

            const BuildReport build = run_tests(task.workspace, task.config.build);
            result.last_build = build;
            if (build.green()) return finish(PipelineStatus::Success);
            RepairOutcome repair = repair_loop(task, ws, before, build, llm);
            result.episodes = std::move(repair.episodes);
            result.last_build = repair.last_build;
            return finish(repair.green ? PipelineStatus::Success : PipelineStatus::RepairExhausted);
        }
        return finish(PipelineStatus::ReviewExhausted);
    } catch (const BackendError& e) {
        result.error = e.what();
        return finish(PipelineStatus::BackendError);
    }
}

}  // namespace refagent
