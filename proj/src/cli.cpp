#include "refagent/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "refagent/errors.hpp"
#include "refagent/metrics.hpp"
#include "refagent/util.hpp"

namespace refagent {

namespace fs = std::filesystem;
using nlohmann::json;

// -------------------------------------------------------------------- config

namespace {

void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) + "'");
        }
    }
}

template <typename T>
void take(const json& obj, const char* key, const std::string& section, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
    }
}

}  // namespace

void apply_config(CliConfig& c, const json& doc) {
    check_keys(doc, "", {"llm", "retrieval", "pipeline", "build", "style"});
    if (doc.contains("llm")) {
        const auto& s = doc["llm"];
        check_keys(s, "llm", {"endpoint", "model", "api_key_env", "timeout"});
        take(s, "endpoint", "llm", c.llm.endpoint);
        take(s, "model", "llm", c.llm.model);
        take(s, "api_key_env", "llm", c.llm.api_key_env);
        take(s, "timeout", "llm", c.llm.timeout);
        if (c.llm.timeout < 1) throw ConfigError("llm.timeout must be >= 1");
    }
    if (doc.contains("retrieval")) {
        const auto& s = doc["retrieval"];
        check_keys(s, "retrieval", {"store_dir", "n", "rrf_k"});
        take(s, "store_dir", "retrieval", c.store_dir);
        take(s, "n", "retrieval", c.pipeline.retrieval_n);
        take(s, "rrf_k", "retrieval", c.pipeline.rrf_k);
    }
    if (doc.contains("pipeline")) {
        const auto& s = doc["pipeline"];
        check_keys(s, "pipeline", {"max_review_rounds", "max_repair_attempts"});
        take(s, "max_review_rounds", "pipeline", c.pipeline.max_review_rounds);
        take(s, "max_repair_attempts", "pipeline", c.pipeline.max_repair_attempts);
    }
    if (doc.contains("build")) {
        const auto& s = doc["build"];
        check_keys(s, "build", {"kind", "compile_cmd", "test_cmd", "timeout_secs"});
        std::string kind;
        take(s, "kind", "build", kind);
        if (!kind.empty()) c.build_kind = parse_build_system_kind(kind);
        take(s, "compile_cmd", "build", c.pipeline.build.compile_cmd);
        take(s, "test_cmd", "build", c.pipeline.build.test_cmd);
        int secs = static_cast<int>(c.pipeline.build.timeout.count());
        take(s, "timeout_secs", "build", secs);
        if (secs < 1) throw ConfigError("build.timeout_secs must be >= 1");
        c.pipeline.build.timeout = std::chrono::seconds(secs);
    }
    if (doc.contains("style")) {
        const auto& s = doc["style"];
        check_keys(s, "style", {"rule_set"});
        take(s, "rule_set", "style", c.pipeline.style_rules);
    }
    c.pipeline.validate();
}

json to_json_value(const CliConfig& c) {
    return {{"llm",
             {{"endpoint", c.llm.endpoint},
              {"model", c.llm.model},
              {"api_key_env", c.llm.api_key_env},
              {"timeout", c.llm.timeout}}},
            {"retrieval", {{"store_dir", c.store_dir}, {"n", c.pipeline.retrieval_n}, {"rrf_k", c.pipeline.rrf_k}}},
            {"pipeline",
             {{"max_review_rounds", c.pipeline.max_review_rounds},
              {"max_repair_attempts", c.pipeline.max_repair_attempts}}},
            {"build",
             {{"kind", c.build_kind ? std::string(to_string(*c.build_kind)) : std::string()},
              {"compile_cmd", c.pipeline.build.compile_cmd},
              {"test_cmd", c.pipeline.build.test_cmd},
              {"timeout_secs", c.pipeline.build.timeout.count()}}},
            {"style", {{"rule_set", c.pipeline.style_rules}}}};
}

namespace {

PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig c;
    c.max_review_rounds = j.at("max_review_rounds").get<int>();
    c.max_repair_attempts = j.at("max_repair_attempts").get<int>();
    c.max_tool_rounds = j.at("max_tool_rounds").get<int>();
    c.retrieval_n = j.at("retrieval_n").get<std::size_t>();
    c.rrf_k = j.at("rrf_k").get<int>();
    c.style_rules = j.at("style_rules").get<std::string>();
    const auto& b = j.at("build");
    c.build.kind = parse_build_system_kind(b.at("kind").get<std::string>());
    c.build.compile_cmd = b.at("compile_cmd").get<std::string>();
    c.build.test_cmd = b.at("test_cmd").get<std::string>();
    c.build.timeout = std::chrono::seconds(b.at("timeout_secs").get<long>());
    return c;
}

// Thrown for missing inputs (exit 66).
class NoInputError : public Error {
public:
    using Error::Error;
};

// Thrown for bad command-line usage (exit 64).
class UsageError : public Error {
public:
    using Error::Error;
};

json read_json_file(const fs::path& path) {
    if (!fs::exists(path)) throw NoInputError("no such file: " + path.string());
    const std::string text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string(), 1, e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

struct Globals {
    std::string config_path;
    std::string script_path;
    std::string endpoint;
    std::string model;
    std::string store_dir;
    int max_review_rounds = 0;
    int max_repair_attempts = 0;
    std::string build_kind;
    std::string compile_cmd;
    std::string test_cmd;
    int build_timeout = 0;
    std::string style_rules;
};

CliConfig load_config(const Globals& g) {
    CliConfig c;
    if (!g.config_path.empty()) apply_config(c, read_json_file(g.config_path));
    if (!g.endpoint.empty()) c.llm.endpoint = g.endpoint;
    if (!g.model.empty()) c.llm.model = g.model;
    if (!g.store_dir.empty()) c.store_dir = g.store_dir;
    if (g.max_review_rounds) c.pipeline.max_review_rounds = g.max_review_rounds;
    if (g.max_repair_attempts) c.pipeline.max_repair_attempts = g.max_repair_attempts;
    if (!g.build_kind.empty()) c.build_kind = parse_build_system_kind(g.build_kind);
    if (!g.compile_cmd.empty()) c.pipeline.build.compile_cmd = g.compile_cmd;
    if (!g.test_cmd.empty()) c.pipeline.build.test_cmd = g.test_cmd;
    if (g.build_timeout) c.pipeline.build.timeout = std::chrono::seconds(g.build_timeout);
    if (!g.style_rules.empty()) c.pipeline.style_rules = g.style_rules;
    c.pipeline.validate();
    return c;
}

// nullptr when neither a script nor an endpoint is configured.
std::shared_ptr<LlmBackend> make_backend(const CliConfig& c, const std::string& script_path) {
    if (!script_path.empty()) {
        if (!fs::exists(script_path)) throw NoInputError("no such file: " + script_path);
        return std::shared_ptr<LlmBackend>(ScriptedBackend::from_jsonl(script_path));
    }
    if (c.llm.endpoint.empty()) return nullptr;
    HttpConfig h;
    h.endpoint = c.llm.endpoint;
    h.model = c.llm.model;
    if (const char* key = std::getenv(c.llm.api_key_env.c_str())) h.api_key = key;
    h.timeout = std::chrono::seconds(c.llm.timeout);
    return std::make_shared<HttpBackend>(h);
}

// ------------------------------------------------------------------- index

struct IndexArgs {
    std::string records;
    std::string store_dir;
    bool description_field = false;
    bool strict = false;
    bool rebuild = false;
};

std::vector<RawExample> read_examples(const fs::path& path) {
    if (!fs::exists(path)) throw NoInputError("no such file: " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<RawExample> out;
    int lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line).get<RawExample>());
        } catch (const json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        } catch (const ConfigError& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
    return out;
}

int cmd_index(const IndexArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
    const HashedTrigramEmbedder embedder;
    if (a.rebuild && a.records.empty()) {
        if (!fs::exists(fs::path(a.store_dir) / "records.jsonl")) {
            throw NoInputError("no records.jsonl in " + a.store_dir);
        }
        const auto corpus = rebuild_store(a.store_dir, embedder);
        out << "rebuilt " << corpus.records.size() << " records\n";
        return 0;
    }
    if (a.records.empty()) throw UsageError("index needs RECORDS (or --rebuild with only STORE_DIR)");
    auto examples = read_examples(a.records);
    const CliConfig cfg = load_config(g);
    std::shared_ptr<LlmBackend> llm;
    if (!a.description_field) {
        for (auto& e : examples) e.description.reset();
        llm = make_backend(cfg, g.script_path);
        if (!llm && !examples.empty()) {
            throw UsageError("no completion backend configured; pass --script, llm.endpoint or --description-field");
        }
    }
    const IngestOutcome outcome = ingest(examples, llm.get());
    out << "admitted " << outcome.admitted.size() << ", rejected " << outcome.rejected.size() << "\n";
    for (const auto& r : outcome.rejected) err << "rejected " << r.id << ": " << r.reason << "\n";
    if (a.strict && !outcome.rejected.empty()) return kExitDataError;
    fs::create_directories(a.store_dir);
    save_store(build_index(outcome.admitted, embedder), a.store_dir);
    return 0;
}

// ---------------------------------------------------------------- refactor

struct RefactorArgs {
    std::string repo;
    std::string class_name;
    std::string method;
    int arity = -1;
    std::string type;
    std::string out_report;
    std::string tasks;
    int jobs = 1;
};

MethodRef resolve_target(const SourceTree& tree, const std::string& cls, const std::string& method, int arity) {
    const ClassDecl* c = tree.find_class(cls);
    if (!c) {
        for (const auto& u : tree.units) {
            for (const auto& k : u.classes) {
                if (k.name != cls) continue;
                if (c) throw UsageError("class name '" + cls + "' is ambiguous; use the qualified name");
                c = &k;
            }
        }
    }
    if (!c) throw UsageError("class not found: " + cls);
    std::vector<const MethodDecl*> hits;
    for (const auto& m : c->methods) {
        if (m.name == method && (arity < 0 || static_cast<int>(m.params.size()) == arity)) hits.push_back(&m);
    }
    if (hits.empty()) throw UsageError("method not found: " + c->qualified_name + "#" + method);
    if (hits.size() > 1) throw UsageError("method '" + method + "' is overloaded; pass --arity");
    return hits.front()->ref();
}

void copy_repo(const fs::path& repo, const fs::path& dest) {
    std::error_code ec;
    fs::remove_all(dest, ec);
    fs::create_directories(dest);
    for (const auto& entry : fs::directory_iterator(repo)) {
        if (entry.path().filename() == ".git") continue;
        fs::copy(entry.path(), dest / entry.path().filename(),
                 fs::copy_options::recursive | fs::copy_options::copy_symlinks);
    }
}

struct RunSpec {
    fs::path repo;
    std::string class_name;
    std::string method;
    int arity = -1;
    RefactoringType type = RefactoringType::ExtractMethod;
    fs::path out_report;
    std::string script;
};

int run_one(const RunSpec& spec, const CliConfig& cfg, std::shared_ptr<LlmBackend> backend, std::ostream& out) {
    if (!fs::is_directory(spec.repo)) throw NoInputError("no such directory: " + spec.repo.string());
    fs::create_directories(spec.out_report);
    const fs::path workspace = spec.out_report / "workspace";
    if (fs::weakly_canonical(workspace) == fs::weakly_canonical(spec.repo)) {
        throw UsageError("the report directory must not contain the repository");
    }
    copy_repo(spec.repo, workspace);

    const SourceTree tree = parse_tree(workspace);
    if (!tree.ok()) {
        const auto& f = tree.failures.front();
        throw ParseError(f.path, f.line, f.message);
    }
    RefactoringTask task;
    task.workspace = workspace;
    task.target = resolve_target(tree, spec.class_name, spec.method, spec.arity);
    task.requested_type = spec.type;
    task.config = cfg.pipeline;
    task.config.build = resolve_build_commands(workspace, cfg.build_kind, cfg.pipeline.build.compile_cmd,
                                               cfg.pipeline.build.test_cmd, cfg.pipeline.build.timeout);

    if (!spec.script.empty()) {
        if (!fs::exists(spec.script)) throw NoInputError("no such file: " + spec.script);
        backend = std::shared_ptr<LlmBackend>(ScriptedBackend::from_jsonl(spec.script));
    }
    if (!backend) throw UsageError("no completion backend configured; pass --script or set llm.endpoint");

    std::optional<IndexedCorpus> corpus;
    const HashedTrigramEmbedder embedder;
    if (!cfg.store_dir.empty()) {
        if (!fs::exists(fs::path(cfg.store_dir) / "records.jsonl")) {
            throw NoInputError("no records.jsonl in " + cfg.store_dir);
        }
        corpus = load_store(cfg.store_dir, embedder);
    }

    const fs::path transcript = spec.out_report / "transcript.jsonl";
    const std::string started = utc_timestamp();
    RecordingBackend recorder(backend, transcript);
    PipelineResult result;
    try {
        result = run_pipeline(task, recorder, {corpus ? &*corpus : nullptr, &embedder});
    } catch (const PreconditionError&) {
        recorder.close();
        throw;
    }
    recorder.close();

    json report = to_json_value(result);
    report["task"] = {{"repo", fs::absolute(spec.repo).lexically_normal().string()},
                      {"target", task.target.str()},
                      {"type", to_string(task.requested_type)}};
    report["config"] = to_json_value(task.config);
    report["store_dir"] = cfg.store_dir.empty() ? "" : fs::absolute(cfg.store_dir).lexically_normal().string();
    report["metric"] = "CodeBLEU (statement variant)";
    report["transcript"] = {{"path", "transcript.jsonl"},
                            {"backend", backend->id()},
                            {"timestamp", started},
                            {"calls", recorder.calls()},
                            {"config_hash", hex64(fnv1a64(report["config"].dump()))}};
    write_text(spec.out_report / "report.json", report.dump(2) + "\n");
    write_text(spec.out_report / "final.diff", result.final_diff);
    out << spec.out_report.string() << ": " << to_string(result.status) << "\n";
    if (!result.error.empty()) out << "error: " << result.error << "\n";
    return exit_code(result.status);
}

int cmd_refactor(const RefactorArgs& a, const Globals& g, std::ostream& out, std::ostream& err) {
    const CliConfig cfg = load_config(g);
    if (a.tasks.empty()) {
        if (a.repo.empty() || a.class_name.empty() || a.method.empty() || a.type.empty() || a.out_report.empty()) {
            throw UsageError("refactor needs REPO, --class, --method, --type and --out-report (or --tasks)");
        }
        RunSpec spec{a.repo, a.class_name, a.method, a.arity, parse_refactoring_type(a.type), a.out_report, {}};
        return run_one(spec, cfg, make_backend(cfg, g.script_path), out);
    }

    // task list: one JSON object per line
    if (!fs::exists(a.tasks)) throw NoInputError("no such file: " + a.tasks);
    std::vector<RunSpec> specs;
    std::ifstream in(a.tasks);
    int lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const json j = json::parse(line);
            RunSpec s;
            s.repo = j.value("repo", a.repo);
            s.class_name = j.at("class").get<std::string>();
            s.method = j.at("method").get<std::string>();
            s.arity = j.value("arity", -1);
            s.type = parse_refactoring_type(j.at("type").get<std::string>());
            s.out_report = j.at("out_report").get<std::string>();
            s.script = j.value("script", std::string());
            specs.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError(a.tasks, lineno, e.what());
        } catch (const ConfigError& e) {
            throw ParseError(a.tasks, lineno, e.what());
        }
    }
    std::shared_ptr<LlmBackend> shared;
    if (g.script_path.empty()) shared = make_backend(cfg, "");

    std::vector<int> codes(specs.size(), 0);
    std::atomic<std::size_t> next{0};
    std::mutex io;
    auto worker = [&] {
        for (std::size_t i = next++; i < specs.size(); i = next++) {
            std::ostringstream local;
            int code = 0;
            try {
                RunSpec s = specs[i];
                if (s.script.empty()) s.script = g.script_path;
                code = run_one(s, cfg, shared, local);
            } catch (const std::exception& e) {
                local << specs[i].out_report.string() << ": error: " << e.what() << "\n";
                code = dynamic_cast<const UsageError*>(&e)     ? kExitUsage
                       : dynamic_cast<const NoInputError*>(&e) ? kExitNoInput
                                                               : kExitDataError;
            }
            codes[i] = code;
            std::lock_guard lock(io);
            out << local.str();
        }
    };
    std::vector<std::thread> pool;
    for (int j = 0; j < std::max(1, a.jobs); ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    (void)err;
    return codes.empty() ? 0 : *std::max_element(codes.begin(), codes.end());
}

// ------------------------------------------------------------------ detect

SourceTree parse_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw NoInputError("no such directory: " + dir);
    SourceTree t = parse_tree(dir);
    if (!t.ok()) {
        const auto& f = t.failures.front();
        throw ParseError(f.path, f.line, f.message);
    }
    return t;
}

int cmd_detect(const std::string& before_dir, const std::string& after_dir, const std::string& expect,
               std::ostream& out) {
    const SourceTree before = parse_dir(before_dir);
    const SourceTree after = parse_dir(after_dir);
    if (!expect.empty()) {
        const VerifyResult v = verify(before, after, parse_refactoring_type(expect));
        out << v.report << "\n";
        return v.verified ? 0 : kExitCheckFailed;
    }
    json list = json::array();
    for (const auto& inst : detect(before, after)) list.push_back(to_json_value(inst));
    out << list.dump(2) << "\n";
    return 0;
}

// -------------------------------------------------------------------- eval

std::map<std::string, std::string> java_files(const SourceTree& t) {
    std::map<std::string, std::string> out;
    for (const auto& u : t.units) out[u.path] = u.text;
    return out;
}

int cmd_eval(const std::string& before_dir, const std::string& cand_dir, const std::string& ref_dir,
             std::ostream& out) {
    const SourceTree before = parse_dir(before_dir);
    const SourceTree cand = parse_dir(cand_dir);
    const SourceTree ref = parse_dir(ref_dir);
    const auto b = java_files(before), c = java_files(cand), r = java_files(ref);

    std::set<std::string> changed;
    for (const auto* side : {&c, &r}) {
        for (const auto& [p, text] : *side) {
            const auto it = b.find(p);
            if (it == b.end() || it->second != text) changed.insert(p);
        }
    }
    for (const auto& [p, _] : b) {
        if (!c.count(p) || !r.count(p)) changed.insert(p);
    }
    if (changed.empty()) {
        for (const auto& [p, _] : r) changed.insert(p);
    }
    std::vector<std::string> ref_texts, cand_texts;
    for (const auto& p : changed) {
        if (auto it = r.find(p); it != r.end()) ref_texts.push_back(it->second);
        if (auto it = c.find(p); it != c.end()) cand_texts.push_back(it->second);
    }
    const CodeBleuScore bleu = code_bleu(ref_texts, cand_texts);
    const auto tool = ast_diff(before, cand);
    const auto gold = ast_diff(before, ref);
    const AstDiffScore pr = ast_precision_recall(tool, gold);
    json files = json::array();
    for (const auto& p : changed) files.push_back(p);
    out << json{{"code_bleu", to_json_value(bleu)}, {"ast_diff", to_json_value(pr)}, {"files", files}}.dump(2)
        << "\n";
    return 0;
}

// ------------------------------------------------------------------ replay

int cmd_replay(const std::string& report_dir, std::ostream& out) {
    const fs::path dir(report_dir);
    const fs::path report_path = dir / "report.json";
    const fs::path transcript = dir / "transcript.jsonl";
    if (!fs::exists(report_path)) throw NoInputError("no report.json in " + report_dir);
    if (!fs::exists(transcript)) throw NoInputError("no transcript.jsonl in " + report_dir);
    const json report = read_json_file(report_path);
    const std::string recorded_diff = fs::exists(dir / "final.diff") ? read_file(dir / "final.diff") : "";

    RefactoringTask task;
    fs::path repo;
    std::string store_dir;
    try {
        repo = report.at("task").at("repo").get<std::string>();
        task.target = MethodRef::parse(report.at("task").at("target").get<std::string>());
        task.requested_type = parse_refactoring_type(report.at("task").at("type").get<std::string>());
        task.config = pipeline_config_from_json(report.at("config"));
        store_dir = report.value("store_dir", "");
    } catch (const json::exception& e) {
        throw ParseError(report_path.string(), 1, e.what());
    } catch (const LookupError& e) {
        throw ParseError(report_path.string(), 1, e.what());
    }
    if (!fs::is_directory(repo)) throw NoInputError("recorded repository is missing: " + repo.string());
    task.workspace = dir / "replay-workspace";
    copy_repo(repo, task.workspace);

    std::optional<IndexedCorpus> corpus;
    const HashedTrigramEmbedder embedder;
    if (!store_dir.empty()) corpus = load_store(store_dir, embedder);
    auto backend = ReplayBackend::from_file(transcript);
    const PipelineResult result = run_pipeline(task, *backend, {corpus ? &*corpus : nullptr, &embedder});
    if (result.status == PipelineStatus::BackendError) {
        out << "replay diverged: " << result.error << "\n";
        return exit_code(PipelineStatus::BackendError);
    }
    if (result.final_diff != recorded_diff) {
        out << "replay mismatch: final workspace differs from final.diff\n";
        return kExitCheckFailed;
    }
    out << "replay identical (" << to_string(result.status) << ")\n";
    return 0;
}

}  // namespace

// ------------------------------------------------------------------- entry

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Method-level refactoring engine"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--script", g.script_path, "scripted backend: JSON Lines of canned replies");
    app.add_option("--endpoint", g.endpoint, "chat-completions URL (overrides llm.endpoint)");
    app.add_option("--model", g.model, "model name (overrides llm.model)");
    app.add_option("--store-dir", g.store_dir, "retrieval store (overrides retrieval.store_dir)");
    app.add_option("--max-review-rounds", g.max_review_rounds, "overrides pipeline.max_review_rounds");
    app.add_option("--max-repair-attempts", g.max_repair_attempts, "overrides pipeline.max_repair_attempts");
    app.add_option("--build-kind", g.build_kind, "maven, gradle or command (overrides build.kind)");
    app.add_option("--compile-cmd", g.compile_cmd, "overrides build.compile_cmd");
    app.add_option("--test-cmd", g.test_cmd, "overrides build.test_cmd");
    app.add_option("--build-timeout", g.build_timeout, "seconds (overrides build.timeout_secs)");
    app.add_option("--style-rules", g.style_rules, "overrides style.rule_set");

    IndexArgs ia;
    auto* index = app.add_subcommand("index", "Build the retrieval store from before/after examples");
    index->add_option("records", ia.records, "JSON Lines of examples");
    index->add_option("store_dir", ia.store_dir, "output store directory");
    index->add_flag("--description-field", ia.description_field, "use each example's stored description");
    index->add_flag("--strict", ia.strict, "exit 65 and write nothing when any example is rejected");
    index->add_flag("--rebuild", ia.rebuild, "with only STORE_DIR: regenerate the binary index files");

    RefactorArgs ra;
    auto* refactor = app.add_subcommand("refactor", "Run the refactoring pipeline on a repository");
    refactor->add_option("repo", ra.repo, "repository directory (copied into the report directory)");
    refactor->add_option("--class", ra.class_name, "qualified or simple class name");
    refactor->add_option("--method", ra.method, "method name");
    refactor->add_option("--arity", ra.arity, "parameter count, needed for overloads");
    refactor->add_option("--type", ra.type, "refactoring type, e.g. extract-method");
    refactor->add_option("--out-report", ra.out_report, "report directory");
    refactor->add_option("--tasks", ra.tasks, "JSON Lines task list {class, method, arity?, type, out_report, repo?, script?}");
    refactor->add_option("--jobs", ra.jobs, "parallel tasks with --tasks")->check(CLI::PositiveNumber);

    std::string d_before, d_after, d_expect;
    auto* det = app.add_subcommand("detect", "Detect refactorings between two source trees");
    det->add_option("before", d_before, "before directory")->required();
    det->add_option("after", d_after, "after directory")->required();
    det->add_option("--expect", d_expect, "exit 0 only if this refactoring type is found");

    std::string e_before, e_cand, e_ref;
    auto* eval = app.add_subcommand("eval", "Score a candidate against a reference refactoring");
    eval->add_option("before", e_before, "before directory")->required();
    eval->add_option("candidate", e_cand, "candidate directory")->required();
    eval->add_option("reference", e_ref, "reference directory")->required();

    std::string report_dir;
    auto* replay = app.add_subcommand("replay", "Re-run a recorded session and compare the result");
    replay->add_option("report_dir", report_dir, "report directory written by refactor")->required();

    std::vector<std::string> argv_store{"refagent"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : argv_store) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (index->parsed()) {
            if (ia.rebuild && ia.store_dir.empty()) std::swap(ia.records, ia.store_dir);
            if (ia.store_dir.empty()) throw UsageError("index needs RECORDS and STORE_DIR");
            return cmd_index(ia, g, out, err);
        }
        if (refactor->parsed()) return cmd_refactor(ra, g, out, err);
        if (det->parsed()) return cmd_detect(d_before, d_after, d_expect, out);
        if (eval->parsed()) return cmd_eval(e_before, e_cand, e_ref, out);
        if (replay->parsed()) return cmd_replay(report_dir, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NoInputError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNoInput;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const ScoringError& e) {
        err << "scoring error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const PreconditionError& e) {
        err << "error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const EnvironmentError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUnavailable;
    } catch (const BackendError& e) {
        err << "backend error: " << e.what() << "\n";
        return exit_code(PipelineStatus::BackendError);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitUsage;
}

}  // namespace refagent
