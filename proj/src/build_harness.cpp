#include "refagent/build_harness.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/file.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <regex>

#include "refagent/errors.hpp"

namespace refagent {

namespace fs = std::filesystem;

std::string_view to_string(BuildSystemKind kind) {
    switch (kind) {
        case BuildSystemKind::Maven: return "maven";
        case BuildSystemKind::Gradle: return "gradle";
        case BuildSystemKind::Command: return "command";
    }
    return "command";
}

BuildSystemKind parse_build_system_kind(std::string_view text) {
    if (text == "maven") return BuildSystemKind::Maven;
    if (text == "gradle") return BuildSystemKind::Gradle;
    if (text == "command") return BuildSystemKind::Command;
    throw ConfigError("unknown build kind '" + std::string(text) + "' (expected maven, gradle or command)");
}

nlohmann::json to_json_value(const BuildReport& r) {
    nlohmann::json errors = nlohmann::json::array();
    for (const auto& e : r.compile_errors) errors.push_back({{"path", e.path}, {"line", e.line}, {"message", e.message}});
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : r.failures) {
        failures.push_back({{"test_id", f.test_id}, {"message", f.message}, {"stack_excerpt", f.stack_excerpt}});
    }
    return {{"compiled", r.compiled},   {"tests_passed", r.tests_passed}, {"timed_out", r.timed_out},
            {"exit_code", r.exit_code}, {"compile_errors", errors},      {"failures", failures},
            {"duration", r.duration}};
}

BuildSystemKind detect_build_system(const fs::path& root) {
    if (!fs::is_directory(root)) throw PreconditionError("workspace root " + root.string() + " is not a directory");
    const bool maven = fs::exists(root / "pom.xml");
    const bool gradle = fs::exists(root / "build.gradle") || fs::exists(root / "build.gradle.kts");
    if (maven && gradle) {
        throw ConfigError("both pom.xml and a Gradle build script found in " + root.string() +
                          "; set build.kind explicitly");
    }
    if (maven) return BuildSystemKind::Maven;
    if (gradle) return BuildSystemKind::Gradle;
    return BuildSystemKind::Command;
}

BuildCommands resolve_build_commands(const fs::path& root, std::optional<BuildSystemKind> kind,
                                     const std::string& compile_cmd, const std::string& test_cmd,
                                     std::chrono::seconds timeout) {
    BuildCommands c;
    c.kind = kind ? *kind : detect_build_system(root);
    c.timeout = timeout;
    switch (c.kind) {
        case BuildSystemKind::Maven:
            c.compile_cmd = "mvn -B -q compile";
            c.test_cmd = "mvn -B test";
            break;
        case BuildSystemKind::Gradle: {
            const std::string tool = fs::exists(root / "gradlew") ? "./gradlew" : "gradle";
            c.compile_cmd = tool + " -q compileJava";
            c.test_cmd = tool + " test";
            break;
        }
        case BuildSystemKind::Command:
            if (compile_cmd.empty() || test_cmd.empty()) {
                throw ConfigError("build kind 'command' needs build.compile_cmd and build.test_cmd");
            }
            break;
    }
    if (!compile_cmd.empty()) c.compile_cmd = compile_cmd;
    if (!test_cmd.empty()) c.test_cmd = test_cmd;
    return c;
}

namespace {

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string line(text.substr(start, end - start));
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(std::move(line));
        if (end == text.size()) break;
        start = end + 1;
    }
    return out;
}

bool indented(const std::string& line) { return !line.empty() && (line[0] == ' ' || line[0] == '\t'); }

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

// Indented lines after `i`: the first becomes the message when `message` is
// empty, the rest (up to 12) the stack excerpt.
void collect_block(const std::vector<std::string>& lines, std::size_t& i, TestFailure& f) {
    std::string stack;
    int kept = 0;
    while (i + 1 < lines.size() && (indented(lines[i + 1]) || lines[i + 1].rfind("at ", 0) == 0)) {
        ++i;
        const std::string t = trim(lines[i]);
        if (f.message.empty() && t.rfind("at ", 0) != 0) {
            f.message = t;
        } else if (kept < 12) {
            stack += (stack.empty() ? "" : "\n") + t;
            ++kept;
        }
    }
    f.stack_excerpt = stack;
}

}  // namespace

ParsedLog parse_log(std::string_view raw_log, BuildSystemKind kind) {
    static const std::regex javac(R"(^\s*(\S+\.java):(\d+): error: (.*)$)");
    static const std::regex maven_err(R"(^\[ERROR\] (\S+\.java):\[(\d+),\d+\] (.*)$)");
    static const std::regex surefire(R"(^\[ERROR\] (\S+)\s+(?:Time elapsed:.*)?<<< (?:FAILURE|ERROR)!\s*$)");
    static const std::regex gradle(R"(^(\S+) > (.+) FAILED\s*$)");
    static const std::regex command(R"(^FAILED: (\S+)\s*(.*)$)");

    ParsedLog out;
    const auto lines = split_lines(raw_log);
    std::smatch m;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (std::regex_match(line, m, javac)) {
            out.compile_errors.push_back({m[1], std::stoi(m[2]), m[3]});
            continue;
        }
        if (kind == BuildSystemKind::Maven) {
            if (std::regex_match(line, m, maven_err)) {
                out.compile_errors.push_back({m[1], std::stoi(m[2]), m[3]});
                continue;
            }
            if (std::regex_match(line, m, surefire)) {
                TestFailure f{m[1], "", ""};
                if (i + 1 < lines.size() && !indented(lines[i + 1]) && lines[i + 1].rfind("[", 0) != 0 &&
                    !lines[i + 1].empty()) {
                    f.message = lines[++i];
                }
                collect_block(lines, i, f);
                out.failures.push_back(std::move(f));
                continue;
            }
        }
        if (kind == BuildSystemKind::Gradle && std::regex_match(line, m, gradle)) {
            TestFailure f{std::string(m[1]) + "." + std::string(m[2]), "", ""};
            collect_block(lines, i, f);
            out.failures.push_back(std::move(f));
            continue;
        }
        if (kind == BuildSystemKind::Command && std::regex_match(line, m, command)) {
            TestFailure f{m[1], trim(m[2]), ""};
            collect_block(lines, i, f);
            out.failures.push_back(std::move(f));
            continue;
        }
    }
    return out;
}

ProcessResult run_process(const std::string& command, const fs::path& cwd, std::chrono::seconds timeout,
                          const std::map<std::string, std::string>& env) {
    int pipefd[2];
    if (pipe(pipefd) != 0) throw IoError(std::string("pipe: ") + std::strerror(errno));
    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = fork();
    if (pid < 0) {
        close(pipefd[0]);
        close(pipefd[1]);
        throw IoError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        setpgid(0, 0);
        dup2(pipefd[1], STDOUT_FILENO);
        dup2(pipefd[1], STDERR_FILENO);
        close(pipefd[0]);
        close(pipefd[1]);
        const int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) dup2(devnull, STDIN_FILENO);
        if (chdir(cwd.c_str()) != 0) _exit(126);
        setenv("HOME", cwd.c_str(), 1);
        for (const auto& [k, v] : env) setenv(k.c_str(), v.c_str(), 1);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    setpgid(pid, pid);
    close(pipefd[1]);

    ProcessResult result;
    const auto deadline = start + timeout;
    char buf[8192];
    bool open_pipe = true;
    while (open_pipe) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            break;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        pollfd pfd{pipefd[0], POLLIN, 0};
        const int rc = poll(&pfd, 1, static_cast<int>(std::min<long long>(left, 1000)));
        if (rc < 0 && errno == EINTR) continue;
        if (rc <= 0) continue;
        const ssize_t n = read(pipefd[0], buf, sizeof buf);
        if (n > 0) {
            result.output.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0 || errno != EINTR) {
            open_pipe = false;
        }
    }
    if (result.timed_out) kill(-pid, SIGKILL);
    close(pipefd[0]);
    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (!result.timed_out) {
        // a background child may still hold the pipe; the group is done once sh exits
        kill(-pid, SIGKILL);
    }
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

WorkspaceLock::WorkspaceLock(const fs::path& workspace) {
    const auto path = workspace / std::string(kLockFileName);
    fd_ = open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open lock " + path.string() + ": " + std::strerror(errno));
    while (flock(fd_, LOCK_EX) != 0) {
        if (errno != EINTR) {
            close(fd_);
            throw IoError("cannot lock " + path.string() + ": " + std::strerror(errno));
        }
    }
}

WorkspaceLock::~WorkspaceLock() {
    if (fd_ >= 0) {
        flock(fd_, LOCK_UN);
        close(fd_);
    }
}

namespace {

ProcessResult run_step(const fs::path& workspace, const std::string& cmd, const BuildCommands& c,
                       std::string& log) {
    auto r = run_process(cmd, workspace, c.timeout);
    log += "$ " + cmd + "\n" + r.output;
    if (!log.empty() && log.back() != '\n') log += '\n';
    if (r.timed_out) log += "[timeout after " + std::to_string(c.timeout.count()) + "s]\n";
    if (!r.timed_out && r.exit_code == 127) {
        throw EnvironmentError("build tool not found while running `" + cmd + "`: " + r.output);
    }
    return r;
}

void write_log(const fs::path& workspace, const std::string& log) {
    std::ofstream out(workspace / std::string(kBuildLogName), std::ios::binary | std::ios::trunc);
    out << log;
}

BuildReport build(const fs::path& workspace, const BuildCommands& c, bool with_tests) {
    if (!fs::is_directory(workspace)) throw PreconditionError("workspace " + workspace.string() + " does not exist");
    WorkspaceLock lock(workspace);
    BuildReport report;
    std::string log;
    const auto comp = run_step(workspace, c.compile_cmd, c, log);
    report.duration = comp.seconds;
    report.exit_code = comp.exit_code;
    report.timed_out = comp.timed_out;
    report.compiled = !comp.timed_out && comp.exit_code == 0;
    auto parsed = parse_log(comp.output, c.kind);
    report.compile_errors = std::move(parsed.compile_errors);
    if (report.compiled && with_tests) {
        const auto test = run_step(workspace, c.test_cmd, c, log);
        report.duration += test.seconds;
        report.exit_code = test.exit_code;
        report.timed_out = test.timed_out;
        auto tparsed = parse_log(test.output, c.kind);
        report.failures = std::move(tparsed.failures);
        for (auto& e : tparsed.compile_errors) report.compile_errors.push_back(std::move(e));
        report.tests_passed = !test.timed_out && test.exit_code == 0 && report.failures.empty();
        if (!report.tests_passed && report.failures.empty() && !test.timed_out && report.compile_errors.empty()) {
            report.failures.push_back({"(test command)", "exited with status " + std::to_string(test.exit_code), ""});
        }
        if (test.timed_out) report.failures.push_back({"(timeout)", "test command timed out", ""});
    }
    report.raw_log = log;
    write_log(workspace, log);
    return report;
}

}  // namespace

BuildReport compile(const fs::path& workspace, const BuildCommands& commands) {
    auto r = build(workspace, commands, false);
    r.tests_passed = false;
    return r;
}

BuildReport run_tests(const fs::path& workspace, const BuildCommands& commands) {
    return build(workspace, commands, true);
}

}  // namespace refagent
