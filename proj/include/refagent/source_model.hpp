#pragma once

/**
 * Java-subset source model.
 *
 * Parses package/import headers, class/interface/enum declarations (nested
 * ones included), fields and methods. Method bodies are split into
 * statements on `;`, `{` and `}` with string, char and comment awareness;
 * braces that belong to expressions (lambdas, anonymous classes, array
 * initializers) stay inside the enclosing statement. Generics and
 * annotations are kept as opaque text.
 *
 * All values produced here are immutable after construction and may be
 * shared freely between threads.
 */

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace refagent {

struct Diagnostic {
    enum class Level { Info, Warning, Error };

    Level level = Level::Warning;
    std::string path;
    int line = 0;
    std::string message;

    // `LEVEL path:line message`
    std::string str() const;
};

struct LineSpan {
    int start = 0;
    int end = 0;

    bool operator==(const LineSpan&) const = default;
};

enum class StatementKind { Simple, BlockOpen, BlockClose, ControlHeader };

std::string_view to_string(StatementKind kind);

struct Statement {
    std::string raw;         // exact source slice
    std::string normalized;  // normalize_statement(raw)
    StatementKind kind = StatementKind::Simple;
    int depth = 0;
    int index = 0;
    int line = 0;

    bool opens_block() const {
        return kind == StatementKind::BlockOpen || kind == StatementKind::ControlHeader;
    }
};

struct MethodRef {
    std::string qualified_class;
    std::string name;
    int arity = 0;

    auto operator<=>(const MethodRef&) const = default;
    bool operator==(const MethodRef&) const = default;

    // `pkg.Cls#name/arity`
    std::string str() const;
    static MethodRef parse(std::string_view text);
};

struct Param {
    std::string type;
    std::string name;

    bool operator==(const Param&) const = default;
};

struct FieldDecl {
    std::vector<std::string> modifiers;
    std::string type;
    std::string name;
    std::string declaration;  // normalized text of the whole declarator statement
    int line = 0;
};

struct MethodDecl {
    std::string name;
    std::set<std::string> modifiers;
    std::string return_type;  // empty for constructors
    std::vector<Param> params;
    std::string throws_clause;
    std::vector<Statement> body;
    bool has_body = false;
    bool is_constructor = false;
    LineSpan span;
    std::string owner;  // qualified class name
    std::string text;   // declaration source from first modifier to closing brace
    int name_line = 0;
    int brace_line = 0;       // line of the opening body brace, 0 without a body
    int header_end_line = 0;  // line of the last header token before the brace

    MethodRef ref() const { return {owner, name, static_cast<int>(params.size())}; }
    // Normalized header: modifiers, return type, name and parameter list.
    std::string signature() const;
    std::vector<std::string> normalized_body() const;
};

enum class ClassKind { Class, Interface, Enum };

std::string_view to_string(ClassKind kind);

struct ClassDecl {
    std::string name;
    std::string qualified_name;
    ClassKind kind = ClassKind::Class;
    std::vector<std::string> modifiers;
    std::optional<std::string> extends;
    std::vector<std::string> implements;
    std::vector<FieldDecl> fields;
    std::vector<MethodDecl> methods;
    LineSpan span;
    int name_line = 0;
    int brace_line = 0;
    int header_end_line = 0;

    // e.g. `public class Foo extends Bar implements Baz`
    std::string signature() const;
};

struct SourceUnit {
    std::string path;  // repo-relative, forward slashes
    std::string package;
    std::vector<std::string> imports;
    std::vector<ClassDecl> classes;  // flattened, nested classes included
    std::string text;
};

struct StructureEntry {
    std::string name;
    bool is_dir = false;
    std::vector<StructureEntry> children;
};

struct ProjectStructure {
    std::filesystem::path root;       // empty for in-memory trees
    StructureEntry tree;              // root directory entry
    std::vector<std::string> files;   // every file, sorted, repo-relative
    std::map<std::string, std::string> inline_files;  // contents for in-memory trees

    bool contains(std::string_view path) const;
    // Indented directory listing used by the get_project_structure tool.
    std::string render() const;
};

struct ParseFailure {
    std::string path;
    int line = 0;
    std::string message;
};

struct SourceTree {
    std::vector<SourceUnit> units;  // sorted by path
    ProjectStructure structure;
    std::vector<ParseFailure> failures;
    std::vector<Diagnostic> diagnostics;

    bool ok() const { return failures.empty(); }

    // nullptr when absent. Throws LookupError when the ref is ambiguous.
    const MethodDecl* find_method(const MethodRef& ref) const;
    const ClassDecl* find_class(std::string_view qualified_name) const;
    const SourceUnit* unit_of_class(std::string_view qualified_name) const;
    const SourceUnit* unit(std::string_view path) const;
    std::vector<const MethodDecl*> all_methods() const;
};

// Parses one compilation unit. Throws ParseError on unbalanced braces or
// parentheses and on duplicate method signatures within a class.
SourceUnit parse_unit(std::string path, std::string text);

// Parses every `.java` file below root_dir. Files that fail to parse are
// listed in `failures` (and as diagnostics); the structure lists all files.
SourceTree parse_tree(const std::filesystem::path& root_dir);

// Same as parse_tree over in-memory files keyed by repo-relative path.
SourceTree parse_sources(const std::map<std::string, std::string>& files);

// Strips comments, collapses whitespace runs to one space, trims, and drops
// whitespace before `;`. String and char literals are left untouched.
std::string normalize_statement(std::string_view raw);

// Splits the inside of a block (without its braces) into statements.
// `base_line` is the line of the first character of `body`.
std::vector<Statement> split_statements(std::string_view body, int base_line = 1);

// One method invocation inside a statement.
struct CallSite {
    std::string qualifier;  // receiver token before `.`; empty when unqualified, `?` when not an identifier
    std::string name;
    int arity = 0;
    int line = 0;
    std::size_t begin = 0;  // byte range of receiver chain + name + argument list
    std::size_t end = 0;
    std::vector<std::string> args;  // normalized argument texts
};

// Invocations in a statement's text; declarations and `new` expressions are skipped.
std::vector<CallSite> find_call_sites(std::string_view statement, int line = 1);

struct CallGraph {
    std::set<MethodRef> nodes;
    std::set<std::pair<MethodRef, MethodRef>> edges;  // (caller, callee)
    std::vector<Diagnostic> diagnostics;
};

CallGraph build_call_graph(std::span<const SourceUnit> units);

// Sorted by qualified class, name, arity. Throws LookupError for refs that
// are not nodes of the graph.
std::vector<MethodRef> direct_callers(const CallGraph& graph, const MethodRef& method);
std::vector<MethodRef> direct_callees(const CallGraph& graph, const MethodRef& method);

// Full source lines of the class's span. Throws LookupError.
std::string class_content(std::span<const SourceUnit> units, std::string_view qualified_class);

// Byte-exact file text. Throws LookupError when the path is not in the tree.
std::string file_content(const ProjectStructure& structure, std::string_view path);

// Reads a whole file. Throws IoError.
std::string read_file(const std::filesystem::path& path);

}  // namespace refagent
