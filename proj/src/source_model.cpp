#include "refagent/source_model.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "refagent/errors.hpp"
#include "refagent/lexer.hpp"

namespace refagent {

namespace fs = std::filesystem;

std::string Diagnostic::str() const {
    std::string level_text = level == Level::Error ? "ERROR" : level == Level::Warning ? "WARNING" : "INFO";
    return level_text + " " + path + ":" + std::to_string(line) + " " + message;
}

std::string_view to_string(StatementKind kind) {
    switch (kind) {
        case StatementKind::Simple: return "simple";
        case StatementKind::BlockOpen: return "block-open";
        case StatementKind::BlockClose: return "block-close";
        case StatementKind::ControlHeader: return "control-header";
    }
    return "simple";
}

std::string_view to_string(ClassKind kind) {
    switch (kind) {
        case ClassKind::Class: return "class";
        case ClassKind::Interface: return "interface";
        case ClassKind::Enum: return "enum";
    }
    return "class";
}

std::string MethodRef::str() const { return qualified_class + "#" + name + "/" + std::to_string(arity); }

MethodRef MethodRef::parse(std::string_view text) {
    const auto hash = text.find('#');
    const auto slash = text.rfind('/');
    if (hash == std::string_view::npos || slash == std::string_view::npos || slash < hash) {
        throw LookupError("malformed method reference '" + std::string(text) + "' (expected Class#name/arity)");
    }
    MethodRef ref;
    ref.qualified_class = std::string(text.substr(0, hash));
    ref.name = std::string(text.substr(hash + 1, slash - hash - 1));
    try {
        ref.arity = std::stoi(std::string(text.substr(slash + 1)));
    } catch (const std::exception&) {
        throw LookupError("malformed arity in '" + std::string(text) + "'");
    }
    return ref;
}

std::string MethodDecl::signature() const {
    std::string out;
    for (const auto& m : modifiers) out += m + " ";
    if (!return_type.empty()) out += return_type + " ";
    out += name + "(";
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (i) out += ", ";
        out += params[i].type + " " + params[i].name;
    }
    out += ")";
    if (!throws_clause.empty()) out += " " + throws_clause;
    return out;
}

std::vector<std::string> MethodDecl::normalized_body() const {
    std::vector<std::string> out;
    out.reserve(body.size());
    for (const auto& s : body) out.push_back(s.normalized);
    return out;
}

std::string ClassDecl::signature() const {
    std::string out;
    for (const auto& m : modifiers) out += m + " ";
    out += std::string(to_string(kind)) + " " + name;
    if (extends) out += " extends " + *extends;
    if (!implements.empty()) {
        out += " implements ";
        for (std::size_t i = 0; i < implements.size(); ++i) {
            if (i) out += ", ";
            out += implements[i];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// normalization

std::string normalize_statement(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    bool pending_space = false;
    const std::size_t n = raw.size();
    std::size_t i = 0;

    auto flush_space = [&] {
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
    };

    while (i < n) {
        const char c = raw[i];
        if (c == '/' && i + 1 < n && raw[i + 1] == '/') {
            const auto j = raw.find('\n', i);
            i = j == std::string_view::npos ? n : j;
            pending_space = true;
            continue;
        }
        if (c == '/' && i + 1 < n && raw[i + 1] == '*') {
            const auto j = raw.find("*/", i + 2);
            i = j == std::string_view::npos ? n : j + 2;
            pending_space = true;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = true;
            ++i;
            continue;
        }
        if (c == '"' && raw.substr(i, 3) == "\"\"\"") {
            flush_space();
            const auto j = raw.find("\"\"\"", i + 3);
            const std::size_t stop = j == std::string_view::npos ? n : j + 3;
            out.append(raw.substr(i, stop - i));
            i = stop;
            continue;
        }
        if (c == '"' || c == '\'') {
            flush_space();
            // an unterminated literal runs to the end of input
            std::size_t j = i + 1;
            while (j < n && raw[j] != c) j += raw[j] == '\\' ? 2 : 1;
            const std::size_t stop = std::min(n, j + 1);
            out.append(raw.substr(i, stop - i));
            i = stop;
            continue;
        }
        if (c == ';') {
            pending_space = false;
            out.push_back(';');
            ++i;
            continue;
        }
        flush_space();
        out.push_back(c);
        ++i;
    }
    return out;
}

// ---------------------------------------------------------------------------
// bracket matching and statement splitting

namespace {

bool is_open(const Token& t) { return t.kind == TokenKind::Punct && (t.is("(") || t.is("{") || t.is("[")); }
bool is_close(const Token& t) { return t.kind == TokenKind::Punct && (t.is(")") || t.is("}") || t.is("]")); }

char closer_for(const std::string& open) { return open == "(" ? ')' : open == "{" ? '}' : ']'; }

// match[i] = index of the partner bracket, or npos for non-brackets.
std::vector<std::size_t> match_brackets(const std::vector<Token>& toks, const std::string& path) {
    std::vector<std::size_t> match(toks.size(), std::string::npos);
    std::vector<std::size_t> stack;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (is_open(toks[i])) {
            stack.push_back(i);
        } else if (is_close(toks[i])) {
            if (stack.empty()) {
                throw ParseError(path, toks[i].line, "unbalanced '" + toks[i].text + "'");
            }
            const std::size_t open = stack.back();
            if (closer_for(toks[open].text) != toks[i].text[0]) {
                throw ParseError(path, toks[open].line,
                                 "unbalanced '" + toks[open].text + "' closed by '" + toks[i].text + "' at line " +
                                     std::to_string(toks[i].line));
            }
            stack.pop_back();
            match[open] = i;
            match[i] = open;
        }
    }
    if (!stack.empty()) {
        const auto& t = toks[stack.back()];
        throw ParseError(path, t.line, "unbalanced '" + t.text + "' is never closed");
    }
    return match;
}

bool starts_expression_context(const Token& t) {
    if (t.kind == TokenKind::Identifier) {
        return t.is("return") || t.is("new") || t.is("throw") || t.is("yield");
    }
    if (t.kind != TokenKind::Punct) return false;
    if (t.is("->")) return true;
    if (t.text.back() == '=' && !t.is("==") && !t.is("!=") && !t.is("<=") && !t.is(">=")) return true;
    return false;
}

std::vector<Statement> split_token_range(std::string_view text, const std::vector<Token>& toks,
                                         const std::vector<std::size_t>& match, std::size_t first,
                                         std::size_t last) {
    std::vector<Statement> out;
    int depth = 0;
    std::size_t pending = std::string::npos;
    bool expression_context = false;

    auto emit = [&](std::size_t s, std::size_t e, StatementKind kind, int d) {
        Statement st;
        st.raw = std::string(text.substr(toks[s].begin, toks[e].end - toks[s].begin));
        st.normalized = normalize_statement(st.raw);
        st.kind = kind;
        st.depth = d;
        st.index = static_cast<int>(out.size());
        st.line = toks[s].line;
        out.push_back(std::move(st));
    };

    for (std::size_t i = first; i < last; ++i) {
        const Token& t = toks[i];
        if (t.kind == TokenKind::Punct && t.is("}")) {
            if (pending != std::string::npos) emit(pending, i - 1, StatementKind::Simple, depth);
            pending = std::string::npos;
            expression_context = false;
            --depth;
            emit(i, i, StatementKind::BlockClose, depth);
            continue;
        }
        if (pending == std::string::npos) {
            pending = i;
            expression_context = false;
        }
        if (t.kind == TokenKind::Punct && (t.is("(") || t.is("["))) {
            i = match[i];
            continue;
        }
        if (starts_expression_context(t)) expression_context = true;
        if (t.kind == TokenKind::Punct && t.is("{")) {
            if (expression_context) {
                i = match[i];
                continue;
            }
            emit(pending, i, pending == i ? StatementKind::BlockOpen : StatementKind::ControlHeader, depth);
            ++depth;
            pending = std::string::npos;
            continue;
        }
        if (t.kind == TokenKind::Punct && t.is(";")) {
            emit(pending, i, StatementKind::Simple, depth);
            pending = std::string::npos;
        }
    }
    if (pending != std::string::npos && pending < last) emit(pending, last - 1, StatementKind::Simple, depth);
    return out;
}

const std::unordered_set<std::string>& modifier_keywords() {
    static const std::unordered_set<std::string> words = {
        "public", "private", "protected", "static",    "final",    "abstract",
        "native", "default", "strictfp",  "transient", "volatile", "synchronized", "sealed", "non-sealed"};
    return words;
}

bool is_type_keyword(const Token& t) {
    return t.is_ident() && (t.is("class") || t.is("interface") || t.is("enum"));
}

// ---------------------------------------------------------------------------

class UnitParser {
public:
    UnitParser(std::string path, std::string text) : path_(std::move(path)), text_(std::move(text)) {}

    SourceUnit run() {
        toks_ = lex(text_);
        match_ = match_brackets(toks_, path_);
        unit_.path = path_;

        std::size_t i = 0;
        while (i < toks_.size()) {
            const Token& t = toks_[i];
            if (t.is_ident() && t.is("package")) {
                const std::size_t end = find_semicolon(i + 1, toks_.size());
                unit_.package = join_tokens(i + 1, end);
                i = end + 1;
            } else if (t.is_ident() && t.is("import")) {
                const std::size_t end = find_semicolon(i + 1, toks_.size());
                unit_.imports.push_back(join_tokens(i + 1, end));
                i = end + 1;
            } else if (t.is(";")) {
                ++i;
            } else {
                i = parse_type(i, toks_.size(), {});
            }
        }
        unit_.text = std::move(text_);
        return std::move(unit_);
    }

private:
    std::string path_;
    std::string text_;
    std::vector<Token> toks_;
    std::vector<std::size_t> match_;
    SourceUnit unit_;

    [[noreturn]] void fail(std::size_t i, const std::string& message) const {
        const int line = i < toks_.size() ? toks_[i].line : (toks_.empty() ? 1 : toks_.back().line);
        throw ParseError(path_, line, message);
    }

    std::size_t find_semicolon(std::size_t from, std::size_t limit) const {
        for (std::size_t i = from; i < limit; ++i) {
            if (is_open(toks_[i])) {
                i = match_[i];
                continue;
            }
            if (toks_[i].is(";")) return i;
        }
        fail(from, "expected ';'");
    }

    std::string join_tokens(std::size_t first, std::size_t last) const {
        std::string out;
        for (std::size_t i = first; i < last; ++i) {
            if (!out.empty() && toks_[i].is_ident() && toks_[i - 1].is_ident()) out += ' ';
            out += toks_[i].text;
        }
        return out;
    }

    // Normalized source slice covering tokens [first, last].
    std::string slice(std::size_t first, std::size_t last) const {
        if (first > last || last >= toks_.size()) return {};
        return normalize_statement(std::string_view(text_).substr(toks_[first].begin, toks_[last].end - toks_[first].begin));
    }

    std::string raw_slice(std::size_t first, std::size_t last) const {
        return text_.substr(toks_[first].begin, toks_[last].end - toks_[first].begin);
    }

    // Consumes annotations and modifier keywords starting at i.
    std::size_t parse_modifiers(std::size_t i, std::size_t limit, std::vector<std::string>& mods) const {
        while (i < limit) {
            const Token& t = toks_[i];
            if (t.is("@") && i + 1 < limit && toks_[i + 1].is_ident() && !toks_[i + 1].is("interface")) {
                std::size_t j = i + 2;
                while (j + 1 < limit && toks_[j].is(".") && toks_[j + 1].is_ident()) j += 2;
                if (j < limit && toks_[j].is("(")) j = match_[j] + 1;
                mods.push_back(slice(i, j - 1));
                i = j;
            } else if (t.is_ident() && modifier_keywords().count(t.text)) {
                mods.push_back(t.text);
                ++i;
            } else {
                break;
            }
        }
        return i;
    }

    std::size_t skip_angles(std::size_t i, std::size_t limit) const {
        int depth = 0;
        for (; i < limit; ++i) {
            if (toks_[i].is("<")) ++depth;
            else if (toks_[i].is(">")) {
                if (--depth == 0) return i + 1;
            } else if (is_open(toks_[i])) {
                i = match_[i];
            }
        }
        fail(i, "unterminated type parameter list");
    }

    // Parses a class/interface/enum declaration starting at i (modifiers
    // included). Returns the index after its closing brace.
    std::size_t parse_type(std::size_t i, std::size_t limit, const std::vector<std::string>& chain) {
        const std::size_t decl_start = i;
        ClassDecl cls;
        i = parse_modifiers(i, limit, cls.modifiers);
        if (i < limit && toks_[i].is("@") && i + 1 < limit && toks_[i + 1].is("interface")) ++i;
        if (i >= limit || !is_type_keyword(toks_[i])) {
            fail(std::min(i, limit - 1), "expected class, interface or enum declaration near '" +
                                             (i < limit ? toks_[i].text : std::string("<eof>")) + "'");
        }
        cls.kind = toks_[i].is("class") ? ClassKind::Class : toks_[i].is("interface") ? ClassKind::Interface
                                                                                       : ClassKind::Enum;
        ++i;
        if (i >= limit || !toks_[i].is_ident()) fail(i, "expected type name");
        cls.name = toks_[i].text;
        cls.name_line = toks_[i].line;
        ++i;
        if (i < limit && toks_[i].is("<")) i = skip_angles(i, limit);

        std::vector<std::string> chain_here = chain;
        chain_here.push_back(cls.name);
        std::string nested;
        for (std::size_t k = 0; k < chain_here.size(); ++k) nested += (k ? "." : "") + chain_here[k];
        cls.qualified_name = unit_.package.empty() ? nested : unit_.package + "." + nested;

        // extends / implements lists
        std::vector<std::string>* target = nullptr;
        std::size_t item_start = std::string::npos;
        auto flush_item = [&](std::size_t end) {
            if (item_start == std::string::npos || end <= item_start) return;
            std::string name = slice(item_start, end - 1);
            if (target == &cls.implements && cls.kind == ClassKind::Interface && !cls.extends) {
                cls.extends = name;
            } else if (target) {
                target->push_back(name);
            }
            item_start = std::string::npos;
        };
        std::vector<std::string> extends_list;
        while (i < limit && !toks_[i].is("{")) {
            const Token& t = toks_[i];
            if (t.is_ident() && (t.is("extends") || t.is("implements") || t.is("permits"))) {
                flush_item(i);
                target = t.is("extends") ? &extends_list : t.is("implements") ? &cls.implements : nullptr;
                ++i;
                continue;
            }
            if (t.is(",")) {
                flush_item(i);
                ++i;
                continue;
            }
            if (t.is("<")) {
                if (item_start == std::string::npos) item_start = i;
                i = skip_angles(i, limit);
                continue;
            }
            if (is_open(t) || t.is(";")) fail(i, "unexpected '" + t.text + "' in type header");
            if (item_start == std::string::npos) item_start = i;
            ++i;
        }
        if (i >= limit) fail(decl_start, "missing class body for '" + cls.name + "'");
        flush_item(i);
        if (!extends_list.empty()) {
            cls.extends = extends_list.front();
            cls.implements.insert(cls.implements.begin(), extends_list.begin() + 1, extends_list.end());
        }

        const std::size_t open = i;
        const std::size_t close = match_[open];
        cls.brace_line = toks_[open].line;
        cls.header_end_line = toks_[open - 1].line;
        cls.span = {toks_[decl_start].line, toks_[close].line};

        const std::size_t slot = unit_.classes.size();
        unit_.classes.push_back(cls);
        parse_body(slot, open + 1, close, chain_here);
        return close + 1;
    }

    void parse_body(std::size_t slot, std::size_t i, std::size_t close, const std::vector<std::string>& chain) {
        if (unit_.classes[slot].kind == ClassKind::Enum) {
            // enum constants run up to the first top-level ';'
            std::size_t j = i;
            while (j < close && !toks_[j].is(";")) {
                if (is_open(toks_[j])) j = match_[j];
                ++j;
            }
            i = j < close ? j + 1 : close;
        }

        while (i < close) {
            const Token& t = toks_[i];
            if (t.is(";")) {
                ++i;
                continue;
            }
            const std::size_t member_start = i;
            std::vector<std::string> mods;
            i = parse_modifiers(i, close, mods);
            if (i >= close) fail(member_start, "dangling modifiers");
            if (is_type_keyword(toks_[i]) || (toks_[i].is("@") && i + 1 < close && toks_[i + 1].is("interface"))) {
                i = parse_type(member_start, close, chain);
                continue;
            }
            if (toks_[i].is("{")) {  // initializer block
                i = match_[i] + 1;
                continue;
            }
            i = parse_member(slot, member_start, i, close, std::move(mods));
        }
    }

    std::size_t parse_member(std::size_t slot, std::size_t member_start, std::size_t i, std::size_t close,
                             std::vector<std::string> mods) {
        const std::size_t type_start = i;
        std::size_t j = i;
        for (; j < close; ++j) {
            const Token& t = toks_[j];
            if (t.is("<")) {
                j = skip_angles(j, close) - 1;
                continue;
            }
            if (t.is("[")) {
                j = match_[j];
                continue;
            }
            if (t.is("(") || t.is("=") || t.is(";") || t.is(",")) break;
            if (t.is("{")) fail(j, "unexpected '{' in member declaration");
        }
        if (j >= close) fail(member_start, "unterminated member declaration");

        if (toks_[j].is("(")) return parse_method(slot, member_start, type_start, j, close, std::move(mods));

        // field
        const std::size_t end = find_semicolon(j, close + 1);
        if (end > close) fail(member_start, "expected ';' after field");
        if (j == type_start || !toks_[j - 1].is_ident()) fail(j, "expected field name");
        const std::string decl = slice(member_start, end);
        std::vector<std::size_t> names;
        names.push_back(j - 1);
        if (toks_[j].is(",")) {
            // `int a, b;` without initializers
            for (std::size_t k = j; k < end; ++k) {
                if (toks_[k].is("=")) break;
                if (toks_[k].is(",") && k + 1 < end && toks_[k + 1].is_ident()) names.push_back(k + 1);
            }
        }
        const std::string type = j - 1 > type_start ? slice(type_start, j - 2) : std::string();
        for (const std::size_t n : names) {
            FieldDecl f;
            f.modifiers = mods;
            f.type = type;
            f.name = toks_[n].text;
            f.declaration = decl;
            f.line = toks_[n].line;
            unit_.classes[slot].fields.push_back(std::move(f));
        }
        return end + 1;
    }

    std::size_t parse_method(std::size_t slot, std::size_t member_start, std::size_t type_start,
                             std::size_t paren, std::size_t close, std::vector<std::string> mods) {
        ClassDecl& cls = unit_.classes[slot];
        if (paren == type_start || !toks_[paren - 1].is_ident()) fail(paren, "expected method name before '('");
        MethodDecl m;
        m.name = toks_[paren - 1].text;
        m.name_line = toks_[paren - 1].line;
        m.owner = cls.qualified_name;
        for (auto& mod : mods) m.modifiers.insert(std::move(mod));
        m.return_type = paren - 1 > type_start ? slice(type_start, paren - 2) : std::string();
        m.is_constructor = m.return_type.empty() && m.name == cls.name;
        if (m.return_type.empty() && !m.is_constructor) fail(paren, "missing return type for method '" + m.name + "'");

        const std::size_t rparen = match_[paren];
        parse_params(paren + 1, rparen, m);

        std::size_t k = rparen + 1;
        while (k < close && toks_[k].is("[")) k = match_[k] + 1;
        const std::size_t throws_start = k;
        while (k < close && !toks_[k].is("{") && !toks_[k].is(";")) {
            if (is_open(toks_[k])) k = match_[k];
            ++k;
        }
        if (k >= close) fail(member_start, "method '" + m.name + "' has neither body nor ';'");
        if (k > throws_start && toks_[throws_start].is("throws")) m.throws_clause = slice(throws_start, k - 1);

        std::size_t end = k;
        if (toks_[k].is("{")) {
            end = match_[k];
            m.has_body = true;
            m.brace_line = toks_[k].line;
            m.header_end_line = toks_[k - 1].line;
            m.body = split_token_range(text_, toks_, match_, k + 1, end);
        } else {
            m.header_end_line = toks_[k].line;
        }
        m.span = {toks_[member_start].line, toks_[end].line};
        m.text = raw_slice(member_start, end);

        for (const auto& other : cls.methods) {
            if (other.name != m.name || other.params.size() != m.params.size()) continue;
            bool same = true;
            for (std::size_t p = 0; p < m.params.size(); ++p) same = same && other.params[p].type == m.params[p].type;
            if (same) fail(paren - 1, "duplicate method signature '" + m.name + "' in " + cls.qualified_name);
        }
        cls.methods.push_back(std::move(m));
        return end + 1;
    }

    void parse_params(std::size_t first, std::size_t last, MethodDecl& m) {
        if (first >= last) return;
        std::size_t start = first;
        int angle = 0;
        auto add = [&](std::size_t s, std::size_t e) {
            std::vector<std::string> ignored;
            s = parse_modifiers(s, e, ignored);
            if (s >= e || !toks_[e - 1].is_ident()) fail(s < e ? s : first, "malformed parameter");
            Param p;
            p.name = toks_[e - 1].text;
            p.type = e - 1 > s ? slice(s, e - 2) : std::string();
            if (p.type.empty()) fail(s, "parameter '" + p.name + "' has no type");
            for (const auto& q : m.params) {
                if (q.name == p.name) fail(s, "duplicate parameter name '" + p.name + "'");
            }
            m.params.push_back(std::move(p));
        };
        for (std::size_t i = first; i < last; ++i) {
            const Token& t = toks_[i];
            if (t.is("<")) ++angle;
            else if (t.is(">")) --angle;
            else if (is_open(t)) i = match_[i];
            else if (t.is(",") && angle == 0) {
                add(start, i);
                start = i + 1;
            }
        }
        add(start, last);
    }
};

std::string to_generic(const fs::path& p) { return p.generic_string(); }

void insert_path(StructureEntry& root, const std::string& rel) {
    StructureEntry* node = &root;
    std::stringstream ss(rel);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '/')) {
        if (!part.empty()) parts.push_back(part);
    }
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const bool is_dir = i + 1 < parts.size();
        auto it = std::find_if(node->children.begin(), node->children.end(),
                               [&](const StructureEntry& e) { return e.name == parts[i]; });
        if (it == node->children.end()) {
            StructureEntry e;
            e.name = parts[i];
            e.is_dir = is_dir;
            node->children.push_back(std::move(e));
            it = std::prev(node->children.end());
            std::sort(node->children.begin(), node->children.end(),
                      [](const StructureEntry& a, const StructureEntry& b) { return a.name < b.name; });
            it = std::find_if(node->children.begin(), node->children.end(),
                              [&](const StructureEntry& e2) { return e2.name == parts[i]; });
        }
        node = &*it;
    }
}

void render_entry(const StructureEntry& e, int indent, std::string& out) {
    out += std::string(static_cast<std::size_t>(indent) * 2, ' ') + e.name + (e.is_dir ? "/" : "") + "\n";
    for (const auto& c : e.children) render_entry(c, indent + 1, out);
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

SourceTree assemble(std::map<std::string, std::string> files, ProjectStructure structure) {
    SourceTree tree;
    for (const auto& [path, _] : files) {
        structure.files.push_back(path);
        insert_path(structure.tree, path);
    }
    std::sort(structure.files.begin(), structure.files.end());
    for (auto& [path, text] : files) {
        if (!ends_with(path, ".java")) continue;
        try {
            tree.units.push_back(parse_unit(path, std::move(text)));
        } catch (const ParseError& e) {
            tree.failures.push_back({e.path(), e.line(), e.what()});
            tree.diagnostics.push_back({Diagnostic::Level::Error, e.path(), e.line(), e.what()});
        }
    }
    std::map<std::string, std::string> seen;
    for (const auto& u : tree.units) {
        for (const auto& c : u.classes) {
            auto [it, inserted] = seen.emplace(c.qualified_name, u.path);
            if (!inserted) {
                tree.diagnostics.push_back({Diagnostic::Level::Warning, u.path, c.name_line,
                                            "class " + c.qualified_name + " also declared in " + it->second});
            }
        }
    }
    tree.structure = std::move(structure);
    return tree;
}

}  // namespace

std::vector<Statement> split_statements(std::string_view body, int base_line) {
    const auto toks = lex(body, base_line);
    const auto match = match_brackets(toks, "<statements>");
    return split_token_range(body, toks, match, 0, toks.size());
}

SourceUnit parse_unit(std::string path, std::string text) {
    return UnitParser(std::move(path), std::move(text)).run();
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("error reading " + path.string());
    return data;
}

SourceTree parse_tree(const fs::path& root_dir) {
    std::error_code ec;
    if (!fs::is_directory(root_dir, ec)) throw IoError("not a readable directory: " + root_dir.string());
    std::map<std::string, std::string> files;
    ProjectStructure structure;
    structure.root = root_dir;
    structure.tree.name = root_dir.filename().empty() ? root_dir.parent_path().filename().string()
                                                      : root_dir.filename().string();
    structure.tree.is_dir = true;
    for (auto it = fs::recursive_directory_iterator(root_dir, ec); it != fs::recursive_directory_iterator();
         it.increment(ec)) {
        if (ec) throw IoError("cannot walk " + root_dir.string() + ": " + ec.message());
        const auto name = it->path().filename().string();
        if (it->is_directory() && !name.empty() && name[0] == '.') {
            it.disable_recursion_pending();
            continue;
        }
        if (!it->is_regular_file()) continue;
        const std::string rel = to_generic(fs::relative(it->path(), root_dir));
        files.emplace(rel, ends_with(rel, ".java") ? read_file(it->path()) : std::string());
    }
    return assemble(std::move(files), std::move(structure));
}

SourceTree parse_sources(const std::map<std::string, std::string>& files) {
    ProjectStructure structure;
    structure.tree.name = ".";
    structure.tree.is_dir = true;
    structure.inline_files = files;
    return assemble(files, std::move(structure));
}

bool ProjectStructure::contains(std::string_view path) const {
    return std::binary_search(files.begin(), files.end(), std::string(path));
}

std::string ProjectStructure::render() const {
    std::string out;
    render_entry(tree, 0, out);
    return out;
}

const MethodDecl* SourceTree::find_method(const MethodRef& ref) const {
    const ClassDecl* cls = find_class(ref.qualified_class);
    if (!cls) return nullptr;
    const MethodDecl* found = nullptr;
    for (const auto& m : cls->methods) {
        if (m.name != ref.name || static_cast<int>(m.params.size()) != ref.arity) continue;
        if (found) throw LookupError("ambiguous method reference " + ref.str());
        found = &m;
    }
    return found;
}

const ClassDecl* SourceTree::find_class(std::string_view qualified_name) const {
    for (const auto& u : units) {
        for (const auto& c : u.classes) {
            if (c.qualified_name == qualified_name) return &c;
        }
    }
    return nullptr;
}

const SourceUnit* SourceTree::unit_of_class(std::string_view qualified_name) const {
    for (const auto& u : units) {
        for (const auto& c : u.classes) {
            if (c.qualified_name == qualified_name) return &u;
        }
    }
    return nullptr;
}

const SourceUnit* SourceTree::unit(std::string_view path) const {
    for (const auto& u : units) {
        if (u.path == path) return &u;
    }
    return nullptr;
}

std::vector<const MethodDecl*> SourceTree::all_methods() const {
    std::vector<const MethodDecl*> out;
    for (const auto& u : units) {
        for (const auto& c : u.classes) {
            for (const auto& m : c.methods) out.push_back(&m);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// call graph

namespace {

const std::unordered_set<std::string>& call_prefix_keywords() {
    static const std::unordered_set<std::string> words = {"return", "throw", "else", "case", "assert", "yield"};
    return words;
}

const std::unordered_set<std::string>& non_call_keywords() {
    static const std::unordered_set<std::string> words = {
        "if", "for", "while", "switch", "catch", "synchronized", "return", "new", "this", "super",
        "try", "do", "else", "throw", "assert", "case", "instanceof", "yield"};
    return words;
}

// Splits the argument list between brackets open/close at top-level commas.
std::vector<std::string> split_args(std::string_view text, const std::vector<Token>& toks, std::size_t open,
                                    std::size_t close) {
    std::vector<std::string> out;
    if (close == open + 1) return out;
    int depth = 0;
    std::size_t arg_start = open + 1;
    auto push = [&](std::size_t last) {
        out.push_back(normalize_statement(text.substr(toks[arg_start].begin, toks[last].end - toks[arg_start].begin)));
    };
    for (std::size_t i = open + 1; i < close; ++i) {
        const Token& t = toks[i];
        if (is_open(t)) ++depth;
        else if (is_close(t)) --depth;
        else if (depth == 0 && t.is("<") && i >= open + 3 && toks[i - 1].is_ident() && toks[i - 2].is("new")) {
            int angle = 0;
            for (; i < close; ++i) {
                if (toks[i].is("<")) ++angle;
                else if (toks[i].is(">") && --angle == 0) break;
            }
        } else if (depth == 0 && t.is(",")) {
            push(i - 1);
            arg_start = i + 1;
        }
    }
    push(close - 1);
    return out;
}

}  // namespace

std::vector<CallSite> find_call_sites(std::string_view statement, int line) {
    std::vector<CallSite> out;
    const auto toks = lex(statement, line);
    std::vector<std::size_t> match;
    try {
        match = match_brackets(toks, "<call>");
    } catch (const ParseError&) {
        return out;
    }
    for (std::size_t i = 0; i + 1 < toks.size(); ++i) {
        const Token& t = toks[i];
        if (!t.is_ident() || !toks[i + 1].is("(")) continue;
        if (non_call_keywords().count(t.text)) continue;
        if (i > 0) {
            const Token& prev = toks[i - 1];
            if (prev.is("new")) continue;
            if (prev.is_ident() && !call_prefix_keywords().count(prev.text)) continue;  // declaration
        }
        CallSite cs;
        cs.name = t.text;
        const std::size_t close = match[i + 1];
        cs.args = split_args(statement, toks, i + 1, close);
        cs.arity = static_cast<int>(cs.args.size());
        cs.line = t.line;
        std::size_t first = i;
        if (i >= 2 && toks[i - 1].is(".")) {
            cs.qualifier = toks[i - 2].is_ident() ? toks[i - 2].text : "?";
            while (first >= 2 && toks[first - 1].is(".") && toks[first - 2].is_ident()) first -= 2;
        }
        cs.begin = toks[first].begin;
        cs.end = toks[close].end;
        out.push_back(std::move(cs));
    }
    return out;
}

namespace {

std::string simple_name(std::string_view qualified) {
    const auto dot = qualified.rfind('.');
    return std::string(dot == std::string_view::npos ? qualified : qualified.substr(dot + 1));
}

}  // namespace

CallGraph build_call_graph(std::span<const SourceUnit> units) {
    CallGraph g;
    // (name, arity) -> refs ; qualified class -> its methods
    std::map<std::pair<std::string, int>, std::vector<MethodRef>> by_signature;
    std::map<std::string, std::vector<std::string>> classes_by_simple_name;
    std::map<std::string, const ClassDecl*> classes;
    for (const auto& u : units) {
        for (const auto& c : u.classes) {
            classes[c.qualified_name] = &c;
            classes_by_simple_name[c.name].push_back(c.qualified_name);
            for (const auto& m : c.methods) {
                g.nodes.insert(m.ref());
                by_signature[{m.name, static_cast<int>(m.params.size())}].push_back(m.ref());
            }
        }
    }

    auto in_class = [&](const std::string& cls, const std::string& name, int arity) {
        std::vector<MethodRef> out;
        const auto it = by_signature.find({name, arity});
        if (it == by_signature.end()) return out;
        for (const auto& r : it->second) {
            if (r.qualified_class == cls) out.push_back(r);
        }
        return out;
    };

    for (const auto& u : units) {
        for (const auto& c : u.classes) {
            for (const auto& m : c.methods) {
                const MethodRef caller = m.ref();
                for (const auto& st : m.body) {
                    for (const auto& call : find_call_sites(st.raw, st.line)) {
                        std::vector<MethodRef> candidates;
                        bool resolved_scope = false;
                        std::string scope_class;
                        if (call.qualifier.empty() || call.qualifier == "this") {
                            scope_class = c.qualified_name;
                        } else if (call.qualifier == "super") {
                            if (c.extends) {
                                const auto sit = classes_by_simple_name.find(simple_name(*c.extends));
                                if (sit != classes_by_simple_name.end() && sit->second.size() == 1) {
                                    scope_class = sit->second.front();
                                }
                            }
                            if (scope_class.empty()) continue;
                            resolved_scope = true;
                        } else {
                            const auto sit = classes_by_simple_name.find(call.qualifier);
                            if (sit != classes_by_simple_name.end() && sit->second.size() == 1) {
                                scope_class = sit->second.front();
                                resolved_scope = true;
                            }
                        }
                        if (!scope_class.empty()) candidates = in_class(scope_class, call.name, call.arity);
                        if (candidates.empty() && (call.qualifier.empty() || call.qualifier == "this")) {
                            // enclosing classes of a nested class
                            std::string outer = c.qualified_name;
                            while (candidates.empty()) {
                                const auto dot = outer.rfind('.');
                                if (dot == std::string::npos) break;
                                outer = outer.substr(0, dot);
                                if (!classes.count(outer)) break;
                                candidates = in_class(outer, call.name, call.arity);
                            }
                        }
                        if (candidates.empty() && !resolved_scope) {
                            const auto it = by_signature.find({call.name, call.arity});
                            if (it != by_signature.end()) candidates = it->second;
                        }
                        if (candidates.empty()) continue;
                        if (candidates.size() > 1) {
                            g.diagnostics.push_back(
                                {Diagnostic::Level::Warning, u.path, call.line,
                                 "ambiguous call " + call.name + "/" + std::to_string(call.arity) + " in " +
                                     caller.str() + " (" + std::to_string(candidates.size()) +
                                     " candidates); edge omitted"});
                            continue;
                        }
                        g.edges.insert({caller, candidates.front()});
                    }
                }
            }
        }
    }
    return g;
}

std::vector<MethodRef> direct_callers(const CallGraph& graph, const MethodRef& method) {
    if (!graph.nodes.count(method)) throw LookupError("method not in call graph: " + method.str());
    std::vector<MethodRef> out;
    for (const auto& [from, to] : graph.edges) {
        if (to == method) out.push_back(from);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<MethodRef> direct_callees(const CallGraph& graph, const MethodRef& method) {
    if (!graph.nodes.count(method)) throw LookupError("method not in call graph: " + method.str());
    std::vector<MethodRef> out;
    for (const auto& [from, to] : graph.edges) {
        if (from == method) out.push_back(to);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::string class_content(std::span<const SourceUnit> units, std::string_view qualified_class) {
    for (const auto& u : units) {
        for (const auto& c : u.classes) {
            if (c.qualified_name != qualified_class) continue;
            std::size_t pos = 0;
            int line = 1;
            while (line < c.span.start && pos < u.text.size()) {
                const auto nl = u.text.find('\n', pos);
                if (nl == std::string::npos) break;
                pos = nl + 1;
                ++line;
            }
            std::size_t end = pos;
            while (line <= c.span.end && end < u.text.size()) {
                const auto nl = u.text.find('\n', end);
                end = nl == std::string::npos ? u.text.size() : nl + 1;
                ++line;
            }
            return u.text.substr(pos, end - pos);
        }
    }
    throw LookupError("class not found: " + std::string(qualified_class));
}

std::string file_content(const ProjectStructure& structure, std::string_view path) {
    if (!structure.contains(path)) throw LookupError("file not found: " + std::string(path));
    if (structure.root.empty()) {
        const auto it = structure.inline_files.find(std::string(path));
        if (it == structure.inline_files.end()) throw LookupError("file not found: " + std::string(path));
        return it->second;
    }
    return read_file(structure.root / fs::path(std::string(path)));
}

}  // namespace refagent
