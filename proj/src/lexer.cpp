#include "refagent/lexer.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace refagent {

namespace {

bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$' ||
           static_cast<unsigned char>(c) >= 0x80;
}

bool ident_part(char c) { return ident_start(c) || std::isdigit(static_cast<unsigned char>(c)); }

// No `>>`: nested generic closers lex as separate `>` tokens.
constexpr std::array<std::string_view, 21> kMultiPunct = {
    "<<=", "...", "->", "::", "++", "--", "&&", "||", "==", "!=", "<=",
    ">=",  "+=",  "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<"};

}  // namespace

const std::vector<std::string>& java_keywords() {
    static const std::vector<std::string> words = {
        "abstract", "assert",     "boolean",   "break",      "byte",      "case",
        "catch",    "char",       "class",     "const",      "continue",  "default",
        "do",       "double",     "else",      "enum",       "extends",   "final",
        "finally",  "float",      "for",       "goto",       "if",        "implements",
        "import",   "instanceof", "int",       "interface",  "long",      "native",
        "new",      "package",    "private",   "protected",  "public",    "return",
        "short",    "static",     "strictfp",  "super",      "switch",    "synchronized",
        "this",     "throw",      "throws",    "transient",  "try",       "void",
        "volatile", "while",      "true",      "false",      "null",      "var"};
    return words;
}

bool is_java_keyword(std::string_view word) {
    const auto& words = java_keywords();
    return std::find(words.begin(), words.end(), word) != words.end();
}

std::vector<Token> lex(std::string_view text, int first_line) {
    std::vector<Token> out;
    std::size_t i = 0;
    int line = first_line;
    const std::size_t n = text.size();

    auto advance_to = [&](std::size_t j) {
        for (; i < j && i < n; ++i) {
            if (text[i] == '\n') ++line;
        }
    };

    while (i < n) {
        const char c = text[i];
        if (c == '\n' || std::isspace(static_cast<unsigned char>(c))) {
            advance_to(i + 1);
            continue;
        }
        if (c == '/' && i + 1 < n && text[i + 1] == '/') {
            std::size_t j = text.find('\n', i);
            advance_to(j == std::string_view::npos ? n : j);
            continue;
        }
        if (c == '/' && i + 1 < n && text[i + 1] == '*') {
            std::size_t j = text.find("*/", i + 2);
            advance_to(j == std::string_view::npos ? n : j + 2);
            continue;
        }

        const std::size_t begin = i;
        const int begin_line = line;
        TokenKind kind = TokenKind::Punct;

        if (c == '"' && text.substr(i, 3) == "\"\"\"") {
            kind = TokenKind::String;
            std::size_t j = text.find("\"\"\"", i + 3);
            advance_to(j == std::string_view::npos ? n : j + 3);
        } else if (c == '"' || c == '\'') {
            kind = c == '"' ? TokenKind::String : TokenKind::Char;
            std::size_t j = i + 1;
            while (j < n && text[j] != c && text[j] != '\n') {
                j += text[j] == '\\' ? 2 : 1;
            }
            advance_to(std::min(n, j < n && text[j] == c ? j + 1 : j));
        } else if (ident_start(c)) {
            kind = TokenKind::Identifier;
            std::size_t j = i;
            while (j < n && ident_part(text[j])) ++j;
            advance_to(j);
        } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                   (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(text[i + 1])))) {
            kind = TokenKind::Number;
            std::size_t j = i;
            while (j < n && (ident_part(text[j]) || text[j] == '.')) ++j;
            advance_to(j);
        } else {
            std::size_t len = 1;
            for (auto p : kMultiPunct) {
                if (text.substr(i, p.size()) == p) {
                    len = p.size();
                    break;
                }
            }
            advance_to(i + len);
        }
        out.push_back(Token{kind, std::string(text.substr(begin, i - begin)), begin, i, begin_line, line});
    }
    return out;
}

}  // namespace refagent
