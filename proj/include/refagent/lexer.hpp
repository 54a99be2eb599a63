#pragma once

// Java-subset lexer shared by the source model, the refactoring detector and
// the metrics. Comments are skipped; every token keeps its byte range and line.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace refagent {

enum class TokenKind { Identifier, Number, String, Char, Punct };

struct Token {
    TokenKind kind;
    std::string text;
    std::size_t begin;  // byte offset of the first character
    std::size_t end;    // one past the last character
    int line;           // 1-based
    int end_line;

    bool is(std::string_view s) const { return text == s; }
    bool is_ident() const { return kind == TokenKind::Identifier; }
};

// Lexes `text`. Unterminated comments and literals run to end of input.
std::vector<Token> lex(std::string_view text, int first_line = 1);

bool is_java_keyword(std::string_view word);

// Java keywords plus the literals true/false/null.
const std::vector<std::string>& java_keywords();

}  // namespace refagent
