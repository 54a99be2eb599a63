#include "refagent/style_check.hpp"

#include <algorithm>
#include <regex>
#include <tuple>

#include "refagent/errors.hpp"

namespace refagent {

std::string StyleFinding::str() const { return path + ":" + std::to_string(line) + " " + rule_id + " " + message; }

nlohmann::json to_json_value(const StyleFinding& f) {
    return {{"rule_id", f.rule_id}, {"path", f.path}, {"line", f.line}, {"message", f.message}};
}

std::vector<std::string> rule_ids(std::string_view rule_set) {
    if (rule_set == kDefaultRuleSet) return {"R1", "R2", "R3", "R4", "R5"};
    throw ConfigError("unknown style rule set '" + std::string(rule_set) + "'");
}

namespace {

// UTF-8 code points; continuation bytes are not counted.
int code_points(std::string_view line) {
    int n = 0;
    for (const unsigned char c : line) {
        if ((c & 0xC0) != 0x80) ++n;
    }
    return n;
}

bool blank(std::string_view line) { return line.find_first_not_of(" \t\r") == std::string_view::npos; }

void check_unit(const SourceUnit& u, std::vector<StyleFinding>& out) {
    static const std::regex method_name("^[a-z][a-zA-Z0-9]*$");
    static const std::regex class_name("^[A-Z][a-zA-Z0-9]*$");

    int lineno = 0;
    bool prev_blank = false;
    std::size_t start = 0;
    while (start <= u.text.size()) {
        std::size_t end = u.text.find('\n', start);
        const bool last = end == std::string::npos;
        if (last) end = u.text.size();
        std::string_view line(u.text.data() + start, end - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++lineno;
        if (last && line.empty()) break;
        const int len = code_points(line);
        if (len > kMaxLineLength) {
            out.push_back({"R1", u.path, lineno,
                           "line has " + std::to_string(len) + " characters (max " + std::to_string(kMaxLineLength) + ")"});
        }
        const bool is_blank = blank(line);
        if (is_blank && prev_blank) out.push_back({"R4", u.path, lineno, "consecutive blank lines"});
        prev_blank = is_blank;
        if (last) break;
        start = end + 1;
    }

    for (const auto& c : u.classes) {
        if (!std::regex_match(c.name, class_name)) {
            out.push_back({"R3", u.path, c.name_line, "type name '" + c.name + "' is not UpperCamelCase"});
        }
        if (c.brace_line != 0 && c.brace_line != c.header_end_line) {
            out.push_back({"R5", u.path, c.brace_line, "opening brace of '" + c.name + "' not on declaration line"});
        }
        for (const auto& m : c.methods) {
            if (!m.is_constructor && !std::regex_match(m.name, method_name)) {
                out.push_back({"R2", u.path, m.name_line, "method name '" + m.name + "' is not lowerCamelCase"});
            }
            if (m.has_body && m.brace_line != m.header_end_line) {
                out.push_back({"R5", u.path, m.brace_line, "opening brace of '" + m.name + "' not on declaration line"});
            }
        }
    }
}

}  // namespace

std::vector<StyleFinding> check(std::span<const SourceUnit> units, std::string_view rule_set) {
    rule_ids(rule_set);
    std::vector<StyleFinding> out;
    for (const auto& u : units) check_unit(u, out);
    std::sort(out.begin(), out.end(), [](const StyleFinding& a, const StyleFinding& b) {
        return std::tie(a.path, a.line, a.rule_id, a.message) < std::tie(b.path, b.line, b.rule_id, b.message);
    });
    return out;
}

}  // namespace refagent
