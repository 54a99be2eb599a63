#pragma once

// Five-rule style checker.
//
//   R1  line longer than 120 characters
//   R2  method name not lowerCamelCase (constructors excluded)
//   R3  class, interface or enum name not UpperCamelCase
//   R4  blank line directly after another blank line
//   R5  opening brace of a class or method not on the declaration's last line

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "refagent/source_model.hpp"

namespace refagent {

struct StyleFinding {
    std::string rule_id;
    std::string path;
    int line = 1;
    std::string message;

    bool operator==(const StyleFinding&) const = default;
    // `path:line rule_id message`
    std::string str() const;
};

nlohmann::json to_json_value(const StyleFinding& finding);

inline constexpr std::string_view kDefaultRuleSet = "default";
inline constexpr int kMaxLineLength = 120;

// Rule ids of a registered rule set. Throws ConfigError for unknown ids.
std::vector<std::string> rule_ids(std::string_view rule_set);

// Sorted by (path, line, rule_id). Throws ConfigError for an unknown rule set.
std::vector<StyleFinding> check(std::span<const SourceUnit> units, std::string_view rule_set = kDefaultRuleSet);

}  // namespace refagent
