#pragma once

// Statement-level detector for six method-level refactorings, purity
// classification and the statement mappings used by the AST-diff metric.

#include <array>
#include <compare>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "refagent/source_model.hpp"

namespace refagent {

enum class RefactoringType {
    ExtractMethod,
    InlineMethod,
    MoveMethod,
    ExtractAndMoveMethod,
    MoveAndInlineMethod,
    MoveAndRenameMethod,
};

inline constexpr std::array<RefactoringType, 6> kAllRefactoringTypes = {
    RefactoringType::ExtractMethod,        RefactoringType::InlineMethod,
    RefactoringType::MoveMethod,           RefactoringType::ExtractAndMoveMethod,
    RefactoringType::MoveAndInlineMethod,  RefactoringType::MoveAndRenameMethod};

// `ExtractMethod`
std::string_view to_string(RefactoringType type);
// `extract-method`
std::string to_kebab(RefactoringType type);
// Accepts `ExtractMethod`, `extract-method` and `Extract Method`. Throws ConfigError.
RefactoringType parse_refactoring_type(std::string_view text);

bool is_move_family(RefactoringType type);

struct StatementPos {
    MethodRef method;
    int index = 0;

    auto operator<=>(const StatementPos&) const = default;
    bool operator==(const StatementPos&) const = default;
};

struct MappingPair {
    StatementPos before;
    StatementPos after;

    auto operator<=>(const MappingPair&) const = default;
    bool operator==(const MappingPair&) const = default;
};

struct RefactoringInstance {
    RefactoringType type = RefactoringType::ExtractMethod;
    MethodRef source;                // before tree
    std::vector<MethodRef> targets;  // after tree: [residual, extracted] for Extract variants
    std::vector<MappingPair> mappings;
    std::map<std::string, std::string> substitution;  // parameter name -> argument text
};

// {type, source, targets, mappings, substitution}
nlohmann::json to_json_value(const RefactoringInstance& instance);

struct ResidualEdit {
    enum class Kind { Insertion, Deletion, Modification };

    Kind kind = Kind::Modification;
    std::string path;
    int line = 0;
    std::string description;
};

std::string_view to_string(ResidualEdit::Kind kind);

struct PurityVerdict {
    bool pure = true;
    std::vector<ResidualEdit> residual_edits;
};

struct VerifyResult {
    bool verified = false;
    std::string report;
};

// Replaces whole identifiers (not member selections, not call names) of
// `text` per `substitution`.
std::string substitute_identifiers(std::string_view text, const std::map<std::string, std::string>& substitution);

// Longest common subsequence over normalized statement texts after applying
// `substitution` to the after side. Ties prefer the earliest indices.
std::vector<std::pair<int, int>> match_statements(std::span<const std::string> before,
                                                  std::span<const std::string> after,
                                                  const std::map<std::string, std::string>& substitution = {});

// Rules apply in order Extract variants, Inline variants, Move variants;
// methods consumed by an earlier rule are not reconsidered. Throws
// PreconditionError when either tree has parse failures.
std::vector<RefactoringInstance> detect(const SourceTree& before, const SourceTree& after);

VerifyResult verify(const SourceTree& before, const SourceTree& after, RefactoringType expected);

// Bijective statement mappings: instance mappings plus LCS mappings of every
// method present under the same reference in both trees.
std::vector<MappingPair> ast_diff(const SourceTree& before, const SourceTree& after);

// Throws PreconditionError when an instance does not resolve in the trees.
PurityVerdict purity(const SourceTree& before, const SourceTree& after,
                     std::span<const RefactoringInstance> instances);

}  // namespace refagent
