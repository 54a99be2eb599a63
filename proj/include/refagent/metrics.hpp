#pragma once

/**
 * Scores for generated refactorings.
 *
 * CodeBLEU (statement variant): BLEU over lexer tokens, keyword-weighted
 * BLEU, matching of statement-subtree shapes, and matching of def-use pairs,
 * the last two computed on the statement model rather than a full AST.
 */

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "refagent/refactoring_detect.hpp"

namespace refagent {

struct CodeBleuWeights {
    double ngram = 0.25;
    double weighted_ngram = 0.25;
    double syntax = 0.25;
    double dataflow = 0.25;
};

struct CodeBleuScore {
    double ngram = 0.0;
    double weighted_ngram = 0.0;
    double syntax_match = 0.0;
    double dataflow_match = 0.0;
    double total = 0.0;
    CodeBleuWeights weights;
};

nlohmann::json to_json_value(const CodeBleuScore& score);

inline constexpr double kKeywordWeight = 5.0;

// BLEU with uniform 1..4-gram weights. A zero clipped count for order n is
// smoothed to 1 / (candidate n-grams + 1); the brevity penalty is
// exp(1 - r/c) when the candidate is not longer than the reference.
double bleu(std::span<const std::string> reference, std::span<const std::string> candidate);
// As bleu, with each n-gram weighted by the mean weight of its tokens.
double weighted_bleu(std::span<const std::string> reference, std::span<const std::string> candidate,
                     const std::set<std::string>& keywords, double keyword_weight = kKeywordWeight);

// Statement bodies of the methods in `code`. A method or bare statement list
// is accepted as well as whole compilation units.
std::vector<std::vector<Statement>> statement_bodies(std::string_view code);

// Each statement's subtree as `kind@relative-depth` items joined by spaces.
std::multiset<std::string> subtree_shapes(std::span<const std::vector<Statement>> bodies);
// `def-statement => use-statement` with the variable written as `$v` in both.
std::multiset<std::string> def_use_pairs(std::span<const std::vector<Statement>> bodies);

// Fraction of the reference multiset found in the candidate; 1 when the
// reference is empty.
double multiset_match(const std::multiset<std::string>& reference, const std::multiset<std::string>& candidate);

// `keywords` defaults to the Java keyword list. Each argument may hold
// several files; their tokens are concatenated in order. Throws ScoringError
// when either side has no tokens or the weights do not sum to 1.
CodeBleuScore code_bleu(std::span<const std::string> reference_files, std::span<const std::string> candidate_files,
                        const std::optional<std::set<std::string>>& keywords = std::nullopt,
                        const CodeBleuWeights& weights = {});
CodeBleuScore code_bleu(std::string_view reference, std::string_view candidate,
                        const std::optional<std::set<std::string>>& keywords = std::nullopt,
                        const CodeBleuWeights& weights = {});

struct AstDiffScore {
    std::size_t tp = 0;
    std::size_t tool_total = 0;
    std::size_t ref_total = 0;
    double precision = 0.0;
    double recall = 0.0;
};

nlohmann::json to_json_value(const AstDiffScore& score);

AstDiffScore ast_precision_recall(std::span<const MappingPair> tool, std::span<const MappingPair> reference);

struct OutcomeRecord {
    bool compiled_and_tested = false;
    bool detector_verified = false;
    bool successful = false;  // compiled_and_tested && detector_verified
    RefactoringType type = RefactoringType::ExtractMethod;
    std::string project;
    std::optional<double> code_bleu;
    std::optional<double> precision;
    std::optional<double> recall;

    static OutcomeRecord make(bool compiled_and_tested, bool detector_verified, RefactoringType type,
                              std::string project);
};

struct TallyRow {
    std::string label;
    std::size_t total = 0;
    std::size_t compiled_and_tested = 0;
    std::size_t detector_verified = 0;
    std::size_t successful = 0;
    // means over successful records that carry the value
    std::optional<double> code_bleu;
    std::optional<double> precision;
    std::optional<double> recall;
};

struct Tally {
    std::vector<TallyRow> by_project;  // sorted by project
    std::vector<TallyRow> by_type;     // in kAllRefactoringTypes order, types without records omitted
    TallyRow overall;
};

Tally tally(std::span<const OutcomeRecord> records);
nlohmann::json to_json_value(const Tally& tally);
// Aligned text table with columns Total, Compile&Test, Verified, Successful,
// CodeBLEU, Precision, Recall.
std::string render_table(const Tally& tally);

}  // namespace refagent
