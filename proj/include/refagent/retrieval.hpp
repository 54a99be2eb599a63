#pragma once

/**
 * Contextual retrieval store: record ingestion behind the purity gate,
 * BM25 and dense cosine ranking, Reciprocal Rank Fusion, and on-disk
 * persistence.
 *
 * An IndexedCorpus is immutable once built and may be queried from many
 * threads.
 */

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refagent/llm_gateway.hpp"
#include "refagent/refactoring_detect.hpp"
#include "refagent/source_model.hpp"

namespace refagent {

struct CallerCallee {
    MethodRef method;
    std::string body;

    bool operator==(const CallerCallee&) const = default;
};

struct ClassInfo {
    std::string package;
    std::string class_name;
    std::string signature;

    bool operator==(const ClassInfo&) const = default;
};

struct Provenance {
    std::string project;
    std::string commit;

    bool operator==(const Provenance&) const = default;
};

struct RefactoringRecord {
    std::string id;
    RefactoringType type = RefactoringType::ExtractMethod;
    std::string before_code;
    std::string after_code;
    std::string description;
    std::vector<CallerCallee> callers_callees;
    ClassInfo class_info;
    Provenance provenance;

    bool operator==(const RefactoringRecord&) const = default;
};

void to_json(Json& j, const RefactoringRecord& r);
void from_json(const Json& j, RefactoringRecord& r);

// Lowercased alphanumeric runs, with camelCase humps split apart:
// `parseHTTPRequest2x` -> parse, http, request2x.
std::vector<std::string> tokenize(std::string_view text);

// Text that is indexed for a record: description, newline, before_code.
std::string indexed_text(const RefactoringRecord& record);

class Embedder {
public:
    virtual ~Embedder() = default;
    // Unit-norm vector, or all zeros when the text has nothing to embed.
    virtual std::vector<double> embed(std::string_view text) const = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::string id() const = 0;
};

// Character 3-grams of the space-joined token stream (padded with one space
// on each side), hashed with FNV-1a into `dimension` buckets.
class HashedTrigramEmbedder : public Embedder {
public:
    explicit HashedTrigramEmbedder(std::size_t dimension = 256) : dimension_(dimension) {}

    std::vector<double> embed(std::string_view text) const override;
    std::size_t dimension() const override { return dimension_; }
    std::string id() const override { return "hashed-trigram-" + std::to_string(dimension_); }

    // Raw bucket counts before normalization.
    std::vector<double> counts(std::string_view text) const;

private:
    std::size_t dimension_;
};

double cosine(std::span<const double> a, std::span<const double> b);

struct Posting {
    std::uint32_t doc = 0;  // index into IndexedCorpus::records
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

struct IndexedCorpus {
    std::vector<RefactoringRecord> records;  // sorted by id
    std::map<std::string, std::vector<Posting>> postings;
    std::vector<std::uint32_t> doc_lengths;
    double avg_doc_length = 0.0;
    std::size_t dimension = 0;
    std::string embedder_id;
    std::vector<std::vector<double>> vectors;

    bool empty() const { return records.empty(); }
    const RefactoringRecord* find(std::string_view id) const;
};

struct RankedEntry {
    std::string id;
    double score = 0.0;
    int rank = 0;

    bool operator==(const RankedEntry&) const = default;
};

using RankedList = std::vector<RankedEntry>;

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;
inline constexpr int kRrfK = 60;
inline constexpr std::size_t kFusionDepth = 50;

// Throws IndexError on duplicate ids or empty descriptions.
IndexedCorpus build_index(std::vector<RefactoringRecord> records, const Embedder& embedder);

// Documents sharing no query term are left out. Ties by id ascending.
RankedList bm25_rank(const IndexedCorpus& corpus, std::string_view query, std::size_t top_k);

// Records with zero vectors are left out; a zero query vector gives an empty
// list and, when `diagnostics` is given, an INFO entry.
RankedList dense_rank(const IndexedCorpus& corpus, const Embedder& embedder, std::string_view query,
                      std::size_t top_k, std::vector<Diagnostic>* diagnostics = nullptr);

RankedList rrf_fuse(std::span<const RankedList> lists, int k_const = kRrfK);

struct RetrievalQuery {
    std::string code;
    std::string description;
    std::vector<CallerCallee> callers_callees;
};

// code, description and caller/callee bodies joined by newlines
std::string query_text(const RetrievalQuery& query);

std::vector<RefactoringRecord> retrieve_similar(const IndexedCorpus& corpus, const Embedder& embedder,
                                                const RetrievalQuery& query, std::size_t n = 3,
                                                int k_const = kRrfK, std::size_t depth = kFusionDepth);

std::string describe_prompt(std::string_view code, std::span<const CallerCallee> callers_callees,
                            const ClassInfo& class_info);

// One completion; the reply is returned verbatim. Throws PreconditionError on
// empty code, BackendError from the backend.
std::string describe_for_index(std::string_view code, std::span<const CallerCallee> callers_callees,
                               const ClassInfo& class_info, LlmBackend& llm);

// Context of one method in a parsed tree.
struct MethodContext {
    std::string code;
    std::vector<CallerCallee> callers_callees;  // callers, then callees
    ClassInfo class_info;
};

MethodContext method_context(const SourceTree& tree, const CallGraph& graph, const MethodRef& method);

// Input example for ingestion: whole before/after file sets.
struct RawExample {
    std::string id;
    RefactoringType type = RefactoringType::ExtractMethod;
    std::map<std::string, std::string> before;
    std::map<std::string, std::string> after;
    Provenance provenance;
    std::optional<std::string> description;
};

void from_json(const Json& j, RawExample& r);

struct Rejection {
    std::string id;
    std::string reason;
};

struct IngestOutcome {
    std::vector<RefactoringRecord> admitted;
    std::vector<Rejection> rejected;
};

// Purity gate: an example is admitted only if the detector finds its declared
// type and the instances are pure. Missing descriptions are generated with
// `llm`; without a backend such examples are rejected.
IngestOutcome ingest(std::span<const RawExample> examples, LlmBackend* llm);

// records.jsonl, postings.bin, vectors.bin
void save_store(const IndexedCorpus& corpus, const std::filesystem::path& dir);
// Loads records.jsonl and the binary files; binary files that are missing,
// stale or written for another embedder are recomputed in memory.
IndexedCorpus load_store(const std::filesystem::path& dir, const Embedder& embedder);
// Regenerates postings.bin and vectors.bin from records.jsonl.
IndexedCorpus rebuild_store(const std::filesystem::path& dir, const Embedder& embedder);

// Throws IoError, ParseError (with line number).
std::vector<RefactoringRecord> read_records(const std::filesystem::path& path);

}  // namespace refagent
