#include "refagent/retrieval.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <sstream>

#include "refagent/errors.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace refagent {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;
using namespace testing;

RefactoringRecord rec(std::string id, std::string description, std::string code) {
    RefactoringRecord r;
    r.id = std::move(id);
    r.description = std::move(description);
    r.before_code = std::move(code);
    r.after_code = "after";
    return r;
}

void expect_ranked_list_valid(const RankedList& list) {
    std::set<std::string> ids;
    for (std::size_t i = 0; i < list.size(); ++i) {
        EXPECT_EQ(list[i].rank, static_cast<int>(i) + 1);
        EXPECT_TRUE(ids.insert(list[i].id).second);
        if (i > 0) {
            EXPECT_GE(list[i - 1].score, list[i].score);
            if (list[i - 1].score == list[i].score) EXPECT_LT(list[i - 1].id, list[i].id);
        }
    }
}

// description carries the text; before_code is empty so indexed text is `text\n`.
IndexedCorpus corpus_of(const std::vector<std::pair<std::string, std::string>>& docs, const Embedder& e) {
    std::vector<RefactoringRecord> records;
    for (const auto& [id, text] : docs) records.push_back(rec(id, text, ""));
    return build_index(std::move(records), e);
}

// ---- tokenizer ----

TEST(Tokenize, CamelCaseAndPunctuation) {
    EXPECT_EQ(tokenize("parseHTTPRequest2x foo_bar(Baz)"),
              (std::vector<std::string>{"parse", "http", "request2x", "foo", "bar", "baz"}));
    EXPECT_EQ(tokenize("sha256Hash"), (std::vector<std::string>{"sha256", "hash"}));
    EXPECT_TRUE(tokenize(" ;; ").empty());
}

// ---- build_index ----

TEST(BuildIndex, EmptyCorpus) {
    HashedTrigramEmbedder e;
    const auto c = build_index({}, e);
    EXPECT_TRUE(c.empty());
    EXPECT_TRUE(bm25_rank(c, "anything", 3).empty());
    EXPECT_TRUE(dense_rank(c, e, "anything", 3).empty());
    EXPECT_TRUE(retrieve_similar(c, e, {"code", "d", {}}).empty());
}

TEST(BuildIndex, DisjointVocabulariesHaveSinglePostings) {
    HashedTrigramEmbedder e;
    const auto c = build_index({rec("a", "apple", "ant"), rec("b", "banana", "bee"), rec("c", "cherry", "cat")}, e);
    EXPECT_EQ(c.postings.size(), 6u);
    for (const auto& [term, list] : c.postings) EXPECT_EQ(list.size(), 1u) << term;
    EXPECT_EQ(c.postings.at("bee")[0].doc, 1u);
    EXPECT_EQ(c.doc_lengths, (std::vector<std::uint32_t>{2, 2, 2}));
}

TEST(BuildIndex, RejectsDuplicateIdAndMissingDescription) {
    HashedTrigramEmbedder e;
    EXPECT_THROW(build_index({rec("a", "x", "y"), rec("a", "z", "w")}, e), IndexError);
    EXPECT_THROW(build_index({rec("a", "", "y")}, e), IndexError);
}

TEST(BuildIndex, VectorsAreUnitNorm) {
    HashedTrigramEmbedder e;
    std::mt19937 rng(3);
    const auto c = corpus_of(synthetic_docs(rng, 40), e);
    for (const auto& v : c.vectors) {
        double n = 0;
        for (double x : v) n += x * x;
        EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
    }
}

// ---- BM25 ----

TEST(Bm25, UniqueMatchRanksFirstAndOutOfVocabularyIsEmpty) {
    HashedTrigramEmbedder e;
    const auto c = build_index({rec("a", "apple", "ant"), rec("b", "banana", "bee"), rec("c", "cherry", "cat")}, e);
    const auto r = bm25_rank(c, "banana split", 3);
    ASSERT_EQ(r.size(), 1u);
    EXPECT_EQ(r[0].id, "b");
    EXPECT_TRUE(bm25_rank(c, "zebra quokka", 3).empty());
}

TEST(Bm25, MatchesBruteForceOracle) {
    HashedTrigramEmbedder e;
    std::mt19937 rng(11);
    for (const int size : {100, 1000}) {
        const auto docs = synthetic_docs(rng, size);
        const auto c = corpus_of(docs, e);
        for (int q = 0; q < 20; ++q) {
            const std::string query = docs[rng() % docs.size()].second + " beta unknownword";
            const auto oracle = bm25_oracle(docs, query);
            const auto got = bm25_rank(c, query, docs.size());
            expect_ranked_list_valid(got);
            ASSERT_EQ(got.size(), oracle.size());
            for (const auto& entry : got) EXPECT_NEAR(entry.score, oracle.at(entry.id), 1e-9);
        }
    }
}

// ---- embedding and dense ranking ----

TEST(Embed, DeterministicAndSelfSimilar) {
    HashedTrigramEmbedder e;
    for (const std::string t : {"int x = 1;", "computeTotal(items)", "a"}) {
        EXPECT_EQ(e.embed(t), e.embed(t));
        EXPECT_NEAR(cosine(e.embed(t), e.embed(t)), 1.0, 1e-12);
    }
    const auto zero = e.embed("  ;; ");
    EXPECT_TRUE(std::all_of(zero.begin(), zero.end(), [](double x) { return x == 0.0; }));
}

TEST(Embed, HandCountedPairSharingHalfTheirTrigrams) {
    // " abcd " -> " ab" "abc" "bcd" "cd "; " abce " -> " ab" "abc" "bce" "ce "
    HashedTrigramEmbedder e;
    std::set<std::uint64_t> buckets;
    for (const std::string g : {" ab", "abc", "bcd", "cd ", "bce", "ce "}) buckets.insert(oracle_fnv(g) % 256);
    ASSERT_EQ(buckets.size(), 6u) << "fixture needs collision-free buckets";
    EXPECT_EQ(e.counts("abcd"), trigram_counts_oracle("abcd"));
    const double c = cosine(e.embed("abcd"), e.embed("abce"));
    EXPECT_NEAR(c, 0.5, 1e-12);
    EXPECT_GT(c, 0.0);
    EXPECT_LT(c, 1.0);
}

TEST(Dense, QueryEqualToIndexedTextScoresOne) {
    HashedTrigramEmbedder e;
    const auto c = build_index({rec("a", "sum prices", "int total()"), rec("b", "log audit", "void log()")}, e);
    const auto r = dense_rank(c, e, indexed_text(c.records[1]), 2);
    ASSERT_FALSE(r.empty());
    EXPECT_EQ(r[0].id, "b");
    EXPECT_NEAR(r[0].score, 1.0, 1e-12);
}

TEST(Dense, ZeroQueryGivesEmptyListWithDiagnostic) {
    HashedTrigramEmbedder e;
    const auto c = build_index({rec("a", "x", "y")}, e);
    std::vector<Diagnostic> diags;
    EXPECT_TRUE(dense_rank(c, e, "{}", 3, &diags).empty());
    EXPECT_EQ(diags.size(), 1u);
}

TEST(Dense, OrthogonalVectorsScoreZeroOrderedById) {
    // Stub embedder with hand-set axes.
    struct Axes : Embedder {
        std::vector<double> embed(std::string_view t) const override {
            std::vector<double> v(3, 0.0);
            if (t.find("q") != std::string_view::npos) v[0] = 1;
            else if (t.find("one") != std::string_view::npos) v[1] = 1;
            else v[2] = 1;
            return v;
        }
        std::size_t dimension() const override { return 3; }
        std::string id() const override { return "axes"; }
    } axes;
    const auto c = build_index({rec("z", "one", ""), rec("m", "two", "")}, axes);
    const auto r = dense_rank(c, axes, "q", 5);
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].id, "m");
    EXPECT_EQ(r[1].id, "z");
    EXPECT_EQ(r[0].score, 0.0);
}

TEST(Dense, MatchesBruteForceCosineOracle) {
    HashedTrigramEmbedder e;
    std::mt19937 rng(5);
    const auto docs = synthetic_docs(rng, 50);
    const auto c = corpus_of(docs, e);
    for (int q = 0; q < 10; ++q) {
        const std::string query = docs[rng() % docs.size()].second + " tau";
        const auto qv = trigram_counts_oracle(query);
        const auto got = dense_rank(c, e, query, docs.size());
        expect_ranked_list_valid(got);
        ASSERT_EQ(got.size(), docs.size());
        std::map<std::string, double> oracle;
        for (const auto& [id, text] : docs) oracle[id] = cosine_oracle(qv, trigram_counts_oracle(text));
        for (const auto& entry : got) EXPECT_NEAR(entry.score, oracle.at(entry.id), 1e-9);
    }
}

// ---- fusion ----

RankedList ranked(std::vector<std::string> ids) {
    RankedList out;
    for (std::size_t i = 0; i < ids.size(); ++i) out.push_back({ids[i], 10.0 - static_cast<double>(i), static_cast<int>(i) + 1});
    return out;
}

TEST(Rrf, SingleListKeepsOrder) {
    const std::vector<RankedList> lists{ranked({"c", "a", "b"})};
    const auto f = rrf_fuse(lists, 60);
    ASSERT_EQ(f.size(), 3u);
    EXPECT_EQ(f[0].id, "c");
    EXPECT_EQ(f[1].id, "a");
    EXPECT_EQ(f[2].id, "b");
}

TEST(Rrf, HandEvaluatedScores) {
    const std::vector<RankedList> lists{ranked({"d", "x", "y"}), ranked({"p", "q", "d"})};
    const auto f = rrf_fuse(lists, 60);
    const auto it = std::find_if(f.begin(), f.end(), [](const RankedEntry& e) { return e.id == "d"; });
    ASSERT_NE(it, f.end());
    EXPECT_NEAR(it->score, 1.0 / 61 + 1.0 / 63, 1e-15);

    // d only in A at rank 2; e in both at rank 5: 1/62 < 2/65
    const std::vector<RankedList> second{ranked({"a1", "d", "a3", "a4", "e"}), ranked({"b1", "b2", "b3", "b4", "e"})};
    const auto g = rrf_fuse(second, 60);
    const auto pos = [&](const std::string& id) {
        return std::find_if(g.begin(), g.end(), [&](const RankedEntry& x) { return x.id == id; }) - g.begin();
    };
    EXPECT_LT(pos("e"), pos("d"));
    EXPECT_NEAR(g[pos("e")].score, 2.0 / 65, 1e-15);
    EXPECT_NEAR(g[pos("d")].score, 1.0 / 62, 1e-15);
}

TEST(Rrf, DependsOnlyOnRanks) {
    std::mt19937 rng(9);
    for (int round = 0; round < 50; ++round) {
        std::vector<RankedList> lists;
        for (int l = 0; l < 3; ++l) {
            std::vector<std::string> ids;
            for (int i = 0; i < 8; ++i) ids.push_back("d" + std::to_string(rng() % 12));
            std::sort(ids.begin(), ids.end());
            ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
            std::shuffle(ids.begin(), ids.end(), rng);
            lists.push_back(ranked(ids));
        }
        const auto base = rrf_fuse(lists, 60);
        expect_ranked_list_valid(base);
        auto scaled = lists;
        for (auto& l : scaled) {
            for (auto& e : l) e.score *= 1000.0;
        }
        const auto after = rrf_fuse(scaled, 60);
        ASSERT_EQ(base.size(), after.size());
        for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(base[i].id, after[i].id);
    }
}

// ---- retrieve_similar ----

TEST(Retrieve, ExactCopyComesFirst) {
    HashedTrigramEmbedder e;
    auto r1 = rec("r1", "computes the order subtotal", "int subtotal() { int s = 0; for (int p : prices) s += p; return s; }");
    auto r2 = rec("r2", "logs an audit line", "void log(String who) { System.out.println(who); }");
    auto r3 = rec("r3", "formats money", "String fmt(int cents) { return cents / 100 + \".\" + cents % 100; }");
    const auto c = build_index({r1, r2, r3}, e);
    const auto out = retrieve_similar(c, e, {r2.before_code, "", {}}, 3);
    ASSERT_FALSE(out.empty());
    EXPECT_EQ(out[0].id, "r2");
}

TEST(Retrieve, NearDuplicateInTopThreeAgainstBruteForceFusion) {
    HashedTrigramEmbedder e;
    std::mt19937 rng(21);
    auto docs = synthetic_docs(rng, 9);
    const std::string target = "omega sigma kappa lambda zeta rho tau";
    docs.emplace_back("r9999", target + " eta");
    const auto c = corpus_of(docs, e);
    const RetrievalQuery q{target, "", {}};
    const auto out = retrieve_similar(c, e, q, 3);
    ASSERT_EQ(out.size(), 3u);

    // brute-force fusion from the oracles
    const auto text = query_text(q);
    const auto bm = bm25_oracle(docs, text);
    std::vector<std::pair<double, std::string>> bm_sorted, dn_sorted;
    for (const auto& [id, s] : bm) bm_sorted.emplace_back(-s, id);
    const auto qv = trigram_counts_oracle(target);
    for (const auto& [id, t] : docs) dn_sorted.emplace_back(-cosine_oracle(qv, trigram_counts_oracle(t)), id);
    std::sort(bm_sorted.begin(), bm_sorted.end());
    std::sort(dn_sorted.begin(), dn_sorted.end());
    std::map<std::string, double> fused;
    for (std::size_t i = 0; i < bm_sorted.size(); ++i) fused[bm_sorted[i].second] += 1.0 / (60 + i + 1);
    for (std::size_t i = 0; i < dn_sorted.size(); ++i) fused[dn_sorted[i].second] += 1.0 / (60 + i + 1);
    std::vector<std::pair<double, std::string>> top;
    for (const auto& [id, s] : fused) top.emplace_back(-s, id);
    std::sort(top.begin(), top.end());
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(out[i].id, top[i].second);
    EXPECT_TRUE(std::any_of(out.begin(), out.end(), [](const RefactoringRecord& r) { return r.id == "r9999"; }));
}

// ---- descriptions and ingestion ----

TEST(Describe, ReturnsBackendReplyVerbatim) {
    ScriptedBackend llm(std::vector<CompletionResponse>{{"summary S", {}}});
    EXPECT_EQ(describe_for_index("int f() { return 1; }", {}, {"p", "A", "class A"}, llm), "summary S");
    EXPECT_THROW(describe_for_index("  ", {}, {}, llm), PreconditionError);
    const auto prompt = describe_prompt("CODE", {}, {"p", "A", "class A"});
    EXPECT_EQ(prompt.rfind("CODE"), 6u);
    EXPECT_NE(prompt.find("Please give a short, succinct description to situate this code within the context to "
                          "improve search retrieval of the code."),
              std::string::npos);
}

std::map<std::string, std::string> fixture_side(const std::string& name, const std::string& side) {
    std::map<std::string, std::string> files;
    const fs::path root = testing::fixture_path("detect/" + name + "/" + side);
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
    }
    return files;
}

RawExample example(const std::string& fixture, RefactoringType type, std::string id) {
    RawExample ex;
    ex.id = std::move(id);
    ex.type = type;
    ex.before = fixture_side(fixture, "before");
    ex.after = fixture_side(fixture, "after");
    ex.provenance = {"shop", "abc123"};
    return ex;
}

TEST(Ingest, PurityGateAndDescriptions) {
    auto good = example("extract-method_1", RefactoringType::ExtractMethod, "ok");
    auto dirty = example("extract-method_1", RefactoringType::ExtractMethod, "dirty");
    auto& text = dirty.after.at("src/com/shop/Order.java");
    text.insert(text.find("String t = s.trim();"), "int injected = 1;\n        ");
    auto wrong = example("move-method_1", RefactoringType::ExtractMethod, "wrong");
    const std::vector<RawExample> all{good, dirty, wrong};

    ScriptedBackend llm(std::vector<CompletionResponse>{{"sums order prices zanzibar", {}}});
    const auto out = ingest(all, &llm);
    ASSERT_EQ(out.admitted.size(), 1u);
    ASSERT_EQ(out.rejected.size(), 2u);
    EXPECT_EQ(out.rejected[0].id, "dirty");
    EXPECT_EQ(out.rejected[0].reason.rfind("impure", 0), 0u);
    EXPECT_EQ(out.rejected[1].id, "wrong");

    const auto& r = out.admitted[0];
    EXPECT_EQ(r.description, "sums order prices zanzibar");
    EXPECT_NE(r.before_code.find("public int total(int discount)"), std::string::npos);
    EXPECT_NE(r.after_code.find("private int subtotal()"), std::string::npos);
    EXPECT_EQ(r.class_info.package, "com.shop");
    EXPECT_EQ(r.class_info.class_name, "Order");

    HashedTrigramEmbedder e;
    const auto c = build_index(out.admitted, e);
    const auto hit = bm25_rank(c, "zanzibar", 1);
    ASSERT_EQ(hit.size(), 1u);
    EXPECT_EQ(hit[0].id, "ok");

    const std::vector<RawExample> one{good};
    const auto no_llm = ingest(one, nullptr);
    EXPECT_TRUE(no_llm.admitted.empty());
}

TEST(Ingest, CallerCalleeContext) {
    const auto ex = example("move-method_1", RefactoringType::MoveMethod, "m");
    const std::vector<RawExample> one{ex};
    ScriptedBackend llm(std::vector<CompletionResponse>{{"tax", {}}});
    const auto out = ingest(one, &llm);
    ASSERT_EQ(out.admitted.size(), 1u);
    ASSERT_EQ(out.admitted[0].callers_callees.size(), 1u);
    EXPECT_EQ(out.admitted[0].callers_callees[0].method.str(), "com.shop.Invoice#gross/1");
}

// ---- store ----

TEST(Store, SaveLoadRoundTripAndMagic) {
    TempDir dir;
    HashedTrigramEmbedder e;
    std::mt19937 rng(2);
    const auto c = corpus_of(synthetic_docs(rng, 30), e);
    save_store(c, dir.path());
    for (const char* f : {"postings.bin", "vectors.bin"}) {
        const auto bytes = read_file(dir / f);
        EXPECT_EQ(bytes.substr(0, 8), "MNTRIDX1");
        EXPECT_EQ(bytes.substr(8, 4), std::string("\x01\x00\x00\x00", 4));
    }
    const auto loaded = load_store(dir.path(), e);
    EXPECT_EQ(loaded.records, c.records);
    EXPECT_EQ(loaded.postings, c.postings);
    EXPECT_EQ(loaded.vectors, c.vectors);
    EXPECT_EQ(bm25_rank(loaded, "alpha beta", 5), bm25_rank(c, "alpha beta", 5));
}

TEST(Store, RebuildIsDeterministic) {
    TempDir dir;
    HashedTrigramEmbedder e;
    std::mt19937 rng(4);
    save_store(corpus_of(synthetic_docs(rng, 12), e), dir.path());
    const auto p1 = read_file(dir / "postings.bin");
    const auto v1 = read_file(dir / "vectors.bin");
    fs::remove(dir / "postings.bin");
    fs::remove(dir / "vectors.bin");
    rebuild_store(dir.path(), e);
    EXPECT_EQ(read_file(dir / "postings.bin"), p1);
    EXPECT_EQ(read_file(dir / "vectors.bin"), v1);
}

TEST(Store, CorruptHeaderIsIndexError) {
    TempDir dir;
    HashedTrigramEmbedder e;
    save_store(build_index({rec("a", "x", "y")}, e), dir.path());
    testing::write_file(dir / "postings.bin", "NOTANIDX\x01\x00\x00\x00");
    EXPECT_THROW(load_store(dir.path(), e), IndexError);
}

TEST(Store, MalformedRecordLineIsReportedWithLine) {
    TempDir dir;
    testing::write_file(dir / "records.jsonl", Json(rec("a", "x", "y")).dump() + "\n{\"id\": 3}\n");
    try {
        read_records(dir / "records.jsonl");
        FAIL();
    } catch (const ParseError& err) {
        EXPECT_EQ(err.line(), 2);
    }
}

}  // namespace
}  // namespace refagent
