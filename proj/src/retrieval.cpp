#include "refagent/retrieval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include "refagent/errors.hpp"
#include "refagent/util.hpp"

namespace refagent {

namespace fs = std::filesystem;

void to_json(Json& j, const RefactoringRecord& r) {
    Json cc = Json::array();
    for (const auto& c : r.callers_callees) cc.push_back({{"method", c.method.str()}, {"body", c.body}});
    j = Json{{"id", r.id},
             {"type", to_string(r.type)},
             {"before_code", r.before_code},
             {"after_code", r.after_code},
             {"description", r.description},
             {"callers_callees", cc},
             {"class_info",
              {{"package", r.class_info.package},
               {"class_name", r.class_info.class_name},
               {"signature", r.class_info.signature}}},
             {"provenance", {{"project", r.provenance.project}, {"commit", r.provenance.commit}}}};
}

void from_json(const Json& j, RefactoringRecord& r) {
    r.id = j.at("id").get<std::string>();
    r.type = parse_refactoring_type(j.at("type").get<std::string>());
    r.before_code = j.at("before_code").get<std::string>();
    r.after_code = j.value("after_code", "");
    r.description = j.value("description", "");
    r.callers_callees.clear();
    for (const auto& c : j.value("callers_callees", Json::array())) {
        r.callers_callees.push_back({MethodRef::parse(c.at("method").get<std::string>()), c.value("body", "")});
    }
    const Json ci = j.value("class_info", Json::object());
    r.class_info = {ci.value("package", ""), ci.value("class_name", ""), ci.value("signature", "")};
    const Json pv = j.value("provenance", Json::object());
    r.provenance = {pv.value("project", ""), pv.value("commit", "")};
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    const auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    const auto upper = [](char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; };
    const auto lower = [](char c) { return std::islower(static_cast<unsigned char>(c)) != 0; };
    const auto digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
    std::size_t i = 0;
    while (i < text.size()) {
        if (!alnum(text[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && alnum(text[j])) ++j;
        const std::string_view word = text.substr(i, j - i);
        std::string cur;
        for (std::size_t k = 0; k < word.size(); ++k) {
            const char c = word[k];
            if (k > 0 && !cur.empty()) {
                const char p = word[k - 1];
                const bool hump = (lower(p) || digit(p)) && upper(c);
                const bool acronym_end = upper(p) && upper(c) && k + 1 < word.size() && lower(word[k + 1]);
                if (hump || acronym_end) {
                    out.push_back(std::move(cur));
                    cur.clear();
                }
            }
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        if (!cur.empty()) out.push_back(std::move(cur));
        i = j;
    }
    return out;
}

std::string indexed_text(const RefactoringRecord& record) { return record.description + "\n" + record.before_code; }

std::vector<double> HashedTrigramEmbedder::counts(std::string_view text) const {
    std::vector<double> v(dimension_, 0.0);
    const auto toks = tokenize(text);
    if (toks.empty()) return v;
    std::string joined = " ";
    for (std::size_t i = 0; i < toks.size(); ++i) joined += (i ? " " : "") + toks[i];
    joined += ' ';
    for (std::size_t i = 0; i + 3 <= joined.size(); ++i) {
        v[fnv1a64(std::string_view(joined).substr(i, 3)) % dimension_] += 1.0;
    }
    return v;
}

std::vector<double> HashedTrigramEmbedder::embed(std::string_view text) const {
    auto v = counts(text);
    double norm = 0.0;
    for (const double x : v) norm += x * x;
    if (norm == 0.0) return v;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

const RefactoringRecord* IndexedCorpus::find(std::string_view id) const {
    const auto it = std::lower_bound(records.begin(), records.end(), id,
                                     [](const RefactoringRecord& r, std::string_view k) { return r.id < k; });
    return it != records.end() && it->id == id ? &*it : nullptr;
}

namespace {

void index_postings(IndexedCorpus& c) {
    c.postings.clear();
    c.doc_lengths.assign(c.records.size(), 0);
    double total = 0.0;
    for (std::uint32_t d = 0; d < c.records.size(); ++d) {
        const auto toks = tokenize(indexed_text(c.records[d]));
        std::map<std::string, std::uint32_t> tf;
        for (const auto& t : toks) ++tf[t];
        for (const auto& [t, n] : tf) c.postings[t].push_back({d, n});
        c.doc_lengths[d] = static_cast<std::uint32_t>(toks.size());
        total += static_cast<double>(toks.size());
    }
    c.avg_doc_length = c.records.empty() ? 0.0 : total / static_cast<double>(c.records.size());
}

void index_vectors(IndexedCorpus& c, const Embedder& e) {
    c.dimension = e.dimension();
    c.embedder_id = e.id();
    c.vectors.clear();
    for (const auto& r : c.records) c.vectors.push_back(e.embed(indexed_text(r)));
}

void sort_and_rank(RankedList& list, std::size_t top_k) {
    std::sort(list.begin(), list.end(), [](const RankedEntry& a, const RankedEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (list.size() > top_k) list.resize(top_k);
    for (std::size_t i = 0; i < list.size(); ++i) list[i].rank = static_cast<int>(i) + 1;
}

IndexedCorpus index_records(std::vector<RefactoringRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const RefactoringRecord& a, const RefactoringRecord& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].id.empty()) throw IndexError("record with empty id");
        if (i > 0 && records[i].id == records[i - 1].id) throw IndexError("duplicate record id '" + records[i].id + "'");
        if (records[i].description.empty()) throw IndexError("record '" + records[i].id + "' has no description");
    }
    IndexedCorpus c;
    c.records = std::move(records);
    index_postings(c);
    return c;
}

}  // namespace

IndexedCorpus build_index(std::vector<RefactoringRecord> records, const Embedder& embedder) {
    IndexedCorpus c = index_records(std::move(records));
    index_vectors(c, embedder);
    return c;
}

RankedList bm25_rank(const IndexedCorpus& corpus, std::string_view query, std::size_t top_k) {
    if (corpus.empty() || top_k == 0) return {};
    const auto toks = tokenize(query);
    const std::set<std::string> terms(toks.begin(), toks.end());
    const double n = static_cast<double>(corpus.records.size());
    std::map<std::uint32_t, double> scores;
    for (const auto& term : terms) {
        const auto it = corpus.postings.find(term);
        if (it == corpus.postings.end()) continue;
        const double df = static_cast<double>(it->second.size());
        const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        for (const auto& p : it->second) {
            const double tf = p.tf;
            const double norm = 1.0 - kBm25B + kBm25B * corpus.doc_lengths[p.doc] / corpus.avg_doc_length;
            scores[p.doc] += idf * tf * (kBm25K1 + 1.0) / (tf + kBm25K1 * norm);
        }
    }
    RankedList out;
    for (const auto& [doc, s] : scores) out.push_back({corpus.records[doc].id, s, 0});
    sort_and_rank(out, top_k);
    return out;
}

RankedList dense_rank(const IndexedCorpus& corpus, const Embedder& embedder, std::string_view query,
                      std::size_t top_k, std::vector<Diagnostic>* diagnostics) {
    if (corpus.empty() || top_k == 0) return {};
    const auto q = embedder.embed(query);
    if (std::all_of(q.begin(), q.end(), [](double x) { return x == 0.0; })) {
        if (diagnostics) diagnostics->push_back({Diagnostic::Level::Info, "", 0, "query has no embeddable content"});
        return {};
    }
    RankedList out;
    for (std::size_t d = 0; d < corpus.records.size(); ++d) {
        const auto& v = corpus.vectors[d];
        if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) continue;
        out.push_back({corpus.records[d].id, cosine(q, v), 0});
    }
    sort_and_rank(out, top_k);
    return out;
}

RankedList rrf_fuse(std::span<const RankedList> lists, int k_const) {
    std::map<std::string, double> scores;
    for (const auto& list : lists) {
        for (const auto& e : list) scores[e.id] += 1.0 / (k_const + e.rank);
    }
    RankedList out;
    for (const auto& [id, s] : scores) out.push_back({id, s, 0});
    sort_and_rank(out, out.size());
    return out;
}

std::string query_text(const RetrievalQuery& query) {
    std::string out = query.code + "\n" + query.description;
    for (const auto& c : query.callers_callees) out += "\n" + c.body;
    return out;
}

std::vector<RefactoringRecord> retrieve_similar(const IndexedCorpus& corpus, const Embedder& embedder,
                                                const RetrievalQuery& query, std::size_t n, int k_const,
                                                std::size_t depth) {
    if (corpus.empty() || n == 0) return {};
    const auto text = query_text(query);
    const std::vector<RankedList> lists{bm25_rank(corpus, text, depth), dense_rank(corpus, embedder, text, depth)};
    const auto fused = rrf_fuse(lists, k_const);
    std::vector<RefactoringRecord> out;
    for (const auto& e : fused) {
        if (out.size() >= n) break;
        out.push_back(*corpus.find(e.id));
    }
    return out;
}

std::string describe_prompt(std::string_view code, std::span<const CallerCallee> callers_callees,
                            const ClassInfo& class_info) {
    std::string out = "Code:\n" + std::string(code) + "\n";
    out += "Caller/Callee:\n";
    if (callers_callees.empty()) out += "(none)\n";
    for (const auto& c : callers_callees) out += "// " + c.method.str() + "\n" + c.body + "\n";
    out += "Class Info:\npackage " + (class_info.package.empty() ? std::string("(default)") : class_info.package) +
           "; class " + class_info.class_name + "; " + class_info.signature + "\n";
    out +=
        "Please give a short, succinct description to situate this code within the context to improve search "
        "retrieval of the code.";
    return out;
}

std::string describe_for_index(std::string_view code, std::span<const CallerCallee> callers_callees,
                               const ClassInfo& class_info, LlmBackend& llm) {
    if (code.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        throw PreconditionError("cannot describe empty code");
    }
    CompletionRequest req;
    req.messages = {ChatMessage::user(describe_prompt(code, callers_callees, class_info))};
    return llm.complete(req).content;
}

MethodContext method_context(const SourceTree& tree, const CallGraph& graph, const MethodRef& method) {
    const auto* m = tree.find_method(method);
    if (!m) throw LookupError("method " + method.str() + " not found");
    MethodContext ctx;
    ctx.code = m->text;
    if (graph.nodes.count(method)) {
        for (const auto& list : {direct_callers(graph, method), direct_callees(graph, method)}) {
            for (const auto& r : list) {
                if (const auto* other = tree.find_method(r)) ctx.callers_callees.push_back({r, other->text});
            }
        }
    }
    const auto* cls = tree.find_class(method.qualified_class);
    const auto* unit = tree.unit_of_class(method.qualified_class);
    ctx.class_info = {unit ? unit->package : "", cls ? cls->name : "", cls ? cls->signature() : ""};
    return ctx;
}

void from_json(const Json& j, RawExample& r) {
    r.id = j.at("id").get<std::string>();
    r.type = parse_refactoring_type(j.at("type").get<std::string>());
    r.before = j.at("before").get<std::map<std::string, std::string>>();
    r.after = j.at("after").get<std::map<std::string, std::string>>();
    const Json pv = j.value("provenance", Json::object());
    r.provenance = {pv.value("project", ""), pv.value("commit", "")};
    if (j.contains("description") && j["description"].is_string() && !j["description"].get<std::string>().empty()) {
        r.description = j["description"].get<std::string>();
    } else {
        r.description.reset();
    }
}

IngestOutcome ingest(std::span<const RawExample> examples, LlmBackend* llm) {
    IngestOutcome out;
    std::set<std::string> seen;
    for (const auto& ex : examples) {
        auto reject = [&](std::string reason) { out.rejected.push_back({ex.id, std::move(reason)}); };
        if (!seen.insert(ex.id).second) {
            reject("duplicate id");
            continue;
        }
        const auto before = parse_sources(ex.before);
        const auto after = parse_sources(ex.after);
        if (!before.ok() || !after.ok()) {
            const auto& f = before.ok() ? after.failures.front() : before.failures.front();
            reject("parse failure at " + f.path + ":" + std::to_string(f.line) + ": " + f.message);
            continue;
        }
        const auto instances = detect(before, after);
        const auto it = std::find_if(instances.begin(), instances.end(),
                                     [&](const RefactoringInstance& i) { return i.type == ex.type; });
        if (it == instances.end()) {
            reject("no " + std::string(to_string(ex.type)) + " detected");
            continue;
        }
        const auto verdict = purity(before, after, instances);
        if (!verdict.pure) {
            const auto& e = verdict.residual_edits.front();
            reject("impure: " + e.path + ":" + std::to_string(e.line) + " " + e.description);
            continue;
        }
        const auto graph = build_call_graph(before.units);
        const auto ctx = method_context(before, graph, it->source);

        RefactoringRecord rec;
        rec.id = ex.id;
        rec.type = ex.type;
        rec.before_code = ctx.code;
        for (const auto& t : it->targets) {
            if (const auto* m = after.find_method(t)) {
                if (!rec.after_code.empty()) rec.after_code += "\n\n";
                rec.after_code += m->text;
            }
        }
        rec.callers_callees = ctx.callers_callees;
        rec.class_info = ctx.class_info;
        rec.provenance = ex.provenance;
        if (ex.description) {
            rec.description = *ex.description;
        } else if (llm) {
            rec.description = describe_for_index(rec.before_code, rec.callers_callees, rec.class_info, *llm);
            if (rec.description.empty()) {
                reject("backend returned an empty description");
                continue;
            }
        } else {
            reject("no description and no completion backend");
            continue;
        }
        out.admitted.push_back(std::move(rec));
    }
    return out;
}

namespace {

constexpr char kMagic[8] = {'M', 'N', 'T', 'R', 'I', 'D', 'X', '1'};
constexpr std::uint32_t kFormatVersion = 1;

class BinWriter {
public:
    explicit BinWriter(const fs::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
        if (!out_) throw IoError("cannot write " + path.string());
        out_.write(kMagic, sizeof kMagic);
        u32(kFormatVersion);
    }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out_.write(reinterpret_cast<const char*>(b), 4);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out_.write(reinterpret_cast<const char*>(b), 8);
    }
    void f64(double d) {
        std::uint64_t v;
        std::memcpy(&v, &d, 8);
        u64(v);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void close() {
        out_.close();
        if (!out_) throw IoError("cannot write " + path_.string());
    }

private:
    std::ofstream out_;
    fs::path path_;
};

class BinReader {
public:
    explicit BinReader(const fs::path& path) : path_(path) {
        data_ = read_file(path);
        if (data_.size() < 12 || std::memcmp(data_.data(), kMagic, 8) != 0) fail("bad magic header");
        pos_ = 8;
        if (u32() != kFormatVersion) fail("unsupported format version");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() {
        const auto v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == data_.size(); }
    [[noreturn]] void fail(const std::string& why) const { throw IndexError(path_.string() + ": " + why); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > data_.size()) fail("truncated file");
    }
    fs::path path_;
    std::string data_;
    std::size_t pos_ = 0;
};

std::uint64_t records_digest(const std::vector<RefactoringRecord>& records) {
    std::string all;
    for (const auto& r : records) all += r.id + '\n' + indexed_text(r) + '\0';
    return fnv1a64(all);
}

void write_bins(const IndexedCorpus& c, const fs::path& dir) {
    const auto digest = records_digest(c.records);
    {
        BinWriter w(dir / "postings.bin");
        w.u64(digest);
        w.u32(static_cast<std::uint32_t>(c.records.size()));
        w.f64(c.avg_doc_length);
        for (const auto len : c.doc_lengths) w.u32(len);
        w.u32(static_cast<std::uint32_t>(c.postings.size()));
        for (const auto& [term, list] : c.postings) {
            w.str(term);
            w.u32(static_cast<std::uint32_t>(list.size()));
            for (const auto& p : list) {
                w.u32(p.doc);
                w.u32(p.tf);
            }
        }
        w.close();
    }
    BinWriter w(dir / "vectors.bin");
    w.u64(digest);
    w.str(c.embedder_id);
    w.u32(static_cast<std::uint32_t>(c.records.size()));
    w.u32(static_cast<std::uint32_t>(c.dimension));
    for (const auto& v : c.vectors) {
        for (const double x : v) w.f64(x);
    }
    w.close();
}

bool read_postings(IndexedCorpus& c, const fs::path& path, std::uint64_t digest) {
    if (!fs::exists(path)) return false;
    BinReader r(path);
    if (r.u64() != digest) return false;
    const auto n = r.u32();
    if (n != c.records.size()) return false;
    c.avg_doc_length = r.f64();
    c.doc_lengths.resize(n);
    for (auto& len : c.doc_lengths) len = r.u32();
    const auto terms = r.u32();
    c.postings.clear();
    for (std::uint32_t t = 0; t < terms; ++t) {
        auto term = r.str();
        const auto count = r.u32();
        auto& list = c.postings[std::move(term)];
        for (std::uint32_t k = 0; k < count; ++k) {
            const auto doc = r.u32();
            const auto tf = r.u32();
            if (doc >= n) r.fail("posting references document " + std::to_string(doc));
            list.push_back({doc, tf});
        }
    }
    if (!r.at_end()) r.fail("trailing bytes");
    return true;
}

bool read_vectors(IndexedCorpus& c, const fs::path& path, std::uint64_t digest, const Embedder& e) {
    if (!fs::exists(path)) return false;
    BinReader r(path);
    if (r.u64() != digest) return false;
    if (r.str() != e.id()) return false;
    const auto n = r.u32();
    const auto dim = r.u32();
    if (n != c.records.size() || dim != e.dimension()) return false;
    c.dimension = dim;
    c.embedder_id = e.id();
    c.vectors.assign(n, std::vector<double>(dim));
    for (auto& v : c.vectors) {
        for (double& x : v) x = r.f64();
    }
    if (!r.at_end()) r.fail("trailing bytes");
    return true;
}

}  // namespace

std::vector<RefactoringRecord> read_records(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<RefactoringRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(Json::parse(line).get<RefactoringRecord>());
        } catch (const Json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        } catch (const ConfigError& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
    return out;
}

void save_store(const IndexedCorpus& corpus, const fs::path& dir) {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "records.jsonl", std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + (dir / "records.jsonl").string());
        for (const auto& r : corpus.records) out << Json(r).dump() << '\n';
        if (!out) throw IoError("cannot write " + (dir / "records.jsonl").string());
    }
    write_bins(corpus, dir);
}

IndexedCorpus load_store(const fs::path& dir, const Embedder& embedder) {
    IndexedCorpus c = index_records(read_records(dir / "records.jsonl"));
    const auto digest = records_digest(c.records);
    IndexedCorpus disk;
    disk.records = c.records;
    if (read_postings(disk, dir / "postings.bin", digest) &&
        (disk.postings != c.postings || disk.doc_lengths != c.doc_lengths)) {
        throw IndexError((dir / "postings.bin").string() + ": does not match records.jsonl");
    }
    if (!read_vectors(c, dir / "vectors.bin", digest, embedder)) index_vectors(c, embedder);
    return c;
}

IndexedCorpus rebuild_store(const fs::path& dir, const Embedder& embedder) {
    IndexedCorpus c = build_index(read_records(dir / "records.jsonl"), embedder);
    write_bins(c, dir);
    return c;
}

}  // namespace refagent
