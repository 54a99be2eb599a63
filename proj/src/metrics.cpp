#include "refagent/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "refagent/errors.hpp"
#include "refagent/lexer.hpp"

namespace refagent {

using nlohmann::json;

namespace {

using Gram = std::vector<std::string>;

std::map<Gram, int> ngram_counts(std::span<const std::string> toks, std::size_t n) {
    std::map<Gram, int> out;
    if (toks.size() < n) return out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[Gram(toks.begin() + i, toks.begin() + i + n)];
    return out;
}

double brevity_penalty(std::size_t ref_len, std::size_t cand_len) {
    if (cand_len == 0) return 0.0;
    if (cand_len > ref_len) return 1.0;
    return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
}

template <typename WeightFn>
double generic_bleu(std::span<const std::string> ref, std::span<const std::string> cand, WeightFn weight) {
    if (cand.empty()) return 0.0;
    double log_sum = 0.0;
    int orders = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        const auto cc = ngram_counts(cand, n);
        if (cc.empty()) continue;
        const auto rc = ngram_counts(ref, n);
        double matched = 0.0, total = 0.0;
        std::size_t grams = 0;
        for (const auto& [g, c] : cc) {
            const double w = weight(g);
            const auto it = rc.find(g);
            const int r = it == rc.end() ? 0 : it->second;
            matched += w * std::min(c, r);
            total += w * c;
            grams += static_cast<std::size_t>(c);
        }
        const double p = matched > 0.0 ? matched / total : 1.0 / static_cast<double>(grams + 1);
        log_sum += std::log(p);
        ++orders;
    }
    const double bp = brevity_penalty(ref.size(), cand.size());
    return std::clamp(bp * std::exp(log_sum / orders), 0.0, 1.0);
}

std::vector<std::string> token_texts(std::span<const std::string> files) {
    std::vector<std::string> out;
    for (const auto& f : files) {
        for (auto& t : lex(f)) out.push_back(std::move(t.text));
    }
    return out;
}

std::vector<std::vector<Statement>> bodies_of(const SourceUnit& u) {
    std::vector<std::vector<Statement>> out;
    for (const auto& c : u.classes) {
        for (const auto& m : c.methods) {
            if (m.has_body) out.push_back(m.body);
        }
    }
    return out;
}

const std::set<std::string> kAssignOps = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>="};

// Variable assigned by a statement, or empty.
std::string def_target(const std::vector<Token>& toks) {
    for (std::size_t i = 0; i < toks.size(); ++i) {
        const auto& t = toks[i];
        if ((t.is("++") || t.is("--"))) {
            if (i + 1 < toks.size() && toks[i + 1].is_ident() && (i == 0 || !toks[i - 1].is(".")))
                return toks[i + 1].text;
            if (i > 0 && toks[i - 1].is_ident() && (i < 2 || !toks[i - 2].is("."))) return toks[i - 1].text;
            continue;
        }
        if (kAssignOps.count(t.text) == 0) continue;
        if (i > 0 && toks[i - 1].is_ident() && !is_java_keyword(toks[i - 1].text) && (i < 2 || !toks[i - 2].is(".")))
            return toks[i - 1].text;
        return {};
    }
    return {};
}

}  // namespace

json to_json_value(const CodeBleuScore& s) {
    return {{"metric", "CodeBLEU (statement variant)"},
            {"ngram", s.ngram},
            {"weighted_ngram", s.weighted_ngram},
            {"syntax_match", s.syntax_match},
            {"dataflow_match", s.dataflow_match},
            {"total", s.total},
            {"weights",
             {{"ngram", s.weights.ngram},
              {"weighted_ngram", s.weights.weighted_ngram},
              {"syntax", s.weights.syntax},
              {"dataflow", s.weights.dataflow}}},
            {"keyword_weight", kKeywordWeight}};
}

double bleu(std::span<const std::string> reference, std::span<const std::string> candidate) {
    return generic_bleu(reference, candidate, [](const Gram&) { return 1.0; });
}

double weighted_bleu(std::span<const std::string> reference, std::span<const std::string> candidate,
                     const std::set<std::string>& keywords, double keyword_weight) {
    return generic_bleu(reference, candidate, [&](const Gram& g) {
        double sum = 0.0;
        for (const auto& t : g) sum += keywords.count(t) ? keyword_weight : 1.0;
        return sum / static_cast<double>(g.size());
    });
}

std::vector<std::vector<Statement>> statement_bodies(std::string_view code) {
    try {
        auto b = bodies_of(parse_unit("candidate.java", std::string(code)));
        if (!b.empty()) return b;
    } catch (const Error&) {
    }
    try {
        auto b = bodies_of(parse_unit("candidate.java", "class __Snippet__ {\n" + std::string(code) + "\n}\n"));
        if (!b.empty()) return b;
    } catch (const Error&) {
    }
    try {
        auto body = split_statements(code);
        if (!body.empty()) return {std::move(body)};
    } catch (const Error&) {
    }
    return {};
}

std::multiset<std::string> subtree_shapes(std::span<const std::vector<Statement>> bodies) {
    std::multiset<std::string> out;
    for (const auto& body : bodies) {
        for (std::size_t i = 0; i < body.size(); ++i) {
            const int d = body[i].depth;
            std::size_t last = i;
            if (body[i].opens_block()) {
                last = body.size() - 1;
                for (std::size_t j = i + 1; j < body.size(); ++j) {
                    if (body[j].kind == StatementKind::BlockClose && body[j].depth == d) {
                        last = j;
                        break;
                    }
                }
            }
            std::string shape;
            for (std::size_t k = i; k <= last; ++k) {
                if (!shape.empty()) shape += ' ';
                shape += std::string(to_string(body[k].kind)) + "@" + std::to_string(body[k].depth - d);
            }
            out.insert(std::move(shape));
        }
    }
    return out;
}

std::multiset<std::string> def_use_pairs(std::span<const std::vector<Statement>> bodies) {
    std::multiset<std::string> out;
    for (const auto& body : bodies) {
        std::map<std::string, std::string> defs;  // variable -> defining statement
        for (const auto& st : body) {
            const auto toks = lex(st.normalized);
            const std::string target = def_target(toks);
            std::set<std::string> used;
            for (std::size_t i = 0; i < toks.size(); ++i) {
                if (!toks[i].is_ident() || (i > 0 && toks[i - 1].is("."))) continue;
                if (toks[i].text == target && i + 1 < toks.size() && toks[i + 1].is("=")) continue;
                if (defs.count(toks[i].text)) used.insert(toks[i].text);
            }
            for (const auto& v : used) {
                const std::map<std::string, std::string> sub{{v, "$v"}};
                out.insert(substitute_identifiers(defs[v], sub) + " => " + substitute_identifiers(st.normalized, sub));
            }
            if (!target.empty()) defs[target] = st.normalized;
        }
    }
    return out;
}

double multiset_match(const std::multiset<std::string>& reference, const std::multiset<std::string>& candidate) {
    if (reference.empty()) return 1.0;
    std::size_t hit = 0;
    for (auto it = reference.begin(); it != reference.end(); it = reference.upper_bound(*it)) {
        hit += std::min(reference.count(*it), candidate.count(*it));
    }
    return static_cast<double>(hit) / static_cast<double>(reference.size());
}

CodeBleuScore code_bleu(std::span<const std::string> reference_files, std::span<const std::string> candidate_files,
                        const std::optional<std::set<std::string>>& keywords, const CodeBleuWeights& weights) {
    const double wsum = weights.ngram + weights.weighted_ngram + weights.syntax + weights.dataflow;
    if (std::abs(wsum - 1.0) > 1e-9 || weights.ngram < 0 || weights.weighted_ngram < 0 || weights.syntax < 0 ||
        weights.dataflow < 0) {
        throw ScoringError("CodeBLEU weights must be non-negative and sum to 1");
    }
    const auto ref = token_texts(reference_files);
    const auto cand = token_texts(candidate_files);
    if (ref.empty()) throw ScoringError("reference has no tokens");
    if (cand.empty()) throw ScoringError("candidate has no tokens");

    std::set<std::string> kw;
    if (keywords) {
        kw = *keywords;
    } else {
        const auto& all = java_keywords();
        kw.insert(all.begin(), all.end());
    }

    std::vector<std::vector<Statement>> ref_bodies, cand_bodies;
    for (const auto& f : reference_files) {
        for (auto& b : statement_bodies(f)) ref_bodies.push_back(std::move(b));
    }
    for (const auto& f : candidate_files) {
        for (auto& b : statement_bodies(f)) cand_bodies.push_back(std::move(b));
    }

    CodeBleuScore s;
    s.weights = weights;
    s.ngram = bleu(ref, cand);
    s.weighted_ngram = weighted_bleu(ref, cand, kw);
    s.syntax_match = multiset_match(subtree_shapes(ref_bodies), subtree_shapes(cand_bodies));
    s.dataflow_match = multiset_match(def_use_pairs(ref_bodies), def_use_pairs(cand_bodies));
    s.total = weights.ngram * s.ngram + weights.weighted_ngram * s.weighted_ngram + weights.syntax * s.syntax_match +
              weights.dataflow * s.dataflow_match;
    if (s.ngram == 1.0 && s.weighted_ngram == 1.0 && s.syntax_match == 1.0 && s.dataflow_match == 1.0) s.total = 1.0;
    s.total = std::clamp(s.total, 0.0, 1.0);
    return s;
}

CodeBleuScore code_bleu(std::string_view reference, std::string_view candidate,
                        const std::optional<std::set<std::string>>& keywords, const CodeBleuWeights& weights) {
    const std::vector<std::string> r{std::string(reference)}, c{std::string(candidate)};
    return code_bleu(r, c, keywords, weights);
}

json to_json_value(const AstDiffScore& s) {
    return {{"tp", s.tp},
            {"tool_total", s.tool_total},
            {"ref_total", s.ref_total},
            {"precision", s.precision},
            {"recall", s.recall}};
}

AstDiffScore ast_precision_recall(std::span<const MappingPair> tool, std::span<const MappingPair> reference) {
    const std::set<MappingPair> t(tool.begin(), tool.end());
    const std::set<MappingPair> r(reference.begin(), reference.end());
    AstDiffScore s;
    s.tool_total = t.size();
    s.ref_total = r.size();
    for (const auto& m : t) s.tp += r.count(m);
    s.precision = s.tool_total ? static_cast<double>(s.tp) / static_cast<double>(s.tool_total) : 0.0;
    s.recall = s.ref_total ? static_cast<double>(s.tp) / static_cast<double>(s.ref_total) : 0.0;
    return s;
}

OutcomeRecord OutcomeRecord::make(bool compiled_and_tested, bool detector_verified, RefactoringType type,
                                  std::string project) {
    OutcomeRecord r;
    r.compiled_and_tested = compiled_and_tested;
    r.detector_verified = detector_verified;
    r.successful = compiled_and_tested && detector_verified;
    r.type = type;
    r.project = std::move(project);
    return r;
}

namespace {

struct Accum {
    TallyRow row;
    double sums[3] = {0, 0, 0};
    std::size_t counts[3] = {0, 0, 0};

    void add(const OutcomeRecord& r) {
        ++row.total;
        row.compiled_and_tested += r.compiled_and_tested;
        row.detector_verified += r.detector_verified;
        row.successful += r.successful;
        if (!r.successful) return;
        const std::optional<double>* vals[3] = {&r.code_bleu, &r.precision, &r.recall};
        for (int i = 0; i < 3; ++i) {
            if (*vals[i]) {
                sums[i] += **vals[i];
                ++counts[i];
            }
        }
    }

    TallyRow finish() {
        std::optional<double>* outs[3] = {&row.code_bleu, &row.precision, &row.recall};
        for (int i = 0; i < 3; ++i) {
            if (counts[i]) *outs[i] = sums[i] / static_cast<double>(counts[i]);
        }
        return row;
    }
};

json row_json(const TallyRow& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"label", r.label},
            {"total", r.total},
            {"compiled_and_tested", r.compiled_and_tested},
            {"detector_verified", r.detector_verified},
            {"successful", r.successful},
            {"code_bleu", opt(r.code_bleu)},
            {"precision", opt(r.precision)},
            {"recall", opt(r.recall)}};
}

}  // namespace

Tally tally(std::span<const OutcomeRecord> records) {
    std::map<std::string, Accum> projects;
    std::map<RefactoringType, Accum> types;
    Accum all;
    all.row.label = "Total";
    for (const auto& r : records) {
        auto& p = projects[r.project];
        p.row.label = r.project;
        p.add(r);
        auto& t = types[r.type];
        t.row.label = std::string(to_string(r.type));
        t.add(r);
        all.add(r);
    }
    Tally out;
    for (auto& [_, a] : projects) out.by_project.push_back(a.finish());
    for (const auto t : kAllRefactoringTypes) {
        if (auto it = types.find(t); it != types.end()) out.by_type.push_back(it->second.finish());
    }
    out.overall = all.finish();
    return out;
}

json to_json_value(const Tally& t) {
    json projects = json::array(), types = json::array();
    for (const auto& r : t.by_project) projects.push_back(row_json(r));
    for (const auto& r : t.by_type) types.push_back(row_json(r));
    return {{"by_project", projects}, {"by_type", types}, {"total", row_json(t.overall)}};
}

std::string render_table(const Tally& t) {
    const std::vector<std::string> header{"", "Total", "Compile&Test", "Verified", "Successful", "CodeBLEU",
                                          "Precision", "Recall"};
    std::vector<std::vector<std::string>> rows{header};
    auto pct = [](std::size_t n, std::size_t total) {
        std::ostringstream s;
        s << n;
        if (total) s << " (" << std::fixed << std::setprecision(1) << 100.0 * n / total << "%)";
        return s.str();
    };
    auto num = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        std::ostringstream s;
        s << std::fixed << std::setprecision(3) << *v;
        return s.str();
    };
    auto add = [&](const TallyRow& r) {
        rows.push_back({r.label, std::to_string(r.total), pct(r.compiled_and_tested, r.total),
                        pct(r.detector_verified, r.total), pct(r.successful, r.total), num(r.code_bleu),
                        num(r.precision), num(r.recall)});
    };
    for (const auto& r : t.by_project) add(r);
    for (const auto& r : t.by_type) add(r);
    add(t.overall);

    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
    }
    std::ostringstream out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i == 0) {
                line += row[i] + std::string(width[i] - row[i].size(), ' ');
            } else {
                line += "  " + std::string(width[i] - row[i].size(), ' ') + row[i];
            }
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
    }
    return out.str();
}

}  // namespace refagent
