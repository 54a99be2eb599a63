#include "refagent/refactoring_detect.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>

#include "refagent/errors.hpp"
#include "refagent/lexer.hpp"

namespace refagent {

std::string_view to_string(RefactoringType type) {
    switch (type) {
        case RefactoringType::ExtractMethod: return "ExtractMethod";
        case RefactoringType::InlineMethod: return "InlineMethod";
        case RefactoringType::MoveMethod: return "MoveMethod";
        case RefactoringType::ExtractAndMoveMethod: return "ExtractAndMoveMethod";
        case RefactoringType::MoveAndInlineMethod: return "MoveAndInlineMethod";
        case RefactoringType::MoveAndRenameMethod: return "MoveAndRenameMethod";
    }
    return "ExtractMethod";
}

std::string to_kebab(RefactoringType type) {
    std::string out;
    for (const char c : to_string(type)) {
        if (std::isupper(static_cast<unsigned char>(c)) && !out.empty()) out += '-';
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

RefactoringType parse_refactoring_type(std::string_view text) {
    std::string key;
    for (const char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    for (const auto t : kAllRefactoringTypes) {
        std::string name;
        for (const char c : to_string(t)) name += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (name == key) return t;
    }
    throw ConfigError("unknown refactoring type '" + std::string(text) + "'");
}

bool is_move_family(RefactoringType type) {
    return type == RefactoringType::MoveMethod || type == RefactoringType::ExtractAndMoveMethod ||
           type == RefactoringType::MoveAndInlineMethod || type == RefactoringType::MoveAndRenameMethod;
}

std::string_view to_string(ResidualEdit::Kind kind) {
    switch (kind) {
        case ResidualEdit::Kind::Insertion: return "insertion";
        case ResidualEdit::Kind::Deletion: return "deletion";
        case ResidualEdit::Kind::Modification: return "modification";
    }
    return "modification";
}

std::string substitute_identifiers(std::string_view text, const std::map<std::string, std::string>& substitution) {
    if (substitution.empty()) return std::string(text);
    const auto toks = lex(text);
    std::string out;
    std::size_t copied = 0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        const Token& t = toks[i];
        if (!t.is_ident()) continue;
        const auto it = substitution.find(t.text);
        if (it == substitution.end()) continue;
        if (i > 0 && toks[i - 1].is(".")) continue;
        if (i + 1 < toks.size() && toks[i + 1].is("(")) continue;
        out.append(text.substr(copied, t.begin - copied));
        out += it->second;
        copied = t.end;
    }
    out.append(text.substr(copied));
    return out;
}

std::vector<std::pair<int, int>> match_statements(std::span<const std::string> before,
                                                  std::span<const std::string> after,
                                                  const std::map<std::string, std::string>& substitution) {
    std::vector<std::string> rewritten;
    rewritten.reserve(after.size());
    for (const auto& s : after) rewritten.push_back(substitute_identifiers(s, substitution));

    const std::size_t n = before.size();
    const std::size_t m = rewritten.size();
    // suffix LCS lengths
    std::vector<std::vector<int>> lcs(n + 1, std::vector<int>(m + 1, 0));
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = m; j-- > 0;) {
            lcs[i][j] = before[i] == rewritten[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
        }
    }
    std::vector<std::pair<int, int>> out;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < n && j < m) {
        if (before[i] == rewritten[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1) {
            out.emplace_back(static_cast<int>(i), static_cast<int>(j));
            ++i;
            ++j;
        } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
            ++i;
        } else {
            ++j;
        }
    }
    return out;
}

namespace {

using Body = std::vector<std::string>;

struct IndexedMethod {
    const MethodDecl* decl = nullptr;
    std::string path;
    Body body;
};

using MethodIndex = std::map<MethodRef, IndexedMethod>;

MethodIndex index_methods(const SourceTree& tree) {
    MethodIndex out;
    std::set<MethodRef> ambiguous;
    for (const auto& u : tree.units) {
        for (const auto& c : u.classes) {
            for (const auto& m : c.methods) {
                const auto ref = m.ref();
                if (out.count(ref)) {
                    ambiguous.insert(ref);
                    continue;
                }
                out[ref] = IndexedMethod{&m, u.path, m.normalized_body()};
            }
        }
    }
    for (const auto& r : ambiguous) out.erase(r);
    return out;
}

void require_parsed(const SourceTree& tree, const char* which) {
    if (!tree.ok()) {
        const auto& f = tree.failures.front();
        throw PreconditionError(std::string(which) + " tree has parse failures (first: " + f.path + ":" +
                                std::to_string(f.line) + " " + f.message + ")");
    }
}

struct CallLoc {
    std::size_t stmt = 0;
    CallSite site;
};

std::vector<CallLoc> calls_to(const Body& body, const std::string& name, int arity) {
    std::vector<CallLoc> out;
    for (std::size_t i = 0; i < body.size(); ++i) {
        for (auto& cs : find_call_sites(body[i])) {
            if (cs.name == name && cs.arity == arity) out.push_back({i, std::move(cs)});
        }
    }
    return out;
}

std::map<std::string, std::string> make_substitution(const MethodDecl& callee, const CallSite& site) {
    std::map<std::string, std::string> out;
    for (std::size_t i = 0; i < callee.params.size() && i < site.args.size(); ++i) {
        if (callee.params[i].name != site.args[i]) out[callee.params[i].name] = site.args[i];
    }
    return out;
}

// `v = v;` or `T v = v;`
bool is_self_assignment(const std::string& stmt) {
    const auto toks = lex(stmt);
    const std::size_t n = toks.size();
    if (n < 4 || !toks[n - 1].is(";") || !toks[n - 3].is("=") || !toks[n - 2].is_ident() || !toks[n - 4].is_ident()) {
        return false;
    }
    if (n >= 5 && toks[n - 5].is(".")) return false;
    return toks[n - 2].text == toks[n - 4].text;
}

// Callee body with parameters replaced by the call's arguments; a trailing
// `return X;` takes the place of the call expression inside the call statement.
Body fold_into_call(const MethodDecl& callee, const std::string& call_stmt, const CallSite& site,
                    const std::map<std::string, std::string>& substitution) {
    Body out;
    for (const auto& s : callee.body) out.push_back(substitute_identifiers(s.normalized, substitution));
    if (out.empty()) return out;
    std::string& last = out.back();
    const std::string prefix = call_stmt.substr(0, site.begin);
    const std::string suffix = call_stmt.substr(site.end);
    if (last.rfind("return ", 0) == 0 && last.size() > 8 && last.back() == ';' && !(prefix.empty() && suffix == ";")) {
        const std::string value = last.substr(7, last.size() - 8);
        last = prefix + value + suffix;
        if (is_self_assignment(last)) out.pop_back();
    }
    return out;
}

template <class T>
std::vector<T> concat(std::vector<T> a, const std::vector<T>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

// Maps `before` onto `after` where `after` differs only in the segment
// [after_at, after_at + after_len) replacing [before_at, before_at + before_len).
void map_around(std::vector<MappingPair>& out, const MethodRef& before_ref, const Body& before,
                std::size_t before_at, std::size_t before_len, const MethodRef& after_ref, const Body& after,
                std::size_t after_at, std::size_t after_len) {
    Body b_rest(before.begin(), before.begin() + static_cast<long>(before_at));
    b_rest.insert(b_rest.end(), before.begin() + static_cast<long>(before_at + before_len), before.end());
    Body a_rest(after.begin(), after.begin() + static_cast<long>(after_at));
    a_rest.insert(a_rest.end(), after.begin() + static_cast<long>(after_at + after_len), after.end());
    for (const auto& [i, j] : match_statements(b_rest, a_rest)) {
        const int bi = i < static_cast<int>(before_at) ? i : i + static_cast<int>(before_len);
        const int aj = j < static_cast<int>(after_at) ? j : j + static_cast<int>(after_len);
        out.push_back({{before_ref, bi}, {after_ref, aj}});
    }
}

void map_segment(std::vector<MappingPair>& out, const MethodRef& before_ref, std::span<const std::string> before,
                 int before_offset, const MethodRef& after_ref, std::span<const std::string> after,
                 int after_offset) {
    for (const auto& [i, j] : match_statements(before, after)) {
        out.push_back({{before_ref, before_offset + i}, {after_ref, after_offset + j}});
    }
}

struct Detection {
    std::vector<RefactoringInstance> instances;
};

Detection run_detection(const MethodIndex& bi, const MethodIndex& ai) {
    std::vector<MethodRef> removed, added, changed;
    for (const auto& [ref, m] : bi) {
        const auto it = ai.find(ref);
        if (it == ai.end()) removed.push_back(ref);
        else if (it->second.body != m.body) changed.push_back(ref);
    }
    for (const auto& [ref, m] : ai) {
        if (!bi.count(ref)) added.push_back(ref);
    }

    std::set<MethodRef> used_before, used_after;
    Detection out;

    // Extract variants
    for (const auto& e_ref : added) {
        const auto& e = ai.at(e_ref);
        if (!e.decl->has_body || e.body.empty()) continue;
        for (const auto& b_ref : changed) {
            if (used_before.count(b_ref)) continue;
            const Body& bb = bi.at(b_ref).body;
            const Body& ba = ai.at(b_ref).body;
            const auto calls = calls_to(ba, e.decl->name, e_ref.arity);
            if (calls.size() != 1 || ba.size() > bb.size()) continue;
            const std::size_t j = calls[0].stmt;
            const std::size_t len = bb.size() - ba.size() + 1;
            if (!std::equal(ba.begin(), ba.begin() + static_cast<long>(j), bb.begin())) continue;
            if (!std::equal(ba.begin() + static_cast<long>(j) + 1, ba.end(), bb.begin() + static_cast<long>(j + len))) {
                continue;
            }
            const Body extracted(bb.begin() + static_cast<long>(j), bb.begin() + static_cast<long>(j + len));
            auto subst = make_substitution(*e.decl, calls[0].site);
            const Body folded = fold_into_call(*e.decl, ba[j], calls[0].site, subst);
            if (folded != extracted) continue;

            RefactoringInstance inst;
            inst.type = e_ref.qualified_class == b_ref.qualified_class ? RefactoringType::ExtractMethod
                                                                       : RefactoringType::ExtractAndMoveMethod;
            inst.source = b_ref;
            inst.targets = {b_ref, e_ref};
            inst.substitution = std::move(subst);
            map_around(inst.mappings, b_ref, bb, j, len, b_ref, ba, j, 1);
            map_segment(inst.mappings, b_ref, extracted, static_cast<int>(j), e_ref, folded, 0);
            std::sort(inst.mappings.begin(), inst.mappings.end());
            used_before.insert(b_ref);
            used_after.insert(b_ref);
            used_after.insert(e_ref);
            out.instances.push_back(std::move(inst));
            break;
        }
    }

    // Inline variants
    for (const auto& m_ref : removed) {
        const auto& m = bi.at(m_ref);
        if (used_before.count(m_ref) || !m.decl->has_body) continue;
        for (const auto& c_ref : changed) {
            if (used_before.count(c_ref) || used_after.count(c_ref) || c_ref == m_ref) continue;
            const Body& cb = bi.at(c_ref).body;
            const Body& ca = ai.at(c_ref).body;
            const auto calls = calls_to(cb, m.decl->name, m_ref.arity);
            if (calls.size() != 1) continue;
            const std::size_t j = calls[0].stmt;
            auto subst = make_substitution(*m.decl, calls[0].site);
            const Body folded = fold_into_call(*m.decl, cb[j], calls[0].site, subst);
            Body expected(cb.begin(), cb.begin() + static_cast<long>(j));
            expected.insert(expected.end(), folded.begin(), folded.end());
            expected.insert(expected.end(), cb.begin() + static_cast<long>(j) + 1, cb.end());
            if (expected != ca) continue;

            RefactoringInstance inst;
            inst.type = m_ref.qualified_class == c_ref.qualified_class ? RefactoringType::InlineMethod
                                                                       : RefactoringType::MoveAndInlineMethod;
            inst.source = m_ref;
            inst.targets = {c_ref};
            inst.substitution = std::move(subst);
            map_around(inst.mappings, c_ref, cb, j, 1, c_ref, ca, j, folded.size());
            // the inlined body lines up with the folded callee body statement by statement
            std::vector<MappingPair> body_map;
            map_segment(body_map, m_ref, folded, 0, c_ref,
                        std::span<const std::string>(ca).subspan(j, folded.size()), static_cast<int>(j));
            inst.mappings = concat(std::move(inst.mappings), body_map);
            std::sort(inst.mappings.begin(), inst.mappings.end());
            used_before.insert(m_ref);
            used_before.insert(c_ref);
            used_after.insert(c_ref);
            out.instances.push_back(std::move(inst));
            break;
        }
    }

    // Move variants: same name first, then renamed.
    for (const bool renamed : {false, true}) {
        for (const auto& r_ref : removed) {
            if (used_before.count(r_ref)) continue;
            const auto& r = bi.at(r_ref);
            if (renamed && r.body.empty()) continue;
            for (const auto& a_ref : added) {
                if (used_after.count(a_ref)) continue;
                if (a_ref.qualified_class == r_ref.qualified_class || a_ref.arity != r_ref.arity) continue;
                if ((a_ref.name == r_ref.name) == renamed) continue;
                const auto& a = ai.at(a_ref);
                if (a.body != r.body || a.decl->has_body != r.decl->has_body) continue;

                RefactoringInstance inst;
                inst.type = renamed ? RefactoringType::MoveAndRenameMethod : RefactoringType::MoveMethod;
                inst.source = r_ref;
                inst.targets = {a_ref};
                map_segment(inst.mappings, r_ref, r.body, 0, a_ref, a.body, 0);
                used_before.insert(r_ref);
                used_after.insert(a_ref);
                out.instances.push_back(std::move(inst));
                break;
            }
        }
    }
    return out;
}

struct MoveRename {
    std::string from;
    std::string to;
    int arity = 0;
};

// Replaces receiver chain + name of calls to moved methods with a marker so
// call-site updates compare equal.
std::string canonical_calls(const std::string& stmt, const std::vector<MoveRename>& moves) {
    auto sites = find_call_sites(stmt);
    std::string out;
    std::size_t copied = 0;
    for (const auto& cs : sites) {
        if (cs.begin < copied) continue;
        const bool hit = std::any_of(moves.begin(), moves.end(), [&](const MoveRename& mv) {
            return cs.arity == mv.arity && (cs.name == mv.from || cs.name == mv.to);
        });
        if (!hit) continue;
        out.append(stmt, copied, cs.begin - copied);
        out += "@moved(";
        for (std::size_t i = 0; i < cs.args.size(); ++i) out += (i ? ", " : "") + cs.args[i];
        out += ")";
        copied = cs.end;
    }
    out.append(stmt, copied);
    return out;
}

}  // namespace

std::vector<RefactoringInstance> detect(const SourceTree& before, const SourceTree& after) {
    require_parsed(before, "before");
    require_parsed(after, "after");
    return run_detection(index_methods(before), index_methods(after)).instances;
}

VerifyResult verify(const SourceTree& before, const SourceTree& after, RefactoringType expected) {
    const auto instances = detect(before, after);
    VerifyResult out;
    if (instances.empty()) {
        out.report = "no refactoring detected";
        return out;
    }
    std::string found;
    for (const auto& inst : instances) {
        if (!found.empty()) found += ", ";
        found += std::string(to_string(inst.type)) + " " + inst.source.str();
        if (inst.type == expected) out.verified = true;
    }
    out.report = out.verified ? "verified " + std::string(to_string(expected)) + "; found: " + found
                              : "expected " + std::string(to_string(expected)) + " but found: " + found;
    return out;
}

std::vector<MappingPair> ast_diff(const SourceTree& before, const SourceTree& after) {
    require_parsed(before, "before");
    require_parsed(after, "after");
    const auto bi = index_methods(before);
    const auto ai = index_methods(after);
    const auto detection = run_detection(bi, ai);

    std::set<StatementPos> used_before, used_after;
    std::set<MethodRef> involved_before, involved_after;
    std::vector<MappingPair> out;
    auto add = [&](const MappingPair& p) {
        if (used_before.count(p.before) || used_after.count(p.after)) return;
        used_before.insert(p.before);
        used_after.insert(p.after);
        out.push_back(p);
    };
    for (const auto& inst : detection.instances) {
        involved_before.insert(inst.source);
        for (const auto& t : inst.targets) involved_after.insert(t);
        if (inst.type == RefactoringType::InlineMethod || inst.type == RefactoringType::MoveAndInlineMethod) {
            involved_before.insert(inst.targets.front());
        }
        for (const auto& p : inst.mappings) add(p);
    }
    for (const auto& [ref, b] : bi) {
        const auto it = ai.find(ref);
        if (it == ai.end() || involved_before.count(ref) || involved_after.count(ref)) continue;
        for (const auto& [i, j] : match_statements(b.body, it->second.body)) add({{ref, i}, {ref, j}});
    }
    std::sort(out.begin(), out.end());
    return out;
}

PurityVerdict purity(const SourceTree& before, const SourceTree& after,
                     std::span<const RefactoringInstance> instances) {
    require_parsed(before, "before");
    require_parsed(after, "after");
    const auto bi = index_methods(before);
    const auto ai = index_methods(after);

    std::map<MethodRef, std::set<int>> explained_before, explained_after;
    std::vector<MoveRename> moves;
    bool move_family = false;

    auto need = [](const MethodIndex& idx, const MethodRef& ref, const char* side) -> const IndexedMethod& {
        const auto it = idx.find(ref);
        if (it == idx.end()) {
            throw PreconditionError("refactoring instance references " + ref.str() + " missing from the " + side +
                                    " tree");
        }
        return it->second;
    };

    for (const auto& inst : instances) {
        move_family = move_family || is_move_family(inst.type);
        const bool extract = inst.type == RefactoringType::ExtractMethod ||
                             inst.type == RefactoringType::ExtractAndMoveMethod;
        const bool inline_ = inst.type == RefactoringType::InlineMethod ||
                             inst.type == RefactoringType::MoveAndInlineMethod;
        if (inst.targets.size() != (extract ? 2u : 1u)) {
            throw PreconditionError("instance of " + std::string(to_string(inst.type)) + " has " +
                                    std::to_string(inst.targets.size()) + " targets");
        }
        const auto& src = need(bi, inst.source, "before");
        explained_before[inst.source];
        for (const auto& t : inst.targets) {
            need(ai, t, "after");
            explained_after[t];
        }
        if (extract) {
            const auto& residual = ai.at(inst.targets[0]);
            const auto& extracted = ai.at(inst.targets[1]);
            const auto calls = calls_to(residual.body, extracted.decl->name, inst.targets[1].arity);
            if (calls.size() != 1) {
                throw PreconditionError("extract instance: " + inst.targets[0].str() +
                                        " does not contain exactly one call to " + inst.targets[1].str());
            }
            explained_after[inst.targets[0]].insert(static_cast<int>(calls[0].stmt));
            if (!extracted.body.empty() && extracted.body.back().rfind("return", 0) == 0) {
                explained_after[inst.targets[1]].insert(static_cast<int>(extracted.body.size()) - 1);
            }
        } else if (inline_) {
            const auto& caller = need(bi, inst.targets[0], "before");
            explained_before[inst.targets[0]];
            const auto calls = calls_to(caller.body, src.decl->name, inst.source.arity);
            if (calls.size() != 1) {
                throw PreconditionError("inline instance: " + inst.targets[0].str() +
                                        " does not contain exactly one call to " + inst.source.str());
            }
            explained_before[inst.targets[0]].insert(static_cast<int>(calls[0].stmt));
            if (!src.body.empty() && src.body.back().rfind("return", 0) == 0) {
                explained_before[inst.source].insert(static_cast<int>(src.body.size()) - 1);
            }
        } else {
            moves.push_back({inst.source.name, inst.targets[0].name, inst.source.arity});
        }
        for (const auto& p : inst.mappings) {
            const auto bit = bi.find(p.before.method);
            const auto ait = ai.find(p.after.method);
            if (bit == bi.end() || ait == ai.end() || p.before.index < 0 || p.after.index < 0 ||
                p.before.index >= static_cast<int>(bit->second.body.size()) ||
                p.after.index >= static_cast<int>(ait->second.body.size())) {
                throw PreconditionError("mapping references an invalid statement position");
            }
            explained_before[p.before.method].insert(p.before.index);
            explained_after[p.after.method].insert(p.after.index);
        }
    }

    PurityVerdict verdict;
    auto residual = [&](ResidualEdit::Kind kind, const std::string& path, int line, std::string what) {
        verdict.residual_edits.push_back({kind, path, line, std::move(what)});
    };

    for (const auto& [ref, idx] : explained_before) {
        const auto& m = bi.at(ref);
        for (int i = 0; i < static_cast<int>(m.body.size()); ++i) {
            if (!idx.count(i)) {
                residual(ResidualEdit::Kind::Deletion, m.path, m.decl->body[i].line,
                         "statement not explained by refactoring in " + ref.str() + ": " + m.body[i]);
            }
        }
    }
    for (const auto& [ref, idx] : explained_after) {
        const auto& m = ai.at(ref);
        for (int i = 0; i < static_cast<int>(m.body.size()); ++i) {
            if (!idx.count(i)) {
                residual(ResidualEdit::Kind::Insertion, m.path, m.decl->body[i].line,
                         "statement not explained by refactoring in " + ref.str() + ": " + m.body[i]);
            }
        }
    }

    for (const auto& [ref, b] : bi) {
        if (explained_before.count(ref)) continue;
        const auto it = ai.find(ref);
        if (it == ai.end()) {
            residual(ResidualEdit::Kind::Deletion, b.path, b.decl->name_line, "method removed: " + ref.str());
            continue;
        }
        if (explained_after.count(ref)) continue;
        const auto& a = it->second;
        if (b.decl->signature() != a.decl->signature()) {
            residual(ResidualEdit::Kind::Modification, a.path, a.decl->name_line,
                     "signature changed: " + b.decl->signature() + " -> " + a.decl->signature());
        }
        if (b.body == a.body) continue;
        std::set<int> mb, ma;
        for (const auto& [i, j] : match_statements(b.body, a.body)) {
            mb.insert(i);
            ma.insert(j);
        }
        std::vector<int> del, ins;
        for (int i = 0; i < static_cast<int>(b.body.size()); ++i) {
            if (!mb.count(i)) del.push_back(i);
        }
        for (int j = 0; j < static_cast<int>(a.body.size()); ++j) {
            if (!ma.count(j)) ins.push_back(j);
        }
        std::set<int> ins_ok;
        std::vector<int> del_left;
        for (const int i : del) {
            bool explained = false;
            if (!moves.empty()) {
                const auto canon = canonical_calls(b.body[i], moves);
                for (const int j : ins) {
                    if (!ins_ok.count(j) && canonical_calls(a.body[j], moves) == canon) {
                        ins_ok.insert(j);
                        explained = true;
                        break;
                    }
                }
            }
            if (!explained) del_left.push_back(i);
        }
        for (const int i : del_left) {
            residual(ResidualEdit::Kind::Deletion, b.path, b.decl->body[i].line,
                     "statement removed from " + ref.str() + ": " + b.body[i]);
        }
        for (const int j : ins) {
            if (ins_ok.count(j)) continue;
            residual(ResidualEdit::Kind::Insertion, a.path, a.decl->body[j].line,
                     "statement added to " + ref.str() + ": " + a.body[j]);
        }
    }
    for (const auto& [ref, a] : ai) {
        if (bi.count(ref) || explained_after.count(ref)) continue;
        residual(ResidualEdit::Kind::Insertion, a.path, a.decl->name_line, "method added: " + ref.str());
    }

    // classes, fields and imports
    std::map<std::string, std::pair<const ClassDecl*, std::string>> bc, ac;
    for (const auto& u : before.units) {
        for (const auto& c : u.classes) bc[c.qualified_name] = {&c, u.path};
    }
    for (const auto& u : after.units) {
        for (const auto& c : u.classes) ac[c.qualified_name] = {&c, u.path};
    }
    auto only_explained_methods = [](const ClassDecl& c, const std::map<MethodRef, std::set<int>>& explained) {
        return c.fields.empty() && std::all_of(c.methods.begin(), c.methods.end(), [&](const MethodDecl& m) {
                   return explained.count(m.ref()) > 0;
               });
    };
    for (const auto& [name, entry] : bc) {
        const auto* c = entry.first;
        const auto it = ac.find(name);
        if (it == ac.end()) {
            if (!only_explained_methods(*c, explained_before)) {
                residual(ResidualEdit::Kind::Deletion, entry.second, c->name_line, "class removed: " + name);
            }
            continue;
        }
        const auto* d = it->second.first;
        if (c->signature() != d->signature()) {
            residual(ResidualEdit::Kind::Modification, it->second.second, d->name_line,
                     "class declaration changed: " + c->signature() + " -> " + d->signature());
        }
        std::multiset<std::string> bf, af;
        for (const auto& f : c->fields) bf.insert(f.name + " :: " + f.declaration);
        for (const auto& f : d->fields) af.insert(f.name + " :: " + f.declaration);
        for (const auto& f : c->fields) {
            const auto key = f.name + " :: " + f.declaration;
            if (af.count(key) < bf.count(key)) {
                residual(ResidualEdit::Kind::Deletion, entry.second, f.line, "field removed or changed: " + f.declaration);
                bf.erase(bf.find(key));
            }
        }
        bf.clear();
        for (const auto& f : c->fields) bf.insert(f.name + " :: " + f.declaration);
        for (const auto& f : d->fields) {
            const auto key = f.name + " :: " + f.declaration;
            if (bf.count(key) < af.count(key)) {
                residual(ResidualEdit::Kind::Insertion, it->second.second, f.line, "field added or changed: " + f.declaration);
                af.erase(af.find(key));
            }
        }
    }
    for (const auto& [name, entry] : ac) {
        if (bc.count(name)) continue;
        if (!only_explained_methods(*entry.first, explained_after)) {
            residual(ResidualEdit::Kind::Insertion, entry.second, entry.first->name_line, "class added: " + name);
        }
    }
    std::map<std::string, const SourceUnit*> bu, au;
    for (const auto& u : before.units) bu[u.path] = &u;
    for (const auto& u : after.units) au[u.path] = &u;
    auto import_residuals = [&](const SourceUnit* from, const SourceUnit* to, const std::string& path) {
        const std::set<std::string> a(from ? from->imports.begin() : std::vector<std::string>::const_iterator{},
                                      from ? from->imports.end() : std::vector<std::string>::const_iterator{});
        const std::set<std::string> b(to ? to->imports.begin() : std::vector<std::string>::const_iterator{},
                                      to ? to->imports.end() : std::vector<std::string>::const_iterator{});
        if (from && to && from->package != to->package) {
            residual(ResidualEdit::Kind::Modification, path, 1, "package changed: " + from->package + " -> " + to->package);
        }
        if (a == b || move_family) return;
        for (const auto& imp : a) {
            if (!b.count(imp)) residual(ResidualEdit::Kind::Deletion, path, 1, "import removed: " + imp);
        }
        for (const auto& imp : b) {
            if (!a.count(imp)) residual(ResidualEdit::Kind::Insertion, path, 1, "import added: " + imp);
        }
    };
    for (const auto& [path, u] : bu) {
        const auto it = au.find(path);
        import_residuals(u, it == au.end() ? nullptr : it->second, path);
    }
    for (const auto& [path, u] : au) {
        if (!bu.count(path)) import_residuals(nullptr, u, path);
    }

    std::stable_sort(verdict.residual_edits.begin(), verdict.residual_edits.end(),
                     [](const ResidualEdit& x, const ResidualEdit& y) {
                         return std::tie(x.path, x.line) < std::tie(y.path, y.line);
                     });
    verdict.pure = verdict.residual_edits.empty();
    return verdict;
}

nlohmann::json to_json_value(const RefactoringInstance& inst) {
    auto pos = [](const StatementPos& p) { return nlohmann::json{{"method", p.method.str()}, {"index", p.index}}; };
    nlohmann::json targets = nlohmann::json::array(), mappings = nlohmann::json::array();
    for (const auto& t : inst.targets) targets.push_back(t.str());
    for (const auto& m : inst.mappings) mappings.push_back({{"before", pos(m.before)}, {"after", pos(m.after)}});
    return {{"type", to_string(inst.type)},
            {"source", inst.source.str()},
            {"targets", targets},
            {"mappings", mappings},
            {"substitution", inst.substitution}};
}

}  // namespace refagent
