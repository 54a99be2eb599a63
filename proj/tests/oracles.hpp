#pragma once

// Brute-force reference implementations and generators shared by the unit
// and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace refagent::testing {

inline std::vector<std::string> split_spaces(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

// Corpus texts are lowercase words separated by spaces, so splitting on
// whitespace is the whole tokenizer.
inline std::map<std::string, double> bm25_oracle(const std::vector<std::pair<std::string, std::string>>& docs,
                                                 const std::string& query) {
    const double n = static_cast<double>(docs.size());
    double total = 0;
    std::vector<std::vector<std::string>> toks;
    for (const auto& [id, text] : docs) {
        toks.push_back(split_spaces(text));
        total += static_cast<double>(toks.back().size());
    }
    const double avg = total / n;
    std::set<std::string> q;
    for (const auto& t : split_spaces(query)) q.insert(t);
    std::map<std::string, double> dfs;
    for (const auto& t : q) {
        for (const auto& other : toks) dfs[t] += std::count(other.begin(), other.end(), t) > 0 ? 1 : 0;
    }
    std::map<std::string, double> out;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        double score = 0;
        bool any = false;
        for (const auto& t : q) {
            const double df = dfs[t];
            const double tf = static_cast<double>(std::count(toks[d].begin(), toks[d].end(), t));
            if (tf == 0) continue;
            any = true;
            const double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
            score += idf * (tf * 2.2) / (tf + 1.2 * (0.25 + 0.75 * static_cast<double>(toks[d].size()) / avg));
        }
        if (any) out[docs[d].first] = score;
    }
    return out;
}

inline std::uint64_t oracle_fnv(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Lowercase single-space texts: the token stream joined by spaces is the text.
inline std::vector<double> trigram_counts_oracle(const std::string& text) {
    std::vector<double> v(256, 0.0);
    const std::string padded = " " + text + " ";
    for (std::size_t i = 0; i + 3 <= padded.size(); ++i) v[oracle_fnv(padded.substr(i, 3)) % 256] += 1;
    return v;
}

inline double cosine_oracle(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / std::sqrt(na * nb);
}

inline std::vector<std::pair<std::string, std::string>> synthetic_docs(std::mt19937& rng, int count) {
    static const std::vector<std::string> vocab{"alpha", "beta",  "gamma", "delta", "omega", "sigma", "theta",
                                                "kappa", "lambda", "zeta", "eta",   "iota",  "rho",   "tau"};
    std::vector<std::pair<std::string, std::string>> docs;
    for (int i = 0; i < count; ++i) {
        const int len = 1 + static_cast<int>(rng() % 12);
        std::string text;
        for (int k = 0; k < len; ++k) text += (k ? " " : "") + vocab[rng() % vocab.size()];
        char id[16];
        std::snprintf(id, sizeof id, "r%04d", i);
        docs.emplace_back(id, text);
    }
    return docs;
}

// Small random Java class for metric properties.
inline std::string random_program(std::mt19937& rng) {
    static const std::vector<std::string> names{"a", "b", "count", "total", "x", "y"};
    std::uniform_int_distribution<int> pick(0, static_cast<int>(names.size()) - 1);
    std::uniform_int_distribution<int> lit(0, 99), kind(0, 3), len(2, 7);
    std::string body;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
        const auto& v = names[pick(rng)];
        switch (kind(rng)) {
            case 0: body += "int " + v + " = " + std::to_string(lit(rng)) + "; "; break;
            case 1: body += v + " = " + names[pick(rng)] + " + " + std::to_string(lit(rng)) + "; "; break;
            case 2: body += "if (" + v + " > 0) { " + names[pick(rng)] + "++; } "; break;
            default: body += "log(" + v + "); "; break;
        }
    }
    return "class C { int m(int a) { " + body + "return a; } }";
}

}  // namespace refagent::testing
