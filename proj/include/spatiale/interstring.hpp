#pragma once

#include <cstdint>
#include <stdexcept>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace spatiale::inter {

// ---- terms of L(V,F,C) -------------------------------------------------------

struct Term;
using TermPtr = std::shared_ptr<const Term>;

struct Term {
    enum class Kind { Var, Const, Apply } kind;
    std::string symbol; // variable, constant or function symbol
    TermPtr t1, t2;

    static TermPtr var(std::string v);
    static TermPtr constant(std::string c);
    static TermPtr apply(std::string f, TermPtr a, TermPtr b);
};

// s-expression text: x | 'c | (f t1 t2)
TermPtr parse_term(const std::string& text);
std::string term_to_string(const TermPtr& t);

// ---- model and assignment -----------------------------------------------------

// Generic over the domain; tests exercise 64-bit integers with {+,-,*,Id}.
template <typename D>
struct Model {
    std::map<std::string, D> constants;
    std::map<std::string, std::function<D(const D&, const D&)>> functions;
};

template <typename D>
using Assignment = std::map<std::string, D>;

template <typename D>
D eval_term(const TermPtr& t, const Model<D>& m, const Assignment<D>& a) {
    switch (t->kind) {
    case Term::Kind::Const: {
        auto it = m.constants.find(t->symbol);
        if (it == m.constants.end()) throw std::runtime_error("uninterpreted constant " + t->symbol);
        return it->second;
    }
    case Term::Kind::Var: {
        auto it = a.find(t->symbol);
        if (it == a.end()) throw std::runtime_error("unbound variable " + t->symbol);
        return it->second;
    }
    case Term::Kind::Apply: {
        if (t->symbol == "Id") return eval_term(t->t1, m, a);
        auto it = m.functions.find(t->symbol);
        if (it == m.functions.end())
            throw std::runtime_error("uninterpreted function " + t->symbol);
        return it->second(eval_term(t->t1, m, a), eval_term(t->t2, m, a));
    }
    }
    throw std::runtime_error("bad term");
}

// ---- interstrings ---------------------------------------------------------------

struct AlphaEntry {
    std::string f;
    std::uint32_t fu; // 1..k
};
struct BetaEntry {
    std::uint32_t src; // 1..3k
    std::uint32_t dst; // 0..3k
};

struct Column {
    bool alpha;
    std::vector<AlphaEntry> a;
    std::vector<BetaEntry> b;
};

// cells 0..3k inclusive
struct VCMemory {
    std::uint32_t k = 0;
    std::vector<std::string> cells; // 3k+1 symbols of V u C
};

struct Interstring {
    std::uint32_t k = 0;
    std::vector<Column> columns; // strictly alternating, alpha first
};

// legality per the A_k / B_k constraints
void check_columns(const Interstring& y);

template <typename D>
using DMemory = std::vector<D>;

template <typename D>
DMemory<D> denote_memory(const VCMemory& psi, const Model<D>& m,
                         const Assignment<D>& a) {
    DMemory<D> out;
    for (const std::string& s : psi.cells) {
        auto c = m.constants.find(s);
        if (c != m.constants.end()) {
            out.push_back(c->second);
            continue;
        }
        auto v = a.find(s);
        if (v == a.end()) throw std::runtime_error("unbound symbol " + s);
        out.push_back(v->second);
    }
    return out;
}

// one column step: alpha applies FUs, beta copies; reads precede writes
template <typename D>
void step_column(DMemory<D>& sigma, const Column& col, const Model<D>& m,
                 std::uint32_t k) {
    if (col.alpha) {
        std::vector<bool> used(k + 1, false);
        std::vector<std::pair<std::uint32_t, D>> outs;
        for (const AlphaEntry& e : col.a) {
            if (e.fu < 1 || e.fu > k) throw std::runtime_error("FU index out of range");
            if (used[e.fu]) throw std::runtime_error("FU activated twice");
            used[e.fu] = true;
            const D& x = sigma[3 * e.fu - 2];
            const D& y = sigma[3 * e.fu - 1];
            if (e.f == "Id") {
                outs.push_back({3 * e.fu, x});
            } else {
                auto it = m.functions.find(e.f);
                if (it == m.functions.end())
                    throw std::runtime_error("uninterpreted function " + e.f);
                outs.push_back({3 * e.fu, it->second(x, y)});
            }
        }
        for (auto& [c, v] : outs) sigma[c] = v;
    } else {
        std::vector<bool> written(3 * k + 1, false);
        std::vector<std::pair<std::uint32_t, D>> outs;
        for (const BetaEntry& e : col.b) {
            if (e.src < 1 || e.src > 3 * k || e.dst > 3 * k)
                throw std::runtime_error("beta cell out of range");
            if (written[e.dst]) throw std::runtime_error("beta target written twice");
            written[e.dst] = true;
            outs.push_back({e.dst, sigma[e.src]});
        }
        for (auto& [c, v] : outs) sigma[c] = v;
    }
}

template <typename D>
D denote(const VCMemory& psi, const Interstring& y, const Model<D>& m,
         const Assignment<D>& a) {
    if (psi.k != y.k) throw std::runtime_error("dimension mismatch");
    if (y.columns.empty()) throw std::runtime_error("null interstring");
    DMemory<D> sigma = denote_memory(psi, m, a);
    for (const Column& col : y.columns) step_column(sigma, col, m, psi.k);
    return sigma[0];
}

// ---- the theorem's constructive compiler ------------------------------------------

struct Compiled {
    VCMemory psi;
    Interstring y;
};

Compiled compile_term(const TermPtr& t);

// footnote-18 sharing elimination: same-column duplicate removal with a
// value-numbering soundness check; returns the input unchanged when a
// rewrite cannot be proven safe
Interstring dedup_columns(const VCMemory& psi, const Interstring& y);

std::size_t alpha_entry_count(const Interstring& y);

// "alpha :: beta :: ... ;;" pretty printer (fig 2.4 style)
std::string interstring_to_string(const Interstring& y);

// ---- 2.2.1 growth functions ---------------------------------------------------

std::uint64_t addtree(unsigned n);
std::uint64_t addgraph(unsigned n);
std::uint64_t fib(unsigned n);

// the xyfib(n,x,y) term
TermPtr xyfib_term(unsigned n);

} // namespace spatiale::inter
