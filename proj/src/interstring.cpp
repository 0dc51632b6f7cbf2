#include "spatiale/interstring.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace spatiale::inter {

TermPtr Term::var(std::string v) {
    auto t = std::make_shared<Term>();
    t->kind = Kind::Var;
    t->symbol = std::move(v);
    return t;
}
TermPtr Term::constant(std::string c) {
    auto t = std::make_shared<Term>();
    t->kind = Kind::Const;
    t->symbol = std::move(c);
    return t;
}
TermPtr Term::apply(std::string f, TermPtr a, TermPtr b) {
    auto t = std::make_shared<Term>();
    t->kind = Kind::Apply;
    t->symbol = std::move(f);
    t->t1 = std::move(a);
    t->t2 = std::move(b);
    return t;
}

namespace {

TermPtr parse_sexp(std::istringstream& in) {
    char c;
    in >> std::ws;
    if (!in.get(c)) throw std::runtime_error("unexpected end of term");
    if (c == '(') {
        std::string f;
        in >> f;
        TermPtr a = parse_sexp(in);
        TermPtr b = parse_sexp(in);
        in >> std::ws;
        if (!in.get(c) || c != ')') throw std::runtime_error("expected ')'");
        return Term::apply(f, a, b);
    }
    if (c == '\'') {
        std::string s;
        in >> s;
        return Term::constant(s);
    }
    std::string s(1, c);
    while (in.peek() != EOF && !std::isspace(in.peek()) && in.peek() != ')' &&
           in.peek() != '(')
        s += char(in.get());
    return Term::var(s);
}

} // namespace

TermPtr parse_term(const std::string& text) {
    std::istringstream in(text);
    return parse_sexp(in);
}

std::string term_to_string(const TermPtr& t) {
    switch (t->kind) {
    case Term::Kind::Var: return t->symbol;
    case Term::Kind::Const: return "'" + t->symbol;
    case Term::Kind::Apply:
        return "(" + t->symbol + " " + term_to_string(t->t1) + " " +
               term_to_string(t->t2) + ")";
    }
    return "?";
}

void check_columns(const Interstring& y) {
    if (y.columns.empty()) throw std::runtime_error("null interstring");
    for (std::size_t i = 0; i < y.columns.size(); ++i) {
        const Column& c = y.columns[i];
        if (c.alpha != (i % 2 == 0))
            throw std::runtime_error("columns must alternate alpha/beta");
        if (c.alpha) {
            std::vector<bool> used(y.k + 1, false);
            for (const AlphaEntry& e : c.a) {
                if (e.fu < 1 || e.fu > y.k)
                    throw std::runtime_error("FU index out of range");
                if (used[e.fu]) throw std::runtime_error("duplicate FU in column");
                used[e.fu] = true;
            }
        } else {
            std::vector<bool> written(3 * y.k + 1, false);
            for (const BetaEntry& e : c.b) {
                if (e.src < 1 || e.src > 3 * y.k || e.dst > 3 * y.k)
                    throw std::runtime_error("beta cell out of range");
                if (written[e.dst])
                    throw std::runtime_error("duplicate beta target in column");
                written[e.dst] = true;
            }
        }
    }
    const Column& last = y.columns.back();
    if (last.alpha || last.b.size() != 1 || last.b[0].dst != 0 ||
        last.b[0].src % 3 != 0)
        throw std::runtime_error(
            "terminating column must be a singleton <t,0> with t mod 3 = 0");
}

// ---- compile_term ------------------------------------------------------------

Compiled compile_term(const TermPtr& t) {
    if (t->kind != Term::Kind::Apply) {
        // base case: a 1-FU memory holding the symbol everywhere
        Compiled c;
        c.psi.k = 1;
        c.psi.cells.assign(4, t->symbol);
        c.y.k = 1;
        Column a;
        a.alpha = true;
        a.a.push_back({"Id", 1});
        Column b;
        b.alpha = false;
        b.b.push_back({3, 0});
        c.y.columns = {a, b};
        return c;
    }

    Compiled l = compile_term(t->t1);
    Compiled r = compile_term(t->t2);
    const std::uint32_t k = l.psi.k, m = r.psi.k;

    Compiled out;
    out.psi.k = k + m;
    out.psi.cells = l.psi.cells; // cells 0..3k
    for (std::uint32_t i = 1; i <= 3 * m; ++i)
        out.psi.cells.push_back(r.psi.cells[i]); // cells 3k+1..3k+3m
    out.y.k = k + m;

    // strip the terminal beta of both sides, merge column by column with FU
    // offset k and cell offset 3k on the right side
    const std::size_t ln = l.y.columns.size() - 1;
    const std::size_t rn = r.y.columns.size() - 1;
    const std::size_t n = std::max(ln, rn);
    for (std::size_t i = 0; i < n; ++i) {
        Column col;
        col.alpha = (i % 2 == 0);
        if (i < ln) {
            const Column& c = l.y.columns[i];
            col.a = c.a;
            col.b = c.b;
        }
        if (i < rn) {
            const Column& c = r.y.columns[i];
            for (const AlphaEntry& e : c.a) col.a.push_back({e.f, e.fu + k});
            for (const BetaEntry& e : c.b)
                col.b.push_back({e.src + 3 * k, e.dst + 3 * k});
        }
        out.y.columns.push_back(std::move(col));
    }
    // the merged prefix ends on an alpha column; route both results into
    // FU 1 and apply f
    Column beta1;
    beta1.alpha = false;
    beta1.b.push_back({3, 1});
    beta1.b.push_back({3 * k + 3, 2});
    Column alpha1;
    alpha1.alpha = true;
    alpha1.a.push_back({t->symbol, 1});
    Column beta2;
    beta2.alpha = false;
    beta2.b.push_back({3, 0});
    out.y.columns.push_back(std::move(beta1));
    out.y.columns.push_back(std::move(alpha1));
    out.y.columns.push_back(std::move(beta2));
    return out;
}

// ---- dedup -------------------------------------------------------------------

namespace {

// value ids: hash-consed symbolic expressions
struct ValueNumbering {
    std::map<std::string, int> leaf;
    std::map<std::tuple<std::string, int, int>, int> node;
    int next = 0;

    int leaf_id(const std::string& s) {
        auto [it, fresh] = leaf.emplace(s, next);
        if (fresh) ++next;
        return it->second;
    }
    int node_id(const std::string& f, int a, int b) {
        auto [it, fresh] = node.emplace(std::make_tuple(f, a, b), next);
        if (fresh) ++next;
        return it->second;
    }
};

} // namespace

Interstring dedup_columns(const VCMemory& psi, const Interstring& y) {
    ValueNumbering vn;
    std::vector<int> val(3 * y.k + 1);
    for (std::size_t i = 0; i < psi.cells.size(); ++i)
        val[i] = vn.leaf_id(psi.cells[i]);

    Interstring out;
    out.k = y.k;
    // pass 1: decide what to keep, tracking values of kept writes only
    for (std::size_t ci = 0; ci < y.columns.size(); ++ci) {
        const Column& col = y.columns[ci];
        Column nc;
        nc.alpha = col.alpha;
        if (col.alpha) {
            std::map<std::tuple<std::string, int, int>, std::uint32_t> seen;
            std::vector<std::pair<std::uint32_t, int>> newvals;
            for (const AlphaEntry& e : col.a) {
                const int a = val[3 * e.fu - 2];
                const int b = val[3 * e.fu - 1];
                const auto key = std::make_tuple(e.f, a, b);
                const int v = e.f == "Id" ? a : vn.node_id(e.f, a, b);
                if (seen.emplace(key, 3 * e.fu).second) {
                    nc.a.push_back(e);
                    newvals.push_back({3 * e.fu, v});
                }
                // dropped duplicates leave their output cell stale; pass 2
                // redirects any readers to a live holder of the value
            }
            for (auto& [c, v] : newvals) val[c] = v;
        } else {
            std::vector<std::pair<std::uint32_t, int>> newvals;
            for (const BetaEntry& e : col.b) {
                const int v = val[e.src];
                if (ci + 1 != y.columns.size() && val[e.dst] == v)
                    continue; // self copy (keep the terminating column)
                nc.b.push_back(e);
                newvals.push_back({e.dst, v});
            }
            for (auto& [c, v] : newvals) val[c] = v;
        }
        out.columns.push_back(std::move(nc));
    }

    // rebuild beta sources against kept producers: replay with holders
    // (second pass with the pruned columns; if any source cell's value does
    // not match what the original program would read, fall back)
    {
        std::vector<int> v2(3 * y.k + 1);
        std::vector<int> orig(3 * y.k + 1);
        for (std::size_t i = 0; i < psi.cells.size(); ++i)
            orig[i] = v2[i] = vn.leaf_id(psi.cells[i]);
        for (std::size_t ci = 0; ci < y.columns.size(); ++ci) {
            const Column& oc = y.columns[ci];
            Column& pc = out.columns[ci];
            if (oc.alpha) {
                std::vector<std::pair<std::uint32_t, int>> ow, pw;
                for (const AlphaEntry& e : oc.a) {
                    const int v = e.f == "Id" ? orig[3 * e.fu - 2]
                                              : vn.node_id(e.f, orig[3 * e.fu - 2],
                                                           orig[3 * e.fu - 1]);
                    ow.push_back({3 * e.fu, v});
                }
                for (const AlphaEntry& e : pc.a) {
                    const int v = e.f == "Id" ? v2[3 * e.fu - 2]
                                              : vn.node_id(e.f, v2[3 * e.fu - 2],
                                                           v2[3 * e.fu - 1]);
                    pw.push_back({3 * e.fu, v});
                }
                for (auto& [c, v] : ow) orig[c] = v;
                for (auto& [c, v] : pw) v2[c] = v;
            } else {
                std::vector<std::pair<std::uint32_t, int>> ow, pw;
                for (const BetaEntry& e : oc.b) ow.push_back({e.dst, orig[e.src]});
                for (BetaEntry& e : pc.b) {
                    if (v2[e.src] != orig[e.src]) {
                        // stale source: redirect to a live holder of the value
                        bool fixed = false;
                        for (std::uint32_t c = 1; c <= 3 * y.k; ++c)
                            if (v2[c] == orig[e.src]) {
                                e.src = c;
                                fixed = true;
                                break;
                            }
                        if (!fixed) return y; // cannot prove safe: keep original
                    }
                    pw.push_back({e.dst, v2[e.src]});
                }
                for (auto& [c, v] : ow) orig[c] = v;
                for (auto& [c, v] : pw) v2[c] = v;
            }
        }
        if (orig[0] != v2[0]) return y;
    }
    return out;
}

std::size_t alpha_entry_count(const Interstring& y) {
    std::size_t n = 0;
    for (const Column& c : y.columns)
        if (c.alpha) n += c.a.size();
    return n;
}

std::string interstring_to_string(const Interstring& y) {
    std::ostringstream out;
    for (std::size_t i = 0; i < y.columns.size(); ++i) {
        const Column& c = y.columns[i];
        if (i) out << " :: ";
        if (c.alpha)
            for (std::size_t j = 0; j < c.a.size(); ++j)
                out << (j ? " " : "") << c.a[j].f << "(" << c.a[j].fu << ")";
        else
            for (std::size_t j = 0; j < c.b.size(); ++j)
                out << (j ? " " : "") << c.b[j].src << "->" << c.b[j].dst;
    }
    out << " ;;";
    return out.str();
}

// ---- growth functions -----------------------------------------------------------

std::uint64_t addtree(unsigned n) {
    if (n < 2) return 0;
    std::vector<std::uint64_t> a(n + 1, 0);
    for (unsigned i = 2; i <= n; ++i) a[i] = a[i - 1] + a[i - 2] + 1;
    return a[n];
}

std::uint64_t addgraph(unsigned n) { return n == 0 ? 0 : n - 1; }

std::uint64_t fib(unsigned n) {
    std::uint64_t a = 0, b = 1;
    for (unsigned i = 0; i < n; ++i) {
        const std::uint64_t c = a + b;
        a = b;
        b = c;
    }
    return a;
}

TermPtr xyfib_term(unsigned n) {
    if (n == 0) return Term::var("x");
    if (n == 1) return Term::var("y");
    return Term::apply("+", xyfib_term(n - 1), xyfib_term(n - 2));
}

} // namespace spatiale::inter
