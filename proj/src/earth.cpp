#include "spatiale/earth.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace spatiale::earth {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("earth: " + msg);
}

} // namespace

// ---- Numex ------------------------------------------------------------------

bool Numex::contains(char rep) const { return r1 == rep || r2 == rep; }

int Numex::rep_count() const {
    switch (kind) {
    case Kind::Int: return 0;
    case Kind::Rep:
    case Kind::MulRep:
    case Kind::AddRep:
    case Kind::AddMul:
    case Kind::SubRep: return 1;
    case Kind::AddRepRep:
    case Kind::RepAddMul: return 2;
    }
    return 0;
}

long Numex::leading() const {
    switch (kind) {
    case Kind::Int:
    case Kind::AddRep:
    case Kind::AddMul:
    case Kind::AddRepRep:
    case Kind::SubRep: return a;
    default: return 0;
    }
}

void Numex::bump(long m) {
    switch (kind) {
    case Kind::Int:
    case Kind::AddRep:
    case Kind::AddMul:
    case Kind::AddRepRep:
    case Kind::SubRep: a += m; break;
    default: fail("cannot increment numex " + str());
    }
}

Numex Numex::subst(char rep, long v) const {
    Numex n = *this;
    switch (kind) {
    case Kind::Int: return n;
    case Kind::Rep:
        if (r1 == rep) return integer(v);
        return n;
    case Kind::MulRep:
        if (r1 == rep) return integer(b * v);
        return n;
    case Kind::AddRep:
        if (r1 == rep) return integer(a + v);
        return n;
    case Kind::AddMul:
        if (r1 == rep) return integer(a + b * v);
        return n;
    case Kind::SubRep:
        if (r1 == rep) return integer(a - v);
        return n;
    case Kind::AddRepRep:
        if (r1 == rep) { n.kind = Kind::AddRep; n.a = a + v; n.r1 = r2; n.r2 = 0; return n; }
        if (r2 == rep) { n.kind = Kind::AddRep; n.a = a + v; n.r2 = 0; return n; }
        return n;
    case Kind::RepAddMul:
        if (r1 == rep) { n.kind = Kind::AddMul; n.a = v; n.r1 = r2; n.r2 = 0; return n; }
        if (r2 == rep) { n.kind = Kind::AddRep; n.a = b * v; n.r2 = 0; return n; }
        return n;
    }
    return n;
}

long Numex::eval(const std::map<char, long>& env) const {
    auto val = [&](char r) {
        auto it = env.find(r);
        if (it == env.end()) fail(std::string("unbound replicator '") + r + "'");
        return it->second;
    };
    long v = 0;
    switch (kind) {
    case Kind::Int: v = a; break;
    case Kind::Rep: v = val(r1); break;
    case Kind::MulRep: v = b * val(r1); break;
    case Kind::AddRep: v = a + val(r1); break;
    case Kind::AddMul: v = a + b * val(r1); break;
    case Kind::AddRepRep: v = a + val(r1) + val(r2); break;
    case Kind::SubRep: v = a - val(r1); break;
    case Kind::RepAddMul: v = val(r1) + b * val(r2); break;
    }
    if (v < 0) fail("numex " + str() + " evaluated to a negative value");
    return v;
}

std::string Numex::str() const {
    std::ostringstream o;
    switch (kind) {
    case Kind::Int: o << a; break;
    case Kind::Rep: o << r1; break;
    case Kind::MulRep: o << "(" << b << "*" << r1 << ")"; break;
    case Kind::AddRep: o << "(" << a << "+" << r1 << ")"; break;
    case Kind::AddMul: o << "(" << a << "+" << b << "*" << r1 << ")"; break;
    case Kind::AddRepRep: o << "(" << a << "+" << r1 << "+" << r2 << ")"; break;
    case Kind::SubRep: o << "(" << a << "-" << r1 << ")"; break;
    case Kind::RepAddMul: o << "(" << r1 << "+" << b << "*" << r2 << ")"; break;
    }
    return o.str();
}

long eval_numex(const Numex& nx, const std::map<char, long>& env) {
    return nx.eval(env);
}

Numex parse_numex(const std::string& text) {
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    if (s.empty()) fail("empty numex");
    if (s.front() == '(') {
        if (s.back() != ')') fail("unbalanced numex: " + text);
        s = s.substr(1, s.size() - 2);
    }
    // (integer-replicator) comes first: the generic splitter below only
    // handles '+' chains
    {
        auto minus = s.find('-');
        if (minus != std::string::npos && minus + 2 == s.size() && minus > 0 &&
            std::isalpha(static_cast<unsigned char>(s.back()))) {
            bool digits = true;
            for (std::size_t i = 0; i < minus; ++i)
                if (!std::isdigit(static_cast<unsigned char>(s[i]))) digits = false;
            if (digits) {
                Numex n;
                n.kind = Numex::Kind::SubRep;
                n.a = std::stol(s.substr(0, minus));
                n.r1 = s.back();
                return n;
            }
        }
    }
    // split on top-level + and - (no nesting per the fixed formats)
    struct Part { char sign; std::string text; };
    std::vector<Part> parts;
    char sign = '+';
    std::string cur;
    for (char c : s) {
        if (c == '+' || c == '-') {
            if (cur.empty()) fail("malformed numex: " + text);
            parts.push_back({sign, cur});
            cur.clear();
            sign = c;
        } else {
            cur += c;
        }
    }
    if (cur.empty()) fail("malformed numex: " + text);
    parts.push_back({sign, cur});

    struct Atom { bool is_int; long v; char rep; long coeff; bool has_coeff; };
    std::vector<Atom> atoms;
    for (const Part& p : parts) {
        auto star = p.text.find('*');
        Atom a{};
        if (star != std::string::npos) {
            const std::string l = p.text.substr(0, star), r = p.text.substr(star + 1);
            if (l.empty() || r.size() != 1 || !std::isalpha(static_cast<unsigned char>(r[0])))
                fail("malformed numex term: " + p.text);
            a.is_int = false;
            a.rep = r[0];
            a.coeff = std::stol(l);
            a.has_coeff = true;
        } else if (std::isalpha(static_cast<unsigned char>(p.text[0]))) {
            if (p.text.size() != 1) fail("replicators are single characters: " + p.text);
            a.is_int = false;
            a.rep = p.text[0];
            a.coeff = 1;
            a.has_coeff = false;
        } else {
            a.is_int = true;
            a.v = std::stol(p.text);
        }
        if (p.sign == '-' && !a.is_int)
            fail("numex only subtracts integers-minus-replicator: " + text);
        if (p.sign == '-') a.v = -a.v; // handled below for SubRep
        atoms.push_back(a);
    }

    Numex n;
    if (atoms.size() == 1) {
        const Atom& a = atoms[0];
        if (a.is_int) return Numex::integer(a.v);
        if (a.has_coeff) { n.kind = Numex::Kind::MulRep; n.b = a.coeff; n.r1 = a.rep; return n; }
        n.kind = Numex::Kind::Rep; n.r1 = a.rep; return n;
    }
    if (atoms.size() == 2) {
        const Atom &x = atoms[0], &y = atoms[1];
        if (x.is_int && !y.is_int) {
            if (parts[1].sign == '-') {
                // In "a-r" form the '-' applied to a replicator; rebuild.
                fail("unsupported numex: " + text);
            }
            if (y.has_coeff) { n.kind = Numex::Kind::AddMul; n.a = x.v; n.b = y.coeff; n.r1 = y.rep; }
            else { n.kind = Numex::Kind::AddRep; n.a = x.v; n.r1 = y.rep; }
            return n;
        }
        if (!x.is_int && !y.is_int && !x.has_coeff && y.has_coeff) {
            n.kind = Numex::Kind::RepAddMul; n.r1 = x.rep; n.b = y.coeff; n.r2 = y.rep;
            return n;
        }
        fail("unsupported numex: " + text);
    }
    if (atoms.size() == 3) {
        const Atom &x = atoms[0], &y = atoms[1], &z = atoms[2];
        if (x.is_int && !y.is_int && !z.is_int && !y.has_coeff && !z.has_coeff) {
            n.kind = Numex::Kind::AddRepRep; n.a = x.v; n.r1 = y.rep; n.r2 = z.rep;
            return n;
        }
    }
    fail("unsupported numex: " + text);
}

namespace {

// ---- tokenizer for the code section ----------------------------------------

struct Tok {
    enum class T { Ident, Int, Punct, End } t = T::End;
    std::string s;
    long v = 0;
};

class Lexer {
public:
    explicit Lexer(std::string text) : text_(std::move(text)) {}

    Tok peek() {
        if (!cached_) { cached_ = lex(); }
        return *cached_;
    }
    Tok next() {
        Tok t = peek();
        cached_.reset();
        return t;
    }
    bool accept_punct(const std::string& p) {
        Tok t = peek();
        if (t.t == Tok::T::Punct && t.s == p) { next(); return true; }
        return false;
    }
    void expect_punct(const std::string& p) {
        if (!accept_punct(p)) fail("expected '" + p + "' near '" + peek().s + "'");
    }

private:
    Tok lex() {
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == '/' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '/') {
                while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) { ++pos_; continue; }
            break;
        }
        if (pos_ >= text_.size()) return {};
        char c = text_[pos_];
        Tok t;
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            t.t = Tok::T::Ident;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                t.s += text_[pos_++];
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            t.t = Tok::T::Int;
            std::string num;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_])))
                num += text_[pos_++];
            t.v = std::stol(num);
            t.s = num;
            return t;
        }
        t.t = Tok::T::Punct;
        t.s = std::string(1, c);
        ++pos_;
        return t;
    }

    std::string text_;
    std::size_t pos_ = 0;
    std::optional<Tok> cached_;
};

// reads a numex: INT | IDENT | '(' ... ')'
Numex lex_numex(Lexer& lx) {
    Tok t = lx.peek();
    if (t.t == Tok::T::Int) { lx.next(); return Numex::integer(t.v); }
    if (t.t == Tok::T::Ident) {
        if (t.s.size() != 1) fail("replicator must be a single character: " + t.s);
        lx.next();
        Numex n;
        n.kind = Numex::Kind::Rep;
        n.r1 = t.s[0];
        return n;
    }
    if (t.t == Tok::T::Punct && t.s == "(") {
        lx.next();
        std::string inner;
        int depth = 1;
        while (depth > 0) {
            Tok u = lx.next();
            if (u.t == Tok::T::End) fail("unterminated numex");
            if (u.t == Tok::T::Punct && u.s == "(") ++depth;
            if (u.t == Tok::T::Punct && u.s == ")") {
                if (--depth == 0) break;
            }
            inner += u.s;
        }
        return parse_numex("(" + inner + ")");
    }
    fail("expected numex near '" + t.s + "'");
}

StorageKind storage_kind_of(const std::string& kw) {
    if (kw == "BITS") return StorageKind::Bit;
    if (kw == "BYTES") return StorageKind::Byte;
    if (kw == "WORDS") return StorageKind::Word;
    if (kw == "REGS") return StorageKind::Reg;
    if (kw == "OFSTS") return StorageKind::Ofst;
    if (kw == "DSTNS") return StorageKind::Dstn;
    if (kw == "BITAS") return StorageKind::Bita;
    fail("unknown storage type keyword: " + kw);
}

Interface interface_of(const std::string& s) {
    if (s == "input") return Interface::Input;
    if (s == "output") return Interface::Output;
    if (s == "ioput") return Interface::Ioput;
    if (s == "private") return Interface::Private;
    fail("unknown interface category: " + s);
}

} // namespace

const char* storage_kind_name(StorageKind k) {
    switch (k) {
    case StorageKind::Bit: return "BIT";
    case StorageKind::Byte: return "BYTE";
    case StorageKind::Word: return "WORD";
    case StorageKind::Reg: return "REG";
    case StorageKind::Ofst: return "OFST";
    case StorageKind::Dstn: return "DSTN";
    case StorageKind::Bita: return "BITA";
    }
    return "?";
}

const char* interface_name(Interface i) {
    switch (i) {
    case Interface::Input: return "input";
    case Interface::Output: return "output";
    case Interface::Ioput: return "ioput";
    case Interface::Private: return "private";
    }
    return "?";
}

// ---- parser -----------------------------------------------------------------

EarthModule parse_earth(const std::string& text) {
    EarthModule m;

    // Declarations are line oriented: KEYWORD: ... ;
    std::istringstream in(text);
    std::string line;
    std::string code_text;
    bool in_code = false;
    bool saw_time = false;
    while (std::getline(in, line)) {
        std::string stripped = line;
        auto cut = stripped.find("//");
        if (cut != std::string::npos) stripped.erase(cut);
        auto is_blank = [](const std::string& s) {
            return std::all_of(s.begin(), s.end(), [](unsigned char c) {
                return std::isspace(c);
            });
        };
        if (in_code) { code_text += stripped + "\n"; continue; }
        if (is_blank(stripped)) continue;

        std::istringstream ls(stripped);
        std::string kw;
        ls >> kw;
        if (!kw.empty() && kw.back() == ':') kw.pop_back();
        if (kw == "NAME") {
            std::string v;
            ls >> v;
            if (!v.empty() && v.back() == ';') v.pop_back();
            m.decls.name = v;
        } else if (kw == "META") {
            std::string v;
            ls >> v;
            if (!v.empty() && v.back() == ';') v.pop_back();
            m.decls.meta = std::stol(v);
        } else if (kw == "TIME") {
            std::string v;
            ls >> v;
            auto dash = v.find('-');
            if (dash == std::string::npos) fail("malformed TIME declaration");
            m.decls.time_min = std::stol(v.substr(0, dash));
            m.decls.time_max = std::stol(v.substr(dash + 1));
            saw_time = true;
            in_code = true; // TIME is last; code follows
        } else if (kw == "BITS" || kw == "BYTES" || kw == "WORDS" || kw == "REGS" ||
                   kw == "OFSTS" || kw == "DSTNS" || kw == "BITAS") {
            const StorageKind kind = storage_kind_of(kw);
            std::string rest;
            std::getline(ls, rest);
            // BITS may continue over several lines up to ';'
            while (rest.find(';') == std::string::npos) {
                std::string more;
                if (!std::getline(in, more)) fail("unterminated declaration: " + kw);
                auto c2 = more.find("//");
                if (c2 != std::string::npos) more.erase(c2);
                rest += " " + more;
            }
            rest.erase(rest.find(';'));
            std::istringstream names(rest);
            std::string entry;
            while (std::getline(names, entry, ',')) {
                std::istringstream es(entry);
                std::string name, iface;
                es >> name >> iface;
                if (name.empty() || iface.empty())
                    fail("malformed storage entry in " + kw + ": '" + entry + "'");
                m.decls.storage.push_back({kind, name, interface_of(iface)});
            }
        } else {
            fail("unknown declaration: " + kw);
        }
        if (m.decls.name.empty() && !in_code)
            fail("NAME must be the first declaration");
    }
    if (m.decls.name.empty()) fail("missing NAME declaration");
    if (!saw_time) fail("missing TIME declaration");

    bool has_busy = false, has_mbsy = false;
    for (const StorageDecl& d : m.decls.storage) {
        if (d.kind == StorageKind::Bit && d.name == "busy") has_busy = true;
        if (d.kind == StorageKind::Bit && d.name == "mbsy") has_mbsy = true;
    }
    if (!has_busy) fail("module " + m.decls.name + " declares no busy bit");
    if (m.decls.meta && !has_mbsy)
        fail("meta module " + m.decls.name + " declares no mbsy bit");
    for (std::size_t i = 0; i < m.decls.storage.size(); ++i)
        for (std::size_t j = i + 1; j < m.decls.storage.size(); ++j)
            if (m.decls.storage[i].name == m.decls.storage[j].name)
                fail("duplicate storage name " + m.decls.storage[i].name);

    // ---- code ----
    Lexer lx(code_text);
    std::vector<std::vector<EarthConstruct>*> stack;
    std::vector<ReplicativeStructure*> open;
    stack.push_back(&m.code);
    bool saw_endc = false;

    auto parse_dest = [&](EarthInstr& ins) {
        Tok t = lx.peek();
        if (t.t == Tok::T::Punct && t.s == "[") {
            lx.next();
            ins.dest.kind = Destination::Kind::Bracketed;
            ins.dest.line = lex_numex(lx);
            lx.expect_punct("]");
            ins.dest.bit = lex_numex(lx);
            return;
        }
        if (t.t == Tok::T::Int) {
            lx.next();
            ins.dest.kind = Destination::Kind::Absolute;
            ins.dest.absolute = t.v;
            ins.dest.bit = lex_numex(lx);
            return;
        }
        if (t.t == Tok::T::Ident) {
            lx.next();
            ins.dest.kind = Destination::Kind::Named;
            ins.dest.name = t.s;
            if (lx.accept_punct("."))
                ins.dest.bit = lex_numex(lx);
            return;
        }
        fail("expected destination near '" + t.s + "'");
    };

    while (true) {
        Tok t = lx.peek();
        if (t.t == Tok::T::End) break;
        if (t.t == Tok::T::Punct && t.s == "<") {
            lx.next();
            ReplicativeStructure rs;
            rs.left = lex_numex(lx);
            lx.expect_punct(";");
            Tok r = lx.next();
            if (r.t != Tok::T::Ident || r.s.size() != 1)
                fail("expected replicator in structure header");
            rs.replicator = r.s[0];
            lx.expect_punct(";");
            rs.right = lex_numex(lx);
            lx.expect_punct(">");
            while (lx.accept_punct("-")) rs.dashed = true;
            lx.expect_punct("{");
            EarthConstruct c;
            c.node = std::move(rs);
            stack.back()->push_back(std::move(c));
            ReplicativeStructure* ptr = &stack.back()->back().structure();
            open.push_back(ptr);
            stack.push_back(&ptr->body);
            continue;
        }
        if (t.t == Tok::T::Punct && t.s == "}") {
            lx.next();
            if (open.empty()) fail("unmatched '}'");
            open.pop_back();
            stack.pop_back();
            continue;
        }

        std::optional<Numex> linename;
        if (t.t == Tok::T::Int || (t.t == Tok::T::Punct && t.s == "(")) {
            linename = lex_numex(lx);
            t = lx.peek();
        }
        if (t.t != Tok::T::Ident)
            fail("expected instruction near '" + t.s + "'");
        lx.next();
        if (t.s == "endc") {
            if (linename) fail("endc may not carry a linename");
            saw_endc = true;
            break;
        }
        EarthInstr ins;
        if (t.s == "wrt0") ins.op = EOp::Wrt0;
        else if (t.s == "wrt1") ins.op = EOp::Wrt1;
        else if (t.s == "cond") ins.op = EOp::Cond;
        else if (t.s == "jump") ins.op = EOp::Jump;
        else fail("unknown instruction: " + t.s);
        if (ins.op == EOp::Jump) {
            ins.jump_line = lex_numex(lx);
            ins.jump_offset = lex_numex(lx);
        } else {
            parse_dest(ins);
        }
        EarthConstruct c;
        c.linename = linename;
        c.node = std::move(ins);
        stack.back()->push_back(std::move(c));
    }
    if (!open.empty()) fail("unterminated replicative structure");
    if (!saw_endc) fail("missing endc");
    return m;
}

// ---- replication --------------------------------------------------------------

namespace {

bool numex_has_two_reps(const Numex& n) { return n.rep_count() == 2; }

bool struct_has_two_rep_linename(const ReplicativeStructure& rs) {
    for (const EarthConstruct& c : rs.body) {
        if (c.linename && numex_has_two_reps(*c.linename)) return true;
        if (!c.is_line() && struct_has_two_rep_linename(c.structure())) return true;
    }
    return false;
}

// Visits every linename numex / destination numex in a construct list.
// Destination numexes are jump relative-numbers and bracketed line references.
template <typename FLine, typename FDest>
void visit_numexes(std::vector<EarthConstruct>& items, FLine on_linename,
                   FDest on_dest, const ReplicativeStructure* within = nullptr) {
    for (EarthConstruct& c : items) {
        if (c.linename) on_linename(*c.linename, within);
        if (c.is_line()) {
            EarthInstr& ins = c.instr();
            if (ins.op == EOp::Jump)
                on_dest(ins.jump_line, within);
            else if (ins.dest.kind == Destination::Kind::Bracketed)
                on_dest(ins.dest.line, within);
        } else {
            visit_numexes(c.structure().body, on_linename, on_dest, within);
        }
    }
}

// Substitutes rep := v through a construct, including structure bounds,
// bit indexes and jump offsets.
void subst_all(EarthConstruct& c, char rep, long v) {
    if (c.linename) *c.linename = c.linename->subst(rep, v);
    if (c.is_line()) {
        EarthInstr& ins = c.instr();
        if (ins.op == EOp::Jump) {
            ins.jump_line = ins.jump_line.subst(rep, v);
            ins.jump_offset = ins.jump_offset.subst(rep, v);
        } else {
            if (ins.dest.kind == Destination::Kind::Bracketed)
                ins.dest.line = ins.dest.line.subst(rep, v);
            if (ins.dest.bit) *ins.dest.bit = ins.dest.bit->subst(rep, v);
        }
    } else {
        ReplicativeStructure& rs = c.structure();
        rs.left = rs.left.subst(rep, v);
        rs.right = rs.right.subst(rep, v);
        for (EarthConstruct& b : rs.body) subst_all(b, rep, v);
    }
}

// Collects the linename numexes within s that mention s.rep (the slots).
void collect_slots(const ReplicativeStructure& rs, char rep,
                   std::vector<const Numex*>& out) {
    for (const EarthConstruct& c : rs.body) {
        if (c.linename && c.linename->contains(rep)) out.push_back(&*c.linename);
        if (!c.is_line()) collect_slots(c.structure(), rep, out);
    }
}

struct Expander {
    std::vector<EarthConstruct> items;

    // expands the last top-level structure; returns false when none remain
    bool expand_one() {
        int idx = -1;
        for (int i = int(items.size()) - 1; i >= 0; --i)
            if (!items[std::size_t(i)].is_line()) { idx = i; break; }
        if (idx < 0) return false;
        ReplicativeStructure rs = std::move(items[std::size_t(idx)].structure());
        auto linename = items[std::size_t(idx)].linename;
        if (linename) fail("replicative structures may not carry linenames");
        items.erase(items.begin() + idx);
        if (struct_has_two_rep_linename(rs))
            expand_terminal(rs, std::size_t(idx));
        else
            expand_atomic(rs, std::size_t(idx));
        return true;
    }

    void expand_atomic(ReplicativeStructure& rs, std::size_t at) {
        const long l = rs.left.eval({});
        const long r = rs.right.eval({});
        if (l > r) fail("structure leftlimit exceeds rightlimit");
        const long copies = r - l + 1;

        std::vector<const Numex*> slots;
        collect_slots(rs, rs.replicator, slots);
        const long m = long(slots.size()) * (copies - 1);
        long floor = std::numeric_limits<long>::min();
        for (const Numex* s : slots) floor = std::max(floor, s->leading());

        if (m > 0) {
            // Bump leading numbers > floor everywhere; inside the structure a
            // dash protects replicative destination numexes.
            auto bump_linename = [&](Numex& n, const ReplicativeStructure* within) {
                if (within == &rs && n.contains(rs.replicator)) return; // slot
                if (n.leading() > floor) n.bump(m);
            };
            auto bump_dest = [&](Numex& n, const ReplicativeStructure* within) {
                if (within == &rs && n.contains(rs.replicator)) {
                    if (!rs.dashed && n.leading() > floor) n.bump(m);
                    return;
                }
                if (n.leading() > floor) n.bump(m);
            };
            visit_numexes(items, bump_linename, bump_dest);
            // the structure's own body (about to be cloned)
            std::vector<EarthConstruct> tmp;
            tmp.swap(rs.body);
            visit_numexes(tmp, bump_linename, bump_dest, &rs);
            tmp.swap(rs.body);
        }

        std::vector<EarthConstruct> out;
        for (long v = l; v <= r; ++v) {
            for (const EarthConstruct& proto : rs.body) {
                EarthConstruct c = proto;
                if (v != l && c.linename && !c.linename->contains(rs.replicator))
                    c.linename.reset();
                subst_all(c, rs.replicator, v);
                out.push_back(std::move(c));
            }
        }
        items.insert(items.begin() + long(at),
                     std::make_move_iterator(out.begin()),
                     std::make_move_iterator(out.end()));
    }

    // A two-replicator-linename structure: expanded copy by copy with a
    // cumulative offset so each outer copy's names continue the numbering
    // (4.5.7; the programmer keeps destination numexes like (8+9*j) in step).
    void expand_terminal(ReplicativeStructure& rs, std::size_t at) {
        if (at != items.size())
            fail("a structure with two-replicator linenames must end the module");
        const long l = rs.left.eval({});
        const long r = rs.right.eval({});
        if (l > r) fail("structure leftlimit exceeds rightlimit");

        // leading progression between consecutive outer copies
        long prog = 1;
        {
            std::vector<const Numex*> slots;
            collect_slots(rs, rs.replicator, slots);
            if (slots.empty()) fail("terminal structure has no replicative linenames");
            const Numex* first = slots.front();
            prog = first->subst(rs.replicator, l + 1).leading() -
                   first->subst(rs.replicator, l).leading();
        }

        long delta = 0;
        for (long v = l; v <= r; ++v) {
            std::vector<EarthConstruct> copy;
            for (const EarthConstruct& proto : rs.body) {
                EarthConstruct c = proto;
                if (v != l && c.linename && !c.linename->contains(rs.replicator))
                    c.linename.reset();
                // record which numexes mention the outer replicator before
                // substitution; only those take the cumulative offset
                std::vector<Numex*> shifted;
                {
                    std::vector<EarthConstruct> one;
                    one.push_back(std::move(c));
                    auto mark = [&](Numex& n, const ReplicativeStructure*) {
                        if (n.contains(rs.replicator)) shifted.push_back(&n);
                    };
                    visit_numexes(one, mark, mark);
                    for (Numex* n : shifted)
                        n->bump(delta);
                    c = std::move(one.front());
                }
                subst_all(c, rs.replicator, v);
                copy.push_back(std::move(c));
            }
            // expand this copy in isolation: increments arising inside the
            // terminal structure stay within it (4.5.7 leaves cross links
            // like paror32's (8+9*j) to the programmer)
            Expander local;
            local.items = std::move(copy);
            while (true) {
                int idx = -1;
                for (int i = int(local.items.size()) - 1; i >= 0; --i)
                    if (!local.items[std::size_t(i)].is_line()) { idx = i; break; }
                if (idx < 0) break;
                ReplicativeStructure inner =
                    std::move(local.items[std::size_t(idx)].structure());
                local.items.erase(local.items.begin() + idx);
                local.expand_atomic(inner, std::size_t(idx));
            }
            long names = 0;
            for (const EarthConstruct& c : local.items)
                if (c.linename) ++names;
            items.insert(items.end(),
                         std::make_move_iterator(local.items.begin()),
                         std::make_move_iterator(local.items.end()));
            delta += names - prog;
        }
    }
};

} // namespace

std::vector<FlatLine> replicate(const EarthModule& module) {
    // Monotonicity precondition (4.5.2) for modules with replicative linenames.
    {
        std::vector<long> leadings;
        bool any_rep = false;
        std::vector<const EarthConstruct*> todo;
        std::function<void(const std::vector<EarthConstruct>&)> walk =
            [&](const std::vector<EarthConstruct>& items) {
                for (const EarthConstruct& c : items) {
                    if (c.linename) {
                        leadings.push_back(c.linename->leading());
                        if (c.linename->replicative()) any_rep = true;
                    }
                    if (!c.is_line()) walk(c.structure().body);
                }
            };
        walk(module.code);
        if (any_rep)
            for (std::size_t i = 1; i < leadings.size(); ++i)
                if (leadings[i] < leadings[i - 1])
                    fail("linename leading numbers must not decrease (got " +
                         std::to_string(leadings[i - 1]) + " -> " +
                         std::to_string(leadings[i]) + ")");
        // at most one two-replicator structure, and only at the end
        int terminals = 0;
        for (std::size_t i = 0; i < module.code.size(); ++i) {
            const EarthConstruct& c = module.code[i];
            if (!c.is_line() && struct_has_two_rep_linename(c.structure())) {
                ++terminals;
                if (i + 1 != module.code.size())
                    fail("two-replicator linename structure must be the last construct");
            }
        }
        if (terminals > 1)
            fail("only one two-replicator linename structure is supported");
    }

    Expander ex;
    ex.items = module.code;
    while (ex.expand_one()) {}

    std::vector<FlatLine> flat;
    flat.reserve(ex.items.size());
    for (EarthConstruct& c : ex.items) {
        FlatLine fl;
        if (c.linename) fl.linename = c.linename->eval({});
        fl.instr = c.instr();
        flat.push_back(std::move(fl));
    }
    return flat;
}

// ---- resolve -------------------------------------------------------------------

namespace {

std::uint32_t kind_width(StorageKind k) {
    switch (k) {
    case StorageKind::Bit: return 1;
    case StorageKind::Byte: return 8;
    case StorageKind::Word: return 16;
    case StorageKind::Reg: return 32;
    case StorageKind::Ofst: return 5;
    case StorageKind::Dstn: return 25;
    case StorageKind::Bita: return 30;
    }
    return 0;
}

} // namespace

const Symbol* CompiledModule::find_symbol(const std::string& n) const {
    for (const Symbol& s : symbols)
        if (s.name == n) return &s;
    return nullptr;
}

CompiledModule resolve(const EarthModule& module, const CompileOptions& opt) {
    CompiledModule cm;
    cm.name = module.decls.name;
    cm.meta = module.decls.meta.has_value();
    cm.time_min = module.decls.time_min;
    cm.time_max = module.decls.time_max;

    std::vector<FlatLine> flat = replicate(module);
    cm.code_len = std::uint32_t(flat.size());

    // storage packing: categories in textual order, entries packed per kind
    std::vector<StorageKind> category_order;
    for (const StorageDecl& d : module.decls.storage)
        if (std::find(category_order.begin(), category_order.end(), d.kind) ==
            category_order.end())
            category_order.push_back(d.kind);

    std::uint32_t next_reg = 0;
    for (StorageKind k : category_order) {
        std::uint32_t used_bits = 0;
        const std::uint32_t per_reg =
            k == StorageKind::Bit ? 32 : k == StorageKind::Byte ? 4
            : k == StorageKind::Word ? 2 : 1;
        std::uint32_t packed = 0;
        for (const StorageDecl& d : module.decls.storage) {
            if (d.kind != k) continue;
            if (packed == per_reg) { packed = 0; used_bits = 0; ++next_reg; }
            Symbol s;
            s.name = d.name;
            s.kind = k;
            s.interface = d.interface;
            s.width = kind_width(k);
            s.reg = next_reg;
            switch (k) {
            case StorageKind::Bit: s.bit = used_bits; used_bits += 1; break;
            case StorageKind::Byte: s.bit = used_bits; used_bits += 8; break;
            case StorageKind::Word: s.bit = used_bits; used_bits += 16; break;
            case StorageKind::Reg: s.bit = 0; break;
            case StorageKind::Ofst: s.bit = 0; break;
            case StorageKind::Dstn: s.bit = 5; break;
            case StorageKind::Bita: s.bit = 0; break;
            }
            ++packed;
            cm.symbols.push_back(s);
        }
        if (packed) ++next_reg;
    }
    cm.storage_len = next_reg;

    // linename -> register
    std::map<long, std::uint32_t> line_reg;
    for (std::size_t i = 0; i < flat.size(); ++i)
        if (flat[i].linename) {
            if (!line_reg.emplace(*flat[i].linename, std::uint32_t(i + 1)).second)
                fail("duplicate linename " + std::to_string(*flat[i].linename) +
                     " in " + cm.name);
            cm.linename_registers.push_back({*flat[i].linename, std::uint32_t(i + 1)});
        }

    const aram::MachineConfig enc_cfg; // p = 5 encoding is machine-size agnostic
    const std::uint32_t storage_base = cm.code_len + 1;

    auto line_addr = [&](long n) {
        auto it = line_reg.find(n);
        if (it == line_reg.end())
            fail("jump to nonexistent linename " + std::to_string(n) + " in " + cm.name);
        return it->second;
    };

    for (const FlatLine& fl : flat) {
        const EarthInstr& ins = fl.instr;
        aram::DecodedInstruction out{};
        bool reloc = true;
        std::uint8_t busy = 0;
        if (ins.op == EOp::Jump) {
            out.opcode = aram::Opcode::Jump;
            out.x = line_addr(ins.jump_line.eval({}));
            const long off = ins.jump_offset.eval({});
            if (off < 0 || off > 31) fail("jump offset out of range in " + cm.name);
            out.y = std::uint32_t(off);
        } else {
            out.opcode = ins.op == EOp::Wrt0   ? aram::Opcode::Wrt0
                         : ins.op == EOp::Wrt1 ? aram::Opcode::Wrt1
                                               : aram::Opcode::Cond;
            long bit = ins.dest.bit ? ins.dest.bit->eval({}) : 0;
            switch (ins.dest.kind) {
            case Destination::Kind::Named: {
                const Symbol* s = cm.find_symbol(ins.dest.name);
                if (!s)
                    fail("unknown storage name '" + ins.dest.name + "' in " + cm.name);
                if (!ins.dest.bit && s->width != 1)
                    fail("storage '" + ins.dest.name + "' needs a bit index");
                if (bit >= long(s->width) && opt.warnings_to_stderr)
                    std::cerr << "earth: warning: " << cm.name << ": bit index "
                              << bit << " exceeds " << storage_kind_name(s->kind)
                              << " width of '" << s->name << "'\n";
                if (s->bit + bit > 31)
                    fail("bit index out of range for '" + ins.dest.name + "'");
                out.x = storage_base + s->reg;
                out.y = std::uint32_t(s->bit + bit);
                if (s->name == "busy") busy = 1;
                if (s->name == "mbsy") busy = 2;
                break;
            }
            case Destination::Kind::Bracketed:
                out.x = line_addr(ins.dest.line.eval({}));
                if (bit < 0 || bit > 31) fail("bracketed offset out of range");
                out.y = std::uint32_t(bit);
                break;
            case Destination::Kind::Absolute:
                if (opt.warnings_to_stderr)
                    std::cerr << "earth: warning: " << cm.name
                              << ": absolute addressing of register "
                              << ins.dest.absolute << "\n";
                out.x = std::uint32_t(ins.dest.absolute);
                out.y = std::uint32_t(bit);
                reloc = false;
                break;
            }
        }
        cm.words.push_back(aram::encode(out, enc_cfg));
        cm.relocatable.push_back(reloc);
        cm.busy_ref.push_back(busy);
    }
    return cm;
}

CompiledModule compile_earth(const std::string& text, const CompileOptions& opt) {
    return resolve(parse_earth(text), opt);
}

std::vector<std::uint32_t>
CompiledModule::standalone_words(const aram::MachineConfig&) const {
    return words;
}

std::vector<std::uint32_t>
CompiledModule::relocated_words(std::uint32_t base,
                                const aram::MachineConfig& cfg) const {
    std::vector<std::uint32_t> out = words;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (relocatable[i]) {
            aram::DecodedInstruction d = aram::decode(out[i], cfg);
            d.x += base;
            out[i] = aram::encode(d, cfg);
        }
    return out;
}

std::string disassemble(const CompiledModule& m, const aram::MachineConfig& cfg) {
    static const char* names[] = {"wrt0", "wrt1", "cond", "jump"};
    std::ostringstream out;
    for (std::size_t i = 0; i < m.words.size(); ++i) {
        const aram::DecodedInstruction d = aram::decode(m.words[i], cfg);
        out << (i + 1) << "\t" << names[static_cast<int>(d.opcode)] << " " << d.x
            << " " << d.y << "\n";
    }
    return out.str();
}

} // namespace spatiale::earth
