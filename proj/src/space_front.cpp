#include "spatiale/library.hpp"
#include "spatiale/space.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>
#include <stdexcept>

namespace spatiale::space {

namespace {
[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("space: " + msg);
}
} // namespace

// ---- IdentExpr copying -------------------------------------------------------

IdentExpr::IdentExpr(const IdentExpr& o)
    : kind(o.kind), label(o.label), indices(o.indices), sub_label(o.sub_label),
      sub_indices(o.sub_indices), selector(o.selector),
      selector_inc(o.selector_inc), number(o.number), imm_inc(o.imm_inc),
      chr(o.chr), type_name(o.type_name) {
    if (o.inner) inner = std::make_unique<IdentExpr>(*o.inner);
}

IdentExpr& IdentExpr::operator=(const IdentExpr& o) {
    if (this == &o) return *this;
    IdentExpr tmp(o);
    *this = std::move(tmp);
    return *this;
}

// ---- type library -------------------------------------------------------------

TypeLibrary::TypeLibrary() {
    auto level0 = [&](const char* n) {
        TypeDef d;
        d.name = n;
        d.level = 0;
        d.registers = 1;
        types_.push_back(d);
    };
    for (const char* n : {"BIT", "BYTE", "WORD", "REG", "OFST", "DSTN", "BITA"})
        level0(n);
    auto level1 = [&](const char* n, const char* member, const char* label) {
        TypeDef d;
        d.name = n;
        d.level = 1;
        d.registers = 1;
        d.members.push_back({member, label, Aggregate::Singleton, {}});
        types_.push_back(d);
    };
    level1("unsigned", "REG", "register");
    level1("int", "REG", "register");
    level1("char", "BYTE", "byte");
    level1("float", "REG", "register");
}

const TypeDef* TypeLibrary::find(const std::string& name) const {
    for (const TypeDef& t : types_)
        if (t.name == name) return &t;
    return nullptr;
}

const TypeDef& TypeLibrary::get(const std::string& name) const {
    const TypeDef* t = find(name);
    if (!t) fail("unknown type: " + name);
    return *t;
}

std::uint32_t member_registers(const TypeLibrary& lib, const TypeMember& m) {
    const std::uint32_t r = lib.get(m.type).registers;
    switch (m.aggregate) {
    case Aggregate::Singleton: return r;
    case Aggregate::Pointer: return 1;
    case Aggregate::Array: {
        long n = 1;
        for (long d : m.dims) n *= d;
        return std::uint32_t(r * n + 4);
    }
    case Aggregate::Blockstring: return std::uint32_t(r * m.dims.at(0) + 4);
    }
    return 0;
}

void TypeLibrary::add(const TypeDef& def) {
    if (find(def.name)) fail("type " + def.name + " already exists (editing is not allowed)");
    TypeDef d = def;
    d.registers = 0;
    d.level = 0;
    std::vector<std::string> seen;
    for (const TypeMember& m : d.members) {
        const TypeDef& mt = get(m.type);
        if (std::find(seen.begin(), seen.end(), m.label) != seen.end())
            fail("duplicate member label " + m.label + " in type " + d.name);
        seen.push_back(m.label);
        d.registers += member_registers(*this, m);
        d.level = std::max(d.level, mt.level + 1);
    }
    if (d.level > 50) fail("type level exceeds 50");
    types_.push_back(d);
}

std::vector<std::string> TypeLibrary::names() const {
    std::vector<std::string> out;
    for (const TypeDef& t : types_) out.push_back(t.name);
    return out;
}

// ---- line addresses -------------------------------------------------------------

std::string LineAddr::str() const {
    std::string s;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) s += ".";
        s += std::to_string(parts[i]);
    }
    return s;
}

LineAddr LineAddr::parent() const {
    LineAddr p = *this;
    if (!p.parts.empty()) p.parts.pop_back();
    return p;
}

LineAddr parse_line_addr(const std::string& s) {
    LineAddr a;
    std::istringstream in(s);
    std::string part;
    while (std::getline(in, part, '.')) {
        if (part.empty()) fail("bad line address: " + s);
        a.parts.push_back(std::stoi(part));
    }
    if (a.parts.empty()) fail("bad line address: " + s);
    return a;
}

// ---- indexical functions ----------------------------------------------------------

long eval_indexical(const IncExpr& e, const std::map<char, long>& env) {
    auto it = env.find(e.rep);
    if (it == env.end()) fail(std::string("unbound replicator '") + e.rep + "'");
    const long i = it->second;
    const std::string& f = e.fn;
    if (f.empty() || f == "id") return i;
    if (f == "inc") return i + 1;
    if (f == "plus2") return i + 2;
    if (f == "dec") {
        if (i == 0) fail("dec of zero");
        return i - 1;
    }
    if (f == "2*") return 2 * i;
    if (f == "2*+1") return 2 * i + 1;
    if (f == "2^") return 1L << i;
    if (f == "div2") return i >> 1;
    fail("unknown indexical function: " + f);
}

// ---- tokenizer --------------------------------------------------------------------

namespace {

struct STok {
    enum class T { Ident, Int, Float, Punct, End } t = T::End;
    std::string s;
    long v = 0;
};

class SLexer {
public:
    explicit SLexer(std::string text) : text_(std::move(text)) {}

    STok peek() {
        if (!cached_) cached_ = lex();
        return *cached_;
    }
    STok next() {
        STok t = peek();
        cached_.reset();
        return t;
    }
    bool accept(const std::string& p) {
        STok t = peek();
        if ((t.t == STok::T::Punct || t.t == STok::T::Ident) && t.s == p) {
            next();
            return true;
        }
        return false;
    }
    void expect(const std::string& p) {
        if (!accept(p)) fail("expected '" + p + "' near '" + peek().s + "'");
    }
    std::string expect_ident() {
        STok t = next();
        if (t.t != STok::T::Ident) fail("expected identifier near '" + t.s + "'");
        return t.s;
    }
    long expect_int() {
        STok t = next();
        if (t.t != STok::T::Int) fail("expected integer near '" + t.s + "'");
        return t.v;
    }

private:
    STok lex() {
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
        STok t;
        if (std::isalpha(static_cast<unsigned char>(c))) {
            t.t = STok::T::Ident;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_]))))
                t.s += text_[pos_++];
            return t;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            std::string num;
            while (pos_ < text_.size() &&
                   std::isdigit(static_cast<unsigned char>(text_[pos_])))
                num += text_[pos_++];
            if (pos_ + 1 < text_.size() && text_[pos_] == '.' &&
                std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
                // could be a float immediate or a dotted line address; the
                // caller disambiguates, so return the raw spelling
                std::string frac = ".";
                ++pos_;
                while (pos_ < text_.size() &&
                       (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
                        text_[pos_] == '.'))
                    frac += text_[pos_++];
                t.t = STok::T::Float;
                t.s = num + frac;
                return t;
            }
            t.t = STok::T::Int;
            t.s = num;
            t.v = std::stol(num);
            return t;
        }
        // multi-char punctuation
        auto two = text_.substr(pos_, 2);
        if (two == "::" || two == ";;" || two == ":>" || two == "->" ||
            two == "__" || two == ">=" || two == "<=" || two == "<<" ||
            two == "[[" || two == "]]") {
            pos_ += 2;
            t.t = STok::T::Punct;
            t.s = two;
            return t;
        }
        t.t = STok::T::Punct;
        t.s = std::string(1, c);
        ++pos_;
        return t;
    }

    std::string text_;
    std::size_t pos_ = 0;
    std::optional<STok> cached_;
};

std::string parse_fn_name(SLexer& lx) {
    STok f = lx.next();
    if (f.t == STok::T::Ident) return f.s;
    if (f.t == STok::T::Int && f.v == 2) {
        if (lx.accept("*")) {
            if (lx.accept("+")) {
                if (lx.expect_int() != 1) fail("unknown indexical function");
                return "2*+1";
            }
            return "2*";
        }
        if (lx.accept("^")) return "2^";
    }
    fail("expected indexical function near '" + f.s + "'");
}

std::variant<long, IncExpr> parse_coord(SLexer& lx) {
    STok t = lx.peek();
    if (t.t == STok::T::Int) {
        lx.next();
        return t.v;
    }
    std::string id = lx.expect_ident();
    if (id.size() != 1) fail("replicator must be a single character: " + id);
    IncExpr e;
    e.rep = id[0];
    if (lx.accept("/")) e.fn = parse_fn_name(lx);
    return e;
}

std::vector<std::variant<long, IncExpr>> parse_indices(SLexer& lx) {
    std::vector<std::variant<long, IncExpr>> out;
    while (lx.peek().t == STok::T::Punct && lx.peek().s == "[") {
        lx.next();
        out.push_back(parse_coord(lx));
        lx.expect("]");
    }
    return out;
}

bool is_cell_id(const std::string& s) {
    return s == "destn" || s == "offst" || s == "btadd" || s == "byte0" ||
           s == "byte1" || s == "byte2" || s == "byte3" || s == "word0" ||
           s == "word1";
}

IdentExpr parse_place(SLexer& lx, const SpaceModuleAST& ast);

IdentExpr parse_ident_expr(SLexer& lx, const SpaceModuleAST& ast) {
    STok t = lx.peek();
    if (t.t == STok::T::Punct && t.s == "#") {
        lx.next();
        IdentExpr e;
        e.kind = IdentExpr::Kind::ImmediateNum;
        STok v = lx.peek();
        if (v.t == STok::T::Int) {
            lx.next();
            e.number = v.v;
        } else if (v.t == STok::T::Float) {
            fail("float immediates are reserved until the float library lands");
        } else if (v.t == STok::T::Punct && v.s == "-") {
            lx.next();
            e.number = -lx.expect_int();
        } else {
            auto c = parse_coord(lx);
            e.imm_inc = std::get<IncExpr>(c);
        }
        return e;
    }
    if (t.t == STok::T::Punct && t.s == "@") {
        lx.next();
        IdentExpr e;
        e.kind = IdentExpr::Kind::ImmediateChar;
        std::string id = lx.expect_ident();
        if (id.size() != 1) fail("char immediate must be a single character");
        e.chr = id[0];
        return e;
    }
    if (t.t == STok::T::Punct && t.s == "(") {
        lx.next();
        IdentExpr e;
        e.kind = IdentExpr::Kind::Direct;
        e.number = lx.expect_int();
        lx.expect(")");
        return e;
    }
    if (t.t == STok::T::Punct && t.s == "$") {
        lx.next();
        IdentExpr e;
        e.kind = IdentExpr::Kind::SizeOf;
        e.type_name = lx.expect_ident();
        return e;
    }
    if (t.t == STok::T::Punct && t.s == "&") {
        lx.next();
        IdentExpr e;
        e.kind = IdentExpr::Kind::Address;
        e.inner = std::make_unique<IdentExpr>(parse_place(lx, ast));
        return e;
    }
    return parse_place(lx, ast);
}

IdentExpr parse_place(SLexer& lx, const SpaceModuleAST& ast) {
    IdentExpr e;
    e.label = lx.expect_ident();
    // array aggregate parameter label[[k]]
    if (lx.peek().t == STok::T::Punct && lx.peek().s == "[[") {
        lx.next();
        e.kind = IdentExpr::Kind::ArrayAgg;
        e.number = lx.expect_int();
        lx.expect("]]");
        return e;
    }
    e.indices = parse_indices(lx);
    const bool is_submodule =
        std::any_of(ast.submodules.begin(), ast.submodules.end(),
                    [&](const SubmoduleDecl& d) { return d.label == e.label; });
    if (is_submodule) {
        e.kind = IdentExpr::Kind::Secondary;
        lx.expect(".");
        e.sub_label = lx.expect_ident();
        e.sub_indices = parse_indices(lx);
        if (lx.accept(".")) {
            STok s = lx.peek();
            if (s.t == STok::T::Int) {
                lx.next();
                e.selector = std::to_string(s.v);
            } else if (s.t == STok::T::Ident && is_cell_id(s.s)) {
                lx.next();
                e.selector = s.s;
            } else {
                auto c = parse_coord(lx);
                e.selector_inc = std::get<IncExpr>(c);
                e.selector = "?";
            }
        }
        return e;
    }
    e.kind = IdentExpr::Kind::Primary;
    if (lx.accept(".")) {
        STok s = lx.peek();
        if (s.t == STok::T::Int) {
            lx.next();
            e.selector = std::to_string(s.v);
        } else if (s.t == STok::T::Ident && is_cell_id(s.s)) {
            lx.next();
            e.selector = s.s;
        } else {
            auto c = parse_coord(lx);
            e.selector_inc = std::get<IncExpr>(c);
            e.selector = "?";
        }
    }
    return e;
}

LineAddr parse_addr_tok(SLexer& lx) {
    STok t = lx.next();
    if (t.t == STok::T::Int) return LineAddr{{int(t.v)}};
    if (t.t == STok::T::Float) return parse_line_addr(t.s);
    fail("expected line address near '" + t.s + "'");
}

std::pair<LineAddr, long> parse_addr_offset(SLexer& lx) {
    lx.expect("(");
    LineAddr a = parse_addr_tok(lx);
    lx.expect(",");
    long o = lx.expect_int();
    lx.expect(")");
    return {a, o};
}

ConstructLine parse_construct(SLexer& lx, const SpaceModuleAST& ast,
                              const LineAddr& addr) {
    ConstructLine c;
    c.addr = addr;
    STok t = lx.peek();
    if (t.t == STok::T::Ident && t.s == "deep") {
        c.kind = ConstructLine::Kind::Deep;
        while (lx.peek().t == STok::T::Ident && lx.peek().s == "deep") {
            lx.next();
            lx.expect("<");
            DeepClause cl;
            std::string rep = lx.expect_ident();
            if (rep.size() != 1) fail("replicator must be a single character");
            cl.rep = rep[0];
            lx.expect("=");
            cl.left = parse_coord(lx);
            lx.expect(";");
            std::string rep2 = lx.expect_ident();
            if (rep2.size() != 1 || rep2[0] != cl.rep)
                fail("deep clause comparator must test its own replicator");
            STok cmp = lx.next();
            if (cmp.s != ">=" && cmp.s != "<=" && cmp.s != "<<" && cmp.s != ">")
                fail("bad comparator: " + cmp.s);
            cl.cmp = cmp.s;
            cl.right = parse_coord(lx);
            lx.expect(";");
            cl.fn = parse_fn_name(lx);
            lx.expect(">");
            c.clauses.push_back(cl);
        }
    } else if (t.t == STok::T::Ident && (t.s == "while" || t.s == "dowhile")) {
        lx.next();
        c.kind = t.s == "while" ? ConstructLine::Kind::While
                                : ConstructLine::Kind::DoWhile;
        lx.expect("_");
        c.bit = parse_ident_expr(lx, ast);
    } else if (t.t == STok::T::Ident && (t.s == "grow" || t.s == "switch")) {
        fail(t.s + " constructs are not supported in this implementation");
    } else {
        fail("unknown construct near '" + t.s + "'");
    }
    lx.expect("(");
    if (!lx.accept(")")) {
        JumpElem e;
        e.a = parse_addr_tok(lx);
        lx.expect(",");
        e.o = lx.expect_int();
        lx.expect(")");
        c.egress = e;
    }
    return c;
}

Column parse_column(SLexer& lx, SpaceModuleAST& ast) {
    Column col;
    bool first = true;
    while (true) {
        STok t = lx.peek();
        if (first) {
            // column kind from the first element
            if (t.t == STok::T::Punct && (t.s == "_" || t.s == "__" || t.s == "-"))
                col.kind = ColumnKind::Activate;
            else if (t.t == STok::T::Ident && t.s == "cond")
                col.kind = ColumnKind::Cond;
            else if (t.t == STok::T::Ident && t.s == "jump")
                col.kind = ColumnKind::Jump;
            else if (t.t == STok::T::Ident && t.s == "skip")
                col.kind = ColumnKind::Skip;
            else if (t.t == STok::T::Ident && t.s == "wait")
                col.kind = ColumnKind::Wait;
            else if (t.t == STok::T::Ident && t.s == "subhalt")
                col.kind = ColumnKind::Subhalt;
            else if (t.t == STok::T::Ident && (t.s == "HALT" || t.s == "-HALT"))
                col.kind = ColumnKind::Halt;
            else
                col.kind = ColumnKind::Copy;
            first = false;
        }
        switch (col.kind) {
        case ColumnKind::Copy: {
            CopyElem e;
            e.src = parse_ident_expr(lx, ast);
            lx.expect("->");
            e.dst = parse_ident_expr(lx, ast);
            col.copies.push_back(std::move(e));
            break;
        }
        case ColumnKind::Activate: {
            ActivateElem e;
            if (lx.accept("__")) e.double_underscore = true;
            else if (lx.accept("-")) e.meta_phase2 = true;
            else lx.expect("_");
            e.label = lx.expect_ident();
            if (e.meta_phase2 && e.label == "HALT") {
                if (!col.activates.empty())
                    fail("-HALT must be the only element of its column");
                col.kind = ColumnKind::Halt;
                col.halt.meta = true;
                break;
            }
            e.indices = parse_indices(lx);
            col.activates.push_back(std::move(e));
            break;
        }
        case ColumnKind::Cond: {
            lx.expect("cond");
            lx.expect("_");
            CondElem e;
            e.bit = parse_ident_expr(lx, ast);
            auto p1 = parse_addr_offset(lx);
            e.a1 = p1.first;
            e.o1 = p1.second;
            auto p2 = parse_addr_offset(lx);
            e.a2 = p2.first;
            e.o2 = p2.second;
            col.conds.push_back(std::move(e));
            break;
        }
        case ColumnKind::Jump: {
            lx.expect("jump");
            auto p = parse_addr_offset(lx);
            col.jumps.push_back({p.first, p.second});
            break;
        }
        case ColumnKind::Skip: {
            lx.expect("skip");
            lx.expect("(");
            col.skips.push_back({parse_addr_tok(lx)});
            lx.expect(")");
            break;
        }
        case ColumnKind::Wait: {
            lx.expect("wait");
            lx.expect("(");
            col.wait.cycles = lx.expect_int();
            lx.expect(")");
            break;
        }
        case ColumnKind::Subhalt: {
            lx.expect("subhalt");
            lx.expect("(");
            col.subhalt.a = parse_addr_tok(lx);
            lx.expect(")");
            break;
        }
        case ColumnKind::Halt: {
            lx.expect("HALT");
            col.halt.meta = false;
            break;
        }
        }
        if (!lx.accept(",")) break;
    }
    return col;
}

} // namespace

// ---- typedef files -------------------------------------------------------------

void TypeLibrary::add_typedef_text(const std::string& text) {
    SLexer lx(text);
    lx.expect("begintypes");
    while (!lx.accept("endtypes")) {
        TypeDef d;
        d.name = lx.expect_ident();
        lx.expect("{");
        while (!lx.accept("}")) {
            TypeMember m;
            m.type = lx.expect_ident();
            m.label = lx.expect_ident();
            if (lx.peek().s == "[") {
                m.aggregate = Aggregate::Array;
                for (auto& ix : parse_indices(lx))
                    m.dims.push_back(std::get<long>(ix));
                if (m.dims.size() > 3) fail("arrays have at most three dimensions");
            } else if (lx.accept("<")) {
                m.aggregate = Aggregate::Blockstring;
                m.dims.push_back(lx.expect_int());
                lx.expect(">");
            } else if (lx.accept("*")) {
                m.aggregate = Aggregate::Pointer;
            }
            lx.expect(";");
            d.members.push_back(std::move(m));
        }
        lx.expect(";");
        add(d);
    }
}

// ---- read phase -----------------------------------------------------------------

SpaceModuleAST read_phase(const std::string& text, const TypeLibrary& types,
                          const ModuleLibrary& lib) {
    SpaceModuleAST ast;
    SLexer lx(text);
    lx.expect("module");
    ast.name = lx.expect_ident();
    lx.expect("{");

    lx.expect("storage");
    lx.expect("{");
    while (!lx.accept("}")) {
        StorageEntity e;
        e.type = lx.expect_ident();
        e.label = lx.expect_ident();
        if (lx.peek().s == "[") {
            e.aggregate = Aggregate::Array;
            for (auto& ix : parse_indices(lx))
                e.dims.push_back(std::get<long>(ix));
            if (e.dims.size() > 3) fail("arrays have at most three dimensions");
        } else if (lx.accept("<")) {
            e.aggregate = Aggregate::Blockstring;
            e.dims.push_back(lx.expect_int());
            lx.expect(">");
        } else if (lx.accept("*")) {
            e.aggregate = Aggregate::Pointer;
        }
        std::string iface = lx.expect_ident();
        if (iface == "input") e.interface = earth::Interface::Input;
        else if (iface == "output") e.interface = earth::Interface::Output;
        else if (iface == "ioput") e.interface = earth::Interface::Ioput;
        else if (iface == "private") e.interface = earth::Interface::Private;
        else fail("unknown interface category: " + iface);
        lx.expect(";");
        if (!types.find(e.type)) fail("unknown storage type: " + e.type);
        for (const StorageEntity& prev : ast.storage)
            if (prev.label == e.label) fail("duplicate storage label: " + e.label);
        if (e.label == "busy" || e.label == "mbsy")
            fail("'" + e.label + "' is reserved for the compiler");
        ast.storage.push_back(std::move(e));
    }
    lx.expect(";");

    lx.expect("submodules");
    lx.expect("{");
    while (!lx.accept("}")) {
        SubmoduleDecl d;
        d.class_name = lx.expect_ident();
        if (d.class_name == "PJUMP")
            fail("PJUMP is not supported in this implementation");
        d.label = lx.expect_ident();
        if (lx.peek().s == "[")
            for (auto& ix : parse_indices(lx))
                d.dims.push_back(std::get<long>(ix));
        if (d.dims.size() > 3) fail("submodule arrays have at most three dimensions");
        lx.expect(";");
        if (!lib.find(d.class_name))
            fail("submodule not found in library: " + d.class_name);
        for (const SubmoduleDecl& prev : ast.submodules)
            if (prev.label == d.label) fail("duplicate submodule label: " + d.label);
        ast.submodules.push_back(std::move(d));
    }
    lx.expect(";");

    while (true) {
        STok t = lx.peek();
        if (t.t != STok::T::Ident) break;
        if (t.s == "contractions") {
            lx.next();
            lx.expect("{");
            std::string stmt;
            while (!(lx.peek().t == STok::T::Punct && lx.peek().s == "}")) {
                STok u = lx.next();
                if (u.t == STok::T::End) fail("unterminated contractions block");
                if (u.s == ";") {
                    if (!stmt.empty()) ast.contraction_statements.push_back(stmt);
                    stmt.clear();
                } else {
                    stmt += u.s;
                }
            }
            lx.next();
            lx.expect(";");
            if (!ast.contraction_statements.empty())
                fail("contraction sharing is not supported in this implementation");
        } else if (t.s == "replications" || t.s == "replicators") {
            lx.next();
            lx.expect("{");
            bool in_fns = false;
            while (!(lx.peek().t == STok::T::Punct && lx.peek().s == "}")) {
                STok u = lx.next();
                if (u.t == STok::T::End) fail("unterminated replications block");
                if (u.s == "/") { in_fns = true; continue; }
                if (u.s == ",") continue;
                if (in_fns) {
                    std::string fn = u.s;
                    if (u.t == STok::T::Int && u.v == 2) {
                        if (lx.accept("*")) {
                            fn = "2*";
                            if (lx.accept("+")) { lx.expect_int(); fn = "2*+1"; }
                        } else if (lx.accept("^")) {
                            fn = "2^";
                        }
                    }
                    ast.indexical_functions.push_back(fn);
                } else {
                    if (u.t != STok::T::Ident || u.s.size() != 1)
                        fail("replicator names are single characters");
                    ast.replicators.push_back(u.s[0]);
                }
            }
            lx.next();
            lx.expect(";");
        } else if (t.s == "meta") {
            lx.next();
            lx.expect("(");
            ast.meta_line = parse_addr_tok(lx);
            lx.expect(")");
            lx.expect(";");
        } else if (t.s == "metatime") {
            lx.next();
            lx.expect(":");
            STok mm = lx.next(); // a-b parsed as Int '-' Int
            ast.metatime_min = mm.v;
            lx.expect("-");
            ast.metatime_max = lx.expect_int();
            lx.accept("cycles");
            lx.expect(";");
        } else if (t.s == "time") {
            lx.next();
            lx.expect(":");
            ast.time_min = lx.expect_int();
            lx.expect("-");
            ast.time_max = lx.expect_int();
            lx.accept("cycles");
            lx.expect(";");
        } else if (t.s == "code") {
            break;
        } else {
            fail("unexpected declaration: " + t.s);
        }
    }

    lx.expect("code");
    lx.expect("{");
    while (!lx.accept("}")) {
        BaseLine line;
        line.addr = parse_addr_tok(lx);
        lx.expect(":");
        while (true) {
            line.columns.push_back(parse_column(lx, ast));
            if (lx.accept("::")) continue;
            if (lx.accept(":>")) {
                LineAddr caddr = parse_addr_tok(lx);
                lx.expect(":");
                line.attached = parse_construct(lx, ast, caddr);
                lx.expect(";;");
                break;
            }
            lx.expect(";;");
            break;
        }
        ast.lines.push_back(std::move(line));
    }
    lx.expect(";");

    // terminal-column discipline
    for (const BaseLine& l : ast.lines)
        for (std::size_t i = 0; i < l.columns.size(); ++i) {
            const Column& c = l.columns[i];
            const bool last = (i + 1 == l.columns.size());
            if ((c.kind == ColumnKind::Cond || c.kind == ColumnKind::Jump ||
                 c.kind == ColumnKind::Halt || c.kind == ColumnKind::Subhalt) &&
                !last)
                fail("control columns terminate a base-line (line " + l.addr.str() + ")");
            if (c.kind == ColumnKind::Cond && c.conds.size() != 1)
                fail("pre-expansion cond columns hold one element (line " +
                     l.addr.str() + ")");
            if (c.kind == ColumnKind::Wait && i == 0)
                fail("a wait column cannot open a base-line");
        }
    return ast;
}

// ---- expansion -----------------------------------------------------------------

namespace {

long coord_value(const std::variant<long, IncExpr>& c,
                 const std::map<char, long>& env) {
    if (c.index() == 0) return std::get<long>(c);
    return eval_indexical(std::get<IncExpr>(c), env);
}

void subst_ident(IdentExpr& e, const std::map<char, long>& env) {
    for (auto& ix : e.indices)
        if (ix.index() == 1) ix = coord_value(ix, env);
    for (auto& ix : e.sub_indices)
        if (ix.index() == 1) ix = coord_value(ix, env);
    if (e.selector_inc) {
        e.selector = std::to_string(eval_indexical(*e.selector_inc, env));
        e.selector_inc.reset();
    }
    if (e.imm_inc) {
        e.number = eval_indexical(*e.imm_inc, env);
        e.imm_inc.reset();
    }
    if (e.inner) subst_ident(*e.inner, env);
}

bool cmp_holds(long v, const std::string& cmp, long bound) {
    if (cmp == "<=") return v <= bound;
    if (cmp == ">=") return v >= bound;
    if (cmp == "<<") return v < bound;
    if (cmp == ">") return v > bound;
    fail("bad comparator " + cmp);
}

long apply_fn(long v, const std::string& fn) {
    IncExpr e;
    e.rep = 'v';
    e.fn = fn;
    return eval_indexical(e, {{'v', v}});
}

// vertical replication of the dependent base-line of a deep construct
BaseLine expand_deep(const BaseLine& dep, const ConstructLine& c) {
    BaseLine out;
    out.addr = c.addr;
    for (const Column& col : dep.columns) {
        Column nc;
        nc.kind = col.kind;
        if (col.kind == ColumnKind::Wait) {
            nc.wait = col.wait; // copied once, untouched
            out.columns.push_back(nc);
            continue;
        }
        bool first_copy = true;
        std::function<void(std::size_t, std::map<char, long>&)> iterate =
            [&](std::size_t ci, std::map<char, long>& env) {
                if (ci == c.clauses.size()) {
                    switch (col.kind) {
                    case ColumnKind::Copy:
                        for (const CopyElem& e : col.copies) {
                            CopyElem ne = e;
                            subst_ident(ne.src, env);
                            subst_ident(ne.dst, env);
                            nc.copies.push_back(std::move(ne));
                        }
                        break;
                    case ColumnKind::Activate:
                        for (const ActivateElem& e : col.activates) {
                            ActivateElem ne = e;
                            for (auto& ix : ne.indices)
                                if (ix.index() == 1) ix = coord_value(ix, env);
                            // the double underscore is copied only onto the
                            // first element of the expanded column
                            if (!first_copy) ne.double_underscore = false;
                            nc.activates.push_back(std::move(ne));
                        }
                        break;
                    case ColumnKind::Jump:
                        for (const JumpElem& e : col.jumps)
                            nc.jumps.push_back(e);
                        break;
                    default:
                        fail("column kind not allowed in a deep dependent (line " +
                             dep.addr.str() + ")");
                    }
                    first_copy = false;
                    return;
                }
                const DeepClause& cl = c.clauses[ci];
                long v = coord_value(cl.left, env);
                const long bound = coord_value(cl.right, env);
                long guard = 0;
                while (cmp_holds(v, cl.cmp, bound)) {
                    env[cl.rep] = v;
                    iterate(ci + 1, env);
                    env.erase(cl.rep);
                    v = apply_fn(v, cl.fn);
                    if (++guard > 1000000)
                        fail("deep construct iterates beyond 10^6 copies");
                }
            };
        std::map<char, long> env;
        iterate(0, env);
        out.columns.push_back(std::move(nc));
    }
    if (c.egress) {
        Column j;
        j.kind = ColumnKind::Jump;
        j.jumps.push_back(*c.egress);
        out.columns.push_back(std::move(j));
    }
    return out;
}

} // namespace

ExpandedModule expand(const SpaceModuleAST& ast, const TypeLibrary&) {
    ExpandedModule em;
    em.ast = ast;
    em.ast.lines.clear();

    for (const BaseLine& l : ast.lines) {
        if (!l.attached) {
            em.ast.lines.push_back(l);
            continue;
        }
        const ConstructLine& c = *l.attached;
        if (c.kind == ConstructLine::Kind::Deep) {
            if (l.addr.parent() != c.addr)
                fail("deep construct " + c.addr.str() +
                     " must be attached to its dependent line " + l.addr.str());
            BaseLine dep = l;
            dep.attached.reset();
            em.ast.lines.push_back(expand_deep(dep, c));
        } else {
            // while / dowhile keep their first dependent as a line
            BaseLine dep = l;
            dep.attached.reset();
            em.ast.lines.push_back(std::move(dep));
            em.loops.push_back(c);
        }
    }
    std::sort(em.ast.lines.begin(), em.ast.lines.end(),
              [](const BaseLine& a, const BaseLine& b) { return a.addr < b.addr; });
    for (std::size_t i = 1; i < em.ast.lines.size(); ++i)
        if (em.ast.lines[i].addr == em.ast.lines[i - 1].addr)
            fail("duplicate line address " + em.ast.lines[i].addr.str());
    return em;
}

} // namespace spatiale::space
