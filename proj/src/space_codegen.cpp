#include "spatiale/library.hpp"
#include "spatiale/space.hpp"

#include <algorithm>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace spatiale::space {

namespace {

[[noreturn]] void fail(const std::string& msg) {
    throw std::runtime_error("space codegen: " + msg);
}

const aram::MachineConfig kEnc{}; // p=5 instruction encoding

std::uint32_t enc(aram::Opcode op, std::uint32_t x, std::uint32_t y) {
    return aram::encode({op, x, y}, kEnc);
}

} // namespace

// ---- artifact helpers ------------------------------------------------------

const SpaceSymbol* Artifact::find_symbol(const std::string& n) const {
    for (const SpaceSymbol& s : symbols)
        if (s.name == n) return &s;
    return nullptr;
}

std::vector<std::uint32_t>
Artifact::standalone_image(const aram::MachineConfig&) const {
    // standalone and embedded modules run the same words: the module busy
    // bit is ordinary storage and a drained marking ends the run
    return image;
}

std::vector<std::uint32_t>
Artifact::relocated_image(std::uint32_t base, const aram::MachineConfig& cfg) const {
    std::vector<std::uint32_t> out = image;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (relocatable[i]) {
            aram::DecodedInstruction d = aram::decode(out[i], cfg);
            d.x += base;
            out[i] = aram::encode(d, cfg);
        }
    return out;
}

Artifact artifact_from_earth(const earth::CompiledModule& m) {
    Artifact a;
    a.name = m.name;
    a.image = m.words;
    a.relocatable = std::vector<bool>(m.relocatable.begin(), m.relocatable.end());
    a.busy_ref = m.busy_ref;
    a.image.resize(m.code_len + m.storage_len, 0);
    a.relocatable.resize(a.image.size(), false);
    a.busy_ref.resize(a.image.size(), 0);
    a.code_len = m.code_len;
    a.meta = m.meta;
    a.time_min = m.time_min;
    a.time_max = m.time_max;
    a.metatime_min = m.metatime_min;
    a.metatime_max = m.metatime_max;
    a.level = 0;
    for (const earth::Symbol& s : m.symbols) {
        SpaceSymbol out;
        out.name = s.name;
        out.type_name = earth::storage_kind_name(s.kind);
        out.interface = s.interface;
        out.reg = m.code_len + 1 + s.reg;
        out.regs = 1;
        out.bit = s.bit;
        out.width = s.width;
        a.symbols.push_back(out);
    }
    return a;
}

// ---- jump trees ----------------------------------------------------------------

std::uint64_t jumptree_registers(std::uint64_t n) {
    std::uint64_t total = 0, layer = n;
    while (true) {
        total += layer;
        if (layer == 1) break;
        layer = (layer + 31) / 32;
    }
    return total;
}

std::uint32_t jumptree_cycles(std::uint64_t n) {
    std::uint32_t layers = 1;
    while (n > 1) {
        n = (n + 31) / 32;
        ++layers;
    }
    return layers;
}

namespace {

struct TreeBuild {
    // (x, y) jump operands; root placed first, leaves last
    std::vector<std::pair<std::uint64_t, std::uint32_t>> words;
    std::uint32_t entry_index = 0;
    std::uint32_t depth = 0;
    std::size_t leaf_start = 0;
};

TreeBuild build_tree(const std::vector<std::pair<std::uint64_t, std::uint32_t>>& targets,
                     std::uint64_t first_reg) {
    TreeBuild tb;
    if (targets.empty()) fail("jump tree needs at least one target");
    std::vector<std::size_t> sizes;
    std::size_t n = targets.size();
    sizes.push_back(n);
    while (n > 1) {
        n = (n + 31) / 32;
        sizes.push_back(n);
    }
    std::vector<std::uint64_t> layer_base(sizes.size());
    std::uint64_t reg = first_reg;
    for (std::size_t li = sizes.size(); li-- > 0;) {
        layer_base[li] = reg;
        reg += sizes[li];
    }
    tb.words.resize(std::size_t(reg - first_reg));
    tb.leaf_start = std::size_t(layer_base[0] - first_reg);
    for (std::size_t i = 0; i < targets.size(); ++i)
        tb.words[tb.leaf_start + i] = targets[i];
    for (std::size_t li = 1; li < sizes.size(); ++li) {
        const std::size_t below = sizes[li - 1];
        for (std::size_t g = 0; g < sizes[li]; ++g) {
            const std::size_t lo = g * 32;
            const std::size_t hi = std::min(lo + 32, below);
            tb.words[std::size_t(layer_base[li] - first_reg) + g] = {
                layer_base[li - 1] + lo, std::uint32_t(hi - lo - 1)};
        }
    }
    tb.entry_index = std::uint32_t(layer_base.back() - first_reg);
    tb.depth = std::uint32_t(sizes.size());
    return tb;
}

} // namespace

Fragment jump_tree(const std::vector<std::uint32_t>& targets, std::uint32_t base) {
    std::vector<std::pair<std::uint64_t, std::uint32_t>> t;
    for (std::uint32_t r : targets) t.push_back({r, 0});
    TreeBuild tb = build_tree(t, base + 1);
    Fragment f;
    for (auto& [x, y] : tb.words) {
        f.words.push_back(enc(aram::Opcode::Jump, std::uint32_t(x), y));
        f.relocatable.push_back(false);
    }
    f.entry = base + 1 + tb.entry_index;
    f.registers = std::uint32_t(f.words.size());
    f.cycles = tb.depth;
    return f;
}

std::uint32_t barrier_scratch_registers(std::size_t nbits) {
    if (nbits <= 8) return 0;
    std::size_t gates = 0, level = nbits;
    while (level > 1) {
        const std::size_t g = level / 2 + (level % 2);
        gates += g;
        level = g;
    }
    return std::uint32_t((gates + 31) / 32);
}

// ---- code generator -------------------------------------------------------------

namespace {

// Region-tagged register reference resolved after layout.
struct Ref {
    enum class R : std::uint8_t { Abs, Code, Storage, Aux, Inst, Label } r = R::Abs;
    std::uint64_t v = 0;     // abs reg / code reg / region offset / label id
    std::uint32_t ord = 0;   // instance ordinal
    static Ref abs(std::uint64_t x) { return {R::Abs, x, 0}; }
    static Ref codreg(std::uint64_t x) { return {R::Code, x, 0}; }
    static Ref storage(std::uint64_t off) { return {R::Storage, off, 0}; }
    static Ref aux(std::uint64_t off) { return {R::Aux, off, 0}; }
    static Ref inst(std::uint32_t ord, std::uint64_t inner) {
        return {R::Inst, inner, ord};
    }
    static Ref label(int id) { return {R::Label, std::uint64_t(id), 0}; }
};

struct W {
    aram::Opcode op;
    Ref x;
    std::uint32_t y;
    bool rel;
    std::uint8_t busy;
};

struct Place {
    Ref reg;
    std::uint32_t bit = 0;
    std::uint32_t width = 0;
    std::uint32_t regs = 1;
    std::string type;
    earth::Interface interface = earth::Interface::Private;
    bool relocatable = true;

    std::pair<Ref, std::uint32_t> bit_at(std::uint32_t k) const {
        if (regs > 1) {
            Ref r = reg;
            r.v += k / 32;
            return {r, k % 32};
        }
        return {reg, bit + k};
    }
};

struct Value {
    std::uint64_t v = 0;
    std::uint32_t width = 0;
    std::string type;
    bool address = false;
    Ref addr_reg;            // when address: the register part
    std::uint32_t addr_bit = 0;
    bool addr_is_bita = false;
};

struct Instance {
    std::string label;
    std::vector<long> dims;
    const Artifact* art;
    std::uint32_t count;
    std::uint32_t first_ordinal;
};

struct Codegen {
    const ExpandedModule& em;
    const TypeLibrary& types;
    const ModuleLibrary& lib;
    const aram::MachineConfig& cfg;
    const CodegenOptions& opt;

    std::vector<W> code;
    std::vector<std::int64_t> labels;
    struct AddrConst {
        std::size_t first_word; // consecutive writes, one per dst bit
        std::uint32_t width;
        Ref reg;
        std::uint32_t bit;
        bool bita;
    };
    std::vector<AddrConst> addr_consts;

    std::uint32_t storage_regs = 0;
    std::uint32_t aux_regs = 0;
    std::uint32_t busy_reg_off = 0, mbsy_reg_off = 0;
    std::uint32_t flag_bits = 0, skip_bits = 0;
    std::uint32_t scrap_reg = std::uint32_t(-1);

    std::vector<Instance> instances;
    std::map<std::string, std::size_t> instance_by_label;
    std::map<std::string, std::pair<std::uint32_t, const StorageEntity*>> entity_offset;
    std::vector<const BaseLine*> lines;
    std::map<std::string, std::size_t> line_index;
    std::map<std::string, const ConstructLine*> loop_by_addr;
    std::map<std::string, int> loop_test_label;
    std::map<std::string, int> line_prolog_label;
    std::vector<int> entry_slot_label;
    std::map<std::string, std::uint32_t> skipbit_of;
    int halt_label = -1, mhalt_label = -1;

    Codegen(const ExpandedModule& e, const TypeLibrary& t, const ModuleLibrary& l,
            const aram::MachineConfig& c, const CodegenOptions& o)
        : em(e), types(t), lib(l), cfg(c), opt(o) {}

    int new_label() {
        labels.push_back(-1);
        return int(labels.size()) - 1;
    }
    void def_label(int id) { labels[std::size_t(id)] = std::int64_t(here()); }
    std::uint32_t here() const { return std::uint32_t(code.size()) + 1; }

    std::size_t emit(aram::Opcode op, Ref x, std::uint32_t y, std::uint8_t busy = 0,
                     bool rel = true) {
        code.push_back({op, x, y, rel, busy});
        return code.size() - 1;
    }

    std::uint32_t flag_regs() const { return (flag_bits + 31) / 32; }
    std::uint32_t aux_alloc(std::uint32_t n) {
        const std::uint32_t r = aux_regs;
        aux_regs += n;
        return r;
    }
    std::uint32_t scrap() {
        if (scrap_reg == std::uint32_t(-1)) scrap_reg = aux_alloc(1);
        return scrap_reg;
    }

    // ---- layout --------------------------------------------------------------

    void build_layout() {
        for (const BaseLine& l : em.ast.lines) lines.push_back(&l);
        for (std::size_t i = 0; i < lines.size(); ++i)
            line_index[lines[i]->addr.str()] = i;
        for (const ConstructLine& c : em.loops) {
            loop_by_addr[c.addr.str()] = &c;
            loop_test_label[c.addr.str()] = new_label();
        }
        std::uint32_t off = 0;
        busy_reg_off = off++;
        if (em.ast.meta_line) mbsy_reg_off = off++;
        for (const StorageEntity& e : em.ast.storage) {
            entity_offset[e.label] = {off, &e};
            TypeMember m{e.type, e.label, e.aggregate, e.dims};
            off += member_registers(types, m);
        }
        storage_regs = off;

        std::uint32_t ordinal = 0;
        for (const SubmoduleDecl& d : em.ast.submodules) {
            Instance inst;
            inst.label = d.label;
            inst.dims = d.dims;
            inst.art = &lib.get(d.class_name);
            long count = 1;
            for (long v : d.dims) count *= v;
            inst.count = std::uint32_t(count);
            inst.first_ordinal = ordinal;
            ordinal += inst.count;
            instance_by_label[d.label] = instances.size();
            instances.push_back(inst);
        }
        instance_bases.assign(ordinal, 0);

        if (opt.instrument_lines) flag_bits = std::uint32_t(lines.size());
        for (const BaseLine* l : lines)
            for (const Column& c : l->columns)
                if (c.kind == ColumnKind::Skip)
                    for (const SkipElem& s : c.skips)
                        if (!skipbit_of.count(s.a.str()))
                            skipbit_of[s.a.str()] = skip_bits++;
        aux_alloc(flag_regs());
        aux_alloc((skip_bits + 31) / 32);
    }

    std::vector<std::uint64_t> instance_bases;

    // ---- resolution -----------------------------------------------------------

    const Instance& instance_of(const std::string& label) {
        auto it = instance_by_label.find(label);
        if (it == instance_by_label.end())
            fail("unknown submodule label " + label);
        return instances[it->second];
    }

    std::uint32_t flat_index(const Instance& inst,
                             const std::vector<std::variant<long, IncExpr>>& ix) {
        if (ix.size() != inst.dims.size())
            fail("submodule " + inst.label + " expects " +
                 std::to_string(inst.dims.size()) + " indices");
        long flat = 0;
        for (std::size_t d = 0; d < ix.size(); ++d) {
            if (ix[d].index() != 0) fail("unresolved replicator in index");
            const long v = std::get<long>(ix[d]);
            if (v < 0 || v >= inst.dims[d]) fail("index out of range for " + inst.label);
            flat = flat * inst.dims[d] + v;
        }
        return std::uint32_t(flat);
    }

    std::uint32_t elem_size(const std::string& type) {
        return types.get(type).registers;
    }

    Place apply_selector(Place p, const std::string& sel, const std::string& what) {
        if (sel.empty()) return p;
        if (p.regs > 1)
            fail("bit selectors need a single-register entity: " + what);
        Place out = p;
        auto cell = [&](std::uint32_t b, std::uint32_t w, const char* t) {
            out.bit = b;
            out.width = w;
            out.type = t;
        };
        if (sel == "destn") cell(5, 25, "DSTN");
        else if (sel == "offst") cell(0, 5, "OFST");
        else if (sel == "btadd") cell(0, 30, "BITA");
        else if (sel == "byte0") cell(0, 8, "BYTE");
        else if (sel == "byte1") cell(8, 8, "BYTE");
        else if (sel == "byte2") cell(16, 8, "BYTE");
        else if (sel == "byte3") cell(24, 8, "BYTE");
        else if (sel == "word0") cell(0, 16, "WORD");
        else if (sel == "word1") cell(16, 16, "WORD");
        else {
            const long b = std::stol(sel);
            if (b < 0 || std::uint32_t(b) >= p.width)
                fail("bit index " + sel + " out of range for " + what);
            out.bit = p.bit + std::uint32_t(b);
            out.width = 1;
            out.type = "BIT";
        }
        return out;
    }

    void level0_width(Place& p) {
        if (p.regs != 1) return;
        const std::string& t = p.type;
        if (t == "BIT") p.width = 1;
        else if (t == "BYTE" || t == "char") p.width = 8;
        else if (t == "WORD") p.width = 16;
        else if (t == "OFST") p.width = 5;
        else if (t == "DSTN") { p.width = 25; p.bit = 5; }
        else if (t == "BITA") p.width = 30;
    }

    Place primary_place(const IdentExpr& e) {
        auto it = entity_offset.find(e.label);
        if (it == entity_offset.end())
            fail("unknown storage label '" + e.label + "'");
        const auto& [off, ent] = it->second;
        const std::uint32_t esz = elem_size(ent->type);
        Place p;
        p.type = ent->type;
        p.interface = ent->interface;
        switch (ent->aggregate) {
        case Aggregate::Singleton:
            if (!e.indices.empty()) fail(e.label + " is not an array");
            p.reg = Ref::storage(off);
            p.regs = esz;
            p.width = esz * 32;
            break;
        case Aggregate::Pointer:
            if (!e.indices.empty()) fail(e.label + " is not an array");
            p.reg = Ref::storage(off);
            p.regs = 1;
            p.width = 32;
            p.type = "*";
            break;
        case Aggregate::Array: {
            if (e.indices.empty()) fail("array " + e.label + " cannot be copied whole");
            if (e.indices.size() != ent->dims.size())
                fail("wrong number of indices for " + e.label);
            long flat = 0;
            for (std::size_t d = 0; d < e.indices.size(); ++d) {
                if (e.indices[d].index() != 0) fail("unresolved replicator in index");
                const long v = std::get<long>(e.indices[d]);
                if (v < 0 || v >= ent->dims[d]) fail("index out of bounds for " + e.label);
                flat = flat * ent->dims[d] + v;
            }
            p.reg = Ref::storage(off + 4 + std::uint32_t(flat) * esz);
            p.regs = esz;
            p.width = esz * 32;
            break;
        }
        case Aggregate::Blockstring:
            fail("blockstring element access is not supported");
        }
        level0_width(p);
        return p;
    }

    Place secondary_place(const IdentExpr& e) {
        const Instance& inst = instance_of(e.label);
        const std::uint32_t ord = inst.first_ordinal + flat_index(inst, e.indices);
        const SpaceSymbol* s = inst.art->find_symbol(e.sub_label);
        if (!s) fail("submodule " + e.label + " has no storage '" + e.sub_label + "'");
        if (s->interface == earth::Interface::Private)
            fail("submodule storage '" + e.label + "." + e.sub_label + "' is private");
        Place p;
        p.type = s->type_name;
        p.interface = s->interface;
        p.width = s->width;
        p.bit = s->bit;
        p.regs = s->regs;
        std::uint64_t inner = s->reg;
        if (s->aggregate == Aggregate::Array) {
            if (e.sub_indices.empty()) fail("array needs indices: " + e.sub_label);
            if (e.sub_indices.size() != s->dims.size())
                fail("wrong number of indices for " + e.sub_label);
            long flat = 0;
            for (std::size_t d = 0; d < e.sub_indices.size(); ++d) {
                if (e.sub_indices[d].index() != 0)
                    fail("unresolved replicator in index");
                flat = flat * s->dims[d] + std::get<long>(e.sub_indices[d]);
            }
            const std::uint32_t esz = elem_size(s->type_name);
            inner += 4 + std::uint64_t(flat) * esz;
            p.regs = esz;
            p.width = esz * 32;
        } else if (!e.sub_indices.empty()) {
            fail(e.sub_label + " is not an array");
        }
        p.reg = Ref::inst(ord, inner);
        level0_width(p);
        return p;
    }

    Place place_of(const IdentExpr& e) {
        switch (e.kind) {
        case IdentExpr::Kind::Primary:
            return apply_selector(primary_place(e), e.selector, e.label);
        case IdentExpr::Kind::Secondary:
            return apply_selector(secondary_place(e), e.selector,
                                  e.label + "." + e.sub_label);
        case IdentExpr::Kind::Direct: {
            Place p;
            p.reg = Ref::abs(std::uint64_t(e.number));
            p.relocatable = false;
            p.regs = 1;
            p.width = 32;
            p.type = "REG";
            p.interface = earth::Interface::Ioput;
            return p;
        }
        default:
            fail("expected a storage place");
        }
    }

    std::optional<Value> const_of(const IdentExpr& e) {
        Value v;
        switch (e.kind) {
        case IdentExpr::Kind::ImmediateNum:
            v.v = std::uint64_t(std::uint32_t(e.number));
            v.width = 32;
            v.type = e.number < 0 ? "int" : "unsigned";
            return v;
        case IdentExpr::Kind::ImmediateChar:
            v.v = std::uint64_t(e.chr);
            v.width = 8;
            v.type = "char";
            return v;
        case IdentExpr::Kind::SizeOf:
            v.v = types.get(e.type_name).registers;
            v.width = 32;
            v.type = "unsigned";
            return v;
        case IdentExpr::Kind::ArrayAgg: {
            auto it = entity_offset.find(e.label);
            if (it == entity_offset.end()) fail("unknown array " + e.label);
            const auto& [off, ent] = it->second;
            if (ent->aggregate != Aggregate::Array) fail(e.label + " is not an array");
            v.width = 32;
            v.type = "unsigned";
            if (e.number == 0) {
                v.address = true;
                v.addr_reg = Ref::storage(off + 4);
            } else if (e.number <= long(ent->dims.size())) {
                v.v = std::uint64_t(ent->dims[std::size_t(e.number - 1)]);
            }
            return v;
        }
        case IdentExpr::Kind::Address: {
            const Place p = place_of(*e.inner);
            v.address = true;
            v.addr_reg = p.reg;
            if (p.width == 1) {
                v.addr_bit = p.bit;
                v.addr_is_bita = true;
                v.width = 30;
                v.type = "BITA";
            } else {
                v.width = 25;
                v.type = "DSTN";
            }
            return v;
        }
        default:
            return std::nullopt;
        }
    }

    void check_copy_types(const std::string& s, const std::string& d) {
        if (s == d) return;
        auto in = [](const std::string& x, std::initializer_list<const char*> l) {
            for (const char* c : l)
                if (x == c) return true;
            return false;
        };
        if (in(s, {"BIT", "BYTE", "WORD", "BITA", "DSTN", "OFST"}) &&
            in(d, {"REG", "int", "unsigned"}))
            return;
        if (s == "unsigned" && in(d, {"BYTE", "WORD", "OFST", "BIT"})) return;
        if ((s == "BYTE" && d == "char") || (s == "char" && d == "BYTE")) return;
        if (in(s, {"unsigned", "REG"}) && d == "*") return;
        if (s == "*" && in(d, {"REG", "unsigned"})) return;
        if (in(s, {"BITA", "DSTN"}) && in(d, {"BITA", "DSTN", "REG", "unsigned"}))
            return;
        if (in(s, {"unsigned", "int", "REG"}) &&
            in(d, {"unsigned", "int", "float", "REG"}))
            return;
        fail("incompatible copy types: " + s + " -> " + d);
    }

    // ---- shared emission helpers ------------------------------------------------

    std::pair<std::uint32_t, std::uint32_t>
    emit_tree(const std::vector<std::pair<Ref, std::uint32_t>>& targets) {
        // build over placeholder numbers, then rewrite leaves with Refs
        std::vector<std::pair<std::uint64_t, std::uint32_t>> t;
        for (auto& [r, y] : targets) t.push_back({0, y});
        TreeBuild tb = build_tree(t, here());
        const std::size_t first = code.size();
        for (auto& [x, y] : tb.words)
            emit(aram::Opcode::Jump, Ref::codreg(x), y);
        for (std::size_t i = 0; i < targets.size(); ++i)
            code[first + tb.leaf_start + i].x = targets[i].first;
        return {std::uint32_t(first) + 1 + tb.entry_index, tb.depth};
    }

    // chain of n jumps ending with a jump to `label` marking `width` regs
    void emit_chain(std::uint32_t n, int label, std::uint32_t width) {
        for (std::uint32_t i = 1; i < n; ++i)
            emit(aram::Opcode::Jump, Ref::codreg(here() + 1), 0);
        emit(aram::Opcode::Jump, Ref::label(label), width - 1);
    }

    void emit_barrier(const std::vector<std::pair<Ref, std::uint32_t>>& bits,
                      int release_label, std::uint32_t release_width,
                      int entry_label) {
        if (bits.empty()) {
            def_label(entry_label);
            emit(aram::Opcode::Jump, Ref::label(release_label), release_width - 1);
            return;
        }
        if (bits.size() <= 8) {
            def_label(entry_label);
            const std::uint32_t scan0 = here();
            for (std::size_t i = 0; i < bits.size(); ++i) {
                emit(aram::Opcode::Cond, bits[i].first, bits[i].second);
                if (i + 1 < bits.size())
                    emit(aram::Opcode::Jump,
                         Ref::codreg(scan0 + std::uint32_t(3 * (i + 1))), 0);
                else
                    emit(aram::Opcode::Jump, Ref::label(release_label),
                         release_width - 1);
                emit(aram::Opcode::Jump, Ref::codreg(scan0), 0);
            }
            return;
        }
        // systolic OR-reduction tree over aux scratch bits
        struct BitRef { Ref reg; std::uint32_t bit; };
        std::vector<BitRef> level;
        for (auto& b : bits) level.push_back({b.first, b.second});
        std::uint32_t gate_count = 0;
        {
            std::size_t l = bits.size();
            while (l > 1) {
                const std::size_t g = l / 2 + (l % 2);
                gate_count += std::uint32_t(g);
                l = g;
            }
        }
        const std::uint32_t scratch = aux_alloc((gate_count + 31) / 32);
        std::uint32_t used = 0;
        auto alloc_out = [&]() {
            BitRef r{Ref::aux(scratch + used / 32), used % 32};
            ++used;
            return r;
        };
        struct Gate { BitRef a, b, out; };
        std::vector<Gate> gates;
        BitRef root = level.front();
        while (level.size() > 1) {
            std::vector<BitRef> next;
            for (std::size_t i = 0; i < level.size(); i += 2) {
                Gate g;
                g.a = level[i];
                g.b = (i + 1 < level.size()) ? level[i + 1] : level[i];
                g.out = alloc_out();
                next.push_back(g.out);
                gates.push_back(g);
            }
            level = std::move(next);
            root = level.front();
        }
        std::vector<std::uint32_t> gate_entry;
        for (const Gate& g : gates) {
            const std::uint32_t g0 = here();
            gate_entry.push_back(g0);
            emit(aram::Opcode::Cond, g.a.reg, g.a.bit);
            emit(aram::Opcode::Jump, Ref::codreg(g0 + 3), 0);
            emit(aram::Opcode::Wrt1, g.out.reg, g.out.bit);
            emit(aram::Opcode::Cond, g.b.reg, g.b.bit);
            emit(aram::Opcode::Wrt0, g.out.reg, g.out.bit);
            emit(aram::Opcode::Wrt1, g.out.reg, g.out.bit);
        }
        const std::uint32_t w0 = here();
        for (std::uint32_t i = 0; i + 1 < 6; ++i)
            emit(aram::Opcode::Jump, Ref::codreg(here() + 1), 0);
        emit(aram::Opcode::Cond, root.reg, root.bit);
        emit(aram::Opcode::Jump, Ref::label(release_label), release_width - 1);
        const std::size_t rekick = emit(aram::Opcode::Jump, Ref::codreg(0), 0);
        std::vector<std::pair<Ref, std::uint32_t>> targets;
        for (std::uint32_t ge : gate_entry) targets.push_back({Ref::codreg(ge), 0});
        targets.push_back({Ref::codreg(w0), 0});
        auto [entry, depth] = emit_tree(targets);
        (void)depth;
        code[rekick].x = Ref::codreg(entry);
        labels[std::size_t(entry_label)] = entry;
    }

    // ---- columns -----------------------------------------------------------------

    void lower_copy_column(const BaseLine& line, const Column& col, int next_label,
                           std::uint32_t next_width) {
        struct BitWrite { Ref reg; std::uint32_t bit; bool value; };
        struct BitCopy { Ref sreg; std::uint32_t sbit; Ref dreg; std::uint32_t dbit; };
        std::vector<BitWrite> writes;
        std::vector<BitCopy> moves;
        std::vector<AddrConst> pending_addr;
        std::unordered_set<std::string> taken;

        auto claim = [&](const Ref& r, std::uint32_t b) {
            std::string key = std::to_string(int(r.r)) + ":" +
                              std::to_string(r.v) + ":" + std::to_string(r.ord) +
                              ":" + std::to_string(b);
            if (!taken.insert(key).second)
                fail("line " + line.addr.str() +
                     ": two copies write the same destination bit");
        };

        for (const CopyElem& e : col.copies) {
            const Place dst = place_of(e.dst);
            if (auto cv = const_of(e.src)) {
                check_copy_types(cv->type, dst.type);
                if (cv->address) {
                    AddrConst ac;
                    ac.first_word = 0; // recorded as index into writes below
                    ac.width = dst.width;
                    ac.reg = cv->addr_reg;
                    ac.bit = cv->addr_bit;
                    ac.bita = cv->addr_is_bita;
                    ac.first_word = writes.size();
                    pending_addr.push_back(ac);
                    for (std::uint32_t k = 0; k < dst.width; ++k) {
                        auto [r, b] = dst.bit_at(k);
                        claim(r, b);
                        writes.push_back({r, b, false});
                    }
                } else {
                    for (std::uint32_t k = 0; k < dst.width; ++k) {
                        auto [r, b] = dst.bit_at(k);
                        claim(r, b);
                        writes.push_back({r, b, k < cv->width && ((cv->v >> k) & 1)});
                    }
                }
            } else {
                const Place src = place_of(e.src);
                check_copy_types(src.type, dst.type);
                const std::uint32_t w = std::min(src.width, dst.width);
                for (std::uint32_t k = 0; k < w; ++k) {
                    auto [sr, sb] = src.bit_at(k);
                    auto [dr, db] = dst.bit_at(k);
                    claim(dr, db);
                    moves.push_back({sr, sb, dr, db});
                }
                for (std::uint32_t k = w; k < dst.width; ++k) {
                    auto [dr, db] = dst.bit_at(k);
                    claim(dr, db);
                    writes.push_back({dr, db, false});
                }
            }
        }

        // kick marks {pair0, chain0}; pair0 jumps to the tree root
        const std::size_t kick = emit(aram::Opcode::Jump, Ref::codreg(0), 1);
        std::vector<std::uint32_t> triplet_entry;
        for (const BitCopy& m : moves) {
            triplet_entry.push_back(here());
            emit(aram::Opcode::Cond, m.sreg, m.sbit);
            emit(aram::Opcode::Wrt0, m.dreg, m.dbit);
            emit(aram::Opcode::Wrt1, m.dreg, m.dbit);
        }
        const std::uint32_t writes_start = here();
        const std::size_t writes_word0 = code.size();
        for (const BitWrite& bw : writes)
            emit(bw.value ? aram::Opcode::Wrt1 : aram::Opcode::Wrt0, bw.reg, bw.bit);
        for (AddrConst ac : pending_addr) {
            ac.first_word = writes_word0 + ac.first_word;
            addr_consts.push_back(ac);
        }

        std::vector<std::pair<Ref, std::uint32_t>> targets;
        for (std::uint32_t t : triplet_entry) targets.push_back({Ref::codreg(t), 0});
        for (std::size_t k = 0; k < writes.size(); k += 32)
            targets.push_back(
                {Ref::codreg(writes_start + std::uint32_t(k)),
                 std::uint32_t(std::min<std::size_t>(31, writes.size() - k - 1))});

        if (targets.empty()) {
            code[kick].x = Ref::codreg(here());
            code[kick].y = 0;
            emit(aram::Opcode::Jump, Ref::label(next_label), next_width - 1);
            return;
        }
        auto [entry, depth] = emit_tree(targets);
        const std::uint32_t pair0 = here();
        emit(aram::Opcode::Jump, Ref::codreg(entry), 0);
        code[kick].x = Ref::codreg(pair0);
        const std::uint32_t chain_len = depth + (moves.empty() ? 2 : 3);
        emit_chain(chain_len, next_label, next_width);
    }

    void lower_activate_column(const BaseLine& line, const Column& col,
                               int next_label, std::uint32_t next_width) {
        std::vector<std::pair<Ref, std::uint32_t>> targets;
        std::vector<std::pair<Ref, std::uint32_t>> watch;
        bool dd = false;
        std::vector<std::uint32_t> seen;
        for (const ActivateElem& e : col.activates) {
            const Instance& inst = instance_of(e.label);
            const std::uint32_t ord = inst.first_ordinal + flat_index(inst, e.indices);
            for (std::uint32_t s : seen)
                if (s == ord)
                    fail("line " + line.addr.str() + ": duplicate activation of " +
                         e.label);
            seen.push_back(ord);
            if (e.meta_phase2 && !inst.art->meta)
                fail(e.label + " is not a meta module");
            targets.push_back({Ref::inst(ord, e.meta_phase2 ? 3 : 1), 1});
            const SpaceSymbol* bsym =
                inst.art->find_symbol(e.meta_phase2 ? "mbsy" : "busy");
            if (!bsym) fail(e.label + " has no busy bit");
            watch.push_back({Ref::inst(ord, bsym->reg), bsym->bit});
            if (e.double_underscore && watch.size() > 1)
                std::swap(watch.front(), watch.back());
            dd = dd || e.double_underscore;
        }
        if (dd) watch.resize(1);

        const std::size_t kick = emit(aram::Opcode::Jump, Ref::codreg(0), 1);
        auto [entry, depth] = emit_tree(targets);
        const std::uint32_t pair0 = here();
        emit(aram::Opcode::Jump, Ref::codreg(entry), 0);
        code[kick].x = Ref::codreg(pair0);
        // delay so the barrier cannot sample a busy bit before it is set
        const int bl = new_label();
        emit_chain(depth + 2, bl, 1);
        emit_barrier(watch, next_label, next_width, bl);
    }

    void lower_skip_column(const Column& col, int next_label,
                           std::uint32_t next_width) {
        std::vector<std::pair<Ref, std::uint32_t>> watch;
        for (const SkipElem& s : col.skips) {
            auto it = skipbit_of.find(s.a.str());
            if (it == skipbit_of.end()) fail("skip of unknown line " + s.a.str());
            watch.push_back(
                {Ref::aux(flag_regs() + it->second / 32), it->second % 32});
        }
        const std::size_t kick = emit(aram::Opcode::Jump, Ref::codreg(0), 0);
        const int bl = new_label();
        emit_barrier(watch, next_label, next_width, bl);
        code[kick].x = Ref::label(bl);
    }

    void lower_wait_column(const Column& col, int next_label,
                           std::uint32_t next_width) {
        if (col.wait.cycles < 1) fail("wait needs a positive cycle count");
        emit_chain(std::uint32_t(col.wait.cycles), next_label, next_width);
    }

    void emit_range_jump(const LineAddr& a, long o) {
        auto it = line_index.find(a.str());
        if (it == line_index.end()) fail("jump to unknown line " + a.str());
        if (o < 0 || o > 31) fail("line offset out of range: " + std::to_string(o));
        if (it->second + std::size_t(o) >= lines.size())
            fail("line range overruns the module: (" + a.str() + "," +
                 std::to_string(o) + ")");
        emit(aram::Opcode::Jump, Ref::label(entry_slot_label[it->second]),
             std::uint32_t(o));
    }

    std::uint32_t emit_clear_block(const BaseLine& line) {
        std::uint32_t n = 0;
        if (opt.instrument_lines) {
            const std::uint32_t k = std::uint32_t(line_index.at(line.addr.str()));
            emit(aram::Opcode::Wrt0, Ref::aux(k / 32), k % 32);
            ++n;
        }
        if (auto it = skipbit_of.find(line.addr.str()); it != skipbit_of.end()) {
            emit(aram::Opcode::Wrt0, Ref::aux(flag_regs() + it->second / 32),
                 it->second % 32);
            ++n;
        }
        return n;
    }

    bool line_hooked(const BaseLine& line) const {
        return opt.instrument_lines || skipbit_of.count(line.addr.str());
    }

    // emits [clears..][transfers..] and returns {block start, total words}
    template <typename F>
    std::pair<std::uint32_t, std::uint32_t> clear_and(const BaseLine& line, F f) {
        const std::uint32_t start = here();
        emit_clear_block(line);
        f();
        return {start, here() - start};
    }

    void lower_terminal(const BaseLine& line, const Column& col) {
        const bool hooked = line_hooked(line);
        switch (col.kind) {
        case ColumnKind::Cond: {
            const CondElem& e = col.conds[0];
            const Place bp = place_of(e.bit);
            if (bp.width != 1)
                fail("line " + line.addr.str() + ": cond tests a single bit");
            emit(aram::Opcode::Cond, bp.reg, bp.bit);
            if (!hooked) {
                emit_range_jump(e.a1, e.o1);
                emit_range_jump(e.a2, e.o2);
            } else {
                const std::size_t j1 = emit(aram::Opcode::Jump, Ref::codreg(0), 0);
                const std::size_t j2 = emit(aram::Opcode::Jump, Ref::codreg(0), 0);
                auto [b1, n1] = clear_and(line, [&] { emit_range_jump(e.a1, e.o1); });
                auto [b2, n2] = clear_and(line, [&] { emit_range_jump(e.a2, e.o2); });
                code[j1].x = Ref::codreg(b1);
                code[j1].y = n1 - 1;
                code[j2].x = Ref::codreg(b2);
                code[j2].y = n2 - 1;
            }
            break;
        }
        case ColumnKind::Jump: {
            if (col.jumps.size() > 32)
                fail("jump columns are limited to 32 elements");
            if (!hooked) {
                for (const JumpElem& e : col.jumps) emit_range_jump(e.a, e.o);
            } else {
                // single stub first so the previous release needs width 1
                const std::size_t j = emit(aram::Opcode::Jump, Ref::codreg(0), 0);
                auto [b, n] = clear_and(line, [&] {
                    for (const JumpElem& e : col.jumps) emit_range_jump(e.a, e.o);
                });
                code[j].x = Ref::codreg(b);
                code[j].y = n - 1;
            }
            break;
        }
        case ColumnKind::Halt: {
            const int target = col.halt.meta ? mhalt_label : halt_label;
            if (col.halt.meta && !em.ast.meta_line)
                fail("-HALT in a non-meta module");
            if (!hooked) {
                emit(aram::Opcode::Jump, Ref::label(target), 0);
            } else {
                const std::size_t j = emit(aram::Opcode::Jump, Ref::codreg(0), 0);
                auto [b, n] = clear_and(
                    line, [&] { emit(aram::Opcode::Jump, Ref::label(target), 0); });
                code[j].x = Ref::codreg(b);
                code[j].y = n - 1;
            }
            break;
        }
        case ColumnKind::Subhalt: {
            auto it = loop_test_label.find(col.subhalt.a.str());
            if (it == loop_test_label.end())
                fail("subhalt names no enclosing while/dowhile: " +
                     col.subhalt.a.str());
            if (!hooked) {
                emit(aram::Opcode::Jump, Ref::label(it->second), 0);
            } else {
                const std::size_t j = emit(aram::Opcode::Jump, Ref::codreg(0), 0);
                auto [b, n] = clear_and(line, [&] {
                    emit(aram::Opcode::Jump, Ref::label(it->second), 0);
                });
                code[j].x = Ref::codreg(b);
                code[j].y = n - 1;
            }
            break;
        }
        default:
            fail("not a terminal column");
        }
    }

    static bool is_terminal(const Column& c) {
        return c.kind == ColumnKind::Cond || c.kind == ColumnKind::Jump ||
               c.kind == ColumnKind::Halt || c.kind == ColumnKind::Subhalt;
    }

    static std::uint32_t column_entry_width(const Column& c) {
        if (c.kind == ColumnKind::Jump) return std::uint32_t(c.jumps.size());
        return 1;
    }

    void lower_line(std::size_t idx) {
        const BaseLine& line = *lines[idx];
        def_label(line_prolog_label.at(line.addr.str()));

        if (opt.instrument_lines) {
            const std::uint32_t k = std::uint32_t(idx);
            emit(aram::Opcode::Wrt1, Ref::aux(k / 32), k % 32);
        }
        if (auto it = skipbit_of.find(line.addr.str()); it != skipbit_of.end())
            emit(aram::Opcode::Wrt1, Ref::aux(flag_regs() + it->second / 32),
                 it->second % 32);

        int col_label = new_label();
        std::uint32_t col_width = column_entry_width(line.columns.front());
        emit(aram::Opcode::Jump, Ref::label(col_label), col_width - 1);

        for (std::size_t ci = 0; ci < line.columns.size(); ++ci) {
            const Column& col = line.columns[ci];
            def_label(col_label);
            if (is_terminal(col)) {
                lower_terminal(line, col);
                return;
            }
            int next_label = new_label();
            std::uint32_t next_width = 1;
            const bool last = (ci + 1 == line.columns.size());
            if (!last) next_width = column_entry_width(line.columns[ci + 1]);
            switch (col.kind) {
            case ColumnKind::Copy:
                lower_copy_column(line, col, next_label, next_width);
                break;
            case ColumnKind::Activate:
                lower_activate_column(line, col, next_label, next_width);
                break;
            case ColumnKind::Skip:
                lower_skip_column(col, next_label, next_width);
                break;
            case ColumnKind::Wait:
                lower_wait_column(col, next_label, next_width);
                break;
            default:
                fail("unexpected column kind");
            }
            col_label = next_label;
            if (last) {
                // line ends without control: clear hooks or write a scrap bit
                def_label(col_label);
                if (line_hooked(line)) {
                    const std::size_t j = emit(aram::Opcode::Jump, Ref::codreg(0), 0);
                    const std::uint32_t b = here();
                    const std::uint32_t n = emit_clear_block(line);
                    code[j].x = Ref::codreg(b);
                    code[j].y = n - 1;
                } else {
                    const std::size_t j = emit(aram::Opcode::Jump, Ref::codreg(0), 0);
                    const std::uint32_t b = here();
                    emit(aram::Opcode::Wrt0, Ref::aux(scrap()), 31);
                    code[j].x = Ref::codreg(b);
                }
            }
        }
    }

    void lower_loops() {
        for (const ConstructLine& c : em.loops) {
            def_label(loop_test_label.at(c.addr.str()));
            const Place bp = place_of(c.bit);
            if (bp.width != 1) fail("while/dowhile test a single bit");
            const std::string body_addr = c.addr.str() + ".1";
            auto it = line_index.find(body_addr);
            if (it == line_index.end())
                fail("loop " + c.addr.str() + " has no first dependent " + body_addr);
            emit(aram::Opcode::Cond, bp.reg, bp.bit);
            std::size_t exit_stub = std::size_t(-1);
            if (c.egress)
                emit_range_jump(c.egress->a, c.egress->o);
            else
                exit_stub = emit(aram::Opcode::Jump, Ref::codreg(0), 0);
            emit(aram::Opcode::Jump, Ref::label(entry_slot_label[it->second]), 0);
            if (exit_stub != std::size_t(-1)) {
                const std::uint32_t b = here();
                emit(aram::Opcode::Wrt0, Ref::aux(scrap()), 30);
                code[exit_stub].x = Ref::codreg(b);
            }
        }
    }

    // ---- assembly ----------------------------------------------------------------

    Artifact run() {
        build_layout();

        halt_label = new_label();
        mhalt_label = new_label();
        for (std::size_t i = 0; i < lines.size(); ++i)
            entry_slot_label.push_back(new_label());
        for (const BaseLine* l : lines)
            line_prolog_label[l->addr.str()] = new_label();

        auto line_slot = [&](const LineAddr& a) {
            auto it = line_index.find(a.str());
            if (it == line_index.end()) fail("module has no line " + a.str());
            return entry_slot_label[it->second];
        };

        emit(aram::Opcode::Wrt1, Ref::storage(busy_reg_off), 0, 1);
        emit(aram::Opcode::Jump, Ref::label(line_slot(LineAddr{{1}})), 0);
        if (em.ast.meta_line) {
            emit(aram::Opcode::Wrt1, Ref::storage(mbsy_reg_off), 0, 2);
            emit(aram::Opcode::Jump, Ref::label(line_slot(*em.ast.meta_line)), 0);
        }

        for (std::size_t i = 0; i < lines.size(); ++i) {
            def_label(entry_slot_label[i]);
            std::uint32_t hooks = 0;
            if (opt.instrument_lines) ++hooks;
            if (skipbit_of.count(lines[i]->addr.str())) ++hooks;
            emit(aram::Opcode::Jump,
                 Ref::label(line_prolog_label.at(lines[i]->addr.str())), hooks);
        }

        for (std::size_t i = 0; i < lines.size(); ++i) lower_line(i);
        lower_loops();

        def_label(halt_label);
        emit(aram::Opcode::Wrt0, Ref::storage(busy_reg_off), 0, 1);
        def_label(mhalt_label);
        if (em.ast.meta_line)
            emit(aram::Opcode::Wrt0, Ref::storage(mbsy_reg_off), 0, 2);

        // layout
        const std::uint32_t code_len = std::uint32_t(code.size());
        const std::uint64_t aux_base = code_len;
        const std::uint64_t storage_base = aux_base + aux_regs;
        std::uint64_t next = storage_base + storage_regs;
        for (const Instance& inst : instances)
            for (std::uint32_t k = 0; k < inst.count; ++k) {
                instance_bases[inst.first_ordinal + k] = next;
                next += inst.art->image.size();
            }
        if (next >= cfg.registers())
            fail("module " + em.ast.name + " needs " + std::to_string(next) +
                 " registers; machine has " + std::to_string(cfg.registers()));

        auto resolve = [&](const Ref& r) -> std::uint64_t {
            switch (r.r) {
            case Ref::R::Abs: return r.v;
            case Ref::R::Code: return r.v;
            case Ref::R::Storage: return storage_base + r.v + 1;
            case Ref::R::Aux: return aux_base + r.v + 1;
            case Ref::R::Inst: return instance_bases[r.ord] + r.v;
            case Ref::R::Label: {
                if (labels[std::size_t(r.v)] < 0) fail("undefined label");
                return std::uint64_t(labels[std::size_t(r.v)]);
            }
            }
            return 0;
        };

        // address constants become concrete bit patterns now
        for (const AddrConst& ac : addr_consts) {
            std::uint64_t v = resolve(ac.reg);
            if (ac.bita) v = v * 32 + ac.bit;
            for (std::uint32_t k = 0; k < ac.width; ++k)
                code[ac.first_word + k].op =
                    ((v >> k) & 1) ? aram::Opcode::Wrt1 : aram::Opcode::Wrt0;
        }

        Artifact a;
        a.name = em.ast.name;
        for (const W& w : code) {
            const std::uint64_t x = resolve(w.x);
            if (x >= (1u << 25)) fail("register address exceeds 25 bits");
            a.image.push_back(enc(w.op, std::uint32_t(x), w.y));
            a.relocatable.push_back(w.rel && w.x.r != Ref::R::Abs);
            a.busy_ref.push_back(w.busy);
        }
        a.image.resize(storage_base + storage_regs, 0);
        a.relocatable.resize(a.image.size(), false);
        a.busy_ref.resize(a.image.size(), 0);
        for (const Instance& inst : instances)
            for (std::uint32_t k = 0; k < inst.count; ++k) {
                const std::uint64_t b = instance_bases[inst.first_ordinal + k];
                const std::vector<std::uint32_t> sub =
                    inst.art->relocated_image(std::uint32_t(b), cfg);
                if (a.image.size() < b + sub.size()) {
                    a.image.resize(b + sub.size(), 0);
                    a.relocatable.resize(a.image.size(), false);
                    a.busy_ref.resize(a.image.size(), 0);
                }
                for (std::size_t j = 0; j < sub.size(); ++j) {
                    a.image[b + j] = sub[j];
                    a.relocatable[b + j] = inst.art->relocatable[j];
                }
            }

        a.code_len = code_len;
        a.meta = em.ast.meta_line.has_value();
        a.time_min = em.ast.time_min;
        a.time_max = em.ast.time_max;
        a.metatime_min = em.ast.metatime_min;
        a.metatime_max = em.ast.metatime_max;
        for (const Instance& inst : instances)
            a.level = std::max(a.level, inst.art->level + 1);

        {
            SpaceSymbol s;
            s.name = "busy";
            s.type_name = "BIT";
            s.interface = earth::Interface::Private;
            s.reg = std::uint32_t(storage_base + busy_reg_off + 1);
            s.bit = 0;
            s.width = 1;
            s.regs = 1;
            a.symbols.push_back(s);
            if (a.meta) {
                s.name = "mbsy";
                s.reg = std::uint32_t(storage_base + mbsy_reg_off + 1);
                a.symbols.push_back(s);
            }
        }
        for (const StorageEntity& e : em.ast.storage) {
            const auto& [off, ent] = entity_offset.at(e.label);
            (void)ent;
            SpaceSymbol s;
            s.name = e.label;
            s.type_name = e.type;
            s.interface = e.interface;
            s.reg = std::uint32_t(storage_base + off + 1);
            s.aggregate = e.aggregate;
            s.dims = e.dims;
            const std::uint32_t esz = elem_size(e.type);
            if (e.aggregate == Aggregate::Array ||
                e.aggregate == Aggregate::Blockstring) {
                long n = 1;
                for (long d : e.dims) n *= d;
                s.regs = std::uint32_t(esz * n + 4);
            } else if (e.aggregate == Aggregate::Pointer) {
                s.regs = 1;
            } else {
                s.regs = esz;
            }
            s.width = (e.type == "BIT")                      ? 1
                      : (e.type == "BYTE" || e.type == "char") ? 8
                      : (e.type == "WORD")                     ? 16
                      : (e.type == "OFST")                     ? 5
                      : (e.type == "DSTN")                     ? 25
                      : (e.type == "BITA")                     ? 30
                                                               : 32;
            if (e.type == "DSTN") s.bit = 5;
            a.symbols.push_back(s);
        }

        std::ostringstream map;
        {
            std::map<int, std::vector<std::string>> columns;
            std::map<std::string, int> counter;
            for (const Instance& inst : instances)
                for (std::uint32_t k = 0; k < inst.count; ++k) {
                    const int n = ++counter[inst.art->name];
                    columns[inst.art->level].push_back(
                        "(" + std::to_string(lib.index_of(inst.art->name)) + "," +
                        std::to_string(n) + ")");
                }
            bool first = true;
            for (auto& [lvl, nodes] : columns) {
                if (!first) map << " :: ";
                first = false;
                for (std::size_t i = 0; i < nodes.size(); ++i)
                    map << (i ? " " : "") << nodes[i];
            }
            map << " :: (" << (lib.size() + 1) << ",1) ;;";
        }
        a.submodule_map = map.str();
        return a;
    }
};

} // namespace

// the public barrier fragment reuses the generator on a scratch codegen
Fragment barrier(const std::vector<std::pair<std::uint32_t, std::uint32_t>>& bits,
                 std::uint32_t release, std::uint32_t base,
                 std::uint32_t scratch_base) {
    TypeLibrary types;
    ModuleLibrary lib;
    SpaceModuleAST ast;
    ExpandedModule em;
    em.ast = ast;
    aram::MachineConfig cfg;
    CodegenOptions opt;
    Codegen cg(em, types, lib, cfg, opt);
    // shift the generator so its code starts at base+1
    for (std::uint32_t i = 0; i < base; ++i)
        cg.code.push_back({aram::Opcode::Wrt0, Ref::abs(0), 0, false, 0});
    std::vector<std::pair<Ref, std::uint32_t>> refs;
    for (auto& [r, b] : bits) refs.push_back({Ref::abs(r), b});
    const int rl = cg.new_label();
    const int el = cg.new_label();
    cg.labels[std::size_t(rl)] = release;
    cg.emit_barrier(refs, rl, 1, el);
    Fragment f;
    f.entry = std::uint32_t(cg.labels[std::size_t(el)]);
    for (std::size_t i = base; i < cg.code.size(); ++i) {
        const W& w = cg.code[i];
        std::uint64_t x = 0;
        switch (w.x.r) {
        case Ref::R::Abs:
        case Ref::R::Code: x = w.x.v; break;
        case Ref::R::Aux: x = scratch_base + w.x.v; break;
        case Ref::R::Label: x = std::uint64_t(cg.labels[std::size_t(w.x.v)]); break;
        default: x = w.x.v;
        }
        f.words.push_back(enc(w.op, std::uint32_t(x), w.y));
        f.relocatable.push_back(false);
    }
    f.registers = std::uint32_t(f.words.size());
    return f;
}

Artifact codegen(const ExpandedModule& em, const TypeLibrary& types,
                 const ModuleLibrary& lib, const aram::MachineConfig& cfg,
                 const CodegenOptions& opt) {
    Codegen cg(em, types, lib, cfg, opt);
    return cg.run();
}

Artifact compile_space(const std::string& text, const TypeLibrary& types,
                       const ModuleLibrary& lib, const aram::MachineConfig& cfg,
                       const CodegenOptions& opt) {
    SpaceModuleAST ast = read_phase(text, types, lib);
    ExpandedModule em = expand(ast, types);
    return codegen(em, types, lib, cfg, opt);
}

} // namespace spatiale::space
