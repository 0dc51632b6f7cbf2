#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spatiale/aram.hpp"

namespace spatiale::earth {

// ---- numexes ---------------------------------------------------------------
// The eight fixed arithmetic formats of 4.5.1. The "leading number" is the
// anchor integer that linename incrementation adjusts.
struct Numex {
    enum class Kind {
        Int,        // a
        Rep,        // r1
        MulRep,     // (b*r1)
        AddRep,     // (a+r1)
        AddMul,     // (a+b*r1)
        AddRepRep,  // (a+r1+r2)
        SubRep,     // (a-r1)
        RepAddMul,  // (r1+b*r2)
    };
    Kind kind = Kind::Int;
    long a = 0;
    long b = 0;
    char r1 = 0;
    char r2 = 0;

    static Numex integer(long v) { return Numex{Kind::Int, v, 0, 0, 0}; }

    bool is_const() const { return kind == Kind::Int; }
    bool contains(char rep) const;
    bool replicative() const { return kind != Kind::Int; }
    int rep_count() const;
    long leading() const;
    void bump(long m);
    // Substitutes rep := v, collapsing to a simpler format.
    Numex subst(char rep, long v) const;
    long eval(const std::map<char, long>& env) const;
    std::string str() const;
};

Numex parse_numex(const std::string& text);

// ---- declarations ------------------------------------------------------------

enum class StorageKind : std::uint8_t { Bit, Byte, Word, Reg, Ofst, Dstn, Bita };
enum class Interface : std::uint8_t { Input, Output, Ioput, Private };

const char* storage_kind_name(StorageKind k);
const char* interface_name(Interface i);

struct StorageDecl {
    StorageKind kind;
    std::string name;
    Interface interface;
};

struct EarthDeclarations {
    std::string name;
    std::optional<long> meta; // linename of the second-phase entry
    std::vector<StorageDecl> storage; // in declaration order
    long time_min = 0, time_max = 0;
};

// ---- code --------------------------------------------------------------------

enum class EOp : std::uint8_t { Wrt0, Wrt1, Cond, Jump };

struct Destination {
    enum class Kind { Named, Bracketed, Absolute } kind = Kind::Named;
    std::string name;       // Named
    Numex line;             // Bracketed: [line]
    long absolute = 0;      // Absolute register
    std::optional<Numex> bit; // bit index / offset
};

struct EarthInstr {
    EOp op;
    Destination dest;  // wrt/cond
    Numex jump_line;   // jump: relative jump number
    Numex jump_offset; // jump: offset
};

struct EarthConstruct;

struct ReplicativeStructure {
    Numex left, right;
    char replicator;
    bool dashed = false;
    std::vector<EarthConstruct> body;
};

struct EarthConstruct {
    std::optional<Numex> linename;
    std::variant<EarthInstr, ReplicativeStructure> node;

    bool is_line() const { return node.index() == 0; }
    const EarthInstr& instr() const { return std::get<EarthInstr>(node); }
    EarthInstr& instr() { return std::get<EarthInstr>(node); }
    const ReplicativeStructure& structure() const {
        return std::get<ReplicativeStructure>(node);
    }
    ReplicativeStructure& structure() { return std::get<ReplicativeStructure>(node); }
};

struct EarthModule {
    EarthDeclarations decls;
    std::vector<EarthConstruct> code; // endc is a marker, not stored
};

struct FlatLine {
    std::optional<long> linename;
    EarthInstr instr; // all numexes constant after expansion
};

// ---- compiled form -------------------------------------------------------------

struct Symbol {
    std::string name;
    StorageKind kind;
    Interface interface;
    std::uint32_t reg;   // register offset within the storage area
    std::uint32_t bit;   // first bit
    std::uint32_t width; // bits
};

struct CompiledModule {
    std::string name;
    std::uint32_t code_len = 0;    // machine code registers (1..code_len)
    std::uint32_t storage_len = 0; // storage registers after the code
    std::vector<std::uint32_t> words; // embedded form: busy/mbsy as storage bits
    // per-word: x field is module-relative (true) or absolute (false)
    std::vector<bool> relocatable;
    // per-word: destination resolves to the module's busy (1) / mbsy (2) bit
    std::vector<std::uint8_t> busy_ref;
    std::vector<Symbol> symbols;
    bool meta = false;
    long time_min = 0, time_max = 0;
    long metatime_min = 0, metatime_max = 0;
    // reference metadata for inspect/disasm
    std::vector<std::pair<long, std::uint32_t>> linename_registers;

    std::uint32_t total_len() const { return code_len + storage_len; }
    const Symbol* find_symbol(const std::string& n) const;
    // standalone image: busy/mbsy rewritten to (0,0)
    std::vector<std::uint32_t> standalone_words(const aram::MachineConfig& cfg) const;
    // relocated copy for embedding at base (registers base+1 ... base+total)
    std::vector<std::uint32_t> relocated_words(std::uint32_t base,
                                               const aram::MachineConfig& cfg) const;
};

struct CompileOptions {
    bool warnings_to_stderr = true;
};

// Parses a full Earth source text.
EarthModule parse_earth(const std::string& text);

long eval_numex(const Numex& nx, const std::map<char, long>& env);

// De-iterates all replicative structures (4.5.2/4.5.3/4.5.7 semantics).
std::vector<FlatLine> replicate(const EarthModule& module);

// Flattened code -> machine words + symbol table.
CompiledModule resolve(const EarthModule& module,
                       const CompileOptions& opt = {});

CompiledModule compile_earth(const std::string& text,
                             const CompileOptions& opt = {});

// Assembly-style dump of the compiled words, one instruction per line.
std::string disassemble(const CompiledModule& m, const aram::MachineConfig& cfg);

} // namespace spatiale::earth
