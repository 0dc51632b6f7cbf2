#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "spatiale/aram.hpp"
#include "spatiale/earth.hpp"

namespace spatiale::space {

// ---- types -----------------------------------------------------------------

enum class Aggregate : std::uint8_t { Singleton, Array, Pointer, Blockstring };

struct TypeMember {
    std::string type;
    std::string label;
    Aggregate aggregate = Aggregate::Singleton;
    std::vector<long> dims;  // Array: up to three dims; Blockstring: {blocklen}
};

struct TypeDef {
    std::string name;
    int level = 0;
    std::uint32_t registers = 0;
    std::vector<TypeMember> members; // empty for level-0 types
};

class TypeLibrary {
public:
    TypeLibrary(); // pre-loads level-0 and level-1 types
    const TypeDef* find(const std::string& name) const;
    const TypeDef& get(const std::string& name) const;
    void add(const TypeDef& def); // validates members, computes size/level
    std::vector<std::string> names() const;
    // parses a begintypes..endtypes file and adds every definition
    void add_typedef_text(const std::string& text);

private:
    std::vector<TypeDef> types_;
};

std::uint32_t member_registers(const TypeLibrary& lib, const TypeMember& m);

// ---- module AST --------------------------------------------------------------

struct LineAddr {
    std::vector<int> parts;
    std::string str() const;
    bool operator<(const LineAddr& o) const { return parts < o.parts; }
    bool operator==(const LineAddr& o) const { return parts == o.parts; }
    LineAddr parent() const;
};

LineAddr parse_line_addr(const std::string& s);

struct IncExpr { // replicator with optional indexical function
    char rep = 0;
    std::string fn; // "", id, inc, plus2, dec, 2*, 2*+1, 2^, div2
};

long eval_indexical(const IncExpr& e, const std::map<char, long>& env);

// A copy operand / cond bit operand.
struct IdentExpr {
    enum class Kind {
        Primary,      // label[...].sel
        Secondary,    // smlabel[...].primary
        ImmediateNum, // #int or #rep/fn
        ImmediateChar,// @c
        Direct,       // (integer)
        SizeOf,       // $typename
        Address,      // &place
        ArrayAgg,     // label[[k]]
    } kind = Kind::Primary;

    std::string label;               // storage or submodule label
    std::vector<std::variant<long, IncExpr>> indices; // array coordinates
    std::string sub_label;           // Secondary: storage label inside the submodule
    std::vector<std::variant<long, IncExpr>> sub_indices;
    std::string selector;            // bit index, cell id (destn/offst/...), or ""
    std::optional<IncExpr> selector_inc;
    long number = 0;                 // immediate / direct / [[k]]
    std::optional<IncExpr> imm_inc;  // #rep/fn
    char chr = 0;
    std::string type_name;           // $typename
    std::unique_ptr<IdentExpr> inner; // Address: the place taken address of

    IdentExpr() = default;
    IdentExpr(const IdentExpr& o);
    IdentExpr& operator=(const IdentExpr& o);
    IdentExpr(IdentExpr&&) = default;
    IdentExpr& operator=(IdentExpr&&) = default;
};

struct CopyElem { IdentExpr src, dst; };
struct ActivateElem {
    std::string label;
    std::vector<std::variant<long, IncExpr>> indices;
    bool double_underscore = false;
    bool meta_phase2 = false; // -label
};
struct CondElem {
    IdentExpr bit;
    LineAddr a1; long o1 = 0;
    LineAddr a2; long o2 = 0;
};
struct JumpElem { LineAddr a; long o = 0; };
struct SkipElem { LineAddr a; };
struct WaitElem { long cycles = 0; };
struct SubhaltElem { LineAddr a; };
struct HaltElem { bool meta = false; };

enum class ColumnKind : std::uint8_t {
    Copy, Activate, Cond, Jump, Skip, Wait, Subhalt, Halt
};

struct Column {
    ColumnKind kind;
    std::vector<CopyElem> copies;
    std::vector<ActivateElem> activates;
    std::vector<CondElem> conds;
    std::vector<JumpElem> jumps;
    std::vector<SkipElem> skips;
    WaitElem wait;
    SubhaltElem subhalt;
    HaltElem halt;
};

struct DeepClause {
    char rep = 0;
    std::variant<long, IncExpr> left;
    std::string cmp; // >=, <=, <<, >
    std::variant<long, IncExpr> right;
    std::string fn;  // incrementor
};

struct ConstructLine {
    enum class Kind { Deep, While, DoWhile } kind = Kind::Deep;
    LineAddr addr;
    std::vector<DeepClause> clauses; // Deep
    IdentExpr bit;                   // While / DoWhile
    std::optional<JumpElem> egress;
};

struct BaseLine {
    LineAddr addr;
    std::vector<Column> columns;
    std::optional<ConstructLine> attached; // construct written after ':>'
};

struct StorageEntity {
    std::string type;
    std::string label;
    Aggregate aggregate = Aggregate::Singleton;
    std::vector<long> dims;
    earth::Interface interface = earth::Interface::Private;
};

struct SubmoduleDecl {
    std::string class_name;
    std::string label;
    std::vector<long> dims; // empty: singleton
};

struct SpaceModuleAST {
    std::string name;
    std::vector<StorageEntity> storage;
    std::vector<SubmoduleDecl> submodules;
    std::vector<std::string> contraction_statements; // parsed, not supported
    std::vector<char> replicators;
    std::vector<std::string> indexical_functions;
    std::optional<LineAddr> meta_line;
    long metatime_min = 0, metatime_max = 0;
    long time_min = 0, time_max = 0;
    std::vector<BaseLine> lines;
    std::vector<ConstructLine> constructs; // detached from their lines
};

// ---- compilation ----------------------------------------------------------------

struct SpaceSymbol {
    std::string name;
    std::string type_name; // BIT/BYTE/.../unsigned/int/char/float/...
    earth::Interface interface = earth::Interface::Private;
    std::uint32_t reg = 0;   // 1-based offset within the module image
    std::uint32_t regs = 1;  // registers spanned
    std::uint32_t bit = 0;   // first bit (sub-register entities)
    std::uint32_t width = 32;
    Aggregate aggregate = Aggregate::Singleton;
    std::vector<long> dims;
};

// A compiled library module. Earth and Space modules share this shape: the
// image covers code, storage and (for Space) embedded submodule instances,
// loaded at registers 1..image.size().
struct Artifact {
    std::string name;
    std::vector<std::uint32_t> image;
    std::vector<bool> relocatable;      // x field is image-relative
    std::vector<std::uint8_t> busy_ref; // word writes own busy (1) / mbsy (2)
    std::vector<SpaceSymbol> symbols;
    std::uint32_t code_len = 0; // compiled machine-code lines (reported size)
    bool meta = false;
    long time_min = 0, time_max = 0;
    long metatime_min = 0, metatime_max = 0;
    int level = 0;
    // submodule map in the fig 5.6 notation, artifact metadata
    std::string submodule_map;
    std::string notes;

    const SpaceSymbol* find_symbol(const std::string& n) const;
    // standalone image: words writing busy/mbsy become (0,0) writes
    std::vector<std::uint32_t> standalone_image(const aram::MachineConfig& cfg) const;
    // relocated copy for embedding at registers base+1 ... base+size
    std::vector<std::uint32_t> relocated_image(std::uint32_t base,
                                               const aram::MachineConfig& cfg) const;
};

Artifact artifact_from_earth(const earth::CompiledModule& m);

class ModuleLibrary; // defined in library.hpp

SpaceModuleAST read_phase(const std::string& text, const TypeLibrary& types,
                          const ModuleLibrary& lib);

// expansion: removes construct lines, leaving independent base-lines plus
// while/dowhile records the code generator lowers directly
struct ExpandedModule {
    SpaceModuleAST ast;                 // lines fully expanded
    std::vector<ConstructLine> loops;   // while / dowhile constructs
};

ExpandedModule expand(const SpaceModuleAST& ast, const TypeLibrary& types);

struct CodegenOptions {
    bool instrument_lines = false; // per-line activity flags for state traces
};

Artifact codegen(const ExpandedModule& em, const TypeLibrary& types,
                 const ModuleLibrary& lib, const aram::MachineConfig& cfg,
                 const CodegenOptions& opt = {});

Artifact compile_space(const std::string& text, const TypeLibrary& types,
                       const ModuleLibrary& lib, const aram::MachineConfig& cfg,
                       const CodegenOptions& opt = {});

// ---- generated fragments (6.14.1 / 6.14.2) -----------------------------------

struct Fragment {
    std::vector<std::uint32_t> words;     // at registers base+1 ... base+n
    std::vector<bool> relocatable;
    std::uint32_t entry = 0;              // register kicking the fragment off
    std::uint32_t registers = 0;
    std::uint32_t cycles = 0;             // jump tree: layers until targets fire
};

// Builds a jump tree marking the given target registers (absolute).
Fragment jump_tree(const std::vector<std::uint32_t>& targets, std::uint32_t base);

// jumptree(n) register count per the 6.14.1 summation.
std::uint64_t jumptree_registers(std::uint64_t n);
std::uint32_t jumptree_cycles(std::uint64_t n);

// Builds a barrier watching (register,bit) pairs; when all bits are reset it
// marks `release`; while any is set it keeps polling.
Fragment barrier(const std::vector<std::pair<std::uint32_t, std::uint32_t>>& bits,
                 std::uint32_t release, std::uint32_t base,
                 std::uint32_t scratch_base);
// scratch registers a barrier needs for its internal gate outputs
std::uint32_t barrier_scratch_registers(std::size_t nbits);

} // namespace spatiale::space
