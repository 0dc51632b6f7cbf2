#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "spatiale/aram.hpp"

namespace spatiale::bram {

using aram::ErrorKind;
using aram::Outcome;

struct BConfig {
    unsigned p = 4; // 16-bit registers, 512 per block

    unsigned bits_per_register() const { return 1u << p; }
    std::uint32_t block_size() const {
        return std::uint32_t(1) << (bits_per_register() - p - 2);
    }
};

enum class BOpcode : std::uint8_t {
    Wrt0 = 0, Wrt1 = 1, Cond = 2, Jump = 3, Mvrt = 4, Mvlt = 5
};

struct BDecodedInstruction {
    BOpcode opcode;
    std::uint32_t x;
    std::uint32_t y;
};

BDecodedInstruction bdecode(std::uint16_t word, const BConfig& cfg);
std::uint16_t bencode(const BDecodedInstruction& ins, const BConfig& cfg);
std::uint16_t bencode(BOpcode op, std::uint32_t x, std::uint32_t y, const BConfig& cfg);

// Sparse unbounded memory: absent blocks read as all-zero.
struct BMemory {
    std::map<std::uint64_t, std::vector<std::uint16_t>> blocks;
    std::uint32_t block_size = 512;

    std::uint16_t word(std::uint64_t block, std::uint32_t reg) const {
        auto it = blocks.find(block);
        return it == blocks.end() ? 0 : it->second[reg];
    }
    std::uint16_t& word_ref(std::uint64_t block, std::uint32_t reg) {
        auto it = blocks.find(block);
        if (it == blocks.end())
            it = blocks.emplace(block, std::vector<std::uint16_t>(block_size, 0)).first;
        return it->second[reg];
    }
    bool bit(std::uint64_t block, std::uint32_t reg, unsigned k) const {
        return (word(block, reg) >> k) & 1u;
    }
    void set_bit(std::uint64_t block, std::uint32_t reg, unsigned k, bool b) {
        std::uint16_t& w = word_ref(block, reg);
        if (b) w |= std::uint16_t(1u << k); else w &= std::uint16_t(~(1u << k));
    }
};

// rho: defaults to the register's own block wherever unwritten.
struct CursorMap {
    std::unordered_map<std::uint64_t, std::uint64_t> moved; // key: block*2^32+reg
    static std::uint64_t key(std::uint64_t block, std::uint32_t reg) {
        return (block << 32) | reg;
    }
    std::uint64_t get(std::uint64_t block, std::uint32_t reg) const {
        auto it = moved.find(key(block, reg));
        return it == moved.end() ? block : it->second;
    }
    void set(std::uint64_t block, std::uint32_t reg, std::uint64_t v) {
        if (v == block) moved.erase(key(block, reg));
        else moved[key(block, reg)] = v;
    }
};

// Finite marking: block -> sorted multiset of register indices.
using BMarking = std::map<std::uint64_t, std::vector<std::uint32_t>>;

struct BState {
    BMemory memory;
    BMarking marking;
    CursorMap cursors;
};

// B-Ram error bits live in register 0 of block 0:
// marking=1 write=2 halt=3 live=4 cond=5 consequent=6 active=7 cursor=8 jump=9
// (the sequential machine uses halt=1 cond=2 cursor=3 per fig 3.10).
enum class BErrorKind : std::uint8_t {
    HaltFail, CondFail, CursorFail,
    MarkingFail, WriteFail, LiveFail, ConsequentFail, ActiveFail, JumpFail
};

struct BOutcome {
    enum class Kind { Running, Success, Fail, CycleLimit } kind = Kind::Running;
    std::optional<BErrorKind> error;
    std::uint64_t cycles_elapsed = 0;
    bool success() const { return kind == Kind::Success; }
};

std::optional<BOutcome> step_sequential_b(BState& st, const BConfig& cfg);
std::optional<BOutcome> step_synchronic_b(BState& st, const BConfig& cfg);

enum class BRunMode { Sequential, Synchronic };

struct BRunOptions {
    BRunMode mode = BRunMode::Sequential;
    std::uint64_t max_cycles = 100000000;
};

BOutcome run_b(BState& st, const BConfig& cfg, const BRunOptions& opt);

// ---- B assembly -----------------------------------------------------------
// One instruction per line: wrt0|wrt1|cond x y, jump x, mvrt x, mvlt x.
// Optional leading register number and // comments are ignored.
std::vector<std::uint16_t> assemble_b(const std::string& text, const BConfig& cfg);

// The Appendix A universal-TM program for the Sequential B-Ram (corpus).
const std::string& utm_listing();

// ---- Turing machines -------------------------------------------------------

enum class TapeSymbol : std::uint8_t { S0 = 0, S1 = 1, Blank = 2 };
enum class TapeDir : std::uint8_t { L = 0, R = 1, C = 2 };

struct TMRule {
    int next_state;  // >=0 working/success index, -1 failure
    TapeSymbol write;
    TapeDir dir;
};

// States 0..n-1 are working states (0 = q0); state n is success; -1 failure.
struct TuringMachine {
    int working_states = 1;
    // delta[state*3 + symbol]; disengaged = undefined (halts in failure).
    std::vector<std::optional<TMRule>> delta;

    int success_state() const { return working_states; }
    const std::optional<TMRule>& rule(int state, TapeSymbol s) const {
        return delta[std::size_t(state) * 3 + static_cast<std::size_t>(s)];
    }
};

TuringMachine parse_tm_file(const std::string& path);
TuringMachine parse_tm_json(const std::string& text);

// Lays out UTM code, tape, unary constants and delta blocks per Appendix A.
BState encode_tm(const TuringMachine& tm, const std::vector<TapeSymbol>& tape,
                 const BConfig& cfg);

struct UtmResult {
    BOutcome outcome;
    bool tm_succeeded = false;           // the (1,0,6) success bit
    std::vector<TapeSymbol> tape;        // decoded window
};

UtmResult run_utm(const TuringMachine& tm, const std::vector<TapeSymbol>& tape,
                  const BConfig& cfg, std::uint64_t max_cycles,
                  std::size_t tape_window);

// B-memory snapshot: (block index, words) records for non-empty blocks.
void save_bsnapshot(const BMemory& mem, const std::string& path);
BMemory load_bsnapshot(const std::string& path, const BConfig& cfg);

} // namespace spatiale::bram
