#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace spatiale::aram {

// Machine geometry. p is the offset length; a register holds n = 2^p bits and
// the block holds 2^(n-p-2) registers. For p=5 that is 32-bit registers and
// 33,554,432 of them; tests usually shrink register_count.
struct MachineConfig {
    unsigned p = 5;
    std::uint32_t register_count = 0; // 0 -> full 2^(n-p-2)

    unsigned bits_per_register() const { return 1u << p; }
    std::uint32_t full_register_count() const {
        return std::uint32_t(1) << (bits_per_register() - p - 2);
    }
    std::uint32_t registers() const {
        return register_count ? register_count : full_register_count();
    }
    static MachineConfig with_registers(std::uint32_t regs, unsigned p = 5) {
        MachineConfig c;
        c.p = p;
        c.register_count = regs;
        return c;
    }
};

enum class Opcode : std::uint8_t { Wrt0 = 0, Wrt1 = 1, Cond = 2, Jump = 3 };

struct DecodedInstruction {
    Opcode opcode;
    std::uint32_t x; // destination register
    std::uint32_t y; // offset (bit index / jump range)
};

DecodedInstruction decode(std::uint32_t word, const MachineConfig& cfg);
std::uint32_t encode(const DecodedInstruction& ins, const MachineConfig& cfg);

enum class ErrorKind : std::uint8_t {
    MarkingFail = 1, // (0,1)
    WriteFail = 2,   // (0,2)
    HaltFail = 3,    // (0,3)
    LiveFail = 4,    // (0,4)
    CondFail = 5,    // (0,5)
    ConsequentFail = 6, // (0,6)
    ActiveFail = 7,  // (0,7)
    JumpFail = 8,    // (0,8)
    ErrorFail = 9,   // (0,9)
};

const char* error_name(ErrorKind k);

struct Outcome {
    enum class Kind { Running, Success, Fail, CycleLimit } kind = Kind::Running;
    std::optional<ErrorKind> error;
    std::uint64_t cycles_elapsed = 0;

    bool success() const { return kind == Kind::Success; }
};

// sigma: bit y of register x is words[x] >> y & 1.
struct MemoryBlock {
    explicit MemoryBlock(const MachineConfig& cfg)
        : words(cfg.registers(), 0) {}
    MemoryBlock() = default;

    std::vector<std::uint32_t> words;

    bool bit(std::uint32_t x, std::uint32_t y) const {
        return (words[x] >> y) & 1u;
    }
    void set_bit(std::uint32_t x, std::uint32_t y, bool b) {
        if (b)
            words[x] |= (std::uint32_t(1) << y);
        else
            words[x] &= ~(std::uint32_t(1) << y);
    }
};

// Marking kept as a sorted multiset of register indices so that a Marking
// Fail is still detectable one cycle after a duplicate was generated.
using Marking = std::vector<std::uint32_t>;

struct MachineState {
    MemoryBlock memory;
    Marking marking;
};

enum class RunMode { Sequential, Synchronic };

// One eta' application (fig 3.4). Marking must be a singleton.
// Returns an engaged Outcome when the run ended this cycle.
std::optional<Outcome> step_sequential(MachineState& st, const MachineConfig& cfg);

// One eta application (fig 3.7 with the informal error-bit numbering).
std::optional<Outcome> step_synchronic(MachineState& st, const MachineConfig& cfg);

struct RunResult {
    Outcome outcome;
    // Ordered legal markings (each sorted ascending), including the final
    // empty marking, when tracing was requested.
    std::vector<Marking> trace;
};

struct RunOptions {
    RunMode mode = RunMode::Synchronic;
    std::uint64_t max_cycles = 100000000; // 10^8
    bool trace = false;
    std::optional<Marking> initial_marking; // default {1} / {1,2}
};

RunResult run(MachineState& st, const MachineConfig& cfg, const RunOptions& opt);

// Memory image files: register_count consecutive little-endian 32-bit words.
void save_image(const MemoryBlock& block, const std::string& path);
MemoryBlock load_image(const std::string& path, const MachineConfig& cfg);

std::string format_marking(const Marking& m);

} // namespace spatiale::aram
