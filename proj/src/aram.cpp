#include "spatiale/aram.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace spatiale::aram {

DecodedInstruction decode(std::uint32_t word, const MachineConfig& cfg) {
    const unsigned n = cfg.bits_per_register();
    const unsigned p = cfg.p;
    DecodedInstruction ins;
    ins.opcode = static_cast<Opcode>((word >> (n - 2)) & 0x3u);
    ins.x = (word >> p) & ((std::uint32_t(1) << (n - p - 2)) - 1);
    ins.y = word & ((std::uint32_t(1) << p) - 1);
    return ins;
}

std::uint32_t encode(const DecodedInstruction& ins, const MachineConfig& cfg) {
    const unsigned n = cfg.bits_per_register();
    const unsigned p = cfg.p;
    return (std::uint32_t(static_cast<std::uint8_t>(ins.opcode)) << (n - 2)) |
           (ins.x << p) | ins.y;
}

const char* error_name(ErrorKind k) {
    switch (k) {
    case ErrorKind::MarkingFail: return "marking fail";
    case ErrorKind::WriteFail: return "write fail";
    case ErrorKind::HaltFail: return "halt fail";
    case ErrorKind::LiveFail: return "live fail";
    case ErrorKind::CondFail: return "cond fail";
    case ErrorKind::ConsequentFail: return "consequent fail";
    case ErrorKind::ActiveFail: return "active fail";
    case ErrorKind::JumpFail: return "jump fail";
    case ErrorKind::ErrorFail: return "error fail";
    }
    return "?";
}

namespace {

Outcome fail_bit(MachineState& st, ErrorKind k, std::uint32_t bit) {
    st.memory.set_bit(0, bit, true);
    st.marking.clear();
    Outcome o;
    o.kind = Outcome::Kind::Fail;
    o.error = k;
    return o;
}

// synchronic error bits follow the informal 3.2.2.2 list
Outcome fail_now(MachineState& st, ErrorKind k) {
    return fail_bit(st, k, static_cast<std::uint32_t>(k));
}

bool is_write(Opcode op) { return op == Opcode::Wrt0 || op == Opcode::Wrt1; }

} // namespace

std::optional<Outcome> step_sequential(MachineState& st, const MachineConfig& cfg) {
    const std::uint32_t count = cfg.registers();
    const std::uint32_t i = st.marking.front();
    const std::uint32_t w = st.memory.words[i];
    const DecodedInstruction ins = decode(w, cfg);

    if (w == 0) { // (1) success
        st.memory.set_bit(0, 0, false);
        st.marking.clear();
        Outcome o;
        o.kind = Outcome::Kind::Success;
        return o;
    }
    if (i == count - 1) // (2) halt fail -> (0,1)
        return fail_bit(st, ErrorKind::HaltFail, 1);
    if (i == count - 2 && ins.opcode == Opcode::Cond) // (3) cond fail -> (0,2)
        return fail_bit(st, ErrorKind::CondFail, 2);
    if (ins.x == 0 && ins.y != 0) // (4) error fail -> (0,3)
        return fail_bit(st, ErrorKind::ErrorFail, 3);

    switch (ins.opcode) {
    case Opcode::Wrt0:
    case Opcode::Wrt1:
        st.memory.set_bit(ins.x, ins.y, ins.opcode == Opcode::Wrt1);
        st.marking = {i + 1};
        break;
    case Opcode::Cond:
        st.marking = {st.memory.bit(ins.x, ins.y) ? i + 2 : i + 1};
        break;
    case Opcode::Jump:
        st.marking = {ins.x};
        break;
    }
    return std::nullopt;
}

std::optional<Outcome> step_synchronic(MachineState& st, const MachineConfig& cfg) {
    const std::uint32_t count = cfg.registers();
    Marking& mu = st.marking;
    MemoryBlock& mem = st.memory;

    // Decode the marked set once.
    struct Marked {
        std::uint32_t reg;
        std::uint32_t word;
        DecodedInstruction ins;
    };
    std::vector<Marked> ms;
    ms.reserve(mu.size());
    for (std::uint32_t r : mu)
        ms.push_back({r, mem.words[r], decode(mem.words[r], cfg)});

    // (1) Success: a marking holding only the special halt word.
    bool any_halt = false;
    for (const Marked& m : ms)
        if (m.word == 0) any_halt = true;
    if (any_halt && ms.size() == 1) {
        mem.set_bit(0, 0, false);
        mu.clear();
        Outcome o;
        o.kind = Outcome::Kind::Success;
        return o;
    }

    // (2) Marking fail: multiset.
    for (std::size_t k = 1; k < mu.size(); ++k)
        if (mu[k] == mu[k - 1])
            return fail_now(st, ErrorKind::MarkingFail);

    // (3) Write fail: two distinct marked writes to the same (x,y). A halt
    // word wins conflicts on (0,0) rather than contending for it.
    {
        std::unordered_set<std::uint64_t> targets;
        for (const Marked& m : ms)
            if (is_write(m.ins.opcode) && m.word != 0) {
                std::uint64_t key = (std::uint64_t(m.ins.x) << 5) | m.ins.y;
                if (any_halt && key == 0) continue; // the halt wins (0,0)
                if (!targets.insert(key).second)
                    return fail_now(st, ErrorKind::WriteFail);
            }
    }

    // A halt word co-marked with nothing but writes is a legal cycle: the
    // writes land, the halt resets (0,0), and the drained marking ends the
    // run one cycle later ("successful one cycle after").
    if (any_halt) {
        bool all_writes = true;
        for (const Marked& m : ms)
            if (!is_write(m.ins.opcode)) { all_writes = false; break; }
        bool reserved = false;
        for (const Marked& m : ms)
            if (m.word != 0 && m.ins.x == 0 && m.ins.y != 0) reserved = true;
        if (all_writes && !reserved) {
            for (const Marked& m : ms)
                if (m.word != 0 && !(m.ins.x == 0 && m.ins.y == 0))
                    mem.set_bit(m.ins.x, m.ins.y, m.ins.opcode == Opcode::Wrt1);
            mem.set_bit(0, 0, false);
            mu.clear();
            return std::nullopt;
        }
        // (4) Halt fail: a halt word co-marked with control instructions.
        return fail_now(st, ErrorKind::HaltFail);
    }

    // (5) Live fail is handled by run() on an empty marking.

    // (6) Cond fail: marked cond in the last-but-one register.
    for (const Marked& m : ms)
        if (m.ins.opcode == Opcode::Cond && m.reg == count - 2)
            return fail_now(st, ErrorKind::CondFail);

    // (7) Consequent fail: two of a cond triplet marked together. The cond
    // itself need not be marked for the (k+1,k+2) case.
    {
        std::unordered_set<std::uint32_t> set(mu.begin(), mu.end());
        for (const Marked& m : ms) {
            if (m.ins.opcode == Opcode::Cond &&
                (set.count(m.reg + 1) || set.count(m.reg + 2)))
                return fail_now(st, ErrorKind::ConsequentFail);
            if (m.reg >= 1 && set.count(m.reg + 1)) {
                DecodedInstruction prev = decode(mem.words[m.reg - 1], cfg);
                if (prev.opcode == Opcode::Cond)
                    return fail_now(st, ErrorKind::ConsequentFail);
            }
        }
    }

    // (8) Active fail: a marked write targeting a different marked register.
    {
        std::unordered_set<std::uint32_t> set(mu.begin(), mu.end());
        for (const Marked& m : ms)
            if (is_write(m.ins.opcode) && m.ins.x != m.reg && set.count(m.ins.x))
                return fail_now(st, ErrorKind::ActiveFail);
    }

    // (9) Jump fail.
    for (const Marked& m : ms)
        if (m.ins.opcode == Opcode::Jump &&
            (m.ins.x == 0 || std::uint64_t(m.ins.x) + m.ins.y >= count))
            return fail_now(st, ErrorKind::JumpFail);

    // (10) Error fail: destination register 0 with nonzero offset.
    for (const Marked& m : ms)
        if (m.ins.x == 0 && m.ins.y != 0)
            return fail_now(st, ErrorKind::ErrorFail);

    // (11) Legal cycle. Reads (cond tests) happen against the pre-cycle
    // memory; then all writes land; the new marking may be a multiset.
    Marking next;
    for (const Marked& m : ms) {
        if (m.ins.opcode == Opcode::Cond) {
            next.push_back(mem.bit(m.ins.x, m.ins.y) ? m.reg + 2 : m.reg + 1);
        } else if (m.ins.opcode == Opcode::Jump) {
            for (std::uint32_t r = m.ins.x; r <= m.ins.x + m.ins.y; ++r)
                next.push_back(r);
        }
    }
    for (const Marked& m : ms)
        if (is_write(m.ins.opcode))
            mem.set_bit(m.ins.x, m.ins.y, m.ins.opcode == Opcode::Wrt1);

    std::sort(next.begin(), next.end());
    mu = std::move(next);
    return std::nullopt;
}

RunResult run(MachineState& st, const MachineConfig& cfg, const RunOptions& opt) {
    RunResult res;
    if (opt.initial_marking)
        st.marking = *opt.initial_marking;
    else
        st.marking = (opt.mode == RunMode::Sequential) ? Marking{1} : Marking{1, 2};
    std::sort(st.marking.begin(), st.marking.end());

    std::uint64_t cycles = 0;
    while (true) {
        if (opt.trace)
            res.trace.push_back(st.marking);
        if (st.marking.empty()) {
            // Live fail: empty marking with the machine busy bit still set
            // and no cond fail recorded. A drained marking with (0,0) clear
            // ends the run as a success.
            if (opt.mode == RunMode::Synchronic && cycles > 0 &&
                st.memory.bit(0, 0) && !st.memory.bit(0, 5)) {
                ++cycles;
                res.outcome = fail_now(st, ErrorKind::LiveFail);
                res.outcome.cycles_elapsed = cycles;
                return res;
            }
            res.outcome.kind = st.memory.bit(0, 0) ? Outcome::Kind::Fail
                                                   : Outcome::Kind::Success;
            res.outcome.cycles_elapsed = cycles;
            return res;
        }
        if (cycles >= opt.max_cycles) {
            res.outcome.kind = Outcome::Kind::CycleLimit;
            res.outcome.cycles_elapsed = cycles;
            return res;
        }
        ++cycles;
        std::optional<Outcome> done = (opt.mode == RunMode::Sequential)
                                          ? step_sequential(st, cfg)
                                          : step_synchronic(st, cfg);
        if (done) {
            if (opt.trace)
                res.trace.push_back(st.marking); // final empty marking
            res.outcome = *done;
            res.outcome.cycles_elapsed = cycles;
            return res;
        }
    }
}

void save_image(const MemoryBlock& block, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path + " for writing");
    for (std::uint32_t w : block.words) {
        unsigned char b[4] = {static_cast<unsigned char>(w & 0xff),
                              static_cast<unsigned char>((w >> 8) & 0xff),
                              static_cast<unsigned char>((w >> 16) & 0xff),
                              static_cast<unsigned char>((w >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    }
}

MemoryBlock load_image(const std::string& path, const MachineConfig& cfg) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    const std::uint64_t size = std::uint64_t(in.tellg());
    const std::uint64_t expected = std::uint64_t(cfg.registers()) * 4;
    if (size != expected)
        throw std::runtime_error("image " + path + " has wrong size: got " +
                                 std::to_string(size) + ", want " +
                                 std::to_string(expected));
    in.seekg(0);
    MemoryBlock block(cfg);
    for (std::uint32_t& w : block.words) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        w = std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
            (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
    }
    return block;
}

std::string format_marking(const Marking& m) {
    std::string s;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(m[i]);
    }
    return s;
}

} // namespace spatiale::aram
