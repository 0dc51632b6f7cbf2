#include "spatiale/bram.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace spatiale::bram {

BDecodedInstruction bdecode(std::uint16_t word, const BConfig& cfg) {
    const unsigned n = cfg.bits_per_register();
    const unsigned p = cfg.p;
    BDecodedInstruction ins;
    ins.opcode = static_cast<BOpcode>((word >> (n - 3)) & 0x7u);
    ins.x = (word >> p) & ((1u << (n - p - 3)) - 1);
    ins.y = word & ((1u << p) - 1);
    return ins;
}

std::uint16_t bencode(const BDecodedInstruction& ins, const BConfig& cfg) {
    return bencode(ins.opcode, ins.x, ins.y, cfg);
}

std::uint16_t bencode(BOpcode op, std::uint32_t x, std::uint32_t y, const BConfig& cfg) {
    const unsigned n = cfg.bits_per_register();
    const unsigned p = cfg.p;
    return std::uint16_t((std::uint32_t(static_cast<std::uint8_t>(op)) << (n - 3)) |
                         (x << p) | y);
}

namespace {

BOutcome bfail(BState& st, BErrorKind k, unsigned bit) {
    st.memory.set_bit(0, 0, bit, true);
    st.marking.clear();
    BOutcome o;
    o.kind = BOutcome::Kind::Fail;
    o.error = k;
    return o;
}

bool bwrite_op(BOpcode op) { return op == BOpcode::Wrt0 || op == BOpcode::Wrt1; }

} // namespace

std::optional<BOutcome> step_sequential_b(BState& st, const BConfig& cfg) {
    const std::uint32_t bs = cfg.block_size();
    const std::uint64_t i = st.marking.begin()->first;
    const std::uint32_t j = st.marking.begin()->second.front();
    const std::uint16_t w = st.memory.word(i, j);
    const BDecodedInstruction ins = bdecode(w, cfg);
    const std::uint64_t rho = st.cursors.get(i, j);

    if (w == 0 && rho == 0) { // (1) success
        st.memory.set_bit(0, 0, 0, false);
        st.marking.clear();
        BOutcome o;
        o.kind = BOutcome::Kind::Success;
        return o;
    }
    if (j == bs - 1) // (2) halt fail
        return bfail(st, BErrorKind::HaltFail, 1);
    if (j == bs - 2 && ins.opcode == BOpcode::Cond) // (3) cond fail
        return bfail(st, BErrorKind::CondFail, 2);
    if (ins.opcode == BOpcode::Mvlt && st.cursors.get(rho, ins.x) == 0) // (4)
        return bfail(st, BErrorKind::CursorFail, 3);

    switch (ins.opcode) {
    case BOpcode::Wrt0:
    case BOpcode::Wrt1:
        st.memory.set_bit(rho, ins.x, ins.y, ins.opcode == BOpcode::Wrt1);
        st.marking = {{i, {j + 1}}};
        break;
    case BOpcode::Cond:
        st.marking = {{i, {st.memory.bit(rho, ins.x, ins.y) ? j + 2 : j + 1}}};
        break;
    case BOpcode::Jump:
        st.marking = {{rho, {ins.x}}};
        break;
    case BOpcode::Mvrt:
        st.cursors.set(rho, ins.x, st.cursors.get(rho, ins.x) + 1);
        st.marking = {{i, {j + 1}}};
        break;
    case BOpcode::Mvlt:
        st.cursors.set(rho, ins.x, st.cursors.get(rho, ins.x) - 1);
        st.marking = {{i, {j + 1}}};
        break;
    }
    return std::nullopt;
}

std::optional<BOutcome> step_synchronic_b(BState& st, const BConfig& cfg) {
    const std::uint32_t bs = cfg.block_size();

    struct Marked {
        std::uint64_t block;
        std::uint32_t reg;
        std::uint16_t word;
        BDecodedInstruction ins;
        std::uint64_t rho;
    };
    std::vector<Marked> ms;
    for (const auto& [block, regs] : st.marking)
        for (std::uint32_t r : regs)
            ms.push_back({block, r, st.memory.word(block, r),
                          bdecode(st.memory.word(block, r), cfg),
                          st.cursors.get(block, r)});

    // (1) Success: singleton marking holding a zero word pointing at block 0.
    if (ms.size() == 1 && ms[0].word == 0 && ms[0].rho == 0) {
        st.memory.set_bit(0, 0, 0, false);
        st.marking.clear();
        BOutcome o;
        o.kind = BOutcome::Kind::Success;
        return o;
    }
    // (2) Marking fail: some block's register multiset has a duplicate.
    for (const auto& [block, regs] : st.marking)
        for (std::size_t k = 1; k < regs.size(); ++k)
            if (regs[k] == regs[k - 1])
                return bfail(st, BErrorKind::MarkingFail, 1);
    // (3) Write fail: two distinct marked writes resolving to one location.
    // Conflicting cursor moves on one register are treated the same way.
    {
        std::map<std::tuple<std::uint64_t, std::uint32_t, std::uint32_t>, int> wt;
        std::map<std::pair<std::uint64_t, std::uint32_t>, int> ct;
        for (const Marked& m : ms) {
            if (bwrite_op(m.ins.opcode)) {
                if (++wt[{m.rho, m.ins.x, m.ins.y}] > 1)
                    return bfail(st, BErrorKind::WriteFail, 2);
            } else if (m.ins.opcode == BOpcode::Mvrt || m.ins.opcode == BOpcode::Mvlt) {
                if (++ct[{m.rho, m.ins.x}] > 1)
                    return bfail(st, BErrorKind::WriteFail, 2);
            }
        }
    }
    // (4) Halt fail: a zero word marked together with anything else.
    if (ms.size() > 1)
        for (const Marked& m : ms)
            if (m.word == 0)
                return bfail(st, BErrorKind::HaltFail, 3);
    // (5) live fail is detected by run_b on an empty marking.
    // (6) Cond fail.
    for (const Marked& m : ms)
        if (m.ins.opcode == BOpcode::Cond && m.reg == bs - 2)
            return bfail(st, BErrorKind::CondFail, 5);
    // (7) Consequent fail (within a block).
    for (const Marked& m : ms) {
        const auto it = st.marking.find(m.block);
        const auto& regs = it->second;
        auto marked = [&](std::uint32_t r) {
            return std::binary_search(regs.begin(), regs.end(), r);
        };
        if (m.ins.opcode == BOpcode::Cond && (marked(m.reg + 1) || marked(m.reg + 2)))
            return bfail(st, BErrorKind::ConsequentFail, 6);
        if (m.reg >= 1 && marked(m.reg + 1) &&
            bdecode(st.memory.word(m.block, m.reg - 1), cfg).opcode == BOpcode::Cond)
            return bfail(st, BErrorKind::ConsequentFail, 6);
    }
    // (8) Active fail: a marked write into a marked register.
    for (const Marked& m : ms)
        if (bwrite_op(m.ins.opcode) &&
            !(m.rho == m.block && m.ins.x == m.reg)) {
            auto it = st.marking.find(m.rho);
            if (it != st.marking.end() &&
                std::binary_search(it->second.begin(), it->second.end(), m.ins.x))
                return bfail(st, BErrorKind::ActiveFail, 7);
        }
    // (9) Cursor fail.
    for (const Marked& m : ms)
        if (m.ins.opcode == BOpcode::Mvlt && st.cursors.get(m.rho, m.ins.x) == 0)
            return bfail(st, BErrorKind::CursorFail, 8);
    // (10) Jump fail.
    for (const Marked& m : ms)
        if (m.ins.opcode == BOpcode::Jump &&
            ((m.rho == 0 && m.ins.x == 0) || m.ins.x + m.ins.y >= bs))
            return bfail(st, BErrorKind::JumpFail, 9);

    // Legal cycle: xi1 writes, xi2 marking, xi3 cursor moves; reads first.
    BMarking next;
    for (const Marked& m : ms) {
        if (m.ins.opcode == BOpcode::Cond) {
            next[m.block].push_back(st.memory.bit(m.rho, m.ins.x, m.ins.y) ? m.reg + 2
                                                                           : m.reg + 1);
        } else if (m.ins.opcode == BOpcode::Jump) {
            for (std::uint32_t r = m.ins.x; r <= m.ins.x + m.ins.y; ++r)
                next[m.rho].push_back(r);
        }
    }
    for (const Marked& m : ms) {
        if (bwrite_op(m.ins.opcode))
            st.memory.set_bit(m.rho, m.ins.x, m.ins.y, m.ins.opcode == BOpcode::Wrt1);
        else if (m.ins.opcode == BOpcode::Mvrt)
            st.cursors.set(m.rho, m.ins.x, st.cursors.get(m.rho, m.ins.x) + 1);
        else if (m.ins.opcode == BOpcode::Mvlt)
            st.cursors.set(m.rho, m.ins.x, st.cursors.get(m.rho, m.ins.x) - 1);
    }
    for (auto& [block, regs] : next)
        std::sort(regs.begin(), regs.end());
    st.marking = std::move(next);
    return std::nullopt;
}

BOutcome run_b(BState& st, const BConfig& cfg, const BRunOptions& opt) {
    std::uint64_t cycles = 0;
    while (true) {
        if (st.marking.empty()) {
            if (st.memory.bit(0, 0, 0) && !st.memory.bit(0, 0, 5)) {
                ++cycles;
                BOutcome o = bfail(st, BErrorKind::LiveFail, 4);
                o.cycles_elapsed = cycles;
                return o;
            }
            BOutcome o;
            o.kind = st.memory.bit(0, 0, 0) ? BOutcome::Kind::Fail
                                            : BOutcome::Kind::Success;
            o.cycles_elapsed = cycles;
            return o;
        }
        if (cycles >= opt.max_cycles) {
            BOutcome o;
            o.kind = BOutcome::Kind::CycleLimit;
            o.cycles_elapsed = cycles;
            return o;
        }
        ++cycles;
        std::optional<BOutcome> done = (opt.mode == BRunMode::Sequential)
                                           ? step_sequential_b(st, cfg)
                                           : step_synchronic_b(st, cfg);
        if (done) {
            done->cycles_elapsed = cycles;
            return *done;
        }
    }
}

std::vector<std::uint16_t> assemble_b(const std::string& text, const BConfig& cfg) {
    std::vector<std::uint16_t> words;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto cut = line.find("//");
        if (cut != std::string::npos) line.erase(cut);
        std::istringstream ls(line);
        std::string tok;
        if (!(ls >> tok)) continue;
        // optional leading register number
        if (!tok.empty() && std::isdigit(static_cast<unsigned char>(tok[0]))) {
            if (!(ls >> tok)) continue;
        }
        std::uint32_t x = 0, y = 0;
        BOpcode op;
        if (tok == "wrt0") op = BOpcode::Wrt0;
        else if (tok == "wrt1") op = BOpcode::Wrt1;
        else if (tok == "cond") op = BOpcode::Cond;
        else if (tok == "jump") op = BOpcode::Jump;
        else if (tok == "mvrt") op = BOpcode::Mvrt;
        else if (tok == "mvlt") op = BOpcode::Mvlt;
        else throw std::runtime_error("bad B instruction: " + tok);
        ls >> x;
        if (op == BOpcode::Wrt0 || op == BOpcode::Wrt1 || op == BOpcode::Cond)
            ls >> y;
        words.push_back(bencode(op, x, y, cfg));
    }
    return words;
}

// ---------------------------------------------------------------------------
// Appendix A B-language program and its expansion into assembly.
//
// Each line is either an instruction, possibly tagged with a code segment
// whose cursor it tracks, or a collective cursor move "mvrt/mvlt <segment>"
// that expands into one mv instruction per member of the segment.
// ---------------------------------------------------------------------------

namespace {

struct BLine {
    int linename = 0;        // 0 = none
    std::string op;          // wrt0|wrt1|cond|jump|mvrt|mvlt|mvseg
    std::string a;           // variable, segment or linename target
    int bit = -1;            // variable bit override (x.y style), -1 = from table
    bool seg_move_left = false;
    std::string segment;     // membership tag for cond/wrt lines
};

struct BVar {
    std::uint32_t reg;
    std::uint32_t bit;
};

const std::unordered_map<std::string, BVar>& var_table() {
    static const std::unordered_map<std::string, BVar> t = {
        {"busy", {0, 0}},
        {"tape.1", {0, 1}},         {"tape.0", {0, 0}},
        {"tapecopy.1", {0, 3}},     {"tapecopy.0", {0, 2}},
        {"statedircopy", {0, 4}},   {"success", {0, 6}},
        {"dummy", {0, 15}},
        {"oneQ", {1, 0}},           {"twoQ", {2, 0}},
        {"threeQ", {3, 0}},         {"statemovecopy", {4, 0}},
        {"statetapevalid", {5, 0}}, {"tapedir.0", {5, 1}},
        {"tapedir.1", {5, 2}},      {"newsymbol.0", {5, 3}},
        {"newsymbol.1", {5, 4}},    {"statedir.0", {5, 5}},
        {"statedir.1", {5, 6}},     {"finalstate", {5, 7}},
        {"statemove", {6, 0}},
    };
    return t;
}

// The simulation program. Linenames and structure follow the Appendix A
// listing; see the project notes for the three fixes applied to it.
std::vector<BLine> utm_source() {
    std::vector<BLine> p;
    auto ins = [&](int ln, std::string op, std::string a, std::string seg = "") {
        p.push_back({ln, std::move(op), std::move(a), -1, false, std::move(seg)});
    };
    auto mv = [&](std::string dir, std::string seg) {
        p.push_back({0, "mvseg", std::move(seg), -1, dir == "mvlt", ""});
    };
    // --- cursor initialisation ---
    ins(0, "wrt1", "busy");
    mv("mvrt", "oncerightcode");
    mv("mvrt", "tapecode");
    mv("mvrt", "statecode");
    mv("mvrt", "shiftstatecode");
    mv("mvrt", "oneQ1code"); mv("mvrt", "oneQ1code");
    mv("mvrt", "oneQ2code"); mv("mvrt", "oneQ2code");
    mv("mvrt", "twoQ1code"); mv("mvrt", "twoQ1code");
    mv("mvrt", "twoQ2code"); mv("mvrt", "twoQ2code");
    mv("mvrt", "threeQcode"); mv("mvrt", "threeQcode");
    mv("mvrt", "statemovecopycode"); mv("mvrt", "statemovecopycode");
    // --- main loop ---
    ins(1, "cond", "finalstate", "statecode");
    ins(0, "jump", "2");
    ins(0, "wrt1", "success", "oncerightcode");
    ins(0, "wrt0", "busy");
    ins(2, "cond", "tape.1", "tapecode");
    ins(0, "jump", "6");
    ins(0, "wrt1", "tapecopy.1", "oncerightcode");
    ins(0, "wrt0", "tapecopy.0", "oncerightcode");
    ins(3, "cond", "twoQ", "twoQ1code");
    ins(0, "jump", "4");
    mv("mvrt", "statecode");
    mv("mvrt", "shiftstatecode");
    mv("mvrt", "twoQ1code");
    ins(0, "jump", "3");
    p.push_back({4, "mvseg", "twoQ1code", -1, true, ""});
    ins(0, "cond", "twoQ", "twoQ1code");
    ins(0, "jump", "5");
    ins(0, "jump", "4");
    p.push_back({5, "mvseg", "twoQ1code", -1, false, ""});
    ins(0, "jump", "11");
    ins(6, "cond", "tape.0", "tapecode");
    ins(0, "jump", "10");
    ins(0, "wrt0", "tapecopy.1", "oncerightcode");
    ins(0, "wrt1", "tapecopy.0", "oncerightcode");
    ins(7, "cond", "oneQ", "oneQ1code");
    ins(0, "jump", "8");
    mv("mvrt", "statecode");
    mv("mvrt", "shiftstatecode");
    mv("mvrt", "oneQ1code");
    ins(0, "jump", "7");
    p.push_back({8, "mvseg", "oneQ1code", -1, true, ""});
    ins(0, "cond", "oneQ", "oneQ1code");
    ins(0, "jump", "9");
    ins(0, "jump", "8");
    p.push_back({9, "mvseg", "oneQ1code", -1, false, ""});
    ins(0, "jump", "11");
    ins(10, "wrt0", "tapecopy.1", "oncerightcode");
    ins(0, "wrt0", "tapecopy.0", "oncerightcode");
    ins(11, "cond", "statetapevalid", "statecode");
    ins(0, "jump", "12");
    ins(0, "jump", "13");
    ins(12, "wrt0", "success", "oncerightcode");
    ins(0, "wrt0", "busy");
    ins(13, "cond", "newsymbol.1", "statecode");
    ins(0, "jump", "15");
    ins(0, "wrt1", "tape.1", "tapecode");
    ins(14, "cond", "newsymbol.0", "statecode");
    ins(0, "jump", "16");
    ins(0, "wrt1", "tape.0", "tapecode");
    ins(0, "jump", "17");
    ins(15, "wrt0", "tape.1", "tapecode");
    ins(0, "jump", "14");
    ins(16, "wrt0", "tape.0", "tapecode");
    ins(17, "cond", "tapedir.1", "statecode");
    ins(0, "jump", "18");
    ins(0, "jump", "20");
    ins(18, "cond", "tapedir.0", "statecode");
    ins(0, "jump", "19");
    mv("mvrt", "tapecode");
    ins(0, "jump", "20");
    p.push_back({19, "mvseg", "tapecode", -1, true, ""});
    ins(20, "cond", "statedir.1", "statecode");
    ins(0, "jump", "21");
    ins(0, "jump", "31");
    ins(21, "wrt0", "dummy", "oncerightcode");
    ins(0, "cond", "statedir.0", "statecode");
    ins(0, "jump", "22");
    ins(0, "wrt1", "statedircopy", "oncerightcode");
    ins(0, "jump", "23");
    ins(22, "wrt0", "statedircopy", "oncerightcode");
    p.push_back({23, "mvseg", "shiftstatecode", -1, false, ""});
    ins(0, "cond", "statemove", "shiftstatecode");
    ins(0, "jump", "24");
    mv("mvrt", "statemovecopycode");
    ins(0, "wrt1", "statemovecopy", "statemovecopycode");
    ins(0, "jump", "23");
    p.push_back({24, "mvseg", "shiftstatecode", -1, true, ""});
    ins(0, "cond", "statemove", "shiftstatecode");
    ins(0, "jump", "25");
    ins(0, "jump", "24");
    ins(25, "cond", "statemovecopy", "statemovecopycode");
    ins(0, "jump", "31");
    // consume the unary digit so the copy region is clean for the next
    // state change (see notes on the printed listing)
    ins(0, "wrt0", "statemovecopy", "statemovecopycode");
    mv("mvlt", "statemovecopycode");
    ins(26, "cond", "threeQ", "threeQcode");
    ins(0, "jump", "29");
    ins(0, "cond", "statedircopy", "oncerightcode");
    ins(0, "jump", "27");
    mv("mvrt", "statecode");
    mv("mvrt", "shiftstatecode");
    ins(0, "jump", "28");
    p.push_back({27, "mvseg", "statecode", -1, true, ""});
    mv("mvlt", "shiftstatecode");
    p.push_back({28, "mvseg", "threeQcode", -1, false, ""});
    ins(0, "jump", "26");
    p.push_back({29, "mvseg", "threeQcode", -1, true, ""});
    ins(0, "cond", "threeQ", "threeQcode");
    ins(0, "jump", "30");
    ins(0, "jump", "29");
    p.push_back({30, "mvseg", "threeQcode", -1, false, ""});
    ins(0, "jump", "25");
    p.push_back({31, "mvseg", "statemovecopycode", -1, false, ""});
    ins(32, "cond", "tapecopy.1", "oncerightcode");
    ins(0, "jump", "36");
    ins(33, "cond", "twoQ", "twoQ2code");
    ins(0, "jump", "34");
    mv("mvlt", "statecode");
    mv("mvlt", "shiftstatecode");
    mv("mvrt", "twoQ2code");
    ins(0, "jump", "33");
    p.push_back({34, "mvseg", "twoQ2code", -1, true, ""});
    ins(0, "cond", "twoQ", "twoQ2code");
    ins(0, "jump", "35");
    ins(0, "jump", "34");
    p.push_back({35, "mvseg", "twoQ2code", -1, false, ""});
    ins(0, "jump", "1");
    ins(36, "cond", "tapecopy.0", "oncerightcode");
    ins(0, "jump", "1");
    ins(37, "cond", "oneQ", "oneQ2code");
    ins(0, "jump", "38");
    mv("mvlt", "statecode");
    mv("mvlt", "shiftstatecode");
    mv("mvrt", "oneQ2code");
    ins(0, "jump", "37");
    p.push_back({38, "mvseg", "oneQ2code", -1, true, ""});
    ins(0, "cond", "oneQ", "oneQ2code");
    ins(0, "jump", "39");
    ins(0, "jump", "38");
    p.push_back({39, "mvseg", "oneQ2code", -1, false, ""});
    ins(0, "jump", "1");
    return p;
}

std::string expand_utm() {
    const std::vector<BLine> src = utm_source();

    // membership counts per segment
    std::unordered_map<std::string, int> seg_size;
    for (const BLine& l : src)
        if (!l.segment.empty())
            ++seg_size[l.segment];

    // pass 1: addresses
    std::vector<std::uint32_t> addr(src.size());
    std::unordered_map<int, std::uint32_t> linename_addr;
    std::unordered_map<std::string, std::vector<std::uint32_t>> seg_members;
    std::uint32_t reg = 1;
    for (std::size_t i = 0; i < src.size(); ++i) {
        addr[i] = reg;
        if (src[i].linename)
            linename_addr[src[i].linename] = reg;
        reg += (src[i].op == "mvseg") ? seg_size.at(src[i].a) : 1;
    }
    for (std::size_t i = 0; i < src.size(); ++i)
        if (!src[i].segment.empty())
            seg_members[src[i].segment].push_back(addr[i]);

    // pass 2: emit assembly text
    std::ostringstream out;
    const auto& vars = var_table();
    reg = 1;
    for (const BLine& l : src) {
        if (l.op == "mvseg") {
            for (std::uint32_t member : seg_members.at(l.a))
                out << reg++ << "\t" << (l.seg_move_left ? "mvlt " : "mvrt ")
                    << member << "\n";
            continue;
        }
        out << reg++ << "\t";
        if (l.op == "jump") {
            out << "jump " << linename_addr.at(std::stoi(l.a)) << "\n";
        } else {
            const BVar v = vars.at(l.a);
            out << l.op << " " << v.reg << " " << v.bit << "\n";
        }
    }
    return out.str();
}

} // namespace

const std::string& utm_listing() {
    static const std::string listing = expand_utm();
    return listing;
}

// ---------------------------------------------------------------------------
// TM encoding (Appendix A.2 / fig A.3 coordinates)
// ---------------------------------------------------------------------------

BState encode_tm(const TuringMachine& tm, const std::vector<TapeSymbol>& tape,
                 const BConfig& cfg) {
    BState st;
    st.memory.block_size = cfg.block_size();

    // UTM code into block 0, registers 1..n
    const std::vector<std::uint16_t> code = assemble_b(utm_listing(), cfg);
    if (code.size() + 1 >= cfg.block_size())
        throw std::runtime_error("UTM code does not fit the code block");
    for (std::size_t i = 0; i < code.size(); ++i)
        st.memory.word_ref(0, std::uint32_t(i + 1)) = code[i];

    const std::uint32_t q = std::uint32_t(tm.working_states) + 1; // + success
    if (3 * q + 5 >= cfg.block_size())
        throw std::runtime_error("state count exceeds the unary rows");

    // tape squares: t_i at (i+1, 0, {1,0}); blanks beyond need no writes
    for (std::size_t i = 0; i < tape.size(); ++i) {
        const unsigned enc = static_cast<unsigned>(tape[i]) == 2 ? 2u
                             : static_cast<unsigned>(tape[i]);
        st.memory.set_bit(i + 1, 0, 1, (enc >> 1) & 1);
        st.memory.set_bit(i + 1, 0, 0, enc & 1);
    }
    // blank is <1,0>; untouched squares read as <0,0> = '0', so mark the
    // squares beyond the input explicitly blank for a generous margin
    for (std::size_t i = tape.size(); i < tape.size() + 64; ++i)
        st.memory.set_bit(i + 1, 0, 1, true);

    // unary constants: q+1 in row 1, 2q+2 in row 2, 3q+3 in row 3,
    // each written as 0 1...1 0 starting at block 2
    for (std::uint32_t n = 2; n <= q + 2; ++n) st.memory.set_bit(n, 1, 0, true);
    for (std::uint32_t n = 2; n <= 2 * q + 3; ++n) st.memory.set_bit(n, 2, 0, true);
    for (std::uint32_t n = 2; n <= 3 * q + 4; ++n) st.memory.set_bit(n, 3, 0, true);

    // delta blocks: state s occupies blocks 1+3s(q+1) .. 3(s+1)(q+1);
    // the success state owns the last one with only finalstate set.
    auto delta_base = [&](int s) { return 1 + 3ull * std::uint32_t(s) * (q + 1); };
    st.memory.set_bit(delta_base(tm.success_state()), 5, 7, true);
    for (int s = 0; s < tm.working_states; ++s) {
        for (unsigned sym = 0; sym < 3; ++sym) {
            const auto& rule = tm.rule(s, static_cast<TapeSymbol>(sym));
            const std::uint64_t a = delta_base(s) + std::uint64_t(sym) * (q + 1);
            if (!rule || rule->next_state < 0)
                continue; // undefined or failure: statetapevalid stays 0
            st.memory.set_bit(a, 5, 0, true); // statetapevalid
            const unsigned w = static_cast<unsigned>(rule->write);
            st.memory.set_bit(a, 5, 4, (w >> 1) & 1); // newsymbol.1
            st.memory.set_bit(a, 5, 3, w & 1);        // newsymbol.0
            const unsigned d = static_cast<unsigned>(rule->dir);
            st.memory.set_bit(a, 5, 2, (d >> 1) & 1); // tapedir.1
            st.memory.set_bit(a, 5, 1, d & 1);        // tapedir.0
            const int dist = rule->next_state - s;
            if (dist == 0) {
                st.memory.set_bit(a, 5, 6, true); // statedir = C = <1,0>
            } else {
                st.memory.set_bit(a, 5, 5, dist > 0); // R = <0,1>, L = <0,0>
                for (int k = 1; k <= std::abs(dist); ++k)
                    st.memory.set_bit(a + std::uint64_t(k), 6, 0, true);
            }
        }
    }

    st.marking = {{0, {1}}};
    return st;
}

UtmResult run_utm(const TuringMachine& tm, const std::vector<TapeSymbol>& tape,
                  const BConfig& cfg, std::uint64_t max_cycles,
                  std::size_t tape_window) {
    BState st = encode_tm(tm, tape, cfg);
    BRunOptions opt;
    opt.mode = BRunMode::Sequential;
    opt.max_cycles = max_cycles;
    UtmResult res;
    res.outcome = run_b(st, cfg, opt);
    res.tm_succeeded = st.memory.bit(1, 0, 6);
    for (std::size_t i = 0; i < tape_window; ++i) {
        const unsigned hi = st.memory.bit(i + 1, 0, 1);
        const unsigned lo = st.memory.bit(i + 1, 0, 0);
        res.tape.push_back(static_cast<TapeSymbol>((hi << 1) | lo));
    }
    return res;
}

// ---------------------------------------------------------------------------

TuringMachine parse_tm_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    TuringMachine tm;
    tm.working_states = j.at("working_states").get<int>();
    tm.delta.assign(std::size_t(tm.working_states) * 3, std::nullopt);
    auto symbol = [](const std::string& s) {
        if (s == "0") return TapeSymbol::S0;
        if (s == "1") return TapeSymbol::S1;
        if (s == "_" || s == "#") return TapeSymbol::Blank;
        throw std::runtime_error("bad tape symbol: " + s);
    };
    for (const auto& r : j.at("delta")) {
        const int state = r.at("state").get<int>();
        const TapeSymbol read = symbol(r.at("read").get<std::string>());
        TMRule rule;
        const auto& next = r.at("next");
        if (next.is_string()) {
            const std::string s = next.get<std::string>();
            if (s == "success") rule.next_state = tm.working_states;
            else if (s == "failure") rule.next_state = -1;
            else throw std::runtime_error("bad next state: " + s);
        } else {
            rule.next_state = next.get<int>();
        }
        rule.write = symbol(r.at("write").get<std::string>());
        const std::string mv = r.at("move").get<std::string>();
        rule.dir = mv == "L" ? TapeDir::L : mv == "R" ? TapeDir::R : TapeDir::C;
        tm.delta[std::size_t(state) * 3 + static_cast<std::size_t>(read)] = rule;
    }
    return tm;
}

TuringMachine parse_tm_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_tm_json(ss.str());
}

void save_bsnapshot(const BMemory& mem, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot open " + path + " for writing");
    for (const auto& [block, words] : mem.blocks) {
        bool empty = true;
        for (std::uint16_t w : words)
            if (w) { empty = false; break; }
        if (empty) continue;
        std::uint64_t b = block;
        out.write(reinterpret_cast<const char*>(&b), 8);
        out.write(reinterpret_cast<const char*>(words.data()),
                  std::streamsize(words.size() * 2));
    }
}

BMemory load_bsnapshot(const std::string& path, const BConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open " + path);
    BMemory mem;
    mem.block_size = cfg.block_size();
    std::uint64_t block;
    while (in.read(reinterpret_cast<char*>(&block), 8)) {
        std::vector<std::uint16_t> words(cfg.block_size());
        in.read(reinterpret_cast<char*>(words.data()),
                std::streamsize(words.size() * 2));
        mem.blocks[block] = std::move(words);
    }
    return mem;
}

} // namespace spatiale::bram
