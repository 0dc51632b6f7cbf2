#pragma once

#include <cstdint>
#include <vector>

#include "spatiale/aram.hpp"

// assembles fig 3.2/3.5-style instructions into a fresh machine
namespace testutil {

using namespace spatiale;

inline std::uint32_t ins(aram::Opcode op, std::uint32_t x, std::uint32_t y) {
    return aram::encode({op, x, y}, aram::MachineConfig{});
}

inline aram::MachineState machine_with(const std::vector<std::uint32_t>& words,
                                       const aram::MachineConfig& cfg) {
    aram::MachineState st;
    st.memory = aram::MemoryBlock(cfg);
    for (std::size_t i = 0; i < words.size(); ++i)
        st.memory.words[i + 1] = words[i];
    return st;
}

// the fig 3.6 four-input AND gate (two transcription slips fixed: line 21
// jumps to 23 and line 23 is the halt word)
inline std::vector<std::uint32_t> fig36_program() {
    using aram::Opcode;
    return {
        ins(Opcode::Wrt1, 0, 0),   // 1
        ins(Opcode::Jump, 3, 1),   // 2
        ins(Opcode::Jump, 5, 0),   // 3
        ins(Opcode::Jump, 10, 0),  // 4
        ins(Opcode::Cond, 24, 0),  // 5
        ins(Opcode::Jump, 18, 0),  // 6
        ins(Opcode::Cond, 24, 1),  // 7
        ins(Opcode::Jump, 19, 0),  // 8
        ins(Opcode::Jump, 15, 0),  // 9
        ins(Opcode::Cond, 24, 2),  // 10
        ins(Opcode::Wrt0, 24, 4),  // 11
        ins(Opcode::Cond, 24, 3),  // 12
        ins(Opcode::Wrt0, 24, 4),  // 13
        ins(Opcode::Wrt1, 24, 4),  // 14
        ins(Opcode::Cond, 24, 4),  // 15
        ins(Opcode::Jump, 20, 1),  // 16
        ins(Opcode::Jump, 21, 1),  // 17
        ins(Opcode::Jump, 19, 0),  // 18
        ins(Opcode::Jump, 20, 1),  // 19
        ins(Opcode::Wrt0, 24, 5),  // 20
        ins(Opcode::Jump, 23, 0),  // 21
        ins(Opcode::Wrt1, 24, 5),  // 22
        ins(Opcode::Wrt0, 0, 0),   // 23
    };
}

// fig 3.3 four-bit incrementer (sequential)
inline std::vector<std::uint32_t> fig33_program() {
    using aram::Opcode;
    return {
        ins(Opcode::Wrt1, 0, 0),  // 1
        ins(Opcode::Cond, 27, 0), // 2
        ins(Opcode::Jump, 5, 0),  // 3
        ins(Opcode::Jump, 7, 0),  // 4
        ins(Opcode::Wrt1, 27, 0), // 5
        ins(Opcode::Wrt0, 0, 0),  // 6
        ins(Opcode::Wrt0, 27, 0), // 7
        ins(Opcode::Cond, 27, 1), // 8
        ins(Opcode::Jump, 11, 0), // 9
        ins(Opcode::Jump, 13, 0), // 10
        ins(Opcode::Wrt1, 27, 1), // 11
        ins(Opcode::Wrt0, 0, 0),  // 12
        ins(Opcode::Wrt0, 27, 1), // 13
        ins(Opcode::Cond, 27, 2), // 14
        ins(Opcode::Jump, 17, 0), // 15
        ins(Opcode::Jump, 19, 0), // 16
        ins(Opcode::Wrt1, 27, 2), // 17
        ins(Opcode::Wrt0, 0, 0),  // 18
        ins(Opcode::Wrt0, 27, 2), // 19
        ins(Opcode::Cond, 27, 3), // 20
        ins(Opcode::Jump, 23, 0), // 21
        ins(Opcode::Jump, 25, 0), // 22
        ins(Opcode::Wrt1, 27, 3), // 23
        ins(Opcode::Wrt0, 0, 0),  // 24
        ins(Opcode::Wrt1, 28, 0), // 25
        ins(Opcode::Wrt0, 0, 0),  // 26
    };
}

} // namespace testutil

#include <fstream>
#include <sstream>

#include "spatiale/space.hpp"

namespace testutil {

inline std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string corpus(const std::string& rel) {
    return std::string(SPATIALE_CORPUS_DIR) + "/" + rel;
}

inline aram::MachineState load_standalone(const space::Artifact& art,
                                          const aram::MachineConfig& cfg) {
    aram::MachineState st;
    st.memory = aram::MemoryBlock(cfg);
    const auto image = art.standalone_image(cfg);
    if (image.size() + 1 >= cfg.registers())
        throw std::runtime_error("machine too small for " + art.name);
    for (std::size_t i = 0; i < image.size(); ++i)
        st.memory.words[i + 1] = image[i];
    return st;
}

inline std::uint64_t read_bits(const aram::MemoryBlock& mem, std::uint32_t reg,
                               std::uint32_t bit, std::uint32_t width) {
    std::uint64_t v = 0;
    for (std::uint32_t k = 0; k < width; ++k)
        v |= std::uint64_t(mem.bit(reg + (bit + k) / 32, (bit + k) % 32)) << k;
    return v;
}

inline void write_bits(aram::MemoryBlock& mem, std::uint32_t reg,
                       std::uint32_t bit, std::uint32_t width, std::uint64_t v) {
    for (std::uint32_t k = 0; k < width; ++k)
        mem.set_bit(reg + (bit + k) / 32, (bit + k) % 32, (v >> k) & 1);
}

inline const space::SpaceSymbol& sym(const space::Artifact& art,
                                     const std::string& name) {
    const space::SpaceSymbol* s = art.find_symbol(name);
    if (!s) throw std::runtime_error(art.name + " has no symbol " + name);
    return *s;
}

inline void set_input(aram::MachineState& st, const space::Artifact& art,
                      const std::string& name, std::uint64_t v) {
    const auto& s = sym(art, name);
    write_bits(st.memory, s.reg, s.bit, s.width, v);
}

inline void set_array_input(aram::MachineState& st, const space::Artifact& art,
                            const std::string& name, std::size_t index,
                            std::uint64_t v) {
    const auto& s = sym(art, name);
    long n = 1;
    for (long d : s.dims) n *= d;
    const std::uint32_t esz = std::uint32_t((s.regs - 4) / n);
    write_bits(st.memory, s.reg + 4 + std::uint32_t(index) * esz, 0, 32, v);
}

inline std::uint64_t get_output(const aram::MachineState& st,
                                const space::Artifact& art,
                                const std::string& name) {
    const auto& s = sym(art, name);
    return read_bits(st.memory, s.reg, s.bit, s.width);
}

inline std::uint64_t get_array_output(const aram::MachineState& st,
                                      const space::Artifact& art,
                                      const std::string& name,
                                      std::size_t index) {
    const auto& s = sym(art, name);
    long n = 1;
    for (long d : s.dims) n *= d;
    const std::uint32_t esz = std::uint32_t((s.regs - 4) / n);
    return read_bits(st.memory, s.reg + 4 + std::uint32_t(index) * esz, 0, 32);
}

inline aram::Outcome run_module(aram::MachineState& st,
                                const aram::MachineConfig& cfg,
                                std::uint64_t max_cycles = 1000000,
                                bool phase2 = false) {
    aram::RunOptions opt;
    opt.max_cycles = max_cycles;
    opt.initial_marking = phase2 ? aram::Marking{3, 4} : aram::Marking{1, 2};
    return aram::run(st, cfg, opt).outcome;
}

} // namespace testutil
