#include "doctest.h"
#include "helpers.hpp"

#include <random>

#include "spatiale/earth.hpp"

using namespace spatiale;
using namespace testutil;

namespace {

const aram::MachineConfig mc = aram::MachineConfig::with_registers(1u << 14);

earth::CompiledModule compile_corpus(const std::string& name) {
    earth::CompileOptions opt;
    opt.warnings_to_stderr = false;
    return earth::compile_earth(slurp(corpus("earth/" + name + ".dat")), opt);
}

struct Loaded {
    space::Artifact art;
    aram::MachineState st;
};

Loaded load(const std::string& name) {
    Loaded l{space::artifact_from_earth(compile_corpus(name)), {}};
    l.st = load_standalone(l.art, mc);
    return l;
}

} // namespace

TEST_CASE("numex evaluation rules") {
    using earth::parse_numex;
    CHECK(earth::eval_numex(parse_numex("7"), {}) == 7);
    CHECK(earth::eval_numex(parse_numex("(3+2*i)"), {{'i', 4}}) == 11);
    CHECK(earth::eval_numex(parse_numex("(31-i)"), {{'i', 0}}) == 31);
    CHECK(earth::eval_numex(parse_numex("(31-i)"), {{'i', 31}}) == 0);
    CHECK(earth::eval_numex(parse_numex("(8+9*j)"), {{'j', 2}}) == 26);
    CHECK(earth::eval_numex(parse_numex("(9+j+i)"), {{'j', 1}, {'i', 3}}) == 13);
    CHECK(earth::eval_numex(parse_numex("(i+8*j)"), {{'i', 5}, {'j', 3}}) == 29);
    CHECK(earth::eval_numex(parse_numex("(2*k)"), {{'k', 6}}) == 12);
    CHECK_THROWS(earth::eval_numex(parse_numex("(3+2*i)"), {}));
    CHECK_THROWS(earth::eval_numex(parse_numex("(3-i)"), {{'i', 5}}));
}

TEST_CASE("seqand8 replicates to the documented sixteen-line listing") {
    earth::EarthModule m =
        earth::parse_earth(slurp(corpus("earth/seqand8.dat")));
    auto flat = earth::replicate(m);
    REQUIRE(flat.size() == 15); // plus the endc marker in the figure
    // spot checks of the de-iterated shape
    CHECK(flat[0].instr.op == earth::EOp::Wrt1);
    for (int i = 0; i < 4; ++i) {
        const auto& c = flat[std::size_t(1 + 2 * i)].instr;
        CHECK(c.op == earth::EOp::Cond);
        CHECK(c.dest.name == "input");
        CHECK(c.dest.bit->eval({}) == i);
        const auto& j = flat[std::size_t(2 + 2 * i)].instr;
        CHECK(j.op == earth::EOp::Jump);
        CHECK(j.jump_line.eval({}) == 1);
        CHECK(j.jump_offset.eval({}) == 1);
    }
    CHECK(flat[9].instr.jump_line.eval({}) == 3);
}

TEST_CASE("replication is the identity on structure-free code") {
    earth::EarthModule m =
        earth::parse_earth(slurp(corpus("earth/inceq5bit.dat")));
    auto flat = earth::replicate(m);
    CHECK(flat.size() == m.code.size());
    CHECK(flat.size() == 39);
}

TEST_CASE("4.5.2 example structure renumbers by its linename increment") {
    const std::string src = R"(NAME: renum;
BITS: busy private;
BYTES: input input;
TIME: 0-0 cycles;
    wrt1 busy
<0;j;24>{
(1+j)  cond input.0
        jump (10+2*j) 0
        jump (11+2*j) 0
}
26  wrt0 busy
    endc
)";
    // 25 linenames 1..25 are generated; linename 26 shifts by 24 to 50
    earth::EarthModule m = earth::parse_earth(src);
    auto flat = earth::replicate(m);
    REQUIRE(flat.size() == 2 + 75);
    CHECK(*flat[1].linename == 1);
    CHECK(*flat[4].linename == 2);
    CHECK(*flat[73].linename == 25);
    CHECK(*flat[76].linename == 50);
}

TEST_CASE("4.5.3 dashed jump chain") {
    const std::string src = R"(NAME: chain;
BITS: busy private;
TIME: 0-0 cycles;
    wrt1 busy
<0;k;31>-{
(1+k) jump (2+k) 0
}
32    wrt0 busy
    endc
)";
    earth::EarthModule m = earth::parse_earth(src);
    auto flat = earth::replicate(m);
    REQUIRE(flat.size() == 33);
    for (int k = 0; k < 32; ++k) {
        CHECK(*flat[std::size_t(1 + k)].linename == 1 + k);
        CHECK(flat[std::size_t(1 + k)].instr.jump_line.eval({}) == 2 + k);
    }
    // the chain exits onto the shifted final line
    CHECK(*flat[33 - 1].linename == 32 + 31);
}

TEST_CASE("compiled corpus sizes match the published counts") {
    CHECK(compile_corpus("seqand32").code_len == 69);
    CHECK(compile_corpus("parand32").code_len == 96);
    CHECK(compile_corpus("seqor32").code_len == 101);
    CHECK(compile_corpus("paror32").code_len == 140);
    CHECK(compile_corpus("adder32").code_len == 138);
    CHECK(compile_corpus("progcopybit").code_len == 379);
    CHECK(compile_corpus("barrelshift32").code_len == 2190);
    CHECK(compile_corpus("progcopyreg").code_len == 5249);
    CHECK(compile_corpus("inceq5bit").code_len == 39);
}

TEST_CASE("declaration errors") {
    CHECK_THROWS(earth::parse_earth("NAME: x;\nTIME: 0-0 cycles;\nendc\n"));
    CHECK_THROWS(earth::parse_earth(
        "NAME: x;\nBITS: busy private;\nTIME: 0-0 cycles;\n")); // no endc
    CHECK_THROWS(earth::parse_earth(
        "NAME: x;\nMETA: 2;\nBITS: busy private;\nTIME: 0-0 cycles;\nendc\n"));
    CHECK_THROWS(earth::parse_earth(
        "NAME: x;\nBITS: busy private, busy output;\nTIME: 0-0 cycles;\nendc\n"));
    CHECK_THROWS(earth::compile_earth(
        "NAME: x;\nBITS: busy private;\nTIME: 0-0 cycles;\nwrt1 busy\njump 9 0\nendc\n"));
}

TEST_CASE("inceq5bit behavior and timing") {
    for (std::uint64_t in = 0; in < 32; ++in) {
        Loaded l = load("inceq5bit");
        set_input(l.st, l.art, "ioput", in);
        auto out = run_module(l.st, mc);
        REQUIRE(out.success());
        CHECK(get_output(l.st, l.art, "ioput") == ((in + 1) & 31));
        CHECK(get_output(l.st, l.art, "overflow") == (in == 31 ? 1 : 0));
        CHECK(out.cycles_elapsed >= 4);
        CHECK(out.cycles_elapsed <= 12);
    }
}

TEST_CASE("bitwiseinverter32 inverts in exactly four cycles") {
    std::mt19937 rng(5);
    for (int t = 0; t < 50; ++t) {
        const std::uint32_t in = t == 0 ? 0xFFFF0000u : std::uint32_t(rng());
        Loaded l = load("bitwiseinverter32");
        set_input(l.st, l.art, "input", in);
        auto out = run_module(l.st, mc);
        REQUIRE(out.success());
        CHECK(get_output(l.st, l.art, "output") == std::uint32_t(~in));
        CHECK(out.cycles_elapsed == 4);
    }
}

TEST_CASE("serial and parallel gates agree with the boolean oracles") {
    std::mt19937 rng(17);
    auto pick = [&](int t) -> std::uint32_t {
        switch (t) {
        case 0: return 0;
        case 1: return 0xFFFFFFFFu;
        case 2: return 0xFFFFFFFEu;
        case 3: return 0x7FFFFFFFu;
        case 4: return 0x00FF00FFu;
        default: return std::uint32_t(rng());
        }
    };
    for (int t = 0; t < 40; ++t) {
        const std::uint32_t in = pick(t);
        for (const char* name : {"seqand32", "parand32"}) {
            Loaded l = load(name);
            set_input(l.st, l.art, "input", in);
            auto out = run_module(l.st, mc);
            REQUIRE(out.success());
            CHECK(get_output(l.st, l.art, "output") ==
                  (in == 0xFFFFFFFFu ? 1 : 0));
        }
        for (const char* name : {"seqor32", "paror32"}) {
            Loaded l = load(name);
            set_input(l.st, l.art, "input", in);
            auto out = run_module(l.st, mc);
            REQUIRE(out.success());
            CHECK(get_output(l.st, l.art, "output") == (in != 0 ? 1 : 0));
        }
    }
}

TEST_CASE("gate timing stays within the declared windows") {
    std::mt19937 rng(23);
    std::uint64_t lo_and = 999, hi_and = 0, lo_or = 999, hi_or = 0;
    for (int t = 0; t < 60; ++t) {
        const std::uint32_t in =
            t < 2 ? (t ? 0xFFFFFFFFu : 0) : std::uint32_t(rng());
        {
            Loaded l = load("parand32");
            set_input(l.st, l.art, "input", in);
            auto out = run_module(l.st, mc);
            REQUIRE(out.success());
            lo_and = std::min(lo_and, out.cycles_elapsed);
            hi_and = std::max(hi_and, out.cycles_elapsed);
        }
        {
            Loaded l = load("paror32");
            set_input(l.st, l.art, "input", in);
            auto out = run_module(l.st, mc);
            REQUIRE(out.success());
            lo_or = std::min(lo_or, out.cycles_elapsed);
            hi_or = std::max(hi_or, out.cycles_elapsed);
        }
    }
    CHECK(lo_and >= 14);
    CHECK(hi_and <= 17);
    CHECK(lo_or >= 22);
    CHECK(hi_or <= 29);
}

TEST_CASE("adder32 sums with carry within its declared window") {
    std::mt19937_64 rng(29);
    for (int t = 0; t < 25; ++t) {
        const std::uint32_t a = t == 0 ? 0 : std::uint32_t(rng());
        const std::uint32_t b = t == 0 ? 0 : std::uint32_t(rng());
        Loaded l = load("adder32");
        set_input(l.st, l.art, "addend", a);
        set_input(l.st, l.art, "addendum", b);
        auto out = run_module(l.st, mc);
        REQUIRE(out.success());
        const std::uint64_t s = std::uint64_t(a) + b;
        CHECK(get_output(l.st, l.art, "sum") == std::uint32_t(s));
        CHECK(get_output(l.st, l.art, "carryout") == (s >> 32));
        CHECK(out.cycles_elapsed >= 674);
        CHECK(out.cycles_elapsed <= 736);
    }
}

TEST_CASE("barrelshift32 shifts left by the decoded amount") {
    std::mt19937_64 rng(31);
    std::uint64_t cycles_seen = 0;
    for (std::uint64_t s = 1; s < 32; ++s) {
        const std::uint32_t in = std::uint32_t(rng());
        Loaded l = load("barrelshift32");
        set_input(l.st, l.art, "input", s);
        set_input(l.st, l.art, "shiftinput", in);
        auto out = run_module(l.st, mc);
        REQUIRE(out.success());
        CHECK(get_output(l.st, l.art, "shiftoutput") == std::uint32_t(in << s));
        cycles_seen = std::max(cycles_seen, out.cycles_elapsed);
    }
    MESSAGE("barrelshift32 worst case cycles: ", cycles_seen);
}

TEST_CASE("negate4bits inverts its byte in 26 cycles") {
    for (std::uint64_t in : {0ull, 5ull, 15ull}) {
        Loaded l = load("negate4bits");
        set_input(l.st, l.art, "ioput", in);
        auto out = run_module(l.st, mc);
        REQUIRE(out.success());
        CHECK((get_output(l.st, l.art, "ioput") & 0xF) == ((~in) & 0xF));
    }
}

TEST_CASE("progcopybit copies the addressed bit across phases") {
    Loaded l = load("progcopybit");
    // give the machine two scratch registers past the module image
    const std::uint32_t src_reg = std::uint32_t(l.art.image.size()) + 10;
    const std::uint32_t dst_reg = src_reg + 1;
    l.st.memory.set_bit(src_reg, 7, true);
    set_input(l.st, l.art, "source", std::uint64_t(src_reg) * 32 + 7);
    set_input(l.st, l.art, "target", std::uint64_t(dst_reg) * 32 + 3);
    auto p1 = run_module(l.st, mc);
    REQUIRE(p1.success());
    CHECK(p1.cycles_elapsed >= 4);
    CHECK(p1.cycles_elapsed <= 7);
    CHECK(l.st.memory.bit(dst_reg, 3) == false);
    auto p2 = run_module(l.st, mc, 1000000, true);
    REQUIRE(p2.success());
    CHECK(l.st.memory.bit(dst_reg, 3) == true);
    // phase 2 is idempotent
    auto p3 = run_module(l.st, mc, 1000000, true);
    REQUIRE(p3.success());
    CHECK(l.st.memory.bit(dst_reg, 3) == true);
    // and copies a zero after the source bit changes and phase 1 reruns
    l.st.memory.set_bit(src_reg, 7, false);
    auto p4 = run_module(l.st, mc);
    REQUIRE(p4.success());
    auto p5 = run_module(l.st, mc, 1000000, true);
    REQUIRE(p5.success());
    CHECK(l.st.memory.bit(dst_reg, 3) == false);
}

TEST_CASE("progcopyreg copies a whole register across phases") {
    Loaded l = load("progcopyreg");
    const std::uint32_t src_reg = std::uint32_t(l.art.image.size()) + 10;
    const std::uint32_t dst_reg = src_reg + 1;
    l.st.memory.words[src_reg] = 0xDEADBEEFu;
    set_input(l.st, l.art, "source", src_reg);
    set_input(l.st, l.art, "target", dst_reg);
    auto p1 = run_module(l.st, mc);
    REQUIRE(p1.success());
    CHECK(p1.cycles_elapsed >= 7);
    CHECK(p1.cycles_elapsed <= 9);
    auto p2 = run_module(l.st, mc, 1000000, true);
    REQUIRE(p2.success());
    CHECK(l.st.memory.words[dst_reg] == 0xDEADBEEFu);
}

TEST_CASE("module state hygiene: repeated runs give identical outputs") {
    std::mt19937 rng(41);
    for (const char* name : {"seqor32", "parand32", "bitwiseinverter32"}) {
        const std::uint32_t in = std::uint32_t(rng());
        Loaded l = load(name);
        set_input(l.st, l.art, "input", in);
        REQUIRE(run_module(l.st, mc).success());
        const std::uint64_t first = get_output(l.st, l.art, "output");
        set_input(l.st, l.art, "input", in);
        REQUIRE(run_module(l.st, mc).success());
        CHECK(get_output(l.st, l.art, "output") == first);
    }
}

TEST_CASE("synchronic singleton programs follow the sequential trajectory") {
    // the fig 3.3 incrementer marks one register at a time, so eta and eta'
    // must walk the same memory states
    for (std::uint64_t in = 0; in < 16; ++in) {
        auto a = machine_with(fig33_program(), mc);
        auto b = machine_with(fig33_program(), mc);
        a.memory.words[27] = std::uint32_t(in);
        b.memory.words[27] = std::uint32_t(in);
        aram::RunOptions sopt;
        sopt.mode = aram::RunMode::Sequential;
        auto ra = aram::run(a, mc, sopt);
        aram::RunOptions yopt;
        yopt.mode = aram::RunMode::Synchronic;
        yopt.initial_marking = aram::Marking{1};
        auto rb = aram::run(b, mc, yopt);
        CHECK(ra.outcome.success());
        CHECK(rb.outcome.success());
        CHECK(a.memory.words == b.memory.words);
    }
}
