#include "doctest.h"
#include "helpers.hpp"

#include <cstdio>
#include <random>

using namespace spatiale;
using namespace testutil;

static const aram::MachineConfig small = aram::MachineConfig::with_registers(4096);

TEST_CASE("decode/encode instruction formats") {
    aram::MachineConfig cfg;
    auto d1 = aram::decode(0x40000000u, cfg);
    CHECK(d1.opcode == aram::Opcode::Wrt1);
    CHECK(d1.x == 0);
    CHECK(d1.y == 0);
    auto d2 = aram::decode(0x00000000u, cfg);
    CHECK(d2.opcode == aram::Opcode::Wrt0);
    CHECK(d2.x == 0);
    CHECK(d2.y == 0);
    auto d3 = aram::decode(0xC0000061u, cfg);
    CHECK(d3.opcode == aram::Opcode::Jump);
    CHECK(d3.x == 3);
    CHECK(d3.y == 1);
    std::mt19937 rng(7);
    for (int i = 0; i < 1000; ++i) {
        const std::uint32_t w = rng();
        CHECK(aram::encode(aram::decode(w, cfg), cfg) == w);
    }
}

TEST_CASE("fig 3.3 sequential incrementer executes the documented register chain") {
    auto st = machine_with(fig33_program(), small);
    st.memory.words[27] = 0x7; // 0111
    aram::RunOptions opt;
    opt.mode = aram::RunMode::Sequential;
    opt.trace = true;
    auto res = aram::run(st, small, opt);
    REQUIRE(res.outcome.success());
    std::vector<std::uint32_t> executed;
    for (const auto& m : res.trace)
        if (!m.empty()) executed.push_back(m[0]);
    const std::vector<std::uint32_t> want = {1, 2, 4, 7, 8, 10, 13, 14,
                                             16, 19, 20, 21, 23, 24};
    CHECK(executed == want);
    CHECK((st.memory.words[27] & 0xF) == 0x8);
    CHECK(st.memory.bit(28, 0) == false);
}

TEST_CASE("sequential halt fail and error fail") {
    // marking the last register with a non-halt word
    auto st = machine_with({ins(aram::Opcode::Jump, std::uint32_t(small.registers() - 1), 0),
                            ins(aram::Opcode::Wrt0, 0, 0)},
                           small);
    st.memory.words[small.registers() - 1] = ins(aram::Opcode::Wrt1, 5, 0);
    aram::RunOptions opt;
    opt.mode = aram::RunMode::Sequential;
    auto res = aram::run(st, small, opt);
    REQUIRE(res.outcome.kind == aram::Outcome::Kind::Fail);
    CHECK(*res.outcome.error == aram::ErrorKind::HaltFail);
    CHECK(st.memory.bit(0, 1));

    auto st2 = machine_with({ins(aram::Opcode::Wrt1, 0, 5)}, small);
    auto res2 = aram::run(st2, small, opt);
    REQUIRE(res2.outcome.kind == aram::Outcome::Kind::Fail);
    CHECK(*res2.outcome.error == aram::ErrorKind::ErrorFail);
    CHECK(st2.memory.bit(0, 3));
}

TEST_CASE("fig 3.6 synchronic marking traces") {
    aram::RunOptions opt;
    opt.trace = true;

    SUBCASE("input 1011") {
        auto st = machine_with(fig36_program(), small);
        st.memory.words[24] = 0xB; // bits 0..3 = 1,1,0,1
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.success());
        const std::vector<aram::Marking> want = {
            {1, 2}, {3, 4}, {5, 10}, {7, 11}, {9}, {15}, {16}, {20, 21}, {23}, {}};
        CHECK(res.trace == want);
        CHECK(st.memory.bit(24, 5) == false);
    }
    SUBCASE("input 1110 (eta-derived; see the notes on the printed trace)") {
        auto st = machine_with(fig36_program(), small);
        st.memory.words[24] = 0xE; // bits 0..3 = 0,1,1,1
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.success());
        const std::vector<aram::Marking> want = {
            {1, 2}, {3, 4}, {5, 10}, {6, 12}, {14, 18}, {19}, {20, 21}, {23}, {}};
        CHECK(res.trace == want);
        CHECK(st.memory.bit(24, 5) == false);
    }
    SUBCASE("all-ones input gives output 1") {
        auto st = machine_with(fig36_program(), small);
        st.memory.words[24] = 0xF;
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.success());
        CHECK(st.memory.bit(24, 5) == true);
    }
}

TEST_CASE("minimal synchronic halting program") {
    auto st = machine_with({ins(aram::Opcode::Wrt1, 0, 0),
                            ins(aram::Opcode::Wrt0, 0, 0)},
                           small);
    // the opener pair {wrt1 0 0, wrt0 0 0}: both writes land, the halt word
    // wins the busy bit and the drained marking ends the run successfully
    aram::RunOptions opt;
    auto res = aram::run(st, small, opt);
    CHECK(res.outcome.success());
}

TEST_CASE("synchronic error kinds set their informal-list bits") {
    aram::RunOptions opt;

    SUBCASE("marking fail on a multiset") {
        auto st = machine_with({ins(aram::Opcode::Wrt1, 100, 0)}, small);
        opt.initial_marking = aram::Marking{1, 1};
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.kind == aram::Outcome::Kind::Fail);
        CHECK(*res.outcome.error == aram::ErrorKind::MarkingFail);
        CHECK(st.memory.bit(0, 1));
    }
    SUBCASE("write fail on same-target writes") {
        auto st = machine_with({ins(aram::Opcode::Wrt1, 100, 3),
                                ins(aram::Opcode::Wrt0, 100, 3)},
                               small);
        opt.initial_marking = aram::Marking{1, 2};
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.kind == aram::Outcome::Kind::Fail);
        CHECK(*res.outcome.error == aram::ErrorKind::WriteFail);
        CHECK(st.memory.bit(0, 2));
    }
    SUBCASE("halt fail when a halt word is co-marked with control") {
        auto st = machine_with({ins(aram::Opcode::Wrt0, 0, 0),
                                ins(aram::Opcode::Jump, 1, 0)},
                               small);
        opt.initial_marking = aram::Marking{1, 2};
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.kind == aram::Outcome::Kind::Fail);
        CHECK(*res.outcome.error == aram::ErrorKind::HaltFail);
        CHECK(st.memory.bit(0, 3));
    }
    SUBCASE("live fail when the marking drains with busy set") {
        auto st = machine_with({ins(aram::Opcode::Wrt1, 0, 0),
                                ins(aram::Opcode::Wrt1, 100, 1)},
                               small);
        opt.initial_marking = aram::Marking{1, 2};
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.kind == aram::Outcome::Kind::Fail);
        CHECK(*res.outcome.error == aram::ErrorKind::LiveFail);
        CHECK(st.memory.bit(0, 4));
        CHECK(res.outcome.cycles_elapsed == 2);
    }
    SUBCASE("cond fail at the last-but-one register") {
        auto st = machine_with({ins(aram::Opcode::Jump, std::uint32_t(small.registers() - 2), 0)}, small);
        st.memory.words[small.registers() - 2] = ins(aram::Opcode::Cond, 50, 0);
        opt.initial_marking = aram::Marking{1};
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.kind == aram::Outcome::Kind::Fail);
        CHECK(*res.outcome.error == aram::ErrorKind::CondFail);
        CHECK(st.memory.bit(0, 5));
    }
    SUBCASE("consequent fail when a cond and its consequent are co-marked") {
        auto st = machine_with({ins(aram::Opcode::Cond, 50, 0),
                                ins(aram::Opcode::Wrt1, 60, 0)},
                               small);
        opt.initial_marking = aram::Marking{1, 2};
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.kind == aram::Outcome::Kind::Fail);
        CHECK(*res.outcome.error == aram::ErrorKind::ConsequentFail);
        CHECK(st.memory.bit(0, 6));
    }
    SUBCASE("active fail when a write targets a marked register") {
        auto st = machine_with({ins(aram::Opcode::Wrt1, 2, 0),
                                ins(aram::Opcode::Jump, 100, 0)},
                               small);
        st.memory.words[100] = ins(aram::Opcode::Jump, 100, 0);
        opt.initial_marking = aram::Marking{1, 2};
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.kind == aram::Outcome::Kind::Fail);
        CHECK(*res.outcome.error == aram::ErrorKind::ActiveFail);
        CHECK(st.memory.bit(0, 7));
    }
    SUBCASE("jump fail on register 0 or out of range") {
        auto st = machine_with({ins(aram::Opcode::Jump, 0, 0)}, small);
        opt.initial_marking = aram::Marking{1};
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.kind == aram::Outcome::Kind::Fail);
        CHECK(*res.outcome.error == aram::ErrorKind::JumpFail);
        CHECK(st.memory.bit(0, 8));

        auto st2 = machine_with({ins(aram::Opcode::Jump, std::uint32_t(small.registers() - 1), 1)}, small);
        auto res2 = aram::run(st2, small, opt);
        REQUIRE(res2.outcome.kind == aram::Outcome::Kind::Fail);
        CHECK(*res2.outcome.error == aram::ErrorKind::JumpFail);
    }
    SUBCASE("error fail on reserved register-0 bits") {
        auto st = machine_with({ins(aram::Opcode::Wrt1, 0, 5)}, small);
        opt.initial_marking = aram::Marking{1};
        auto res = aram::run(st, small, opt);
        REQUIRE(res.outcome.kind == aram::Outcome::Kind::Fail);
        CHECK(*res.outcome.error == aram::ErrorKind::ErrorFail);
        CHECK(st.memory.bit(0, 9));
    }
}

TEST_CASE("read phase precedes the write phase within a cycle") {
    // cond reads a bit that a co-marked write flips: the old value decides.
    // the write sits away from the cond triplet to avoid a consequent fail.
    auto st = machine_with({ins(aram::Opcode::Cond, 50, 0),
                            ins(aram::Opcode::Wrt0, 60, 0), // negative consequent
                            ins(aram::Opcode::Wrt0, 61, 0),
                            ins(aram::Opcode::Wrt1, 50, 0)},
                           small);
    st.memory.words[50] = 0; // bit 0 clear
    aram::MachineState st2 = st;
    st2.marking = aram::Marking{1, 4};
    aram::step_synchronic(st2, small);
    CHECK(st2.memory.bit(50, 0) == true);      // write landed
    CHECK(st2.marking == aram::Marking{2});    // but the cond saw the old 0
}

TEST_CASE("determinism: same state, same trajectory") {
    std::mt19937 rng(11);
    for (int t = 0; t < 20; ++t) {
        std::vector<std::uint32_t> prog;
        for (int i = 0; i < 40; ++i) {
            const auto op = static_cast<aram::Opcode>(rng() % 4);
            prog.push_back(ins(op, 30 + rng() % 64, rng() % 32));
        }
        auto a = machine_with(prog, small);
        auto b = machine_with(prog, small);
        aram::RunOptions opt;
        opt.max_cycles = 200;
        opt.trace = true;
        auto ra = aram::run(a, small, opt);
        auto rb = aram::run(b, small, opt);
        CHECK(ra.trace == rb.trace);
        CHECK(a.memory.words == b.memory.words);
        CHECK(ra.outcome.kind == rb.outcome.kind);
    }
}

TEST_CASE("image round trip and zero image") {
    auto cfg = aram::MachineConfig::with_registers(512);
    aram::MemoryBlock block(cfg);
    std::mt19937 rng(3);
    for (auto& w : block.words) w = rng();
    const std::string path = "test_image.bin";
    aram::save_image(block, path);
    auto loaded = aram::load_image(path, cfg);
    CHECK(loaded.words == block.words);
    std::remove(path.c_str());

    aram::MemoryBlock zero(cfg);
    for (std::uint32_t w : zero.words) {
        auto d = aram::decode(w, cfg);
        CHECK(d.opcode == aram::Opcode::Wrt0);
        CHECK(d.x == 0);
        CHECK(d.y == 0);
    }
}
