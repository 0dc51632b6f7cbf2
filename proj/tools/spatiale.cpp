#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "spatiale/aram.hpp"
#include "spatiale/earth.hpp"
#include "spatiale/library.hpp"
#include "spatiale/space.hpp"

using namespace spatiale;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Workspace {
    std::string dir = "spatiale-library";
    space::TypeLibrary types;
    space::ModuleLibrary modules;

    explicit Workspace(const std::string& d) : dir(d), modules(d) {
        std::ifstream t(dir + "/typedefs.dat");
        if (t) {
            std::stringstream ss;
            ss << t.rdbuf();
            types.add_typedef_text(ss.str());
        }
    }
};

aram::MachineConfig parse_machine(const std::string& spec) {
    aram::MachineConfig cfg;
    if (spec.empty()) return cfg;
    std::istringstream in(spec);
    std::string kv;
    while (std::getline(in, kv, ',')) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad --machine spec");
        const std::string k = kv.substr(0, eq);
        const long v = std::stol(kv.substr(eq + 1));
        if (k == "p") cfg.p = unsigned(v);
        else if (k == "regs") cfg.register_count = std::uint32_t(v);
        else throw std::runtime_error("bad --machine key " + k);
    }
    return cfg;
}

const space::Artifact& resolve_module(const Workspace& ws, const std::string& m) {
    if (!m.empty() && std::isdigit(static_cast<unsigned char>(m[0])))
        return ws.modules.get(std::stoi(m));
    return ws.modules.get(m);
}

std::uint64_t read_regs(const aram::MemoryBlock& mem, std::uint32_t reg,
                        std::uint32_t bit, std::uint32_t width) {
    std::uint64_t v = 0;
    for (std::uint32_t k = 0; k < width; ++k) {
        const std::uint32_t r = reg + (bit + k) / 32;
        const std::uint32_t b = (bit + k) % 32;
        v |= std::uint64_t(mem.bit(r, b)) << k;
    }
    return v;
}

void write_regs(aram::MemoryBlock& mem, std::uint32_t reg, std::uint32_t bit,
                std::uint32_t width, std::uint64_t v) {
    for (std::uint32_t k = 0; k < width; ++k) {
        const std::uint32_t r = reg + (bit + k) / 32;
        const std::uint32_t b = (bit + k) % 32;
        mem.set_bit(r, b, (v >> k) & 1);
    }
}

std::string render(const space::SpaceSymbol& s, std::uint64_t v) {
    char buf[32];
    if (s.type_name == "int") {
        return std::to_string(std::int32_t(v));
    } else if (s.type_name == "REG" || s.type_name == "float") {
        std::snprintf(buf, sizeof buf, "0x%08llx", (unsigned long long)v);
        return buf;
    } else if (s.type_name == "char") {
        std::string out = "'";
        out += char(v);
        out += "'";
        return out;
    }
    return std::to_string(v);
}

std::uint64_t parse_value(const space::SpaceSymbol& s, const std::string& text) {
    if (s.type_name == "char" && text.size() == 1 &&
        !std::isdigit(static_cast<unsigned char>(text[0])))
        return std::uint64_t(text[0]);
    if (text.rfind("0x", 0) == 0 || text.rfind("0X", 0) == 0)
        return std::stoull(text.substr(2), nullptr, 16);
    if (!text.empty() && text[0] == '-')
        return std::uint64_t(std::uint32_t(std::stol(text)));
    return std::stoull(text);
}

int cmd_run(const Workspace& ws, const std::string& name,
            const std::vector<std::string>& inputs, bool phase2,
            const std::string& trace_path, std::uint64_t max_cycles,
            const aram::MachineConfig& cfg) {
    const space::Artifact& art = resolve_module(ws, name);
    if (phase2 && !art.meta) {
        std::cerr << "module " << art.name << " is not a meta module\n";
        return 1;
    }
    aram::MachineState st;
    st.memory = aram::MemoryBlock(cfg);
    const std::vector<std::uint32_t> image = art.standalone_image(cfg);
    if (image.size() + 1 >= cfg.registers()) {
        std::cerr << "module needs " << image.size()
                  << " registers; machine has " << cfg.registers() << "\n";
        return 1;
    }
    for (std::size_t i = 0; i < image.size(); ++i)
        st.memory.words[i + 1] = image[i];

    std::map<std::string, std::string> given;
    for (const std::string& kv : inputs) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::cerr << "--in expects name=value\n";
            return 1;
        }
        given[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    for (const space::SpaceSymbol& s : art.symbols) {
        if (s.interface != earth::Interface::Input &&
            s.interface != earth::Interface::Ioput)
            continue;
        if (s.aggregate == space::Aggregate::Array) {
            long n = 1;
            for (long d : s.dims) n *= d;
            for (long i = 0; i < n; ++i) {
                const std::string key = s.name + "[" + std::to_string(i) + "]";
                auto it = given.find(key);
                std::uint64_t v = 0;
                if (it != given.end()) {
                    v = parse_value(s, it->second);
                } else {
                    std::cout << key << " = " << std::flush;
                    std::string line;
                    if (!std::getline(std::cin, line)) line = "0";
                    v = line.empty() ? 0 : parse_value(s, line);
                }
                const std::uint32_t esz = s.width > 32 ? s.width / 32 : 1;
                write_regs(st.memory, s.reg + 4 + std::uint32_t(i) * esz, 0,
                           esz * 32 > 32 ? 32 : s.width, v);
            }
            continue;
        }
        auto it = given.find(s.name);
        std::uint64_t v = 0;
        if (it != given.end()) {
            v = parse_value(s, it->second);
        } else {
            std::cout << s.name << " (" << s.type_name << ") = " << std::flush;
            std::string line;
            if (!std::getline(std::cin, line)) line = "0";
            v = line.empty() ? 0 : parse_value(s, line);
        }
        write_regs(st.memory, s.reg, s.bit, s.width, v);
    }

    aram::RunOptions opt;
    opt.mode = aram::RunMode::Synchronic;
    opt.max_cycles = max_cycles;
    opt.trace = !trace_path.empty();
    opt.initial_marking = phase2 ? aram::Marking{3, 4} : aram::Marking{1, 2};
    const aram::RunResult res = aram::run(st, cfg, opt);

    if (!trace_path.empty()) {
        std::ofstream out(trace_path);
        for (const aram::Marking& m : res.trace)
            out << aram::format_marking(m) << "\n";
    }

    switch (res.outcome.kind) {
    case aram::Outcome::Kind::Success:
        std::cout << "outcome: success\n";
        break;
    case aram::Outcome::Kind::Fail:
        std::cout << "outcome: " << aram::error_name(*res.outcome.error) << "\n";
        break;
    case aram::Outcome::Kind::CycleLimit:
        std::cout << "outcome: cycle limit reached\n";
        break;
    default:
        std::cout << "outcome: running\n";
    }
    std::cout << "cycles: " << res.outcome.cycles_elapsed << "\n";
    if (res.outcome.kind == aram::Outcome::Kind::Fail) {
        std::cout << "register 0:";
        for (unsigned b = 0; b < 10; ++b)
            if (st.memory.bit(0, b)) std::cout << " (0," << b << ")";
        std::cout << "\n";
    }
    for (const space::SpaceSymbol& s : art.symbols) {
        if (s.interface != earth::Interface::Output &&
            s.interface != earth::Interface::Ioput)
            continue;
        if (s.aggregate == space::Aggregate::Array) {
            long n = 1;
            for (long d : s.dims) n *= d;
            std::cout << s.name << " =";
            const std::uint32_t esz = (s.regs - 4) / std::uint32_t(n);
            for (long i = 0; i < n; ++i)
                std::cout << " "
                          << render(s, read_regs(st.memory,
                                                 s.reg + 4 + std::uint32_t(i) * esz,
                                                 0, 32));
            std::cout << "\n";
        } else {
            std::cout << s.name << " = "
                      << render(s, read_regs(st.memory, s.reg, s.bit, s.width))
                      << "\n";
        }
    }
    return res.outcome.kind == aram::Outcome::Kind::Success ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatiale console: module library, compilers and simulator"};
    app.require_subcommand(1);
    std::string library_dir = "spatiale-library";
    app.add_option("--library", library_dir, "library directory");

    std::string file, module, trace_path, machine_spec;
    std::vector<std::string> inputs;
    bool phase2 = false;
    std::uint64_t max_cycles = 100000000;

    CLI::App* add_types = app.add_subcommand("add-types", "add typedef.dat definitions");
    add_types->add_option("file", file)->required();
    CLI::App* add_earth = app.add_subcommand("add-earth", "compile an Earth module");
    add_earth->add_option("file", file)->required();
    CLI::App* add_space = app.add_subcommand("add-space", "compile a Space module");
    add_space->add_option("file", file)->required();
    add_space->add_option("--machine", machine_spec, "p=K,regs=N");
    CLI::App* list = app.add_subcommand("list", "list types and modules");
    CLI::App* inspect = app.add_subcommand("inspect", "module details");
    inspect->add_option("module", module)->required();
    CLI::App* disasm = app.add_subcommand("disasm", "compiled code listing");
    disasm->add_option("module", module)->required();
    CLI::App* run = app.add_subcommand("run", "load and run a module");
    run->add_option("module", module)->required();
    run->add_option("--in", inputs, "input value name=value");
    run->add_flag("--phase2", phase2, "start the meta second phase ({3,4})");
    run->add_option("--trace", trace_path, "write the marking trace to a file");
    run->add_option("--max-cycles", max_cycles, "cycle limit");
    run->add_option("--machine", machine_spec, "p=K,regs=N");

    CLI11_PARSE(app, argc, argv);

    try {
        Workspace ws(library_dir);
        if (*add_types) {
            ws.types.add_typedef_text(slurp(file));
            std::ofstream out(library_dir + "/typedefs.dat", std::ios::app);
            out << slurp(file) << "\n";
            std::cout << "types added\n";
            return 0;
        }
        if (*add_earth) {
            earth::CompiledModule m = earth::compile_earth(slurp(file));
            space::Artifact a = space::artifact_from_earth(m);
            const int index = const_cast<space::ModuleLibrary&>(ws.modules).add(a);
            std::cout << "added " << a.name << " as index " << index << " ("
                      << a.code_len << " code lines, TIME " << a.time_min << "-"
                      << a.time_max << ")\n";
            return 0;
        }
        if (*add_space) {
            const aram::MachineConfig cfg = parse_machine(machine_spec);
            space::Artifact a =
                space::compile_space(slurp(file), ws.types, ws.modules, cfg);
            const int index = const_cast<space::ModuleLibrary&>(ws.modules).add(a);
            std::cout << "added " << a.name << " as index " << index << " ("
                      << a.code_len << " code lines, image "
                      << a.image.size() << " registers)\n";
            return 0;
        }
        if (*list) {
            std::cout << "types:";
            for (const std::string& t : ws.types.names()) std::cout << " " << t;
            std::cout << "\nmodules:\n";
            for (std::size_t i = 0; i < ws.modules.size(); ++i) {
                const space::Artifact& a = *ws.modules.find(int(i + 1));
                std::cout << "  " << (i + 1) << "\t" << a.name << " (level "
                          << a.level << ", " << a.code_len << " lines)\n";
            }
            return 0;
        }
        if (*inspect) {
            const space::Artifact& a = resolve_module(ws, module);
            std::cout << a.name << ": " << a.code_len << " code lines, image "
                      << a.image.size() << " registers, level " << a.level
                      << (a.meta ? ", meta" : "") << "\n";
            std::cout << "entry markings: {1,2}" << (a.meta ? " and {3,4}" : "")
                      << "\n";
            std::cout << "TIME " << a.time_min << "-" << a.time_max << " cycles\n";
            if (!a.submodule_map.empty())
                std::cout << "submodule map: " << a.submodule_map << "\n";
            for (const space::SpaceSymbol& s : a.symbols)
                std::cout << "  " << s.name << " " << s.type_name << " "
                          << earth::interface_name(s.interface) << " @" << s.reg
                          << "." << s.bit << " width " << s.width << "\n";
            return 0;
        }
        if (*disasm) {
            const space::Artifact& a = resolve_module(ws, module);
            static const char* names[] = {"wrt0", "wrt1", "cond", "jump"};
            const aram::MachineConfig cfg;
            for (std::uint32_t i = 0; i < a.code_len; ++i) {
                const aram::DecodedInstruction d = aram::decode(a.image[i], cfg);
                std::cout << (i + 1) << "\t" << names[int(d.opcode)] << " " << d.x
                          << " " << d.y << "\n";
            }
            return 0;
        }
        if (*run) {
            aram::MachineConfig cfg = parse_machine(machine_spec);
            return cmd_run(ws, module, inputs, phase2, trace_path, max_cycles,
                           cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
