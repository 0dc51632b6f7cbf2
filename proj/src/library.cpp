#include "spatiale/library.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace spatiale::space {

namespace fs = std::filesystem;
using nlohmann::json;

std::string artifact_to_json(const Artifact& a) {
    json j;
    j["name"] = a.name;
    j["code_len"] = a.code_len;
    j["meta"] = a.meta;
    j["time"] = {a.time_min, a.time_max};
    j["metatime"] = {a.metatime_min, a.metatime_max};
    j["level"] = a.level;
    j["submodule_map"] = a.submodule_map;
    j["notes"] = a.notes;
    j["image"] = a.image;
    std::vector<int> rel(a.relocatable.begin(), a.relocatable.end());
    j["relocatable"] = rel;
    j["busy_ref"] = a.busy_ref;
    json syms = json::array();
    for (const SpaceSymbol& s : a.symbols) {
        json e;
        e["name"] = s.name;
        e["type"] = s.type_name;
        e["interface"] = earth::interface_name(s.interface);
        e["reg"] = s.reg;
        e["regs"] = s.regs;
        e["bit"] = s.bit;
        e["width"] = s.width;
        e["aggregate"] = int(s.aggregate);
        e["dims"] = s.dims;
        syms.push_back(e);
    }
    j["symbols"] = syms;
    return j.dump(1);
}

Artifact artifact_from_json(const std::string& text) {
    json j = json::parse(text);
    Artifact a;
    a.name = j.at("name").get<std::string>();
    a.code_len = j.at("code_len").get<std::uint32_t>();
    a.meta = j.at("meta").get<bool>();
    a.time_min = j.at("time")[0].get<long>();
    a.time_max = j.at("time")[1].get<long>();
    a.metatime_min = j.at("metatime")[0].get<long>();
    a.metatime_max = j.at("metatime")[1].get<long>();
    a.level = j.at("level").get<int>();
    a.submodule_map = j.at("submodule_map").get<std::string>();
    a.notes = j.at("notes").get<std::string>();
    a.image = j.at("image").get<std::vector<std::uint32_t>>();
    for (int v : j.at("relocatable").get<std::vector<int>>())
        a.relocatable.push_back(v != 0);
    a.busy_ref = j.at("busy_ref").get<std::vector<std::uint8_t>>();
    for (const json& e : j.at("symbols")) {
        SpaceSymbol s;
        s.name = e.at("name").get<std::string>();
        s.type_name = e.at("type").get<std::string>();
        const std::string iface = e.at("interface").get<std::string>();
        s.interface = iface == "input"    ? earth::Interface::Input
                      : iface == "output" ? earth::Interface::Output
                      : iface == "ioput"  ? earth::Interface::Ioput
                                          : earth::Interface::Private;
        s.reg = e.at("reg").get<std::uint32_t>();
        s.regs = e.at("regs").get<std::uint32_t>();
        s.bit = e.at("bit").get<std::uint32_t>();
        s.width = e.at("width").get<std::uint32_t>();
        s.aggregate = Aggregate(e.at("aggregate").get<int>());
        s.dims = e.at("dims").get<std::vector<long>>();
        a.symbols.push_back(s);
    }
    return a;
}

ModuleLibrary::ModuleLibrary(std::string dir) : dir_(std::move(dir)) {
    if (!dir_.empty()) {
        fs::create_directories(dir_);
        load();
    }
}

int ModuleLibrary::add(const Artifact& artifact) {
    if (find(artifact.name))
        throw std::runtime_error("module '" + artifact.name +
                                 "' is already in the library");
    modules_.push_back(artifact);
    const int index = int(modules_.size());
    if (!dir_.empty()) persist(artifact, index);
    return index;
}

const Artifact* ModuleLibrary::find(const std::string& name) const {
    for (const Artifact& a : modules_)
        if (a.name == name) return &a;
    return nullptr;
}

const Artifact* ModuleLibrary::find(int index) const {
    if (index < 1 || std::size_t(index) > modules_.size()) return nullptr;
    return &modules_[std::size_t(index) - 1];
}

const Artifact& ModuleLibrary::get(const std::string& name) const {
    const Artifact* a = find(name);
    if (!a) throw std::runtime_error("module not found in library: " + name);
    return *a;
}

const Artifact& ModuleLibrary::get(int index) const {
    const Artifact* a = find(index);
    if (!a) throw std::runtime_error("no module with index " + std::to_string(index));
    return *a;
}

int ModuleLibrary::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < modules_.size(); ++i)
        if (modules_[i].name == name) return int(i + 1);
    return -1;
}

void ModuleLibrary::persist(const Artifact& a, int index) {
    {
        std::ofstream out(fs::path(dir_) / (a.name + ".module.json"));
        out << artifact_to_json(a);
    }
    std::ofstream manifest(fs::path(dir_) / "manifest.txt", std::ios::app);
    manifest << index << "\t" << a.name << "\n";
}

void ModuleLibrary::load() {
    std::ifstream manifest(fs::path(dir_) / "manifest.txt");
    if (!manifest) return;
    std::string line;
    while (std::getline(manifest, line)) {
        std::istringstream ls(line);
        int index;
        std::string name;
        if (!(ls >> index >> name)) continue;
        std::ifstream f(fs::path(dir_) / (name + ".module.json"));
        if (!f) throw std::runtime_error("library manifest names a missing module: " + name);
        std::stringstream ss;
        ss << f.rdbuf();
        Artifact a = artifact_from_json(ss.str());
        if (std::size_t(index) != modules_.size() + 1)
            throw std::runtime_error("library manifest indices are not contiguous");
        modules_.push_back(std::move(a));
    }
}

} // namespace spatiale::space
