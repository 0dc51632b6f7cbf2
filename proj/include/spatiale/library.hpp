#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spatiale/space.hpp"

namespace spatiale::space {

// Persistent module library: one file per module plus an index manifest.
// Indices are assigned on add and stay stable across sessions.
class ModuleLibrary {
public:
    ModuleLibrary() = default; // in-memory only
    explicit ModuleLibrary(std::string dir); // loads manifest if present

    int add(const Artifact& artifact); // returns the new index
    const Artifact* find(const std::string& name) const;
    const Artifact* find(int index) const;
    const Artifact& get(const std::string& name) const;
    const Artifact& get(int index) const;
    int index_of(const std::string& name) const; // -1 if absent
    std::size_t size() const { return modules_.size(); }
    const std::vector<Artifact>& all() const { return modules_; }

private:
    void persist(const Artifact& a, int index);
    void load();

    std::string dir_;
    std::vector<Artifact> modules_; // modules_[i] has index i+1
};

// (De)serialisation of an artifact (compiled words + symbol sidecar).
std::string artifact_to_json(const Artifact& a);
Artifact artifact_from_json(const std::string& text);

} // namespace spatiale::space
