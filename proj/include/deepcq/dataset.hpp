#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepcq/field.hpp"

namespace deepcq {

// Manifest JSON: {name, dims:[nx,ny,nz], dtype:"f32le", fields:[{name, timesteps:[{index, path}]}]}.
// Paths are relative to the manifest's directory.
struct Manifest {
    struct Timestep {
        std::uint32_t index = 0;
        std::string path;
    };
    struct Field {
        std::string name;
        std::vector<Timestep> timesteps;
    };

    std::string name;
    Dims3 dims;
    std::string dtype = "f32le";
    std::vector<Field> fields;

    std::string to_json_string() const;
    static Manifest from_json_string(const std::string& text);
    static Manifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
    /// Hash of the canonical JSON form.
    std::uint64_t hash() const;
};

/// All volumes named by a manifest, loaded in manifest order.
struct Dataset {
    Manifest manifest;
    std::vector<VolumeField> volumes;

    static Dataset load(const std::filesystem::path& manifest_path);
    /// Fields get decorrelated seeds derived from spec.seed and the field name.
    static Dataset synthetic(const SyntheticSpec& spec, std::uint32_t timesteps,
                             const std::vector<std::string>& field_names, const std::string& name = "synthetic");
    /// Writes <dir>/<field>_t<k>.f32 plus <dir>/manifest.json.
    void write(const std::filesystem::path& dir) const;

    const VolumeField& volume(const std::string& field, std::uint32_t timestep) const;
};

}  // namespace deepcq
