#include "deepcq/dataset.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "deepcq/error.hpp"
#include "deepcq/rng.hpp"

namespace deepcq {

using nlohmann::json;

std::string Manifest::to_json_string() const {
    json j;
    j["name"] = name;
    j["dims"] = {dims.nx, dims.ny, dims.nz};
    j["dtype"] = dtype;
    j["fields"] = json::array();
    for (const auto& f : fields) {
        json jf;
        jf["name"] = f.name;
        jf["timesteps"] = json::array();
        for (const auto& t : f.timesteps) jf["timesteps"].push_back({{"index", t.index}, {"path", t.path}});
        j["fields"].push_back(jf);
    }
    return j.dump(2) + "\n";
}

Manifest Manifest::from_json_string(const std::string& text) {
    Manifest m;
    try {
        const auto j = json::parse(text);
        m.name = j.at("name").get<std::string>();
        const auto d = j.at("dims").get<std::vector<std::size_t>>();
        if (d.size() != 3) throw FormatError("manifest dims must have 3 entries");
        m.dims = {d[0], d[1], d[2]};
        m.dtype = j.value("dtype", std::string("f32le"));
        if (m.dtype != "f32le") throw FormatError("unsupported manifest dtype '" + m.dtype + "'");
        for (const auto& jf : j.at("fields")) {
            Field f;
            f.name = jf.at("name").get<std::string>();
            for (const auto& jt : jf.at("timesteps"))
                f.timesteps.push_back({jt.at("index").get<std::uint32_t>(), jt.at("path").get<std::string>()});
            m.fields.push_back(std::move(f));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("invalid manifest: ") + e.what());
    }
    return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_string(ss.str());
}

void Manifest::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
    out << to_json_string();
}

std::uint64_t Manifest::hash() const { return fnv1a64(to_json_string()); }

Dataset Dataset::load(const std::filesystem::path& manifest_path) {
    Dataset ds;
    ds.manifest = Manifest::load(manifest_path);
    const auto root = manifest_path.parent_path();
    for (const auto& f : ds.manifest.fields)
        for (const auto& t : f.timesteps)
            ds.volumes.push_back(load_raw(root / t.path, ds.manifest.dims, f.name, t.index));
    return ds;
}

Dataset Dataset::synthetic(const SyntheticSpec& spec, std::uint32_t timesteps, const std::vector<std::string>& field_names,
                           const std::string& name) {
    if (timesteps == 0) throw ArgumentError("synthetic dataset needs at least one timestep");
    if (field_names.empty()) throw ArgumentError("synthetic dataset needs at least one field");
    Dataset ds;
    ds.manifest.name = name;
    ds.manifest.dims = spec.dims;
    for (std::size_t fi = 0; fi < field_names.size(); ++fi) {
        SyntheticSpec fs = spec;
        // The first field keeps the caller's seed so single-field runs match generate_synthetic.
        if (fi > 0) fs.seed = derive_seed(spec.seed, field_names[fi]);
        Manifest::Field mf{field_names[fi], {}};
        for (std::uint32_t t = 0; t < timesteps; ++t) {
            ds.volumes.push_back(generate_synthetic(fs, t, field_names[fi]));
            mf.timesteps.push_back({t, field_names[fi] + "_t" + std::to_string(t) + ".f32"});
        }
        ds.manifest.fields.push_back(std::move(mf));
    }
    return ds;
}

void Dataset::write(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::size_t v = 0;
    for (const auto& f : manifest.fields)
        for (const auto& t : f.timesteps) save_raw(dir / t.path, volumes.at(v++).values());
    manifest.save(dir / "manifest.json");
}

const VolumeField& Dataset::volume(const std::string& field, std::uint32_t timestep) const {
    for (const auto& v : volumes)
        if (v.field_name() == field && v.timestep() == timestep) return v;
    throw ArgumentError("dataset has no volume for field '" + field + "' timestep " + std::to_string(timestep));
}

}  // namespace deepcq
