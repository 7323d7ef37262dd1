#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "deepcq/error.hpp"
#include "deepcq/pipeline.hpp"
#include "json.hpp"

namespace deepcq {

namespace {
struct Preset {
    const char* name;
    double lo, hi;
};
constexpr Preset kPresets[] = {
    {"nyx", 1e-5, 1e-3}, {"hurricane", 1e-5, 1e-2}, {"miranda", 1e-4, 1e-2}, {"rtm", 1e-4, 1e-3}};
}  // namespace

std::vector<double> eb_grid_logspace(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0) || !(hi > lo)) throw ArgumentError("eb range needs 0 < lo < hi");
    if (n < 2) throw ArgumentError("eb grid needs at least 2 points");
    std::vector<double> out(n);
    const double a = std::log10(lo), b = std::log10(hi);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1));
    out.front() = lo;
    out.back() = hi;
    return out;
}

std::vector<double> eb_preset(const std::string& name, std::size_t n) {
    for (const auto& p : kPresets)
        if (name == p.name) return eb_grid_logspace(p.lo, p.hi, n);
    throw ArgumentError("unknown eb preset '" + name + "'");
}

std::vector<std::string> eb_preset_names() {
    std::vector<std::string> out;
    for (const auto& p : kPresets) out.emplace_back(p.name);
    return out;
}

void validate_eb_grid(std::span<const double> grid) {
    if (grid.empty()) throw ArgumentError("eb grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) throw ArgumentError("eb grid values must be positive");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw ArgumentError("eb grid must be strictly increasing");
    }
}

std::string LabelProvenance::to_json_string() const {
    nlohmann::json codec_names = nlohmann::json::array();
    for (auto c : codecs) codec_names.push_back(codec_name(c));
    const nlohmann::json j{{"manifest_hash", manifest_hash},
                           {"codecs", codec_names},
                           {"eb_grid", eb_grid},
                           {"block_dims", {blocks.dims.nx, blocks.dims.ny, blocks.dims.nz}},
                           {"blocks_per_volume", blocks.count},
                           {"seed", seed}};
    return j.dump(2) + "\n";
}

LabelProvenance LabelProvenance::from_json_string(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        LabelProvenance p;
        p.manifest_hash = j.at("manifest_hash").get<std::uint64_t>();
        for (const auto& c : j.at("codecs")) p.codecs.push_back(parse_codec(c.get<std::string>()));
        p.eb_grid = j.at("eb_grid").get<std::vector<double>>();
        const auto& d = j.at("block_dims");
        p.blocks.dims = {d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>(), d.at(2).get<std::size_t>()};
        p.blocks.count = j.at("blocks_per_volume").get<std::size_t>();
        p.seed = j.at("seed").get<std::uint64_t>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad label provenance: ") + e.what());
    }
}

std::vector<std::uint32_t> LabelTable::timesteps() const {
    std::set<std::uint32_t> s;
    for (const auto& r : rows) s.insert(r.timestep);
    return {s.begin(), s.end()};
}

std::vector<std::string> LabelTable::fields() const {
    std::set<std::string> s;
    for (const auto& r : rows) s.insert(r.field);
    return {s.begin(), s.end()};
}

std::vector<Block> label_blocks(const VolumeField& volume, const BlockSpec& spec, std::uint64_t seed) {
    return sample_blocks(volume, spec.dims, spec.count, derive_seed(seed, volume.field_name(), volume.timestep()));
}

LabelTable build_labels(const Dataset& data, std::span<const CodecId> codecs, std::span<const double> eb_grid,
                        const BlockSpec& blocks, std::uint64_t seed, unsigned workers) {
    validate_eb_grid(eb_grid);
    if (codecs.empty()) throw ArgumentError("no codecs requested");
    if (blocks.count == 0) throw ArgumentError("block count must be positive");

    std::vector<Block> all_blocks;
    for (const auto& v : data.volumes) {
        auto b = label_blocks(v, blocks, seed);
        std::move(b.begin(), b.end(), std::back_inserter(all_blocks));
    }
    const std::size_t per_block = codecs.size() * eb_grid.size();
    const std::size_t total = all_blocks.size() * per_block;
    std::vector<QualityLabel> rows(total);

    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < total;) {
            const auto& b = all_blocks[i / per_block];
            const std::size_t rest = i % per_block;
            rows[i] = measure_quality(b, codecs[rest / eb_grid.size()], eb_grid[rest % eb_grid.size()]);
        }
    };
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(total, 1)));
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    std::sort(rows.begin(), rows.end(), [](const QualityLabel& a, const QualityLabel& b) {
        return std::tie(a.field, a.timestep, a.block_id, a.codec, a.eb_rel) <
               std::tie(b.field, b.timestep, b.block_id, b.codec, b.eb_rel);
    });

    LabelTable t;
    t.rows = std::move(rows);
    t.provenance.manifest_hash = data.manifest.hash();
    t.provenance.codecs.assign(codecs.begin(), codecs.end());
    t.provenance.eb_grid.assign(eb_grid.begin(), eb_grid.end());
    t.provenance.blocks = blocks;
    t.provenance.seed = seed;
    return t;
}

namespace {
std::filesystem::path provenance_path(const std::filesystem::path& csv_path) {
    auto p = csv_path;
    return p.replace_extension(".provenance.json");
}
}  // namespace

void write_label_table(const std::filesystem::path& csv_path, const LabelTable& table) {
    write_labels_csv(csv_path, table.rows);
    const auto path = provenance_path(csv_path);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << table.provenance.to_json_string();
}

LabelTable read_label_table(const std::filesystem::path& csv_path) {
    LabelTable t;
    t.rows = read_labels_csv(csv_path);
    const auto path = provenance_path(csv_path);
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("missing label provenance '" + path.string() + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    t.provenance = LabelProvenance::from_json_string(ss.str());
    return t;
}

}  // namespace deepcq
