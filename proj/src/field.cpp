#include "deepcq/field.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "deepcq/error.hpp"
#include "deepcq/rng.hpp"

namespace deepcq {

std::string to_string(const Dims3& d) {
    return std::to_string(d.nx) + "," + std::to_string(d.ny) + "," + std::to_string(d.nz);
}

Dims3 parse_dims(const std::string& text) {
    std::vector<std::size_t> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(item, &pos);
            if (pos != item.size() || v <= 0) throw std::invalid_argument(item);
            parts.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ArgumentError("invalid dimension list '" + text + "'");
        }
    }
    if (parts.size() == 1) return {parts[0], parts[0], parts[0]};
    if (parts.size() != 3) throw ArgumentError("expected 3 dimensions in '" + text + "'");
    return {parts[0], parts[1], parts[2]};
}

VolumeField::VolumeField(Dims3 dims, std::vector<float> values, std::string field_name, std::uint32_t timestep)
    : dims_(dims), values_(std::move(values)), field_name_(std::move(field_name)), timestep_(timestep) {
    if (dims_.size() == 0) throw DimensionError("volume dimensions must be positive, got " + to_string(dims_));
    if (values_.size() != dims_.size())
        throw DimensionError("volume " + to_string(dims_) + " needs " + std::to_string(dims_.size()) +
                             " samples, got " + std::to_string(values_.size()));
    for (std::size_t i = 0; i < values_.size(); ++i) {
        if (!std::isfinite(values_[i]))
            throw DataError("non-finite sample at flat index " + std::to_string(i) + " in field '" +
                            field_name_ + "'");
    }
    const auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
    vmin_ = *lo;
    vmax_ = *hi;
}

VolumeField load_raw(const std::filesystem::path& path, Dims3 dims, std::string field_name, std::uint32_t timestep) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open raw volume '" + path.string() + "'");
    in.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    const std::size_t expected = 4 * dims.size();
    if (bytes != expected)
        throw DimensionError("raw volume '" + path.string() + "' has " + std::to_string(bytes) +
                             " bytes, expected " + std::to_string(expected) + " for dims " + to_string(dims));
    std::vector<float> values(dims.size());
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected));
    if (!in) throw IoError("short read from '" + path.string() + "'");
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& v : values) {
            auto u = std::bit_cast<std::uint32_t>(v);
            u = __builtin_bswap32(u);
            v = std::bit_cast<float>(u);
        }
    }
    return VolumeField(dims, std::move(values), std::move(field_name), timestep);
}

void save_raw(const std::filesystem::path& path, std::span<const float> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write raw volume '" + path.string() + "'");
    if constexpr (std::endian::native == std::endian::big) {
        for (float v : values) {
            const auto u = __builtin_bswap32(std::bit_cast<std::uint32_t>(v));
            out.write(reinterpret_cast<const char*>(&u), 4);
        }
    } else {
        out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * 4));
    }
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void SyntheticSpec::validate() const {
    if (dims.size() == 0) throw ArgumentError("synthetic dims must be positive");
    if (n_modes < 1) throw ArgumentError("synthetic spec needs n_modes >= 1");
    if (!(max_frequency > 0.0)) throw ArgumentError("synthetic max_frequency must be > 0");
    if (!(noise_amplitude >= 0.0)) throw ArgumentError("synthetic noise_amplitude must be >= 0");
    if (!(drift >= 0.0)) throw ArgumentError("synthetic drift must be >= 0");
}

namespace {

struct Mode {
    double amplitude, f, g, h, phase;
    double df, dg, dh, dphase;  // drift directions
};

std::vector<Mode> draw_modes(const SyntheticSpec& spec) {
    Rng rng(derive_seed(spec.seed, "synthetic.modes"));
    std::vector<Mode> modes(static_cast<std::size_t>(spec.n_modes));
    for (std::size_t m = 0; m < modes.size(); ++m) {
        auto& md = modes[m];
        // Lower modes carry more energy: amplitude ~ 1/(m+1).
        md.amplitude = rng.uniform(0.5, 1.0) / static_cast<double>(m + 1);
        md.f = rng.uniform(-spec.max_frequency, spec.max_frequency);
        md.g = rng.uniform(-spec.max_frequency, spec.max_frequency);
        md.h = rng.uniform(-spec.max_frequency, spec.max_frequency);
        md.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        md.df = rng.uniform(-1.0, 1.0);
        md.dg = rng.uniform(-1.0, 1.0);
        md.dh = rng.uniform(-1.0, 1.0);
        md.dphase = rng.uniform(-1.0, 1.0);
    }
    return modes;
}

}  // namespace

VolumeField generate_synthetic(const SyntheticSpec& spec, std::uint32_t timestep, std::string field_name) {
    spec.validate();
    const auto modes = draw_modes(spec);
    const Dims3 d = spec.dims;
    const double t = spec.drift * static_cast<double>(timestep);

    double amp_sum = 0.0;
    for (const auto& m : modes) amp_sum += m.amplitude;

    std::vector<float> values(d.size());
    std::vector<double> acc(d.size(), 0.0);
    for (const auto& m : modes) {
        const double f = m.f + t * m.df * spec.max_frequency * 0.1;
        const double g = m.g + t * m.dg * spec.max_frequency * 0.1;
        const double h = m.h + t * m.dh * spec.max_frequency * 0.1;
        const double phase = m.phase + t * m.dphase * 2.0 * std::numbers::pi;
        for (std::size_t k = 0; k < d.nz; ++k) {
            const double z = static_cast<double>(k) / static_cast<double>(d.nz);
            for (std::size_t j = 0; j < d.ny; ++j) {
                const double y = static_cast<double>(j) / static_cast<double>(d.ny);
                const double base = 2.0 * std::numbers::pi * (g * y + h * z) + phase;
                for (std::size_t i = 0; i < d.nx; ++i) {
                    const double x = static_cast<double>(i) / static_cast<double>(d.nx);
                    acc[d.index(i, j, k)] += m.amplitude * std::sin(2.0 * std::numbers::pi * f * x + base);
                }
            }
        }
    }
    if (spec.noise_amplitude > 0.0) {
        Rng noise(derive_seed(spec.seed, "synthetic.noise", timestep));
        const double scale = spec.noise_amplitude * amp_sum;
        for (auto& a : acc) a += scale * noise.uniform(-1.0, 1.0);
    }
    for (std::size_t n = 0; n < acc.size(); ++n) values[n] = static_cast<float>(acc[n]);
    return VolumeField(d, std::move(values), std::move(field_name), timestep);
}

Block extract_block(const VolumeField& field, Dims3 block_dims, std::array<std::size_t, 3> origin,
                    std::uint32_t block_id) {
    const Dims3& fd = field.dims();
    if (origin[0] + block_dims.nx > fd.nx || origin[1] + block_dims.ny > fd.ny || origin[2] + block_dims.nz > fd.nz)
        throw DimensionError("block " + to_string(block_dims) + " at origin (" + std::to_string(origin[0]) + "," +
                             std::to_string(origin[1]) + "," + std::to_string(origin[2]) +
                             ") exceeds field " + to_string(fd));
    Block b;
    b.dims = block_dims;
    b.origin = origin;
    b.field_name = field.field_name();
    b.timestep = field.timestep();
    b.block_id = block_id;
    b.values.resize(block_dims.size());
    const auto src = field.values();
    for (std::size_t k = 0; k < block_dims.nz; ++k)
        for (std::size_t j = 0; j < block_dims.ny; ++j) {
            const float* row = src.data() + fd.index(origin[0], origin[1] + j, origin[2] + k);
            std::copy(row, row + block_dims.nx, b.values.data() + block_dims.index(0, j, k));
        }
    return b;
}

std::vector<Block> sample_blocks(const VolumeField& field, Dims3 block_dims, std::size_t count, std::uint64_t seed) {
    const Dims3& fd = field.dims();
    if (block_dims.size() == 0) throw DimensionError("block dimensions must be positive");
    if (block_dims.nx > fd.nx || block_dims.ny > fd.ny || block_dims.nz > fd.nz)
        throw DimensionError("block " + to_string(block_dims) + " larger than field " + to_string(fd));
    if (count < 1) throw ArgumentError("sample_blocks needs count >= 1");
    Rng rng(seed);
    std::vector<Block> blocks;
    blocks.reserve(count);
    for (std::size_t b = 0; b < count; ++b) {
        const std::array<std::size_t, 3> origin{
            static_cast<std::size_t>(rng.below(fd.nx - block_dims.nx + 1)),
            static_cast<std::size_t>(rng.below(fd.ny - block_dims.ny + 1)),
            static_cast<std::size_t>(rng.below(fd.nz - block_dims.nz + 1)),
        };
        blocks.push_back(extract_block(field, block_dims, origin, static_cast<std::uint32_t>(b)));
    }
    return blocks;
}

std::pair<Block, NormalizationStats> minmax_normalize(const Block& block) {
    if (block.values.empty()) throw ArgumentError("cannot normalize an empty block");
    const auto [lo, hi] = std::minmax_element(block.values.begin(), block.values.end());
    NormalizationStats stats{*lo, *hi, *lo == *hi};
    Block out = block;
    if (stats.degenerate) {
        std::fill(out.values.begin(), out.values.end(), 0.0f);
        return {std::move(out), stats};
    }
    const double range = stats.bmax - stats.bmin;
    for (auto& v : out.values) v = static_cast<float>((static_cast<double>(v) - stats.bmin) / range);
    return {std::move(out), stats};
}

std::vector<float> minmax_denormalize(std::span<const float> normalized, const NormalizationStats& stats) {
    std::vector<float> out(normalized.size());
    const double range = stats.bmax - stats.bmin;
    for (std::size_t i = 0; i < normalized.size(); ++i)
        out[i] = static_cast<float>(static_cast<double>(normalized[i]) * range + stats.bmin);
    return out;
}

}  // namespace deepcq
