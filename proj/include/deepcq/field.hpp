#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace deepcq {

struct Dims3 {
    std::size_t nx = 0, ny = 0, nz = 0;

    std::size_t size() const { return nx * ny * nz; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return i + nx * (j + ny * k); }
    bool operator==(const Dims3&) const = default;
};

std::string to_string(const Dims3& d);
/// Parses "nx,ny,nz" (or a single "n" meaning n,n,n).
Dims3 parse_dims(const std::string& text);

/// Dense 3D scalar volume, x-fastest. Immutable once constructed; the
/// constructor validates finiteness and caches the value range.
class VolumeField {
public:
    VolumeField(Dims3 dims, std::vector<float> values, std::string field_name = "field",
                std::uint32_t timestep = 0);

    const Dims3& dims() const { return dims_; }
    std::span<const float> values() const { return values_; }
    const std::string& field_name() const { return field_name_; }
    std::uint32_t timestep() const { return timestep_; }
    float vmin() const { return vmin_; }
    float vmax() const { return vmax_; }

private:
    Dims3 dims_;
    std::vector<float> values_;
    std::string field_name_;
    std::uint32_t timestep_;
    float vmin_ = 0.0f, vmax_ = 0.0f;
};

struct Block {
    Dims3 dims;
    std::vector<float> values;
    std::array<std::size_t, 3> origin{};
    std::string field_name;
    std::uint32_t timestep = 0;
    std::uint32_t block_id = 0;
};

struct NormalizationStats {
    double bmin = 0.0;
    double bmax = 0.0;
    bool degenerate = false;
};

struct SyntheticSpec {
    Dims3 dims{64, 64, 64};
    std::uint64_t seed = 0;
    int n_modes = 6;
    double max_frequency = 4.0;
    double noise_amplitude = 0.02;
    double drift = 0.05;

    void validate() const;
};

/// Reads a headerless little-endian float32 volume.
VolumeField load_raw(const std::filesystem::path& path, Dims3 dims, std::string field_name = "field",
                     std::uint32_t timestep = 0);
void save_raw(const std::filesystem::path& path, std::span<const float> values);

/// Superposed seeded sinusoids plus uniform noise. Mode parameters depend on
/// spec.seed only; drift perturbs frequencies and phases linearly in timestep;
/// noise is reseeded per timestep.
VolumeField generate_synthetic(const SyntheticSpec& spec, std::uint32_t timestep,
                               std::string field_name = "synthetic");

/// Copies the region [origin, origin + dims) out of a field.
Block extract_block(const VolumeField& field, Dims3 block_dims, std::array<std::size_t, 3> origin,
                    std::uint32_t block_id);

/// Uniform random origins, with replacement. block_id is the draw index.
std::vector<Block> sample_blocks(const VolumeField& field, Dims3 block_dims, std::size_t count,
                                 std::uint64_t seed);

/// (v - bmin) / (bmax - bmin); a constant block maps to zeros with the
/// degenerate flag set.
std::pair<Block, NormalizationStats> minmax_normalize(const Block& block);
std::vector<float> minmax_denormalize(std::span<const float> normalized, const NormalizationStats& stats);

}  // namespace deepcq
