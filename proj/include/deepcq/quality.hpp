#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deepcq/codec.hpp"
#include "deepcq/field.hpp"

namespace deepcq {

enum class Metric : std::uint8_t { CR = 0, PSNR = 1, SSIM = 2 };
inline constexpr std::array<Metric, 3> kAllMetrics{Metric::CR, Metric::PSNR, Metric::SSIM};
std::string_view metric_name(Metric m);  // "cr" / "psnr" / "ssim"
Metric parse_metric(std::string_view name);

double compression_ratio(std::size_t original_bytes, std::size_t compressed_bytes);

/// Mean squared difference, accumulated in double.
double mse(std::span<const float> a, std::span<const float> b);

/// 20 log10(R) - 10 log10(MSE), R = range of the original. nullopt when MSE = 0
/// or R = 0.
std::optional<double> psnr(std::span<const float> original, std::span<const float> reconstruction);

struct SsimParams {
    std::size_t window = 7;
    double k1 = 0.01;
    double k2 = 0.03;
    std::optional<double> dynamic_range;  // default: range of the original
};

/// Mean SSIM over every stride-1 cubic window, uniform weights, population
/// moments. Window sums are separable box sums in double.
std::optional<double> ssim3d(std::span<const float> original, std::span<const float> reconstruction,
                             const Dims3& dims, const SsimParams& params = {});

/// (orig - pred) / orig * 100.
double percentage_error(double orig, double pred);

/// Mean of |percentage_error| over the pairs.
double mape(std::span<const std::pair<double, double>> pairs);

struct QualityLabel {
    std::string field;
    std::uint32_t timestep = 0;
    std::uint32_t block_id = 0;
    CodecId codec = CodecId::PredEb;
    double eb_rel = 0.0;
    double eb_abs = 0.0;
    double cr = 0.0;
    std::optional<double> psnr_db;
    std::optional<double> ssim;
    double block_min = 0.0;
    double block_max = 0.0;

    std::optional<double> metric(Metric m) const;
};

/// One ground-truth row for a block: codec round trip plus CR/PSNR/SSIM.
QualityLabel measure_quality(const Block& block, CodecId codec, double eb_rel, const SsimParams& ssim = {});

// Label CSV: header `field,timestep,block_id,codec,eb_rel,eb_abs,cr,psnr_db,ssim,block_min,block_max`;
// undefined metrics are empty cells; reals use shortest round-trip formatting.
inline constexpr const char* kLabelCsvHeader = "field,timestep,block_id,codec,eb_rel,eb_abs,cr,psnr_db,ssim,block_min,block_max";
std::string format_real(double v);
std::string labels_to_csv(std::span<const QualityLabel> rows);
std::vector<QualityLabel> labels_from_csv(const std::string& text);
void write_labels_csv(const std::filesystem::path& path, std::span<const QualityLabel> rows);
std::vector<QualityLabel> read_labels_csv(const std::filesystem::path& path);

}  // namespace deepcq
