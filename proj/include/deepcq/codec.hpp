#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepcq/field.hpp"

namespace deepcq {

enum class CodecId : std::uint8_t { PredEb = 0, XformEb = 1 };

inline constexpr std::array<CodecId, 2> kAllCodecs{CodecId::PredEb, CodecId::XformEb};

std::string_view codec_name(CodecId id);  // "pred-eb" / "xform-eb"
CodecId parse_codec(std::string_view name);

struct ErrorBound {
    double rel = 0.0;
    double abs = 0.0;

    /// abs = rel * (vmax - vmin). Throws ArgumentError unless rel > 0.
    static ErrorBound from_relative(double rel, double vmin, double vmax);
};

struct CodecOutcome {
    CodecId codec = CodecId::PredEb;
    ErrorBound eb;
    std::size_t compressed_bytes = 0;
    std::vector<float> reconstruction;
    double max_abs_error = 0.0;
};

namespace stream {
inline constexpr std::size_t kHeaderBytes = 16;
inline constexpr std::uint16_t kFormatVersion = 1;
enum class Mode : std::uint8_t { Coded = 0, Constant = 1, Raw = 2 };

struct Header {
    CodecId codec = CodecId::PredEb;
    Mode mode = Mode::Coded;
    Dims3 dims;
    float eb_abs = 0.0f;  // the bound the encoder actually used, never above the requested one
};

void write_header(std::vector<std::uint8_t>& out, const Header& h);
Header read_header(std::span<const std::uint8_t> bytes);
}  // namespace stream

// Quantization indices at or beyond this magnitude are stored verbatim.
inline constexpr std::int32_t kOutlierCap = 1 << 15;
inline constexpr std::int32_t kOutlierSymbol = kOutlierCap;
inline constexpr std::int32_t kRawBlockSymbol = kOutlierCap + 1;

struct PredQuantized {
    std::int32_t index = 0;  // kOutlierSymbol when the value is stored verbatim
    double reconstruction = 0.0;
    bool outlier = false;
};

/// Uniform quantizer with bin width 2*eb_abs around the prediction.
PredQuantized pred_quantize(double value, double prediction, double eb_abs);

/// Order-1 Lorenzo prediction from already reconstructed neighbours; neighbours
/// outside the volume count as zero.
double lorenzo_predict(std::span<const float> recon, const Dims3& dims, std::size_t i, std::size_t j, std::size_t k);

/// Quantization step for the transform codec: the largest power of two not
/// above eb_abs / 4.
double xform_step(double eb_abs);

void dct4_forward_3d(std::span<const double, 64> in, std::span<double, 64> out);
void dct4_inverse_3d(std::span<const double, 64> in, std::span<double, 64> out);

struct XformQuantized {
    std::array<std::int64_t, 64> indices{};
    double step = 0.0;
};

XformQuantized xform_block_quantize(std::span<const float, 64> block, double eb_abs);
std::array<float, 64> xform_block_reconstruct(const std::array<std::int64_t, 64>& indices, double step);

std::vector<std::uint8_t> compress(CodecId codec, std::span<const float> values, const Dims3& dims, double eb_abs);

struct Decompressed {
    stream::Header header;
    std::vector<float> values;
};
Decompressed decompress(std::span<const std::uint8_t> bytes);

CodecOutcome compress_roundtrip(CodecId codec, std::span<const float> values, const Dims3& dims, double eb_rel);
inline CodecOutcome compress_roundtrip(CodecId codec, const Block& block, double eb_rel) {
    return compress_roundtrip(codec, block.values, block.dims, eb_rel);
}
inline CodecOutcome compress_roundtrip(CodecId codec, const VolumeField& field, double eb_rel) {
    return compress_roundtrip(codec, field.values(), field.dims(), eb_rel);
}

}  // namespace deepcq
