#include "deepcq/codec.hpp"

#include <algorithm>
#include <bit>
#include <cfloat>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include "deepcq/error.hpp"
#include "deepcq/huffman.hpp"

namespace deepcq {

std::string_view codec_name(CodecId id) {
    switch (id) {
        case CodecId::PredEb: return "pred-eb";
        case CodecId::XformEb: return "xform-eb";
    }
    throw ArgumentError("unknown codec id");
}

CodecId parse_codec(std::string_view name) {
    if (name == "pred-eb") return CodecId::PredEb;
    if (name == "xform-eb") return CodecId::XformEb;
    throw ArgumentError("unknown codec '" + std::string(name) + "' (expected pred-eb or xform-eb)");
}

ErrorBound ErrorBound::from_relative(double rel, double vmin, double vmax) {
    if (!(rel > 0.0) || !std::isfinite(rel)) throw ArgumentError("relative error bound must be > 0");
    return {rel, rel * (vmax - vmin)};
}

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}
void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw IntegrityError("compressed stream truncated");
    std::uint32_t v = 0;
    for (int s = 0; s < 4; ++s) v |= static_cast<std::uint32_t>(in[pos++]) << (8 * s);
    return v;
}
float get_f32(std::span<const std::uint8_t> in, std::size_t& pos) { return std::bit_cast<float>(get_u32(in, pos)); }

// Largest float not above x (x >= 0).
float float_at_most(double x) {
    float f = static_cast<float>(x);
    if (static_cast<double>(f) > x) f = std::nextafter(f, 0.0f);
    return f;
}

}  // namespace

namespace stream {

void write_header(std::vector<std::uint8_t>& out, const Header& h) {
    if (h.dims.nx > 0xFFFF || h.dims.ny > 0xFFFF || h.dims.nz > 0xFFFF)
        throw DimensionError("stream format limits each axis to 65535 samples, got " + to_string(h.dims));
    out.push_back('D');
    out.push_back('Q');
    out.push_back(static_cast<std::uint8_t>(h.codec));
    out.push_back(static_cast<std::uint8_t>(h.mode));
    put_u16(out, static_cast<std::uint16_t>(h.dims.nx));
    put_u16(out, static_cast<std::uint16_t>(h.dims.ny));
    put_u16(out, static_cast<std::uint16_t>(h.dims.nz));
    put_f32(out, h.eb_abs);
    put_u16(out, kFormatVersion);
}

Header read_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kHeaderBytes) throw IntegrityError("compressed stream shorter than its header");
    if (bytes[0] != 'D' || bytes[1] != 'Q') throw FormatError("bad compressed stream magic");
    const auto version = static_cast<std::uint16_t>(bytes[14] | (bytes[15] << 8));
    if (version != kFormatVersion) throw FormatError("unsupported compressed stream version " + std::to_string(version));
    Header h;
    if (bytes[2] > 1) throw FormatError("unknown codec id in stream");
    h.codec = static_cast<CodecId>(bytes[2]);
    if (bytes[3] > 2) throw FormatError("unknown stream mode");
    h.mode = static_cast<Mode>(bytes[3]);
    auto u16 = [&](std::size_t o) { return static_cast<std::size_t>(bytes[o] | (bytes[o + 1] << 8)); };
    h.dims = {u16(4), u16(6), u16(8)};
    std::size_t pos = 10;
    h.eb_abs = get_f32(bytes, pos);
    return h;
}

}  // namespace stream

PredQuantized pred_quantize(double value, double prediction, double eb_abs) {
    const double bin = 2.0 * eb_abs;
    const double q = std::round((value - prediction) / bin);
    if (!(std::fabs(q) < kOutlierCap)) return {kOutlierSymbol, value, true};
    const auto index = static_cast<std::int32_t>(q);
    return {index, prediction + static_cast<double>(index) * bin, false};
}

double lorenzo_predict(std::span<const float> recon, const Dims3& d, std::size_t i, std::size_t j, std::size_t k) {
    auto f = [&](std::size_t a, std::size_t b, std::size_t c, bool da, bool db, bool dc) -> double {
        if ((da && a == 0) || (db && b == 0) || (dc && c == 0)) return 0.0;
        return recon[d.index(a - da, b - db, c - dc)];
    };
    return f(i, j, k, true, false, false) + f(i, j, k, false, true, false) + f(i, j, k, false, false, true) -
           f(i, j, k, true, true, false) - f(i, j, k, true, false, true) - f(i, j, k, false, true, true) +
           f(i, j, k, true, true, true);
}

double xform_step(double eb_abs) {
    if (!(eb_abs > 0.0)) return 0.0;
    int e = 0;
    std::frexp(eb_abs / 4.0, &e);  // eb/4 = m * 2^e, m in [0.5, 1)
    return std::ldexp(1.0, e - 1);
}

namespace {

struct Dct4 {
    double m[4][4];  // m[k][n], orthonormal DCT-II
    Dct4() {
        for (int k = 0; k < 4; ++k)
            for (int n = 0; n < 4; ++n) {
                const double s = (k == 0) ? 0.5 : std::sqrt(0.5);
                m[k][n] = s * std::cos(std::numbers::pi * (2 * n + 1) * k / 8.0);
            }
    }
};
const Dct4 kDct;

// Applies the 1D transform (or its transpose) along one axis of a 4x4x4 cube.
void apply_axis(double* v, int stride_axis, bool inverse) {
    const int strides[3] = {1, 4, 16};
    const int s = strides[stride_axis];
    const int o1 = strides[(stride_axis + 1) % 3], o2 = strides[(stride_axis + 2) % 3];
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            double* line = v + a * o1 + b * o2;
            double in[4] = {line[0], line[s], line[2 * s], line[3 * s]};
            for (int k = 0; k < 4; ++k) {
                double acc = 0.0;
                for (int n = 0; n < 4; ++n) acc += (inverse ? kDct.m[n][k] : kDct.m[k][n]) * in[n];
                line[k * s] = acc;
            }
        }
}

}  // namespace

void dct4_forward_3d(std::span<const double, 64> in, std::span<double, 64> out) {
    std::copy(in.begin(), in.end(), out.begin());
    for (int ax = 0; ax < 3; ++ax) apply_axis(out.data(), ax, false);
}

void dct4_inverse_3d(std::span<const double, 64> in, std::span<double, 64> out) {
    std::copy(in.begin(), in.end(), out.begin());
    for (int ax = 0; ax < 3; ++ax) apply_axis(out.data(), ax, true);
}

XformQuantized xform_block_quantize(std::span<const float, 64> block, double eb_abs) {
    XformQuantized out;
    out.step = xform_step(eb_abs);
    if (!(out.step > 0.0)) throw ArgumentError("transform quantization needs eb_abs > 0");
    std::array<double, 64> x{}, c{};
    for (int n = 0; n < 64; ++n) x[n] = block[n];
    dct4_forward_3d(x, c);
    for (int n = 0; n < 64; ++n) {
        // Saturated; the encoder stores any block whose indices exceed int32 raw.
        const double q = std::clamp(std::round(c[n] / out.step), -9.0e18, 9.0e18);
        out.indices[n] = static_cast<std::int64_t>(q);
    }
    return out;
}

std::array<float, 64> xform_block_reconstruct(const std::array<std::int64_t, 64>& indices, double step) {
    std::array<double, 64> c{}, x{};
    for (int n = 0; n < 64; ++n) c[n] = static_cast<double>(indices[n]) * step;
    dct4_inverse_3d(c, x);
    std::array<float, 64> out{};
    for (int n = 0; n < 64; ++n) out[n] = static_cast<float>(x[n]);
    return out;
}

namespace {

void check_finite(std::span<const float> values) {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw DataError("non-finite sample at flat index " + std::to_string(i) + " passed to codec");
}

void append_entropy(std::vector<std::uint8_t>& out, const std::vector<std::int32_t>& symbols) {
    auto coded = entropy_encode(symbols);
    out.insert(out.end(), coded.codebook.begin(), coded.codebook.end());
    out.insert(out.end(), coded.payload.begin(), coded.payload.end());
}

// ---- prediction-based codec -------------------------------------------------

void pred_encode(std::vector<std::uint8_t>& out, std::span<const float> values, const Dims3& d, double eb) {
    std::vector<float> recon(values.size());
    std::vector<std::int32_t> symbols(values.size());
    std::vector<float> outliers;
    for (std::size_t k = 0; k < d.nz; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i) {
                const std::size_t n = d.index(i, j, k);
                const double pred = lorenzo_predict(recon, d, i, j, k);
                auto q = pred_quantize(values[n], pred, eb);
                float r = static_cast<float>(q.reconstruction);
                // Rounding to float can push a bin edge past the bound.
                if (!q.outlier && !(std::fabs(static_cast<double>(values[n]) - r) <= eb)) q.outlier = true;
                if (q.outlier) {
                    symbols[n] = kOutlierSymbol;
                    outliers.push_back(values[n]);
                    r = values[n];
                } else {
                    symbols[n] = q.index;
                }
                recon[n] = r;
            }
    append_entropy(out, symbols);
    for (float v : outliers) put_f32(out, v);
}

std::vector<float> pred_decode(std::span<const std::uint8_t> bytes, std::size_t pos, const Dims3& d, double eb) {
    const auto code = HuffmanCode::deserialize(bytes, pos);
    BitReader reader(bytes.subspan(pos));
    std::vector<std::int32_t> symbols(d.size());
    for (auto& s : symbols) s = code.decode(reader);
    pos += reader.bytes_consumed();
    std::vector<float> recon(d.size());
    const double bin = 2.0 * eb;
    for (std::size_t k = 0; k < d.nz; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i) {
                const std::size_t n = d.index(i, j, k);
                if (symbols[n] == kOutlierSymbol) {
                    recon[n] = get_f32(bytes, pos);
                } else {
                    const double pred = lorenzo_predict(recon, d, i, j, k);
                    recon[n] = static_cast<float>(pred + static_cast<double>(symbols[n]) * bin);
                }
            }
    return recon;
}

// ---- transform-based codec --------------------------------------------------

struct BlockGrid {
    Dims3 d;
    std::size_t bx, by, bz;
    explicit BlockGrid(const Dims3& dims)
        : d(dims), bx((dims.nx + 3) / 4), by((dims.ny + 3) / 4), bz((dims.nz + 3) / 4) {}

    // Gathers a 4x4x4 cube, replicating the last sample along any axis that
    // runs past the volume.
    std::array<float, 64> gather(std::span<const float> v, std::size_t cx, std::size_t cy, std::size_t cz) const {
        std::array<float, 64> out{};
        for (std::size_t z = 0; z < 4; ++z)
            for (std::size_t y = 0; y < 4; ++y)
                for (std::size_t x = 0; x < 4; ++x) {
                    const std::size_t i = std::min(cx * 4 + x, d.nx - 1);
                    const std::size_t j = std::min(cy * 4 + y, d.ny - 1);
                    const std::size_t k = std::min(cz * 4 + z, d.nz - 1);
                    out[x + 4 * y + 16 * z] = v[d.index(i, j, k)];
                }
        return out;
    }

    template <typename Fn>
    void for_each_valid(std::size_t cx, std::size_t cy, std::size_t cz, Fn&& fn) const {
        for (std::size_t z = 0; z < 4 && cz * 4 + z < d.nz; ++z)
            for (std::size_t y = 0; y < 4 && cy * 4 + y < d.ny; ++y)
                for (std::size_t x = 0; x < 4 && cx * 4 + x < d.nx; ++x)
                    fn(x + 4 * y + 16 * z, d.index(cx * 4 + x, cy * 4 + y, cz * 4 + z));
    }
};

void xform_encode(std::vector<std::uint8_t>& out, std::span<const float> values, const Dims3& d, double eb) {
    const BlockGrid grid(d);
    std::vector<std::int32_t> symbols;
    symbols.reserve(grid.bx * grid.by * grid.bz * 64);
    std::vector<std::uint8_t> outliers;
    for (std::size_t cz = 0; cz < grid.bz; ++cz)
        for (std::size_t cy = 0; cy < grid.by; ++cy)
            for (std::size_t cx = 0; cx < grid.bx; ++cx) {
                const auto cube = grid.gather(values, cx, cy, cz);
                const auto q = xform_block_quantize(cube, eb);
                bool raw = false;
                for (auto idx : q.indices)
                    if (idx > std::numeric_limits<std::int32_t>::max() || idx < -std::numeric_limits<std::int32_t>::max())
                        raw = true;
                if (!raw) {
                    const auto rec = xform_block_reconstruct(q.indices, q.step);
                    grid.for_each_valid(cx, cy, cz, [&](std::size_t local, std::size_t) {
                        if (!(std::fabs(static_cast<double>(cube[local]) - rec[local]) <= eb)) raw = true;
                    });
                }
                if (raw) {
                    symbols.push_back(kRawBlockSymbol);
                    grid.for_each_valid(cx, cy, cz, [&](std::size_t, std::size_t n) { put_f32(outliers, values[n]); });
                    continue;
                }
                for (auto idx : q.indices) {
                    if (idx >= kOutlierCap || idx <= -kOutlierCap) {
                        symbols.push_back(kOutlierSymbol);
                        put_u32(outliers, static_cast<std::uint32_t>(static_cast<std::int32_t>(idx)));
                    } else {
                        symbols.push_back(static_cast<std::int32_t>(idx));
                    }
                }
            }
    append_entropy(out, symbols);
    out.insert(out.end(), outliers.begin(), outliers.end());
}

std::vector<float> xform_decode(std::span<const std::uint8_t> bytes, std::size_t pos, const Dims3& d, double eb) {
    const BlockGrid grid(d);
    const double step = xform_step(eb);
    const auto code = HuffmanCode::deserialize(bytes, pos);
    // First pass: symbols only, so the outlier section's offset is known.
    BitReader reader(bytes.subspan(pos));
    std::vector<std::int32_t> symbols;
    const std::size_t n_blocks = grid.bx * grid.by * grid.bz;
    symbols.reserve(n_blocks * 64);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const auto first = code.decode(reader);
        symbols.push_back(first);
        if (first == kRawBlockSymbol) continue;
        for (int c = 1; c < 64; ++c) symbols.push_back(code.decode(reader));
    }
    std::size_t opos = pos + reader.bytes_consumed();

    std::vector<float> recon(d.size());
    std::size_t s = 0;
    for (std::size_t cz = 0; cz < grid.bz; ++cz)
        for (std::size_t cy = 0; cy < grid.by; ++cy)
            for (std::size_t cx = 0; cx < grid.bx; ++cx) {
                if (symbols[s] == kRawBlockSymbol) {
                    ++s;
                    grid.for_each_valid(cx, cy, cz, [&](std::size_t, std::size_t n) { recon[n] = get_f32(bytes, opos); });
                    continue;
                }
                std::array<std::int64_t, 64> idx{};
                for (int c = 0; c < 64; ++c, ++s) {
                    if (symbols[s] == kOutlierSymbol)
                        idx[c] = static_cast<std::int32_t>(get_u32(bytes, opos));
                    else if (symbols[s] == kRawBlockSymbol)
                        throw IntegrityError("raw-block marker inside a coded block");
                    else
                        idx[c] = symbols[s];
                }
                const auto rec = xform_block_reconstruct(idx, step);
                grid.for_each_valid(cx, cy, cz, [&](std::size_t local, std::size_t n) { recon[n] = rec[local]; });
            }
    return recon;
}

}  // namespace

std::vector<std::uint8_t> compress(CodecId codec, std::span<const float> values, const Dims3& dims, double eb_abs) {
    if (values.empty() || dims.size() != values.size())
        throw DimensionError("codec input of " + std::to_string(values.size()) + " samples does not match dims " +
                             to_string(dims));
    if (!(eb_abs >= 0.0)) throw ArgumentError("absolute error bound must be >= 0");
    check_finite(values);

    stream::Header h{codec, stream::Mode::Coded, dims, float_at_most(eb_abs)};
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    std::vector<std::uint8_t> out;
    if (*lo == *hi) {
        h.mode = stream::Mode::Constant;
        stream::write_header(out, h);
        put_f32(out, *lo);
        return out;
    }
    const double eb = h.eb_abs;
    const bool underflow = (codec == CodecId::PredEb) ? !(eb >= FLT_MIN) : !(xform_step(eb) >= FLT_MIN);
    if (underflow) {
        h.mode = stream::Mode::Raw;
        stream::write_header(out, h);
        for (float v : values) put_f32(out, v);
        return out;
    }
    stream::write_header(out, h);
    if (codec == CodecId::PredEb)
        pred_encode(out, values, dims, eb);
    else
        xform_encode(out, values, dims, eb);
    return out;
}

Decompressed decompress(std::span<const std::uint8_t> bytes) {
    Decompressed out;
    out.header = stream::read_header(bytes);
    const Dims3& d = out.header.dims;
    std::size_t pos = stream::kHeaderBytes;
    switch (out.header.mode) {
        case stream::Mode::Constant: {
            const float v = get_f32(bytes, pos);
            out.values.assign(d.size(), v);
            break;
        }
        case stream::Mode::Raw:
            out.values.resize(d.size());
            for (auto& v : out.values) v = get_f32(bytes, pos);
            break;
        case stream::Mode::Coded:
            out.values = (out.header.codec == CodecId::PredEb) ? pred_decode(bytes, pos, d, out.header.eb_abs)
                                                               : xform_decode(bytes, pos, d, out.header.eb_abs);
            break;
    }
    return out;
}

CodecOutcome compress_roundtrip(CodecId codec, std::span<const float> values, const Dims3& dims, double eb_rel) {
    if (values.empty()) throw ArgumentError("codec input must be non-empty");
    check_finite(values);
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    CodecOutcome out;
    out.codec = codec;
    out.eb = ErrorBound::from_relative(eb_rel, *lo, *hi);
    const auto bytes = compress(codec, values, dims, out.eb.abs);
    out.compressed_bytes = bytes.size();
    out.reconstruction = decompress(bytes).values;
    double worst = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i)
        worst = std::max(worst, std::fabs(static_cast<double>(values[i]) - out.reconstruction[i]));
    out.max_abs_error = worst;
    if (worst > out.eb.abs)
        throw IntegrityError("codec " + std::string(codec_name(codec)) + " violated its error bound");
    return out;
}

}  // namespace deepcq
