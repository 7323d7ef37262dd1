#include "deepcq/quality.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "deepcq/error.hpp"

namespace deepcq {

std::string_view metric_name(Metric m) {
    switch (m) {
        case Metric::CR: return "cr";
        case Metric::PSNR: return "psnr";
        case Metric::SSIM: return "ssim";
    }
    throw ArgumentError("unknown metric");
}

Metric parse_metric(std::string_view name) {
    if (name == "cr") return Metric::CR;
    if (name == "psnr") return Metric::PSNR;
    if (name == "ssim") return Metric::SSIM;
    throw ArgumentError("unknown metric '" + std::string(name) + "' (expected cr, psnr or ssim)");
}

double compression_ratio(std::size_t original_bytes, std::size_t compressed_bytes) {
    if (compressed_bytes == 0) throw ArgumentError("compressed size must be > 0");
    if (original_bytes == 0) throw ArgumentError("original size must be > 0");
    return static_cast<double>(original_bytes) / static_cast<double>(compressed_bytes);
}

double mse(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) throw ArgumentError("mse: length mismatch (" + std::to_string(a.size()) + " vs " +
                                                  std::to_string(b.size()) + ")");
    if (a.empty()) throw ArgumentError("mse: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

std::optional<double> psnr(std::span<const float> original, std::span<const float> reconstruction) {
    const double e = mse(original, reconstruction);
    const auto [lo, hi] = std::minmax_element(original.begin(), original.end());
    const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
    if (e == 0.0 || range == 0.0) return std::nullopt;
    return 20.0 * std::log10(range) - 10.0 * std::log10(e);
}

namespace {

// Sums of `w` consecutive samples along one axis: out has extent n - w + 1 on that axis.
std::vector<double> box_sum_axis(const std::vector<double>& in, const Dims3& d, int axis, std::size_t w, Dims3& out_d) {
    out_d = d;
    std::size_t* ext = axis == 0 ? &out_d.nx : axis == 1 ? &out_d.ny : &out_d.nz;
    *ext = *ext - w + 1;
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? d.nx : d.nx * d.ny;
    std::vector<double> out(out_d.size());
    for (std::size_t k = 0; k < out_d.nz; ++k)
        for (std::size_t j = 0; j < out_d.ny; ++j)
            for (std::size_t i = 0; i < out_d.nx; ++i) {
                const double* p = in.data() + d.index(i, j, k);
                double s = 0.0;
                for (std::size_t t = 0; t < w; ++t) s += p[t * stride];
                out[out_d.index(i, j, k)] = s;
            }
    return out;
}

std::vector<double> box_sum(std::vector<double> v, const Dims3& d, std::size_t w, Dims3& out_d) {
    Dims3 a, b;
    auto s0 = box_sum_axis(v, d, 0, w, a);
    auto s1 = box_sum_axis(s0, a, 1, w, b);
    return box_sum_axis(s1, b, 2, w, out_d);
}

}  // namespace

std::optional<double> ssim3d(std::span<const float> original, std::span<const float> reconstruction, const Dims3& dims,
                             const SsimParams& params) {
    if (original.size() != reconstruction.size() || original.size() != dims.size())
        throw ArgumentError("ssim3d: inputs must both match dims " + to_string(dims));
    const std::size_t w = params.window;
    if (w == 0 || w > dims.nx || w > dims.ny || w > dims.nz)
        throw ArgumentError("ssim3d: window " + std::to_string(w) + " does not fit dims " + to_string(dims));

    double range = 0.0;
    if (params.dynamic_range) {
        range = *params.dynamic_range;
    } else {
        const auto [lo, hi] = std::minmax_element(original.begin(), original.end());
        range = static_cast<double>(*hi) - static_cast<double>(*lo);
    }
    if (range == 0.0) {
        const bool equal = std::equal(original.begin(), original.end(), reconstruction.begin());
        if (equal) return 1.0;
        return std::nullopt;
    }

    // Moments are taken about a common offset; (co)variances do not depend on
    // it and the means are shifted back, which limits cancellation for data
    // far from zero.
    const auto [olo, ohi] = std::minmax_element(original.begin(), original.end());
    const double offset = 0.5 * (static_cast<double>(*olo) + static_cast<double>(*ohi));
    const std::size_t n = original.size();
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = static_cast<double>(original[i]) - offset;
        y[i] = static_cast<double>(reconstruction[i]) - offset;
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    Dims3 od;
    const auto sx = box_sum(std::move(x), dims, w, od);
    const auto sy = box_sum(std::move(y), dims, w, od);
    const auto sxx = box_sum(std::move(xx), dims, w, od);
    const auto syy = box_sum(std::move(yy), dims, w, od);
    const auto sxy = box_sum(std::move(xy), dims, w, od);

    const double vol = static_cast<double>(w * w * w);
    const double c1 = (params.k1 * range) * (params.k1 * range);
    const double c2 = (params.k2 * range) * (params.k2 * range);
    double total = 0.0;
    for (std::size_t p = 0; p < od.size(); ++p) {
        const double dx = sx[p] / vol, dy = sy[p] / vol;
        const double vx = sxx[p] / vol - dx * dx;
        const double vy = syy[p] / vol - dy * dy;
        const double cxy = sxy[p] / vol - dx * dy;
        const double mx = dx + offset, my = dy + offset;
        total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    return std::clamp(total / static_cast<double>(od.size()), -1.0, 1.0);
}

double percentage_error(double orig, double pred) {
    if (orig == 0.0) throw ArgumentError("percentage error undefined for a zero ground truth");
    return (orig - pred) / orig * 100.0;
}

double mape(std::span<const std::pair<double, double>> pairs) {
    if (pairs.empty()) throw ArgumentError("mape of an empty list");
    double acc = 0.0;
    for (const auto& [o, p] : pairs) acc += std::fabs(percentage_error(o, p));
    return acc / static_cast<double>(pairs.size());
}

std::optional<double> QualityLabel::metric(Metric m) const {
    switch (m) {
        case Metric::CR: return cr;
        case Metric::PSNR: return psnr_db;
        case Metric::SSIM: return ssim;
    }
    return std::nullopt;
}

QualityLabel measure_quality(const Block& block, CodecId codec, double eb_rel, const SsimParams& ssim_params) {
    const auto outcome = compress_roundtrip(codec, block, eb_rel);
    const auto [lo, hi] = std::minmax_element(block.values.begin(), block.values.end());
    QualityLabel row;
    row.field = block.field_name;
    row.timestep = block.timestep;
    row.block_id = block.block_id;
    row.codec = codec;
    row.eb_rel = eb_rel;
    row.eb_abs = outcome.eb.abs;
    row.cr = compression_ratio(4 * block.values.size(), outcome.compressed_bytes);
    row.block_min = *lo;
    row.block_max = *hi;
    if (*lo != *hi) {
        row.psnr_db = psnr(block.values, outcome.reconstruction);
        row.ssim = ssim3d(block.values, outcome.reconstruction, block.dims, ssim_params);
    }
    return row;
}

std::string format_real(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string labels_to_csv(std::span<const QualityLabel> rows) {
    std::string out = kLabelCsvHeader;
    out += '\n';
    auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
    for (const auto& r : rows) {
        out += r.field + ',' + std::to_string(r.timestep) + ',' + std::to_string(r.block_id) + ',' +
               std::string(codec_name(r.codec)) + ',' + format_real(r.eb_rel) + ',' + format_real(r.eb_abs) + ',' +
               format_real(r.cr) + ',' + opt(r.psnr_db) + ',' + opt(r.ssim) + ',' + format_real(r.block_min) + ',' +
               format_real(r.block_max) + '\n';
    }
    return out;
}

namespace {

double parse_real(const std::string& s, std::size_t line) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError("label CSV line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

}  // namespace

std::vector<QualityLabel> labels_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kLabelCsvHeader) throw FormatError("label CSV header mismatch");
    std::vector<QualityLabel> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        if (cells.size() != 11)
            throw FormatError("label CSV line " + std::to_string(lineno) + ": expected 11 cells, got " +
                              std::to_string(cells.size()));
        QualityLabel r;
        r.field = cells[0];
        r.timestep = static_cast<std::uint32_t>(parse_real(cells[1], lineno));
        r.block_id = static_cast<std::uint32_t>(parse_real(cells[2], lineno));
        r.codec = parse_codec(cells[3]);
        r.eb_rel = parse_real(cells[4], lineno);
        r.eb_abs = parse_real(cells[5], lineno);
        r.cr = parse_real(cells[6], lineno);
        if (!cells[7].empty()) r.psnr_db = parse_real(cells[7], lineno);
        if (!cells[8].empty()) r.ssim = parse_real(cells[8], lineno);
        r.block_min = parse_real(cells[9], lineno);
        r.block_max = parse_real(cells[10], lineno);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_labels_csv(const std::filesystem::path& path, std::span<const QualityLabel> rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write label CSV '" + path.string() + "'");
    out << labels_to_csv(rows);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<QualityLabel> read_labels_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open label CSV '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return labels_from_csv(ss.str());
}

}  // namespace deepcq
