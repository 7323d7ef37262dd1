#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "deepcq/field.hpp"
#include "deepcq/rng.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("deepcq_" + tag + "_" + std::to_string(deepcq::fnv1a64(tag) ^ counter()++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    static std::uint64_t& counter() {
        static std::uint64_t c = 0;
        return c;
    }
    std::filesystem::path path_;
};

inline std::vector<float> uniform_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    deepcq::Rng rng(seed);
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
    return v;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::FILE* f = std::fopen(p.string().c_str(), "rb");
    if (!f) return {};
    std::string out;
    char buf[4096];
    for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, f)) > 0;) out.append(buf, n);
    std::fclose(f);
    return out;
}

// Direct per-window SSIM: two-pass mean and central moments for every window,
// no running sums.
inline double ssim_bruteforce(const std::vector<float>& x, const std::vector<float>& y, const deepcq::Dims3& d,
                              std::size_t w, double k1, double k2, double L) {
    const double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
    const double n = static_cast<double>(w * w * w);
    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t oz = 0; oz + w <= d.nz; ++oz)
        for (std::size_t oy = 0; oy + w <= d.ny; ++oy)
            for (std::size_t ox = 0; ox + w <= d.nx; ++ox) {
                double mx = 0, my = 0;
                for (std::size_t k = 0; k < w; ++k)
                    for (std::size_t j = 0; j < w; ++j)
                        for (std::size_t i = 0; i < w; ++i) {
                            const auto idx = d.index(ox + i, oy + j, oz + k);
                            mx += x[idx];
                            my += y[idx];
                        }
                mx /= n;
                my /= n;
                double vx = 0, vy = 0, cxy = 0;
                for (std::size_t k = 0; k < w; ++k)
                    for (std::size_t j = 0; j < w; ++j)
                        for (std::size_t i = 0; i < w; ++i) {
                            const auto idx = d.index(ox + i, oy + j, oz + k);
                            const double a = x[idx] - mx, b = y[idx] - my;
                            vx += a * a;
                            vy += b * b;
                            cxy += a * b;
                        }
                vx /= n;
                vy /= n;
                cxy /= n;
                total += ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++windows;
            }
    return std::clamp(total / static_cast<double>(windows), -1.0, 1.0);
}

}  // namespace testing
