#include <cmath>
#include <cstring>

#include "deepcq/codec.hpp"
#include "deepcq/error.hpp"
#include "deepcq/huffman.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace deepcq;

namespace {
double max_err(std::span<const float> a, std::span<const float> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    return m;
}

Block smooth_block(std::uint64_t seed) {
    SyntheticSpec s;
    s.dims = {32, 32, 32};
    s.seed = seed;
    s.noise_amplitude = 0.0;
    auto f = generate_synthetic(s, 0);
    return sample_blocks(f, {16, 16, 16}, 1, seed).front();
}
}  // namespace

TEST_SUITE("codec") {
    TEST_CASE("names") {
        CHECK(codec_name(CodecId::PredEb) == "pred-eb");
        CHECK(codec_name(CodecId::XformEb) == "xform-eb");
        CHECK(parse_codec("xform-eb") == CodecId::XformEb);
        CHECK_THROWS_AS(parse_codec("zfp"), ArgumentError);
        CHECK_THROWS_AS(ErrorBound::from_relative(0.0, 0, 1), ArgumentError);
        CHECK(ErrorBound::from_relative(0.01, -1, 3).abs == doctest::Approx(0.04));
    }

    TEST_CASE("pred_quantize hand trace") {
        auto q = pred_quantize(0.35, 0.0, 0.1);
        CHECK(q.index == 2);
        CHECK(q.reconstruction == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(std::fabs(0.35 - q.reconstruction) <= 0.1);
        auto z = pred_quantize(1.25, 1.25, 0.1);
        CHECK(z.index == 0);
        CHECK(z.reconstruction == 1.25);
        auto o = pred_quantize(1e6, 0.0, 1e-6);
        CHECK(o.outlier);
        CHECK(o.index == kOutlierSymbol);
        CHECK(o.reconstruction == 1e6);
    }

    TEST_CASE("lorenzo predictor") {
        const Dims3 d{5, 5, 5};
        std::vector<float> c(d.size(), 3.5f), lin(d.size());
        for (std::size_t k = 0; k < 5; ++k)
            for (std::size_t j = 0; j < 5; ++j)
                for (std::size_t i = 0; i < 5; ++i) lin[d.index(i, j, k)] = static_cast<float>(i + 2 * j + 3 * k);
        CHECK(lorenzo_predict(c, d, 0, 0, 0) == 0.0);
        CHECK(lorenzo_predict(c, d, 2, 3, 1) == 3.5);
        CHECK(lorenzo_predict(lin, d, 2, 3, 4) == 2 + 6 + 12);
        CHECK(lorenzo_predict(lin, d, 1, 1, 1) == 6);
    }

    TEST_CASE("transform step and DCT") {
        CHECK(xform_step(0.8) == 0.125);
        CHECK(xform_step(4.0) == 1.0);
        CHECK(xform_step(3.99) == 0.5);

        std::array<double, 64> x{}, c{}, y{};
        auto v = testing::uniform_values(64, 11);
        for (int i = 0; i < 64; ++i) x[i] = v[i];
        dct4_forward_3d(x, c);
        dct4_inverse_3d(c, y);
        double ex = 0, ec = 0;
        for (int i = 0; i < 64; ++i) {
            CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-12));
            ex += x[i] * x[i];
            ec += c[i] * c[i];
        }
        CHECK(ec == doctest::Approx(ex).epsilon(1e-12));  // orthonormal

        std::array<float, 64> constant;
        constant.fill(0.75f);
        auto q = xform_block_quantize(constant, 0.8);
        CHECK(q.step == 0.125);
        CHECK(q.indices[0] == 48);  // DC = 8c = 6, over step 0.125
        for (int i = 1; i < 64; ++i) CHECK(q.indices[i] == 0);
    }

    TEST_CASE("huffman hand trace") {
        // frequencies 0:5, 1:2, 2:1, 3:1 -> lengths 1,2,3,3; canonical codes 0, 10, 110, 111
        std::vector<std::int32_t> s{0, 1, 0, 2, 0, 3, 1, 0, 0};
        auto code = HuffmanCode::build(s);
        REQUIRE(code.entries().size() == 4);
        const std::uint8_t lengths[] = {1, 2, 3, 3};
        const std::uint64_t codes[] = {0b0, 0b10, 0b110, 0b111};
        for (int i = 0; i < 4; ++i) {
            CHECK(code.entries()[i].symbol == i);
            CHECK(code.entries()[i].length == lengths[i]);
            CHECK(code.entries()[i].code == codes[i]);
        }
        auto coded = entropy_encode(s);
        CHECK(coded.payload_bits == 5 * 1 + 2 * 2 + 2 * 3);
        CHECK(entropy_decode(coded.codebook, coded.payload, s.size()) == s);

        std::vector<std::int32_t> t{0, 0, 0, 1};
        auto c2 = HuffmanCode::build(t);
        CHECK(c2.length_of(0) == 1);
        CHECK(c2.length_of(1) == 1);
        CHECK(entropy_encode(t).payload_bits == 4);

        std::vector<std::int32_t> zeros(4096, 0);
        auto cz = entropy_encode(zeros);
        CHECK(cz.payload.size() == 512);
        CHECK(cz.payload_bits == 4096);
        CHECK(entropy_decode(cz.codebook, cz.payload, zeros.size()) == zeros);
        CHECK_THROWS_AS(entropy_encode(std::vector<std::int32_t>{}), ArgumentError);
    }

    TEST_CASE("huffman random round trip") {
        Rng rng(21);
        for (int trial = 0; trial < 100; ++trial) {
            const std::size_t n = 1 + rng.below(3000);
            const auto spread = static_cast<std::int64_t>(1 + rng.below(70000));
            std::vector<std::int32_t> s(n);
            for (auto& v : s) v = static_cast<std::int32_t>(static_cast<std::int64_t>(rng.below(2 * spread + 1)) - spread);
            auto c = entropy_encode(s);
            std::size_t pos = 0;
            auto code = HuffmanCode::deserialize(c.codebook, pos);
            CHECK(pos == c.codebook.size());
            CHECK(entropy_decode(c.codebook, c.payload, n) == s);
        }
    }

    TEST_CASE("varint and zigzag") {
        for (std::int64_t v : {0LL, 1LL, -1LL, 63LL, -64LL, 1LL << 40, -(1LL << 50)}) CHECK(unzigzag(zigzag(v)) == v);
        std::vector<std::uint8_t> buf;
        put_varint(buf, 300);
        CHECK(buf == std::vector<std::uint8_t>{0xAC, 0x02});
        std::size_t pos = 0;
        CHECK(get_varint(buf, pos) == 300);
    }

    TEST_CASE("constant fast path") {
        std::vector<float> c(4096, 2.5f);
        for (auto codec : kAllCodecs) {
            auto out = compress_roundtrip(codec, c, {16, 16, 16}, 1e-3);
            CHECK(out.compressed_bytes == 20);
            CHECK(out.max_abs_error == 0.0);
            CHECK(out.reconstruction == c);
            CHECK(out.eb.abs == 0.0);
        }
    }

    TEST_CASE("error bound on smooth and random blocks") {
        for (std::uint64_t seed = 1; seed <= 6; ++seed) {
            const auto b = smooth_block(seed);
            const auto [lo, hi] = std::minmax_element(b.values.begin(), b.values.end());
            for (auto codec : kAllCodecs)
                for (double eb : {1e-5, 1e-3, 1e-1}) {
                    auto out = compress_roundtrip(codec, b, eb);
                    const double bound = eb * (static_cast<double>(*hi) - *lo);
                    CHECK(max_err(b.values, out.reconstruction) <= bound);
                    CHECK(out.max_abs_error <= out.eb.abs);
                    CHECK(out.compressed_bytes >= stream::kHeaderBytes);
                }
        }
        const Dims3 odd{7, 5, 3};
        auto noise = testing::uniform_values(odd.size(), 4, -1e3, 1e3);
        for (auto codec : kAllCodecs) {
            auto out = compress_roundtrip(codec, noise, odd, 1e-4);
            CHECK(max_err(noise, out.reconstruction) <= out.eb.abs);
        }
    }

    TEST_CASE("stream format and determinism") {
        const auto b = smooth_block(3);
        for (auto codec : kAllCodecs) {
            auto s1 = compress(codec, b.values, b.dims, 1e-3);
            auto s2 = compress(codec, b.values, b.dims, 1e-3);
            CHECK(s1 == s2);
            CHECK(s1[0] == 'D');
            CHECK(s1[1] == 'Q');
            CHECK(s1[2] == static_cast<std::uint8_t>(codec));
            auto h = stream::read_header(s1);
            CHECK(h.dims == b.dims);
            CHECK(static_cast<double>(h.eb_abs) <= 1e-3);
            auto d = decompress(s1);
            CHECK(max_err(b.values, d.values) <= 1e-3);

            auto bad = s1;
            bad[0] = 'X';
            CHECK_THROWS_AS(decompress(bad), FormatError);
            auto cut = std::vector<std::uint8_t>(s1.begin(), s1.begin() + 10);
            CHECK_THROWS_AS(decompress(cut), IntegrityError);
        }
    }

    TEST_CASE("prediction codec size is monotone on noise-free data") {
        const auto b = smooth_block(9);
        std::size_t prev = SIZE_MAX;
        for (double eb : {1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2}) {
            const auto bytes = compress_roundtrip(CodecId::PredEb, b, eb).compressed_bytes;
            CHECK(bytes <= prev);
            prev = bytes;
        }
        CHECK(compress_roundtrip(CodecId::PredEb, b, 1e-4).compressed_bytes >=
              compress_roundtrip(CodecId::PredEb, b, 1e-2).compressed_bytes);
    }

    TEST_CASE("transform codec size is a stair step") {
        const auto b = smooth_block(12);
        const auto [lo, hi] = std::minmax_element(b.values.begin(), b.values.end());
        const double range = static_cast<double>(*hi) - *lo;
        // every eb_abs in [4 * 2^-9, 4 * 2^-8) shares q = 2^-9
        std::vector<std::size_t> sizes;
        for (double f : {1.0, 1.2, 1.5, 1.8, 1.99}) {
            const double eb_abs = 4.0 * std::ldexp(f, -9);
            sizes.push_back(compress_roundtrip(CodecId::XformEb, b, eb_abs / range).compressed_bytes);
        }
        for (auto s : sizes) CHECK(s == sizes.front());
        const auto finer = compress_roundtrip(CodecId::XformEb, b, 4.0 * std::ldexp(0.9, -9) / range).compressed_bytes;
        CHECK(finer > sizes.front());
    }

    TEST_CASE("subnormal range falls back to raw storage") {
        std::vector<float> v(64);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) * 1e-42f;
        for (auto codec : kAllCodecs) {
            auto out = compress_roundtrip(codec, v, {4, 4, 4}, 1e-3);
            CHECK(out.reconstruction == v);
        }
        std::vector<float> bad(8, 0.0f);
        bad[3] = NAN;
        CHECK_THROWS_AS(compress_roundtrip(CodecId::PredEb, bad, {2, 2, 2}, 1e-3), DataError);
        CHECK_THROWS_AS(compress_roundtrip(CodecId::PredEb, v, {4, 4, 4}, 0.0), ArgumentError);
    }
}
