#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace deepcq {

class BitWriter {
public:
    void put(std::uint64_t code, unsigned length);  // MSB of the code first
    std::size_t bit_count() const { return bits_; }
    std::vector<std::uint8_t> finish();              // zero-padded to a byte

private:
    std::vector<std::uint8_t> bytes_;
    std::uint64_t acc_ = 0;
    unsigned pending_ = 0;
    std::size_t bits_ = 0;
};

class BitReader {
public:
    explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
    unsigned bit();
    std::size_t bytes_consumed() const { return (pos_ + 7) / 8; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v);
std::uint64_t get_varint(std::span<const std::uint8_t> in, std::size_t& pos);
inline std::uint64_t zigzag(std::int64_t v) {
    return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}
inline std::int64_t unzigzag(std::uint64_t v) { return static_cast<std::int64_t>(v >> 1) ^ -static_cast<std::int64_t>(v & 1); }

/// Canonical Huffman code over the symbols observed in a stream. A
/// single-symbol alphabet gets a 1-bit code.
class HuffmanCode {
public:
    struct Entry {
        std::int32_t symbol;
        std::uint8_t length;
        std::uint64_t code;
    };

    static HuffmanCode build(std::span<const std::int32_t> symbols);

    /// varint(n) | zigzag-varint(first symbol) | varint deltas | one length byte per symbol
    std::vector<std::uint8_t> serialize() const;
    static HuffmanCode deserialize(std::span<const std::uint8_t> bytes, std::size_t& pos);

    const std::vector<Entry>& entries() const { return entries_; }  // ascending symbol
    std::uint8_t length_of(std::int32_t symbol) const;

    void encode(BitWriter& w, std::int32_t symbol) const;
    std::int32_t decode(BitReader& r) const;

private:
    void assign_codes();

    std::vector<Entry> entries_;
    // Canonical decoding tables, indexed by code length.
    std::vector<std::uint64_t> first_code_;
    std::vector<std::uint32_t> first_index_;
    std::vector<std::uint32_t> count_;
    std::vector<std::int32_t> canonical_order_;
    unsigned max_length_ = 0;
};

struct EntropyCoded {
    std::vector<std::uint8_t> codebook;
    std::vector<std::uint8_t> payload;
    std::size_t payload_bits = 0;
};

EntropyCoded entropy_encode(std::span<const std::int32_t> symbols);
std::vector<std::int32_t> entropy_decode(std::span<const std::uint8_t> codebook, std::span<const std::uint8_t> payload,
                                         std::size_t count);

}  // namespace deepcq
