#include "deepcq/huffman.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <string>

#include "deepcq/error.hpp"

namespace deepcq {

void BitWriter::put(std::uint64_t code, unsigned length) {
    for (unsigned b = length; b-- > 0;) {
        acc_ = (acc_ << 1) | ((code >> b) & 1u);
        if (++pending_ == 8) {
            bytes_.push_back(static_cast<std::uint8_t>(acc_));
            acc_ = 0;
            pending_ = 0;
        }
    }
    bits_ += length;
}

std::vector<std::uint8_t> BitWriter::finish() {
    if (pending_ > 0) {
        bytes_.push_back(static_cast<std::uint8_t>(acc_ << (8 - pending_)));
        acc_ = 0;
        pending_ = 0;
    }
    return std::move(bytes_);
}

unsigned BitReader::bit() {
    if (pos_ >= 8 * bytes_.size()) throw IntegrityError("entropy payload exhausted");
    const unsigned b = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
    ++pos_;
    return b;
}

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
    while (v >= 0x80) {
        out.push_back(static_cast<std::uint8_t>(v | 0x80));
        v >>= 7;
    }
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint64_t get_varint(std::span<const std::uint8_t> in, std::size_t& pos) {
    std::uint64_t v = 0;
    for (unsigned shift = 0; shift < 64; shift += 7) {
        if (pos >= in.size()) throw IntegrityError("truncated varint");
        const std::uint8_t b = in[pos++];
        v |= static_cast<std::uint64_t>(b & 0x7F) << shift;
        if (!(b & 0x80)) return v;
    }
    throw IntegrityError("varint too long");
}

HuffmanCode HuffmanCode::build(std::span<const std::int32_t> symbols) {
    if (symbols.empty()) throw ArgumentError("entropy coder needs a non-empty symbol stream");
    std::map<std::int32_t, std::uint64_t> freq;
    for (auto s : symbols) ++freq[s];

    HuffmanCode code;
    code.entries_.reserve(freq.size());
    for (const auto& [s, f] : freq) code.entries_.push_back({s, 0, 0});

    if (freq.size() == 1) {
        code.entries_[0].length = 1;
        code.assign_codes();
        return code;
    }

    // Node ids: leaves 0..n-1 (ascending symbol), internal nodes after. Ties
    // break on node id, which makes the tree deterministic.
    const std::size_t n = freq.size();
    std::vector<std::size_t> parent(2 * n - 1, 0);
    using Item = std::pair<std::uint64_t, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    std::size_t leaf = 0;
    for (const auto& [s, f] : freq) heap.emplace(f, leaf++);
    std::size_t next = n;
    while (heap.size() > 1) {
        const auto a = heap.top();
        heap.pop();
        const auto b = heap.top();
        heap.pop();
        parent[a.second] = next;
        parent[b.second] = next;
        heap.emplace(a.first + b.first, next++);
    }
    const std::size_t root = next - 1;
    for (std::size_t i = 0; i < n; ++i) {
        unsigned depth = 0;
        for (std::size_t v = i; v != root; v = parent[v]) ++depth;
        if (depth > 63) throw DataError("Huffman code length exceeds 63 bits");
        code.entries_[i].length = static_cast<std::uint8_t>(depth);
    }
    code.assign_codes();
    return code;
}

void HuffmanCode::assign_codes() {
    max_length_ = 0;
    for (const auto& e : entries_) max_length_ = std::max<unsigned>(max_length_, e.length);
    std::vector<std::size_t> order(entries_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return entries_[a].length < entries_[b].length; });

    count_.assign(max_length_ + 1, 0);
    first_code_.assign(max_length_ + 1, 0);
    first_index_.assign(max_length_ + 1, 0);
    canonical_order_.clear();
    canonical_order_.reserve(order.size());

    std::uint64_t c = 0;
    unsigned prev_len = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        auto& e = entries_[order[r]];
        if (e.length == 0 || e.length > 63) throw IntegrityError("invalid Huffman code length");
        if (r > 0) ++c;
        c <<= (e.length - prev_len);
        prev_len = e.length;
        if (count_[e.length] == 0) {
            first_code_[e.length] = c;
            first_index_[e.length] = static_cast<std::uint32_t>(r);
        }
        ++count_[e.length];
        e.code = c;
        canonical_order_.push_back(e.symbol);
        if ((c >> e.length) != 0) throw IntegrityError("Huffman code lengths oversubscribe the code space");
    }
}

std::uint8_t HuffmanCode::length_of(std::int32_t symbol) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), symbol,
                               [](const Entry& e, std::int32_t s) { return e.symbol < s; });
    if (it == entries_.end() || it->symbol != symbol) return 0;
    return it->length;
}

std::vector<std::uint8_t> HuffmanCode::serialize() const {
    std::vector<std::uint8_t> out;
    put_varint(out, entries_.size());
    std::int64_t prev = 0;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (i == 0)
            put_varint(out, zigzag(entries_[0].symbol));
        else
            put_varint(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(entries_[i].symbol) - prev));
        prev = entries_[i].symbol;
    }
    for (const auto& e : entries_) out.push_back(e.length);
    return out;
}

HuffmanCode HuffmanCode::deserialize(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    const auto n = get_varint(bytes, pos);
    if (n == 0 || n > (1u << 20)) throw IntegrityError("implausible Huffman alphabet size " + std::to_string(n));
    HuffmanCode code;
    code.entries_.resize(n);
    std::int64_t prev = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t s = (i == 0) ? unzigzag(get_varint(bytes, pos))
                                        : prev + static_cast<std::int64_t>(get_varint(bytes, pos));
        if (i > 0 && s <= prev) throw IntegrityError("Huffman symbols not strictly increasing");
        code.entries_[i].symbol = static_cast<std::int32_t>(s);
        prev = s;
    }
    if (pos + n > bytes.size()) throw IntegrityError("truncated Huffman code lengths");
    for (std::size_t i = 0; i < n; ++i) code.entries_[i].length = bytes[pos++];
    code.assign_codes();
    return code;
}

void HuffmanCode::encode(BitWriter& w, std::int32_t symbol) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), symbol,
                               [](const Entry& e, std::int32_t s) { return e.symbol < s; });
    if (it == entries_.end() || it->symbol != symbol)
        throw ArgumentError("symbol " + std::to_string(symbol) + " not in Huffman alphabet");
    w.put(it->code, it->length);
}

std::int32_t HuffmanCode::decode(BitReader& r) const {
    std::uint64_t c = 0;
    for (unsigned len = 1; len <= max_length_; ++len) {
        c = (c << 1) | r.bit();
        if (count_[len] > 0 && c >= first_code_[len] && c - first_code_[len] < count_[len])
            return canonical_order_[first_index_[len] + (c - first_code_[len])];
    }
    throw IntegrityError("invalid Huffman code in payload");
}

EntropyCoded entropy_encode(std::span<const std::int32_t> symbols) {
    const auto code = HuffmanCode::build(symbols);
    // Encode with a dense lookup when the alphabet range is small.
    BitWriter w;
    const auto& es = code.entries();
    const std::int64_t lo = es.front().symbol, hi = es.back().symbol;
    if (hi - lo < (1 << 20)) {
        std::vector<std::pair<std::uint64_t, std::uint8_t>> table(static_cast<std::size_t>(hi - lo + 1), {0, 0});
        for (const auto& e : es) table[static_cast<std::size_t>(e.symbol - lo)] = {e.code, e.length};
        for (auto s : symbols) {
            const auto& [c, l] = table[static_cast<std::size_t>(s - lo)];
            w.put(c, l);
        }
    } else {
        for (auto s : symbols) code.encode(w, s);
    }
    EntropyCoded out;
    out.codebook = code.serialize();
    out.payload_bits = w.bit_count();
    out.payload = w.finish();
    return out;
}

std::vector<std::int32_t> entropy_decode(std::span<const std::uint8_t> codebook, std::span<const std::uint8_t> payload,
                                         std::size_t count) {
    std::size_t pos = 0;
    const auto code = HuffmanCode::deserialize(codebook, pos);
    BitReader r(payload);
    std::vector<std::int32_t> out(count);
    for (auto& s : out) s = code.decode(r);
    return out;
}

}  // namespace deepcq
