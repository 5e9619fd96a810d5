#pragma once

#include <array>
#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>

#include "errors.hpp"
#include "util.hpp"

namespace statenet {

// Fixed-width bit string shared by node ids, account addresses and slot
// keys.  Bits are numbered 0..width-1 from the most significant end and the
// total order is the unsigned big-endian integer interpretation.
class address {
public:
    static constexpr int max_width = 256;

    address() = default;

    explicit address(int width) : width_(check_width(width)) {}

    int width() const { return width_; }

    bool bit(int i) const { return (words_[word_of(i)] >> shift_of(i)) & 1; }

    void set_bit(int i, bool v)
    {
        const std::uint64_t mask = std::uint64_t(1) << shift_of(i);
        if (v)
            words_[word_of(i)] |= mask;
        else
            words_[word_of(i)] &= ~mask;
    }

    // Parses a literal bit string such as "0101"; width = number of bits.
    static address from_bits(std::string_view bits)
    {
        address a(static_cast<int>(bits.size()));
        for (std::size_t i = 0; i < bits.size(); ++i) {
            if (bits[i] == '1')
                a.set_bit(static_cast<int>(i), true);
            else if (bits[i] != '0')
                throw parse_error("invalid bit character in address literal");
        }
        return a;
    }

    // Value placed in the low `width` bits, i.e. from_u64(4, 0b0011) == "0011".
    static address from_u64(int width, std::uint64_t value)
    {
        address a(width);
        if (width < 64 && width >= 0 && (value >> width) != 0)
            throw schema_error("value does not fit in address width");
        for (int i = 0; i < width && i < 64; ++i)
            a.set_bit(width - 1 - i, (value >> i) & 1);
        return a;
    }

    // Hex string of ceil(width/4) nibbles, big-endian.
    static address from_hex(int width, std::string_view hex)
    {
        address a(width);
        const int nibbles = (width + 3) / 4;
        if (static_cast<int>(hex.size()) != nibbles)
            throw schema_error("hex literal length does not match address width");
        for (int n = 0; n < nibbles; ++n) {
            unsigned v = hex_value(hex[static_cast<std::size_t>(n)]);
            for (int b = 0; b < 4; ++b) {
                int i = n * 4 + b;
                bool set = (v >> (3 - b)) & 1;
                if (i >= width) {
                    if (set) throw schema_error("address bits beyond declared width");
                    continue;
                }
                a.set_bit(i, set);
            }
        }
        return a;
    }

    std::uint64_t to_u64() const
    {
        if (width_ > 64) throw width_error("address wider than 64 bits");
        std::uint64_t v = 0;
        for (int i = 0; i < width_; ++i) v = v << 1 | (bit(i) ? 1u : 0u);
        return v;
    }

    std::string to_bits() const
    {
        std::string s(static_cast<std::size_t>(width_), '0');
        for (int i = 0; i < width_; ++i)
            if (bit(i)) s[static_cast<std::size_t>(i)] = '1';
        return s;
    }

    std::string to_hex() const
    {
        const int nibbles = (width_ + 3) / 4;
        std::string s;
        s.reserve(static_cast<std::size_t>(nibbles));
        for (int n = 0; n < nibbles; ++n) {
            unsigned v = 0;
            for (int b = 0; b < 4; ++b) {
                int i = n * 4 + b;
                v = v << 1 | ((i < width_ && bit(i)) ? 1u : 0u);
            }
            s.push_back(hex_digit(v));
        }
        return s;
    }

    // Big-endian bytes, ceil(width/8) long.
    bytes to_bytes() const
    {
        bytes out(static_cast<std::size_t>((width_ + 7) / 8));
        for (int i = 0; i < width_; ++i)
            if (bit(i)) out[static_cast<std::size_t>(i / 8)] |= std::uint8_t(0x80u >> (i % 8));
        return out;
    }

    // Copy with all bits at positions >= len cleared.
    address truncated(int len) const
    {
        address a(width_);
        for (int w = 0; w < 4; ++w) a.words_[w] = words_[w];
        a.clear_from(len);
        return a;
    }

    address with_bit(int i, bool v) const
    {
        address a = *this;
        a.set_bit(i, v);
        return a;
    }

    friend address operator^(const address& a, const address& b)
    {
        check_same_width(a, b);
        address r(a.width_);
        for (int w = 0; w < 4; ++w) r.words_[w] = a.words_[w] ^ b.words_[w];
        return r;
    }

    friend bool operator==(const address& a, const address& b)
    {
        return a.width_ == b.width_ && a.words_ == b.words_;
    }

    friend std::strong_ordering operator<=>(const address& a, const address& b)
    {
        if (auto c = a.width_ <=> b.width_; c != 0) return c;
        for (int w = 0; w < 4; ++w)
            if (auto c = a.words_[w] <=> b.words_[w]; c != 0) return c;
        return std::strong_ordering::equal;
    }

    bool is_zero() const
    {
        return words_[0] == 0 && words_[1] == 0 && words_[2] == 0 && words_[3] == 0;
    }

    const std::array<std::uint64_t, 4>& words() const { return words_; }

    static void check_same_width(const address& a, const address& b)
    {
        if (a.width_ != b.width_)
            throw width_error("address width mismatch: " + std::to_string(a.width_) + " vs "
                              + std::to_string(b.width_));
    }

private:
    static int check_width(int w)
    {
        if (w < 0 || w > max_width) throw width_error("address width out of range");
        return w;
    }

    static int word_of(int i) { return i >> 6; }
    static int shift_of(int i) { return 63 - (i & 63); }

    void clear_from(int len)
    {
        for (int w = 0; w < 4; ++w) {
            int lo = w * 64;
            if (len <= lo)
                words_[w] = 0;
            else if (len < lo + 64)
                words_[w] &= ~std::uint64_t(0) << (64 - (len - lo));
        }
    }

    std::int32_t width_ = 0;
    std::array<std::uint64_t, 4> words_{};
};

// Number of leading bits on which a and b agree, in [0, width].
inline int common_prefix_len(const address& a, const address& b)
{
    address::check_same_width(a, b);
    const auto& wa = a.words();
    const auto& wb = b.words();
    int n = 0;
    for (int w = 0; w < 4; ++w) {
        std::uint64_t x = wa[static_cast<std::size_t>(w)] ^ wb[static_cast<std::size_t>(w)];
        if (x == 0) {
            n += 64;
            continue;
        }
        n += std::countl_zero(x);
        break;
    }
    return n > a.width() ? a.width() : n;
}

inline address xor_distance(const address& a, const address& b)
{
    return a ^ b;
}

// True iff the first `len` bits of base and key agree.
inline bool prefix_match(const address& base, int len, const address& key)
{
    return common_prefix_len(base, key) >= len;
}

struct node_identity {
    address id;
    int prefix_len = 0;     // bits of an account key that must match id
    std::uint32_t endpoint = 0;

    friend bool operator==(const node_identity&, const node_identity&) = default;
};

// Storage rule: a node keeps an account iff the account key shares at least
// prefix_len leading bits with the node id.  prefix_len 0 stores everything.
inline bool covers(const node_identity& node, const address& key)
{
    return prefix_match(node.id, node.prefix_len, key);
}

} // namespace statenet

template <>
struct std::hash<statenet::address> {
    std::size_t operator()(const statenet::address& a) const noexcept
    {
        // FNV-1a over the words plus the width.
        std::uint64_t h = 1469598103934665603ull;
        auto mix = [&](std::uint64_t v) {
            h ^= v;
            h *= 1099511628211ull;
        };
        for (auto w : a.words()) mix(w);
        mix(static_cast<std::uint64_t>(a.width()));
        return static_cast<std::size_t>(h);
    }
};
