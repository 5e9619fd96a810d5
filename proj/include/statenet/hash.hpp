#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>

#include "util.hpp"

namespace statenet {

using digest = std::array<std::uint8_t, 32>;

inline constexpr digest zero_digest{};

inline std::string to_hex(const digest& d)
{
    return to_hex(byte_view(d.data(), d.size()));
}

namespace detail {

// FIPS 180-4 SHA-256.
class sha256_ctx {
public:
    sha256_ctx() { reset(); }

    void reset()
    {
        state_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                  0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
        total_ = 0;
        fill_ = 0;
    }

    void update(byte_view data)
    {
        total_ += data.size();
        std::size_t off = 0;
        if (fill_ > 0) {
            std::size_t take = std::min<std::size_t>(64 - fill_, data.size());
            std::memcpy(buf_.data() + fill_, data.data(), take);
            fill_ += take;
            off += take;
            if (fill_ == 64) {
                compress(buf_.data());
                fill_ = 0;
            }
        }
        while (off + 64 <= data.size()) {
            compress(data.data() + off);
            off += 64;
        }
        if (off < data.size()) {
            std::memcpy(buf_.data(), data.data() + off, data.size() - off);
            fill_ = data.size() - off;
        }
    }

    digest finish()
    {
        std::uint64_t bits = total_ * 8;
        std::uint8_t pad = 0x80;
        update(byte_view(&pad, 1));
        static constexpr std::uint8_t zeros[64] = {};
        while (fill_ != 56) update(byte_view(zeros, fill_ < 56 ? 56 - fill_ : 64 - fill_ + 56));
        std::array<std::uint8_t, 8> len{};
        for (int i = 0; i < 8; ++i) len[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(bits >> (56 - 8 * i));
        update(byte_view(len.data(), 8));
        digest out;
        for (int i = 0; i < 8; ++i)
            for (int b = 0; b < 4; ++b)
                out[static_cast<std::size_t>(4 * i + b)] =
                    static_cast<std::uint8_t>(state_[static_cast<std::size_t>(i)] >> (24 - 8 * b));
        return out;
    }

private:
    static std::uint32_t rotr(std::uint32_t x, int n) { return std::rotr(x, n); }

    void compress(const std::uint8_t* p)
    {
        static constexpr std::uint32_t k[64] = {
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
            0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
            0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
            0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
            0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
            0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
            0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
            0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
            0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
            0xc67178f2};
        std::uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = std::uint32_t(p[4 * i]) << 24 | std::uint32_t(p[4 * i + 1]) << 16
                 | std::uint32_t(p[4 * i + 2]) << 8 | std::uint32_t(p[4 * i + 3]);
        for (int i = 16; i < 64; ++i) {
            std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        std::uint32_t a = state_[0], b = state_[1], c = state_[2], d = state_[3];
        std::uint32_t e = state_[4], f = state_[5], g = state_[6], h = state_[7];
        for (int i = 0; i < 64; ++i) {
            std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            std::uint32_t ch = (e & f) ^ (~e & g);
            std::uint32_t t1 = h + s1 + ch + k[i] + w[i];
            std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            std::uint32_t mj = (a & b) ^ (a & c) ^ (b & c);
            std::uint32_t t2 = s0 + mj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        state_[0] += a;
        state_[1] += b;
        state_[2] += c;
        state_[3] += d;
        state_[4] += e;
        state_[5] += f;
        state_[6] += g;
        state_[7] += h;
    }

    std::array<std::uint32_t, 8> state_;
    std::array<std::uint8_t, 64> buf_;
    std::uint64_t total_ = 0;
    std::size_t fill_ = 0;
};

inline std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

} // namespace detail

inline digest sha256(byte_view data)
{
    detail::sha256_ctx ctx;
    ctx.update(data);
    return ctx.finish();
}

// The production hash.  All soundness-sensitive code paths use this.
struct sha256_hasher {
    static constexpr const char* name = "sha256";
    static digest hash(byte_view data) { return sha256(data); }
};

// Seeded non-cryptographic mixer for fast tests and large sweeps where
// tamper resistance is irrelevant.  Never used in soundness tests.
struct fast_hasher {
    static constexpr const char* name = "fast64";
    static digest hash(byte_view data)
    {
        std::uint64_t lanes[4] = {0x243f6a8885a308d3ull, 0x13198a2e03707344ull,
                                  0xa4093822299f31d0ull, 0x082efa98ec4e6c89ull};
        std::size_t i = 0;
        for (; i + 8 <= data.size(); i += 8) {
            std::uint64_t v;
            std::memcpy(&v, data.data() + i, 8);
            for (int l = 0; l < 4; ++l)
                lanes[l] = detail::mix64(lanes[l] ^ detail::mix64(v + static_cast<std::uint64_t>(l)));
        }
        std::uint64_t tail = data.size();
        for (; i < data.size(); ++i) tail = tail << 8 | data[i];
        for (int l = 0; l < 4; ++l)
            lanes[l] = detail::mix64(lanes[l] ^ detail::mix64(tail + static_cast<std::uint64_t>(l) * 0x9e37ull));
        digest out;
        for (int l = 0; l < 4; ++l)
            for (int b = 0; b < 8; ++b)
                out[static_cast<std::size_t>(8 * l + b)] = static_cast<std::uint8_t>(lanes[l] >> (56 - 8 * b));
        return out;
    }
};

// Domain-separated trie hashing: 0x00 tags leaves, 0x01 inner nodes, and an
// empty subtree is the all-zero sentinel at every level.
template <class H>
struct trie_hash {
    static digest leaf(byte_view value)
    {
        bytes buf;
        buf.reserve(value.size() + 1);
        buf.push_back(0x00);
        buf.insert(buf.end(), value.begin(), value.end());
        return H::hash(buf);
    }

    static digest combine(const digest& left, const digest& right)
    {
        if (left == zero_digest && right == zero_digest) return zero_digest;
        std::array<std::uint8_t, 65> buf;
        buf[0] = 0x01;
        std::memcpy(buf.data() + 1, left.data(), 32);
        std::memcpy(buf.data() + 33, right.data(), 32);
        return H::hash(byte_view(buf.data(), buf.size()));
    }
};

} // namespace statenet
