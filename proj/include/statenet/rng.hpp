#pragma once

#include <cstdint>
#include <unordered_set>
#include <vector>

#include "address.hpp"
#include "hash.hpp"

namespace statenet {

// xoshiro256** seeded through splitmix64.  Self-contained so that streams
// are reproducible byte-for-byte across platforms and standard libraries.
class rng {
public:
    explicit rng(std::uint64_t seed)
    {
        std::uint64_t x = seed;
        for (auto& s : s_) s = detail::mix64(x++);
    }

    std::uint64_t next()
    {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, n); n > 0.  Rejection sampling keeps it unbiased.
    std::uint64_t bounded(std::uint64_t n)
    {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [lo, hi] inclusive.
    std::int64_t range(std::int64_t lo, std::int64_t hi)
    {
        return lo + static_cast<std::int64_t>(bounded(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    address random_address(int width)
    {
        address a(width);
        for (int i = 0; i < width; i += 64) {
            std::uint64_t v = next();
            for (int b = 0; b < 64 && i + b < width; ++b)
                a.set_bit(i + b, (v >> (63 - b)) & 1);
        }
        return a;
    }

    // Derives an independent child stream; children with distinct tags never
    // correlate with the parent or each other.
    rng child(std::uint64_t tag)
    {
        rng c(0);
        for (int i = 0; i < 4; ++i)
            c.s_[i] = detail::mix64(s_[static_cast<std::size_t>(i)] ^ detail::mix64(tag + static_cast<std::uint64_t>(i)));
        return c;
    }

    template <class T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[bounded(i)]);
    }

    // k distinct indices from [0, n), in selection order.
    std::vector<std::uint64_t> sample_indices(std::uint64_t n, std::size_t k)
    {
        std::vector<std::uint64_t> out;
        if (k >= n) {
            out.resize(n);
            for (std::uint64_t i = 0; i < n; ++i) out[i] = i;
            shuffle(out);
            return out;
        }
        out.reserve(k);
        std::unordered_set<std::uint64_t> seen;
        while (out.size() < k) {
            std::uint64_t v = bounded(n);
            if (seen.insert(v).second) out.push_back(v);
        }
        return out;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4];
};

} // namespace statenet
