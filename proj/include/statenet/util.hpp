#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace statenet {

using bytes = std::vector<std::uint8_t>;
using byte_view = std::span<const std::uint8_t>;

inline char hex_digit(unsigned v)
{
    return v < 10 ? static_cast<char>('0' + v) : static_cast<char>('a' + v - 10);
}

inline unsigned hex_value(char c)
{
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw parse_error("invalid hex digit '" + std::string(1, c) + "'");
}

inline std::string to_hex(byte_view data)
{
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data) {
        out.push_back(hex_digit(b >> 4));
        out.push_back(hex_digit(b & 0xf));
    }
    return out;
}

inline bytes from_hex(std::string_view hex)
{
    if (hex.size() % 2 != 0) throw parse_error("odd-length hex string");
    bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>(hex_value(hex[2 * i]) << 4 | hex_value(hex[2 * i + 1]));
    return out;
}

inline void put_u16_be(bytes& out, std::uint16_t v)
{
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u64_be(bytes& out, std::uint64_t v)
{
    for (int i = 7; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint64_t get_u64_be(byte_view in, std::size_t at)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | in[at + static_cast<std::size_t>(i)];
    return v;
}

// Integer ceil division.
constexpr std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b)
{
    return (a + b - 1) / b;
}

} // namespace statenet
