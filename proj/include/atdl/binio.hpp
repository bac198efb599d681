#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string_view>

#include "atdl/errors.hpp"

// Little-endian primitives for the binary artifact formats. All multi-byte
// fields are written least-significant byte first regardless of host order.

namespace atdl::binio {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw io_error("write failed");
}

inline void read_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw format_error("unexpected end of file");
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(os, b, 8);
}

inline std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    read_bytes(is, b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    write_bytes(os, b, 4);
}

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    read_bytes(is, b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void write_f64(std::ostream& os, double d) {
    write_u64(os, std::bit_cast<std::uint64_t>(d));
}

inline double read_f64(std::istream& is) {
    return std::bit_cast<double>(read_u64(is));
}

// Bulk f64 transfer. On little-endian hosts this is a single memcpy-sized
// write; the element-wise fallback keeps the format portable.
inline void write_f64_array(std::ostream& os, std::span<const double> xs) {
    if constexpr (std::endian::native == std::endian::little) {
        write_bytes(os, xs.data(), xs.size_bytes());
    } else {
        for (double d : xs) write_f64(os, d);
    }
}

inline void read_f64_array(std::istream& is, std::span<double> xs) {
    if constexpr (std::endian::native == std::endian::little) {
        read_bytes(is, xs.data(), xs.size_bytes());
    } else {
        for (double& d : xs) d = read_f64(is);
    }
}

inline void write_magic(std::ostream& os, std::string_view magic) {
    write_bytes(os, magic.data(), magic.size());
}

inline void expect_magic(std::istream& is, std::string_view magic) {
    char buf[32];
    if (magic.size() > sizeof(buf)) throw value_error("magic too long");
    read_bytes(is, buf, magic.size());
    if (std::string_view(buf, magic.size()) != magic)
        throw format_error("bad magic, expected '" + std::string(magic) + "'");
}

// FNV-1a, used to fingerprint the effective run configuration so artifacts
// can be traced back to the settings that produced them.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

} // namespace atdl::binio
