#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "error.hpp"

namespace cmlrec::binary {

template <typename UInt>
void write_le(std::ostream& out, UInt value) {
    std::array<char, sizeof(UInt)> bytes;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    }
    out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt read_le(std::istream& in) {
    std::array<unsigned char, sizeof(UInt)> bytes;
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
        throw Error(ErrorKind::ParseError, "truncated binary file");
    }
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        value |= static_cast<UInt>(bytes[i]) << (8 * i);
    }
    return value;
}

inline void write_f64(std::ostream& out, double v) { write_le(out, std::bit_cast<std::uint64_t>(v)); }
inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

inline void write_magic(std::ostream& out, const std::array<char, 8>& magic) { out.write(magic.data(), 8); }

inline void expect_magic(std::istream& in, const std::array<char, 8>& magic, const std::string& what) {
    std::array<char, 8> got{};
    if (!in.read(got.data(), 8) || got != magic) {
        throw Error(ErrorKind::ParseError, "not a " + what + " file (bad magic)");
    }
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
    auto n = read_le<std::uint32_t>(in);
    std::string s(n, '\0');
    if (n && !in.read(s.data(), n)) {
        throw Error(ErrorKind::ParseError, "truncated string in binary file");
    }
    return s;
}

}
