#pragma once

// Little-endian primitives shared by the HSLX1 / HSEM1 / HSCK1 formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "hopsearch/error.hpp"

namespace hopsearch::io {

template <typename UInt>
void write_uint(std::ostream& out, UInt value) {
    char bytes[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
    }
    out.write(bytes, sizeof(UInt));
}

inline void write_f32(std::ostream& out, float value) {
    write_uint(out, std::bit_cast<std::uint32_t>(value));
}

inline void write_f64(std::ostream& out, double value) {
    write_uint(out, std::bit_cast<std::uint64_t>(value));
}

inline void write_bytes(std::ostream& out, std::string_view bytes) {
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Reader that turns short reads into Error("truncated payload ...").
class Reader {
public:
    Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

    template <typename UInt>
    UInt read_uint() {
        unsigned char bytes[sizeof(UInt)];
        read_raw(reinterpret_cast<char*>(bytes), sizeof(UInt));
        UInt value = 0;
        for (std::size_t i = 0; i < sizeof(UInt); ++i) {
            value |= static_cast<UInt>(bytes[i]) << (8 * i);
        }
        return value;
    }

    float read_f32() { return std::bit_cast<float>(read_uint<std::uint32_t>()); }
    double read_f64() { return std::bit_cast<double>(read_uint<std::uint64_t>()); }

    std::string read_string(std::size_t length) {
        std::string s(length, '\0');
        read_raw(s.data(), length);
        return s;
    }

    void read_raw(char* dst, std::size_t n) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw Error("truncated payload in " + what_);
        }
    }

    /// True when the stream has no bytes left.
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

    void expect_magic(std::string_view magic) {
        std::string got(magic.size(), '\0');
        in_.read(got.data(), static_cast<std::streamsize>(magic.size()));
        if (static_cast<std::size_t>(in_.gcount()) != magic.size() || got != magic) {
            throw Error("bad magic in " + what_ + " (expected " + std::string(magic) + ")");
        }
    }

private:
    std::istream& in_;
    std::string what_;
};

} // namespace hopsearch::io
