#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "lloca/errors.hpp"

namespace lloca::io {

template <class T>
void write_le(std::ostream& out, T value)
{
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.write(buf, sizeof(T));
}

template <class T>
T read_le(std::istream& in)
{
    char buf[sizeof(T)];
    in.read(buf, sizeof(T));
    if (!in) throw FormatError("unexpected end of file");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

} // namespace lloca::io
