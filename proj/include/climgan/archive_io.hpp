// SPDX-License-Identifier: Apache-2.0
//
// CGB1 archive files and the normalization stats sidecar.
//
//   "CLIMGRB1" | u32 version=1 | u32 H | u32 W | u32 V | u64 D
//   | V x 16-byte space-padded ASCII names | D*V*H*W f32
//
// All integers and floats little-endian; data in [day][var][row][col] order.

#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "climgan/data.hpp"

namespace climgan {

inline constexpr char kArchiveMagic[8] = {'C', 'L', 'I', 'M', 'G', 'R', 'B', '1'};
inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr std::size_t kNameWidth = 16;

namespace io {

template <class U>
void put_le(std::ostream& os, U value) {
    static_assert(std::is_unsigned_v<U>);
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((value >> (8 * i)) & 0xff);
    os.write(buf, sizeof(U));
}

template <class U>
U get_le(std::istream& is, const char* what) {
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw FormatError(std::string("truncated file reading ") + what);
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(buf[i]) << (8 * i);
    return value;
}

inline void put_f32(std::ostream& os, const float* data, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
    } else {
        for (std::size_t i = 0; i < n; ++i) put_le(os, std::bit_cast<std::uint32_t>(data[i]));
    }
}

inline void get_f32(std::istream& is, float* data, std::size_t n, const char* what) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float))))
            throw FormatError(std::string("truncated file reading ") + what);
    } else {
        for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(get_le<std::uint32_t>(is, what));
    }
}

inline void put_string(std::ostream& os, const std::string& s) {
    put_le<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, const char* what, std::uint64_t limit = 1ull << 30) {
    const auto n = get_le<std::uint64_t>(is, what);
    if (n > limit) throw FormatError(std::string("implausible length reading ") + what);
    std::string s(n, '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError(std::string("truncated file reading ") + what);
    return s;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    return os;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    return is;
}

}  // namespace io

inline void write_archive(std::ostream& os, const ClimateArchive& a) {
    if (a.values.size() != a.days * a.day_size()) throw std::invalid_argument("archive: value count does not match extents");
    os.write(kArchiveMagic, sizeof(kArchiveMagic));
    io::put_le<std::uint32_t>(os, kArchiveVersion);
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.height));
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.width));
    io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.variables()));
    io::put_le<std::uint64_t>(os, a.days);
    for (const auto& name : a.names) {
        if (name.size() > kNameWidth) throw std::invalid_argument("archive: variable name '" + name + "' exceeds 16 bytes");
        std::string padded = name;
        padded.resize(kNameWidth, ' ');
        os.write(padded.data(), kNameWidth);
    }
    io::put_f32(os, a.values.data(), a.values.size());
    if (!os) throw std::runtime_error("archive: write failed");
}

inline ClimateArchive read_archive(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kArchiveMagic, 8) != 0) throw FormatError("not a CGB1 archive (bad magic)");
    const auto version = io::get_le<std::uint32_t>(is, "version");
    if (version != kArchiveVersion) throw FormatError("unsupported CGB1 version " + std::to_string(version));
    ClimateArchive a;
    a.height = io::get_le<std::uint32_t>(is, "H");
    a.width = io::get_le<std::uint32_t>(is, "W");
    const auto vars = io::get_le<std::uint32_t>(is, "V");
    a.days = io::get_le<std::uint64_t>(is, "D");
    if (a.height == 0 || a.width == 0 || vars == 0 || a.days == 0) throw FormatError("CGB1 archive has a zero extent");
    if (static_cast<double>(a.days) * vars * a.height * a.width > static_cast<double>(1ull << 34))
        throw FormatError("CGB1 archive extents are implausibly large");
    for (std::uint32_t v = 0; v < vars; ++v) {
        char buf[kNameWidth];
        if (!is.read(buf, kNameWidth)) throw FormatError("truncated file reading variable names");
        std::string name(buf, kNameWidth);
        name.erase(name.find_last_not_of(' ') + 1);
        a.names.push_back(name);
    }
    a.values.resize(a.days * a.day_size());
    io::get_f32(is, a.values.data(), a.values.size(), "archive data");
    return a;
}

inline void save_archive(const std::string& path, const ClimateArchive& a) {
    auto os = io::open_out(path);
    write_archive(os, a);
}

inline ClimateArchive load_archive(const std::string& path) {
    auto is = io::open_in(path);
    try {
        return read_archive(is);
    } catch (const FormatError& e) {
        throw FormatError(path + ": " + e.what());
    }
}

inline std::string stats_path_for(const std::string& archive_path) { return archive_path + ".stats.json"; }

inline void save_stats(const std::string& path, const NormalizationStats& s) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << json(s).dump(2) << '\n';
}

inline NormalizationStats load_stats(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    try {
        return json::parse(is).get<NormalizationStats>();
    } catch (const json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
}

}  // namespace climgan
