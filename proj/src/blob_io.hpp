#pragma once

// Little-endian float32 / byte blobs shared by the dataset and checkpoint
// formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "cfrep/errors.hpp"

namespace cfrep::detail {

inline std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

inline void put_f32le(std::ostream& os, std::span<const float> values) {
    std::vector<char> buf(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint32_t u = to_le(std::bit_cast<std::uint32_t>(values[i]));
        std::memcpy(buf.data() + 4 * i, &u, 4);
    }
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline void get_f32le(std::istream& is, std::span<float> out, const std::string& what) {
    std::vector<char> buf(out.size() * 4);
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(is.gcount()) != buf.size()) {
        throw DataError(what + ": truncated (expected " + std::to_string(buf.size()) + " bytes, got " +
                        std::to_string(is.gcount()) + ")");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t u;
        std::memcpy(&u, buf.data() + 4 * i, 4);
        out[i] = std::bit_cast<float>(to_le(u));
    }
}

inline std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    return os;
}

inline std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    return is;
}

/// Reads a whole blob and checks that it holds exactly `count` elements.
inline std::vector<float> read_f32_file(const std::filesystem::path& path, std::size_t count) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(path, ec);
    if (ec) throw DataError("cannot stat " + path.string());
    if (bytes != count * 4) {
        throw DataError(path.filename().string() + ": length disagrees with manifest (expected " +
                        std::to_string(count * 4) + " bytes, found " + std::to_string(bytes) + ")");
    }
    auto is = open_in(path);
    std::vector<float> out(count);
    get_f32le(is, out, path.filename().string());
    return out;
}

inline void write_f32_file(const std::filesystem::path& path, std::span<const float> values) {
    auto os = open_out(path);
    put_f32le(os, values);
    if (!os) throw DataError("write failed: " + path.string());
}

}  // namespace cfrep::detail
