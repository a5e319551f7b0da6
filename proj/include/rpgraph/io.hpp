#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "rpgraph/common.hpp"

namespace rpgraph {

/// Little-endian binary writer. Integers and IEEE floats are serialized
/// LSB first regardless of host order.
class BinaryWriter {
public:
    explicit BinaryWriter(const std::filesystem::path& path)
        : path_(path.string()), out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for writing: " + path_);
    }

    void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), n); }

    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u16(std::uint16_t v) { uint_le(v, 2); }
    void u32(std::uint32_t v) { uint_le(v, 4); }
    void u64(std::uint64_t v) { uint_le(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void f32_array(const float* p, std::size_t n) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(p, n * sizeof(float));
        } else {
            for (std::size_t i = 0; i < n; ++i) f32(p[i]);
        }
    }

    void str(const std::string& s) {
        u16(static_cast<std::uint16_t>(s.size()));
        bytes(s.data(), s.size());
    }

    void close() {
        out_.flush();
        if (!out_) throw IoError("write failed: " + path_);
        out_.close();
    }

private:
    void uint_le(std::uint64_t v, int width) {
        std::uint8_t b[8];
        for (int i = 0; i < width; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
        bytes(b, width);
    }

    std::string path_;
    std::ofstream out_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::filesystem::path& path)
        : path_(path.string()), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open for reading: " + path_);
    }

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), n);
        if (static_cast<std::size_t>(in_.gcount()) != n)
            throw IoError("truncated file: " + path_);
    }

    std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
    std::uint16_t u16() { return static_cast<std::uint16_t>(uint_le(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(uint_le(4)); }
    std::uint64_t u64() { return uint_le(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }

    void f32_array(float* p, std::size_t n) {
        if constexpr (std::endian::native == std::endian::little) {
            bytes(p, n * sizeof(float));
        } else {
            for (std::size_t i = 0; i < n; ++i) p[i] = f32();
        }
    }

    std::string str() {
        const std::size_t n = u16();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

    bool at_eof() { return in_.peek() == std::ifstream::traits_type::eof(); }

private:
    std::uint64_t uint_le(int width) {
        std::uint8_t b[8];
        bytes(b, width);
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }

    std::string path_;
    std::ifstream in_;
};

/// Write through a temp name in the target directory, then rename into
/// place, so readers never observe a partially written artifact.
inline void atomic_write(const std::filesystem::path& path,
                         const std::function<void(const std::filesystem::path&)>& writer) {
    auto tmp = path;
    tmp += ".tmp";
    writer(tmp);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

}  // namespace rpgraph
