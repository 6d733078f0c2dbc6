#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "findnet/tensor.hpp"

namespace findnet {
namespace io {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// FNT1 binary tensor records
// ---------------------------------------------------------------------------
// Layout: 4-byte magic "FNT1", u8 rank, rank x u32 little-endian extents,
// then float32 little-endian payload in row-major order. Values are
// converted from the internal double precision on write.

namespace detail {

inline void put_u32le(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32le(std::ostream& os, float v) {
    uint32_t u;
    std::memcpy(&u, &v, 4);
    put_u32le(os, u);
}

inline uint32_t get_u32le(std::istream& is, int64_t& offset, const std::string& what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4)
        throw DataError("FNT1: truncated " + what + " at byte offset " + std::to_string(offset));
    offset += 4;
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void write_fnt(std::ostream& os, const Tensor& t) {
    os.write("FNT1", 4);
    const unsigned char rank = static_cast<unsigned char>(t.rank());
    os.write(reinterpret_cast<const char*>(&rank), 1);
    for (int i = 0; i < t.rank(); ++i) detail::put_u32le(os, static_cast<uint32_t>(t.extent(i)));
    for (int64_t i = 0; i < t.numel(); ++i) detail::put_f32le(os, static_cast<float>(t[i]));
}

// Reads one record; `offset` tracks the absolute byte position for error
// reporting and is advanced past the record.
inline Tensor read_fnt(std::istream& is, int64_t& offset) {
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "FNT1", 4) != 0)
        throw DataError("FNT1: bad magic at byte offset " + std::to_string(offset));
    offset += 4;
    unsigned char rank = 0;
    is.read(reinterpret_cast<char*>(&rank), 1);
    if (is.gcount() != 1 || rank == 0 || rank > 8)
        throw DataError("FNT1: bad rank at byte offset " + std::to_string(offset));
    offset += 1;
    Shape shape(rank);
    for (int i = 0; i < rank; ++i) {
        uint32_t e = detail::get_u32le(is, offset, "extent");
        if (e == 0) throw DataError("FNT1: zero extent at byte offset " + std::to_string(offset - 4));
        shape[static_cast<size_t>(i)] = static_cast<int64_t>(e);
    }
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) {
        uint32_t u = detail::get_u32le(is, offset, "payload");
        float f;
        std::memcpy(&f, &u, 4);
        t[i] = static_cast<double>(f);
    }
    return t;
}

inline void write_fnt_file(const fs::path& path, const Tensor& t);
inline Tensor read_fnt_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    int64_t offset = 0;
    Tensor t = read_fnt(is, offset);
    return t;
}

// ---------------------------------------------------------------------------
// Atomic file writes (write temp, then rename)
// ---------------------------------------------------------------------------

inline void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot open " + tmp.string() + " for writing");
        writer(os);
        if (!os) throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline void write_fnt_file(const fs::path& path, const Tensor& t) {
    atomic_write(path, [&](std::ostream& os) { write_fnt(os, t); });
}

inline void write_text_file(const fs::path& path, const std::string& text) {
    atomic_write(path, [&](std::ostream& os) { os << text; });
}

inline std::string read_text_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// 16-bit PGM previews with window/level mapping
// ---------------------------------------------------------------------------
// pixel = clamp((v - (level - window/2)) / window, 0, 1) * 65535

inline void write_pgm16(const fs::path& path, const Tensor& img, double window, double level) {
    if (window <= 0.0) throw ContractError("write_pgm16: window must be positive");
    const Tensor* t = &img;
    Tensor squeezed;
    if (img.rank() == 3 && img.extent(0) == 1) {
        squeezed = img.reshaped({img.extent(1), img.extent(2)});
        t = &squeezed;
    }
    if (t->rank() != 2) throw DimError("write_pgm16: expected [H,W] image, got " + shape_str(img.shape()));
    const int64_t h = t->extent(0), w = t->extent(1);
    atomic_write(path, [&](std::ostream& os) {
        os << "P5\n" << w << " " << h << "\n65535\n";
        const double lo = level - window / 2.0;
        for (int64_t i = 0; i < h * w; ++i) {
            double u = ((*t)[i] - lo) / window;
            u = std::min(1.0, std::max(0.0, u));
            const auto p = static_cast<uint16_t>(std::llround(u * 65535.0));
            const unsigned char b[2] = {static_cast<unsigned char>(p >> 8),
                                        static_cast<unsigned char>(p & 0xff)};  // PGM is big-endian
            os.write(reinterpret_cast<const char*>(b), 2);
        }
    });
}

}  // namespace io
}  // namespace findnet
