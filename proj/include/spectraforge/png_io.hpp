#pragma once

// Minimal 8-bit grayscale PNG reader/writer, enough for band exports and
// validity masks. zlib does the IDAT compression and CRCs. Decoding handles
// all five scanline filters; encoding always emits filter 0.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "spectraforge/common.hpp"

namespace spectraforge::png {

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void write_chunk(std::vector<std::uint8_t>& out, const char type[4],
                        const std::uint8_t* data, std::size_t len) {
    put_u32(out, static_cast<std::uint32_t>(len));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    std::uint32_t crc = ::crc32(0, out.data() + start, static_cast<uInt>(4 + len));
    put_u32(out, crc);
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

// Gray-8 pixels, row-major top-down.
struct Gray8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Gray8() = default;
    Gray8(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

inline std::vector<std::uint8_t> encode(const Gray8& img) {
    require(img.width > 0 && img.height > 0, "png: empty image");
    require(img.pixels.size() == static_cast<std::size_t>(img.width) * img.height,
            "png: pixel buffer size mismatch");

    // Raw scanlines, each prefixed by filter byte 0.
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(img.height) * (img.width + 1));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);
        const std::uint8_t* row = img.pixels.data() + static_cast<std::size_t>(y) * img.width;
        raw.insert(raw.end(), row, row + img.width);
    }

    uLongf zcap = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> zbuf(zcap);
    if (::compress2(zbuf.data(), &zcap, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("png: deflate failed");
    zbuf.resize(zcap);

    std::vector<std::uint8_t> out;
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);

    std::uint8_t ihdr[13];
    ihdr[0] = static_cast<std::uint8_t>(img.width >> 24);
    ihdr[1] = static_cast<std::uint8_t>(img.width >> 16);
    ihdr[2] = static_cast<std::uint8_t>(img.width >> 8);
    ihdr[3] = static_cast<std::uint8_t>(img.width);
    ihdr[4] = static_cast<std::uint8_t>(img.height >> 24);
    ihdr[5] = static_cast<std::uint8_t>(img.height >> 16);
    ihdr[6] = static_cast<std::uint8_t>(img.height >> 8);
    ihdr[7] = static_cast<std::uint8_t>(img.height);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 0;   // color type: grayscale
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter method
    ihdr[12] = 0;  // no interlace
    detail::write_chunk(out, "IHDR", ihdr, 13);
    detail::write_chunk(out, "IDAT", zbuf.data(), zbuf.size());
    detail::write_chunk(out, "IEND", nullptr, 0);
    return out;
}

inline Gray8 decode(const std::vector<std::uint8_t>& bytes) {
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw IoError("png: bad signature");

    int width = 0, height = 0;
    std::vector<std::uint8_t> idat;
    bool saw_ihdr = false;

    std::size_t pos = 8;
    while (pos + 8 <= bytes.size()) {
        std::uint32_t len = detail::get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw IoError("png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const std::uint8_t* data = bytes.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("png: bad IHDR");
            width = static_cast<int>(detail::get_u32(data));
            height = static_cast<int>(detail::get_u32(data + 4));
            if (data[8] != 8 || data[9] != 0)
                throw IoError("png: only 8-bit grayscale supported");
            if (data[12] != 0) throw IoError("png: interlaced images not supported");
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || width <= 0 || height <= 0) throw IoError("png: missing IHDR");

    const std::size_t stride = static_cast<std::size_t>(width) + 1;
    std::vector<std::uint8_t> raw(stride * height);
    uLongf rawlen = static_cast<uLongf>(raw.size());
    if (::uncompress(raw.data(), &rawlen, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        rawlen != raw.size())
        throw IoError("png: inflate failed");

    Gray8 img(width, height);
    std::vector<std::uint8_t> prev(static_cast<std::size_t>(width), 0);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[stride * y];
        const std::uint8_t* src = raw.data() + stride * y + 1;
        std::uint8_t* dst = img.pixels.data() + static_cast<std::size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            int a = x > 0 ? dst[x - 1] : 0;  // left
            int b = prev[x];                 // up
            int c = x > 0 ? prev[x - 1] : 0; // up-left
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: throw IoError("png: unknown filter type");
            }
            dst[x] = static_cast<std::uint8_t>(v & 0xff);
        }
        std::memcpy(prev.data(), dst, static_cast<std::size_t>(width));
    }
    return img;
}

inline void save(const Gray8& img, const std::string& path) {
    auto bytes = encode(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("png: cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("png: write failed: " + path);
}

inline Gray8 load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("png: cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return decode(bytes);
}

}  // namespace spectraforge::png
