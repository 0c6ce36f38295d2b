#pragma once

// Spectral cube container and bit-exact file I/O.
//
// On disk a cube is two files: `X.hsc`, the raw payload (little-endian f32,
// planar band-major: band, then row, then column), and `X.hsc.json`, a sidecar
// header with fields width, height, bands, wavelengths_nm, raw,
// byte_order:"LE", value_type:"f32". The payload is seekable per band; the
// header is diffable.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "spectraforge/common.hpp"
#include "spectraforge/png_io.hpp"

namespace spectraforge {

static_assert(std::endian::native == std::endian::little,
              "cube payload I/O assumes a little-endian host");

// Evenly spaced wavelength grid, endpoints inclusive. The default reference
// grid is 299 bands over 400-1000 nm; every header records its own grid so
// nothing downstream hardcodes it.
inline std::vector<double> wavelength_grid(int bands, double lo_nm = 400.0,
                                           double hi_nm = 1000.0) {
    require(bands >= 1, "wavelength_grid: need at least one band");
    require(lo_nm > 0 && hi_nm > lo_nm, "wavelength_grid: bad range");
    std::vector<double> w(static_cast<size_t>(bands));
    if (bands == 1) {
        w[0] = lo_nm;
        return w;
    }
    for (int i = 0; i < bands; ++i)
        w[static_cast<size_t>(i)] = lo_nm + (hi_nm - lo_nm) * i / (bands - 1);
    return w;
}

struct CubeHeader {
    int width = 0;
    int height = 0;
    int bands = 0;
    std::vector<double> wavelengths_nm;
    bool raw = false;
    // byte_order and value_type are fixed ("LE", "f32") and validated on load.
};

// H x W x B reflectance volume. Values live in [0,1] unless `raw` is set.
// Data is planar band-major: index = (b*H + y)*W + x. Cubes are immutable
// after load by convention; treat mutation as single-owner construction.
struct SpectralCube {
    int width = 0;
    int height = 0;
    int bands = 0;
    std::vector<double> wavelengths;
    std::vector<float> data;
    bool raw = false;

    SpectralCube() = default;
    SpectralCube(int w, int h, std::vector<double> wl, float fill = 0.0f)
        : width(w),
          height(h),
          bands(static_cast<int>(wl.size())),
          wavelengths(std::move(wl)),
          data(static_cast<size_t>(w) * h * bands, fill) {}

    size_t plane() const { return static_cast<size_t>(width) * height; }
    size_t index(int x, int y, int b) const {
        return (static_cast<size_t>(b) * height + y) * width + x;
    }
    float& at(int x, int y, int b) { return data[index(x, y, b)]; }
    float at(int x, int y, int b) const { return data[index(x, y, b)]; }

    const float* band_ptr(int b) const { return data.data() + plane() * b; }
    float* band_ptr(int b) { return data.data() + plane() * b; }
};

// Boolean validity map; bands == 1 marks a spatial-only mask.
struct ValidityMask {
    int width = 0;
    int height = 0;
    int bands = 1;
    std::vector<std::uint8_t> bits;

    ValidityMask() = default;
    ValidityMask(int w, int h, int b = 1, bool valid = true)
        : width(w),
          height(h),
          bands(b),
          bits(static_cast<size_t>(w) * h * b, valid ? 1 : 0) {}

    size_t plane() const { return static_cast<size_t>(width) * height; }
    size_t index(int x, int y, int b = 0) const {
        return (static_cast<size_t>(b) * height + y) * width + x;
    }
    bool get(int x, int y, int b = 0) const { return bits[index(x, y, b)] != 0; }
    void set(int x, int y, int b, bool v) { bits[index(x, y, b)] = v ? 1 : 0; }
    void set(int x, int y, bool v) { set(x, y, 0, v); }

    // Band view for spatial masks annotating multi-band cubes.
    bool get_band(int x, int y, int b) const { return get(x, y, bands == 1 ? 0 : b); }

    size_t count_valid() const {
        size_t n = 0;
        for (auto v : bits) n += v;
        return n;
    }

    bool matches(const SpectralCube& c) const {
        return width == c.width && height == c.height && (bands == 1 || bands == c.bands);
    }
};

inline void validate_cube(const SpectralCube& c) {
    require(c.width > 0 && c.height > 0 && c.bands > 0, "cube: empty dimensions");
    require(static_cast<int>(c.wavelengths.size()) == c.bands,
            "cube: wavelength count != bands");
    for (int i = 0; i < c.bands; ++i) {
        double w = c.wavelengths[static_cast<size_t>(i)];
        require(std::isfinite(w) && w > 0, "cube: wavelengths must be finite and > 0");
        if (i > 0)
            require(w > c.wavelengths[static_cast<size_t>(i - 1)],
                    "cube: wavelengths must be strictly increasing");
    }
    require(c.data.size() == static_cast<size_t>(c.width) * c.height * c.bands,
            "cube: data length != width*height*bands");
    for (float v : c.data) {
        require(std::isfinite(v), "cube: non-finite value");
        if (!c.raw) require(v >= 0.0f && v <= 1.0f, "cube: value outside [0,1] and raw=false");
    }
}

namespace detail {

inline std::string header_path(const std::string& payload_path) {
    return payload_path + ".json";
}

}  // namespace detail

inline void save_cube(const SpectralCube& cube, const std::string& path) {
    validate_cube(cube);  // rejects NaN before any bytes hit disk

    nlohmann::json h;
    h["width"] = cube.width;
    h["height"] = cube.height;
    h["bands"] = cube.bands;
    h["wavelengths_nm"] = cube.wavelengths;
    h["raw"] = cube.raw;
    h["byte_order"] = "LE";
    h["value_type"] = "f32";

    std::ofstream hf(detail::header_path(path));
    if (!hf) throw IoError("save_cube: cannot write header: " + detail::header_path(path));
    hf << h.dump(2) << "\n";
    if (!hf) throw IoError("save_cube: header write failed");
    hf.close();

    std::ofstream pf(path, std::ios::binary);
    if (!pf) throw IoError("save_cube: cannot write payload: " + path);
    pf.write(reinterpret_cast<const char*>(cube.data.data()),
             static_cast<std::streamsize>(cube.data.size() * sizeof(float)));
    if (!pf) throw IoError("save_cube: payload write failed");
}

inline SpectralCube load_cube(const std::string& path) {
    std::ifstream hf(detail::header_path(path));
    if (!hf) throw IoError("load_cube: missing header: " + detail::header_path(path));
    nlohmann::json h;
    try {
        hf >> h;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("load_cube: corrupt header: ") + e.what());
    }

    SpectralCube cube;
    try {
        cube.width = h.at("width").get<int>();
        cube.height = h.at("height").get<int>();
        cube.bands = h.at("bands").get<int>();
        cube.wavelengths = h.at("wavelengths_nm").get<std::vector<double>>();
        cube.raw = h.at("raw").get<bool>();
        require(h.at("byte_order").get<std::string>() == "LE",
                "load_cube: unsupported byte order");
        require(h.at("value_type").get<std::string>() == "f32",
                "load_cube: unsupported value type");
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("load_cube: header field error: ") + e.what());
    }
    require(cube.width > 0 && cube.height > 0 && cube.bands > 0,
            "load_cube: non-positive dimensions");

    std::ifstream pf(path, std::ios::binary | std::ios::ate);
    if (!pf) throw IoError("load_cube: missing payload: " + path);
    const auto file_size = static_cast<std::uint64_t>(pf.tellg());
    const std::uint64_t expect =
        static_cast<std::uint64_t>(cube.width) * cube.height * cube.bands * sizeof(float);
    require(file_size == expect, "load_cube: payload length mismatch (" +
                                     std::to_string(file_size) + " bytes, expected " +
                                     std::to_string(expect) + ")");
    pf.seekg(0);
    cube.data.resize(static_cast<size_t>(cube.width) * cube.height * cube.bands);
    pf.read(reinterpret_cast<char*>(cube.data.data()),
            static_cast<std::streamsize>(cube.data.size() * sizeof(float)));
    if (!pf) throw IoError("load_cube: payload read failed");

    validate_cube(cube);
    return cube;
}

inline Image band_slice(const SpectralCube& cube, int b) {
    require(b >= 0 && b < cube.bands, "band_slice: band index out of range");
    Image img(cube.width, cube.height);
    const float* src = cube.band_ptr(b);
    std::copy(src, src + cube.plane(), img.v.begin());
    return img;
}

// Rebuilds a cube from per-band images; inverse of slicing every band.
inline SpectralCube assemble_bands(const std::vector<Image>& bands,
                                   std::vector<double> wavelengths) {
    require(!bands.empty(), "assemble_bands: no bands");
    require(bands.size() == wavelengths.size(), "assemble_bands: wavelength count mismatch");
    SpectralCube cube(bands[0].width, bands[0].height, std::move(wavelengths));
    for (size_t b = 0; b < bands.size(); ++b) {
        require(bands[b].width == cube.width && bands[b].height == cube.height,
                "assemble_bands: band dimension mismatch");
        std::copy(bands[b].v.begin(), bands[b].v.end(), cube.band_ptr(static_cast<int>(b)));
    }
    return cube;
}

// 8-bit grayscale export: round-half-up of 255*clamp(v,0,1), so golden files
// are deterministic.
inline png::Gray8 band_to_gray8(const SpectralCube& cube, int b) {
    require(b >= 0 && b < cube.bands, "export_band_png: band index out of range");
    png::Gray8 img(cube.width, cube.height);
    const float* src = cube.band_ptr(b);
    for (size_t i = 0; i < cube.plane(); ++i) {
        double v = clamp(static_cast<double>(src[i]), 0.0, 1.0);
        img.pixels[i] = static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5));
    }
    return img;
}

inline void export_band_png(const SpectralCube& cube, int b, const std::string& path) {
    png::save(band_to_gray8(cube, b), path);
}

// Mask files are 8-bit PNG: 0 = invalid, 255 = valid. Values >= 128 read back
// as valid.
inline void save_mask_png(const ValidityMask& mask, int b, const std::string& path) {
    require(b >= 0 && b < mask.bands, "save_mask_png: band index out of range");
    png::Gray8 img(mask.width, mask.height);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            img.at(x, y) = mask.get(x, y, b) ? 255 : 0;
    png::save(img, path);
}

inline ValidityMask load_mask_png(const std::string& path) {
    png::Gray8 img = png::load(path);
    ValidityMask mask(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            mask.set(x, y, img.at(x, y) >= 128);
    return mask;
}

// Bilinear resample with half-pixel centers, edges clamped. Identity when
// dims are unchanged.
inline SpectralCube resize_bilinear(const SpectralCube& cube, int out_w, int out_h) {
    require(out_w > 0 && out_h > 0, "resize_bilinear: dims must be positive");
    if (out_w == cube.width && out_h == cube.height) return cube;
    SpectralCube out(out_w, out_h, cube.wavelengths);
    out.raw = cube.raw;
    const double sx = static_cast<double>(cube.width) / out_w;
    const double sy = static_cast<double>(cube.height) / out_h;
    parallel_for(out_h, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        double fy = (y + 0.5) * sy - 0.5;
        fy = clamp(fy, 0.0, static_cast<double>(cube.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, cube.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = clamp(fx, 0.0, static_cast<double>(cube.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, cube.width - 1);
            const double wx = fx - x0;
            for (int b = 0; b < cube.bands; ++b) {
                double v = (1 - wy) * ((1 - wx) * cube.at(x0, y0, b) + wx * cube.at(x1, y0, b)) +
                           wy * ((1 - wx) * cube.at(x0, y1, b) + wx * cube.at(x1, y1, b));
                out.at(x, y, b) = static_cast<float>(v);
            }
        }
    });
    return out;
}

}  // namespace spectraforge
