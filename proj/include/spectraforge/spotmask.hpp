#pragma once

// Specular LED spot removal: per-band Otsu thresholding flags saturated
// glints, then masked values are rebuilt by linear interpolation along the
// wavelength axis from the same pixel's clean bands.

#include <array>
#include <cstdint>
#include <optional>

#include "spectraforge/common.hpp"
#include "spectraforge/cube.hpp"

namespace spectraforge {

// [0,1] reflectance -> 8-bit histogram bin.
inline int quantize256(float v) {
    int b = static_cast<int>(std::floor(static_cast<double>(v) * 256.0));
    return b < 0 ? 0 : (b > 255 ? 255 : b);
}

// Threshold t maximizing between-class variance of {bins <= t} vs {bins > t}.
// Ties resolve to the lowest t. A histogram with fewer than two populated
// levels has no split; returns nullopt.
inline std::optional<int> otsu_threshold(const std::array<std::uint64_t, 256>& hist) {
    std::uint64_t total = 0;
    int levels = 0;
    double sum_all = 0;
    for (int i = 0; i < 256; ++i) {
        total += hist[static_cast<size_t>(i)];
        if (hist[static_cast<size_t>(i)]) ++levels;
        sum_all += static_cast<double>(i) * static_cast<double>(hist[static_cast<size_t>(i)]);
    }
    if (levels < 2) return std::nullopt;

    double best = -1.0;
    int best_t = -1;
    std::uint64_t w0 = 0;
    double sum0 = 0;
    for (int t = 0; t < 256; ++t) {
        w0 += hist[static_cast<size_t>(t)];
        sum0 += static_cast<double>(t) * static_cast<double>(hist[static_cast<size_t>(t)]);
        std::uint64_t w1 = total - w0;
        if (w0 == 0 || w1 == 0) continue;
        double mu0 = sum0 / static_cast<double>(w0);
        double mu1 = (sum_all - sum0) / static_cast<double>(w1);
        double var = static_cast<double>(w0) * static_cast<double>(w1) * (mu0 - mu1) * (mu0 - mu1);
        if (var > best) {
            best = var;
            best_t = t;
        }
    }
    return best_t;
}

// Per-band spot detection. A band is only masked when the above-threshold
// class is at least spot_ratio times brighter on average than the rest;
// otherwise Otsu on a spot-free band would just split the scene's own
// texture. Degenerate (single-level) bands stay fully valid.
inline ValidityMask spot_mask(const SpectralCube& cube, double spot_ratio = 2.0) {
    require(spot_ratio > 0, "spot_mask: spot_ratio must be positive");
    ValidityMask mask(cube.width, cube.height, cube.bands, true);
    const size_t plane = cube.plane();
    parallel_for(cube.bands, [&](std::int64_t b) {
        const float* src = cube.band_ptr(static_cast<int>(b));
        std::array<std::uint64_t, 256> hist{};
        for (size_t i = 0; i < plane; ++i) ++hist[static_cast<size_t>(quantize256(src[i]))];
        auto t = otsu_threshold(hist);
        if (!t) return;
        double above = 0, below = 0;
        std::uint64_t na = 0, nb = 0;
        for (size_t i = 0; i < plane; ++i) {
            if (quantize256(src[i]) > *t) {
                above += src[i];
                ++na;
            } else {
                below += src[i];
                ++nb;
            }
        }
        if (na == 0 || nb == 0) return;
        above /= static_cast<double>(na);
        below /= static_cast<double>(nb);
        if (above < spot_ratio * below) return;
        std::uint8_t* mrow = mask.bits.data() + static_cast<size_t>(b) * plane;
        for (size_t i = 0; i < plane; ++i)
            if (quantize256(src[i]) > *t) mrow[i] = 0;
    });
    return mask;
}

// Replace masked entries with linear interpolation over wavelength between
// the pixel's nearest valid bands; constant extrapolation past the ends.
// Bands are unevenly spaced, so interpolation runs in nm, not band index.
inline SpectralCube inpaint_spectral(const SpectralCube& cube, const ValidityMask& mask) {
    require(mask.width == cube.width && mask.height == cube.height && mask.bands == cube.bands,
            "inpaint_spectral: mask must be per-band and match the cube");
    SpectralCube out = cube;
    const int W = cube.width, B = cube.bands;
    const size_t plane = cube.plane();
    parallel_for(cube.height, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < W; ++x) {
            size_t px = static_cast<size_t>(y) * W + static_cast<size_t>(x);
            bool any_invalid = false, any_valid = false;
            for (int b = 0; b < B; ++b) {
                bool v = mask.bits[static_cast<size_t>(b) * plane + px] != 0;
                any_invalid |= !v;
                any_valid |= v;
            }
            if (!any_invalid) continue;
            if (!any_valid)
                throw ValidationError("inpaint_spectral: pixel with zero valid bands");
            for (int b = 0; b < B; ++b) {
                if (mask.bits[static_cast<size_t>(b) * plane + px]) continue;
                int lo = b - 1, hi = b + 1;
                while (lo >= 0 && !mask.bits[static_cast<size_t>(lo) * plane + px]) --lo;
                while (hi < B && !mask.bits[static_cast<size_t>(hi) * plane + px]) ++hi;
                float val;
                if (lo >= 0 && hi < B) {
                    double wl = cube.wavelengths[static_cast<size_t>(lo)];
                    double wh = cube.wavelengths[static_cast<size_t>(hi)];
                    double f = (cube.wavelengths[static_cast<size_t>(b)] - wl) / (wh - wl);
                    double vl = cube.data[static_cast<size_t>(lo) * plane + px];
                    double vh = cube.data[static_cast<size_t>(hi) * plane + px];
                    val = static_cast<float>(vl + f * (vh - vl));
                } else if (lo >= 0) {
                    val = cube.data[static_cast<size_t>(lo) * plane + px];
                } else {
                    val = cube.data[static_cast<size_t>(hi) * plane + px];
                }
                out.data[static_cast<size_t>(b) * plane + px] = val;
            }
        }
    });
    return out;
}

}  // namespace spectraforge
