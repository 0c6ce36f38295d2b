#pragma once

// Seeded random affine augmentation. Parameters come from truncated normals
// over the configured ranges; the transform is applied to the input cube and
// its ground truth with the matrix rescaled per resolution, so both see the
// same physical motion. Out-of-frame samples take the per-band mean fill and
// are dropped from the validity mask.

#include <cmath>
#include <numbers>
#include <vector>

#include "spectraforge/common.hpp"
#include "spectraforge/cube.hpp"
#include "spectraforge/geometry.hpp"
#include "spectraforge/rng.hpp"

namespace spectraforge {

struct AffineRange {
    double lo = 0, hi = 0;

    double midpoint() const { return 0.5 * (lo + hi); }
    double sigma() const { return (hi - lo) / 4.0; }
};

struct AffineRanges {
    AffineRange tx{-0.20, 0.20};
    AffineRange ty{-0.20, 0.20};
    AffineRange scale{0.80, 1.60};
    AffineRange rotate_deg{-30.0, 30.0};
    AffineRange shear_deg{-5.0, 5.0};
};

struct AffineParams {
    double tx = 0, ty = 0;       // fraction of width / height
    double scale = 1.0;
    double rotate_deg = 0;
    double shear_deg = 0;
};

// Normal(midpoint, width/4), resampled until inside the range. About 95% of
// the untruncated mass already falls inside, so rejection terminates fast.
inline double sample_truncated(Rng& rng, const AffineRange& r) {
    if (r.hi == r.lo) return r.lo;
    for (;;) {
        double v = r.midpoint() + r.sigma() * rng.normal();
        if (v >= r.lo && v <= r.hi) return v;
    }
}

inline AffineParams sample_affine(Rng& rng, const AffineRanges& ranges = {}) {
    AffineParams p;
    p.tx = sample_truncated(rng, ranges.tx);
    p.ty = sample_truncated(rng, ranges.ty);
    p.scale = sample_truncated(rng, ranges.scale);
    p.rotate_deg = sample_truncated(rng, ranges.rotate_deg);
    p.shear_deg = sample_truncated(rng, ranges.shear_deg);
    return p;
}

// M = T(tx*W, ty*H) . C . R . S . Sh . C^-1 with C centering the image
// midpoint ((W-1)/2, (H-1)/2). Maps source coordinates to output coordinates.
inline Affine2 to_matrix(const AffineParams& p, int width, int height) {
    require(width > 0 && height > 0, "to_matrix: dims must be positive");
    const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
    const double th = p.rotate_deg * std::numbers::pi / 180.0;
    const double sh = std::tan(p.shear_deg * std::numbers::pi / 180.0);

    Affine2 C, Cinv, R, S, Sh, T;
    C.m = {1, 0, cx, 0, 1, cy};
    Cinv.m = {1, 0, -cx, 0, 1, -cy};
    R.m = {std::cos(th), -std::sin(th), 0, std::sin(th), std::cos(th), 0};
    S.m = {p.scale, 0, 0, 0, p.scale, 0};
    Sh.m = {1, sh, 0, 0, 1, 0};
    T.m = {1, 0, p.tx * width, 0, 1, p.ty * height};
    return T.compose(C.compose(R.compose(S.compose(Sh.compose(Cinv)))));
}

// Bilinear inverse-map warp. Output pixels whose source point leaves the
// frame take the band's global mean and become invalid; in-frame pixels stay
// valid only when all four bilinear neighbors were valid.
inline std::pair<SpectralCube, ValidityMask> warp(const SpectralCube& cube,
                                                  const ValidityMask& mask, const Affine2& M) {
    require(mask.bands == 1 && mask.width == cube.width && mask.height == cube.height,
            "warp: mask must be spatial and match the cube");
    Affine2 inv = M.inverse();
    const int W = cube.width, H = cube.height, B = cube.bands;

    std::vector<float> band_mean(static_cast<size_t>(B));
    const size_t plane = cube.plane();
    for (int b = 0; b < B; ++b) {
        double acc = 0;
        const float* p = cube.band_ptr(b);
        for (size_t i = 0; i < plane; ++i) acc += p[i];
        band_mean[static_cast<size_t>(b)] = static_cast<float>(acc / static_cast<double>(plane));
    }

    SpectralCube out(W, H, cube.wavelengths);
    ValidityMask omask(W, H, 1, false);
    parallel_for(H, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < W; ++x) {
            Vec2 s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            if (!(s.x >= 0 && s.x <= W - 1 && s.y >= 0 && s.y <= H - 1)) {
                for (int b = 0; b < B; ++b) out.at(x, y, b) = band_mean[static_cast<size_t>(b)];
                continue;
            }
            int x0 = static_cast<int>(std::floor(s.x));
            int y0 = static_cast<int>(std::floor(s.y));
            int x1 = std::min(x0 + 1, W - 1);
            int y1 = std::min(y0 + 1, H - 1);
            double fx = s.x - x0, fy = s.y - y0;
            for (int b = 0; b < B; ++b) {
                double v = (1 - fy) * ((1 - fx) * cube.at(x0, y0, b) + fx * cube.at(x1, y0, b)) +
                           fy * ((1 - fx) * cube.at(x0, y1, b) + fx * cube.at(x1, y1, b));
                out.at(x, y, b) = static_cast<float>(v);
            }
            bool ok = mask.get(x0, y0, 0) && mask.get(x1, y0, 0) && mask.get(x0, y1, 0) &&
                      mask.get(x1, y1, 0);
            omask.set(x, y, 0, ok);
        }
    });
    return {std::move(out), std::move(omask)};
}

struct AugmentedPair {
    SpectralCube input;
    SpectralCube gt;
    ValidityMask mask;  // at gt resolution
    AffineParams params;
};

// One parameter draw drives both cubes; tx/ty scale with each cube's own
// pixel dims and the center terms adapt likewise, which keeps corresponding
// physical points aligned across resolutions. warp_gt=false leaves the
// ground truth untouched (mask still reflects the input's coverage).
inline AugmentedPair augment_pair(const SpectralCube& input, const SpectralCube& gt, Rng& rng,
                                  const AffineRanges& ranges = {}, bool warp_gt = true) {
    AugmentedPair ap;
    ap.params = sample_affine(rng, ranges);

    ValidityMask in_mask(input.width, input.height, 1, true);
    auto [wi, mi] = warp(input, in_mask, to_matrix(ap.params, input.width, input.height));
    ap.input = std::move(wi);

    if (warp_gt) {
        ValidityMask gt_mask(gt.width, gt.height, 1, true);
        auto [wg, mg] = warp(gt, gt_mask, to_matrix(ap.params, gt.width, gt.height));
        ap.gt = std::move(wg);
        ap.mask = std::move(mg);
    } else {
        ap.gt = gt;
        // Project the input-resolution mask down to gt dims so the loss still
        // sees which region carries fill.
        ap.mask = ValidityMask(gt.width, gt.height, 1, false);
        for (int y = 0; y < gt.height; ++y)
            for (int x = 0; x < gt.width; ++x) {
                double sx = (x + 0.5) * input.width / gt.width - 0.5;
                double sy = (y + 0.5) * input.height / gt.height - 0.5;
                int ix = clamp(static_cast<int>(std::lround(sx)), 0, input.width - 1);
                int iy = clamp(static_cast<int>(std::lround(sy)), 0, input.height - 1);
                ap.mask.set(x, y, 0, mi.get(ix, iy, 0));
            }
    }
    return ap;
}

}  // namespace spectraforge
