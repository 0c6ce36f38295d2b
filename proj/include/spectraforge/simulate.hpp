#pragma once

// Forward model of the capture rig and a synthetic scene factory. Scenes are
// root strokes over soil; soil pixels carry a single Gaussian spectrum with
// per-pixel amplitude jitter, roots add a sigmoid red-edge step near 700 nm.
// Capture degrades a ground-truth cube in a fixed order: LED projection,
// vignette, lens distortion, saturating specular spots, clipped noise.

#include <cmath>
#include <numbers>
#include <vector>

#include "spectraforge/calibration.hpp"
#include "spectraforge/common.hpp"
#include "spectraforge/cube.hpp"
#include "spectraforge/rng.hpp"
#include "spectraforge/spectral.hpp"

namespace spectraforge {

struct SoilModel {
    double mean_nm = 550.0;
    double width_nm = 110.0;
    double amplitude = 0.35;
    double jitter = 0.25;  // relative amplitude jitter, uniform in [-j, j]
};

struct RootModel {
    double gauss_mean_nm = 600.0;
    double gauss_width_nm = 150.0;
    double gauss_amp = 0.15;
    double edge_center_nm = 700.0;  // sigmoid step: the curved region
    double edge_width_nm = 12.0;
    double edge_height = 0.45;
    double jitter = 0.10;
};

struct StrokeModel {
    int count = 3;
    double width_px = 4.0;
    int steps = 120;
    double turn_sigma = 0.3;  // radians per step
};

struct SceneSpec {
    int width = 64;
    int height = 64;
    int bands = 299;
    double grid_lo_nm = 400.0;
    double grid_hi_nm = 1000.0;
    SoilModel soil;
    RootModel root;
    StrokeModel strokes;
    std::uint64_t seed = 1;
};

struct Spot {
    int band = 0;
    double cx = 0, cy = 0;
    double radius = 0;
    double intensity = 1.0;
};

struct CaptureSpec {
    std::vector<LedBandSpec> leds = default_led_table();
    double vignette_strength = 0.0;   // corner falloff blend in [0,1]
    bool distort = false;
    DistortionModel distortion;
    std::vector<Spot> spots;
    double noise_sigma = 0.0;
    std::uint64_t seed = 1;
};

inline double soil_spectrum(const SoilModel& m, double nm) {
    double d = (nm - m.mean_nm) / m.width_nm;
    return m.amplitude * std::exp(-0.5 * d * d);
}

inline double root_spectrum(const RootModel& m, double nm) {
    double d = (nm - m.gauss_mean_nm) / m.gauss_width_nm;
    double g = m.gauss_amp * std::exp(-0.5 * d * d);
    double s = m.edge_height / (1.0 + std::exp(-(nm - m.edge_center_nm) / m.edge_width_nm));
    return g + s;
}

struct Scene {
    SpectralCube cube;
    ValidityMask seg;  // valid bit marks root pixels
};

// Deterministic per seed: strokes first, then one jitter draw per pixel in
// row-major order regardless of class.
inline Scene gen_scene(const SceneSpec& spec) {
    require(spec.width > 0 && spec.height > 0 && spec.bands >= 2, "gen_scene: bad dims");
    Rng rng(spec.seed);
    const int W = spec.width, H = spec.height;

    ValidityMask seg(W, H, 1, false);
    for (int s = 0; s < spec.strokes.count; ++s) {
        double x = rng.uniform(0.0, W - 1.0);
        double y = rng.uniform(0.0, H - 1.0);
        double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double r = spec.strokes.width_px / 2.0;
        const int ri = static_cast<int>(std::ceil(r));
        for (int st = 0; st < spec.strokes.steps; ++st) {
            ang += spec.strokes.turn_sigma * rng.normal();
            x += std::cos(ang);
            y += std::sin(ang);
            const int cx = static_cast<int>(std::lround(x));
            const int cy = static_cast<int>(std::lround(y));
            for (int dy = -ri; dy <= ri; ++dy)
                for (int dx = -ri; dx <= ri; ++dx) {
                    if (dx * dx + dy * dy > r * r) continue;
                    int px = cx + dx, py = cy + dy;
                    if (px >= 0 && px < W && py >= 0 && py < H) seg.set(px, py, true);
                }
        }
    }

    auto grid = wavelength_grid(spec.bands, spec.grid_lo_nm, spec.grid_hi_nm);
    std::vector<double> soil_base(grid.size()), root_base(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) {
        soil_base[i] = soil_spectrum(spec.soil, grid[i]);
        root_base[i] = root_spectrum(spec.root, grid[i]);
    }

    Scene scene;
    scene.cube = SpectralCube(W, H, grid);
    scene.seg = seg;
    const size_t plane = scene.cube.plane();
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double u = rng.uniform(-1.0, 1.0);
            size_t px = static_cast<size_t>(y) * W + static_cast<size_t>(x);
            bool root = seg.get(x, y, 0);
            double a = 1.0 + (root ? spec.root.jitter : spec.soil.jitter) * u;
            const std::vector<double>& base = root ? root_base : soil_base;
            for (int b = 0; b < spec.bands; ++b)
                scene.cube.data[static_cast<size_t>(b) * plane + px] =
                    static_cast<float>(clamp(a * base[static_cast<size_t>(b)], 0.0, 1.0));
        }
    return scene;
}

// Centered cos^4 falloff blended by strength: 1 at the center,
// 1 - 0.75 * strength at the corners.
inline double vignette_gain(int x, int y, int w, int h, double strength) {
    double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    double rmax = std::sqrt(cx * cx + cy * cy);
    if (rmax == 0) return 1.0;
    double r = std::sqrt((x - cx) * (x - cx) + (y - cy) * (y - cy)) / rmax;
    double c = std::cos(r * std::numbers::pi / 4.0);
    double c2 = c * c;
    return 1.0 - strength + strength * c2 * c2;
}

// Resample so that the calibration-side undistort recovers the input: each
// observed pixel looks up the ideal image at its Newton-inverted location.
// Samples clamp to the frame edge.
inline SpectralCube apply_distortion(const SpectralCube& ideal, const DistortionModel& model) {
    SpectralCube out(ideal.width, ideal.height, ideal.wavelengths);
    out.raw = ideal.raw;
    const int W = ideal.width, H = ideal.height;
    parallel_for(H, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < W; ++x) {
            Vec2 u = model.undistort_point({static_cast<double>(x), static_cast<double>(y)});
            Vec2 o = model.affine.apply(u);
            double fx = clamp(o.x, 0.0, static_cast<double>(W - 1));
            double fy = clamp(o.y, 0.0, static_cast<double>(H - 1));
            int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
            int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
            double ax = fx - x0, ay = fy - y0;
            for (int b = 0; b < ideal.bands; ++b) {
                double v =
                    (1 - ay) * ((1 - ax) * ideal.at(x0, y0, b) + ax * ideal.at(x1, y0, b)) +
                    ay * ((1 - ax) * ideal.at(x0, y1, b) + ax * ideal.at(x1, y1, b));
                out.at(x, y, b) = static_cast<float>(v);
            }
        }
    });
    return out;
}

inline void add_spots(SpectralCube& cube, const std::vector<Spot>& spots) {
    for (const Spot& s : spots) {
        require(s.band >= 0 && s.band < cube.bands, "add_spots: band out of range");
        float* p = cube.band_ptr(s.band);
        const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.radius)));
        const int x1 = std::min(cube.width - 1, static_cast<int>(std::ceil(s.cx + s.radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.radius)));
        const int y1 = std::min(cube.height - 1, static_cast<int>(std::ceil(s.cy + s.radius)));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double dx = x - s.cx, dy = y - s.cy;
                if (dx * dx + dy * dy > s.radius * s.radius) continue;
                size_t i = static_cast<size_t>(y) * cube.width + static_cast<size_t>(x);
                p[i] = std::min(1.0f, p[i] + static_cast<float>(s.intensity));
            }
    }
}

// Projection, vignette, distortion, spots, noise, in that order. Disabled
// stages are skipped entirely, so a degenerate CaptureSpec reproduces
// project_cube bit for bit.
inline SpectralCube capture(const SpectralCube& gt, const CaptureSpec& cap) {
    ProjectionMatrix pm = build_projection(cap.leds, gt.wavelengths);
    SpectralCube out = project_cube(gt, pm);

    if (cap.vignette_strength > 0) {
        for (int b = 0; b < out.bands; ++b) {
            float* p = out.band_ptr(b);
            for (int y = 0; y < out.height; ++y)
                for (int x = 0; x < out.width; ++x) {
                    size_t i = static_cast<size_t>(y) * out.width + static_cast<size_t>(x);
                    p[i] = static_cast<float>(
                        p[i] * vignette_gain(x, y, out.width, out.height, cap.vignette_strength));
                }
        }
    }
    if (cap.distort) out = apply_distortion(out, cap.distortion);
    if (!cap.spots.empty()) add_spots(out, cap.spots);
    if (cap.noise_sigma > 0) {
        Rng rng(cap.seed);
        for (float& v : out.data)
            v = static_cast<float>(clamp(v + cap.noise_sigma * rng.normal(), 0.0, 1.0));
    }
    return out;
}

struct PairTruth {
    int row = 0, col = 0;      // planted offset in reference pixels
    double factor = 1.0;
    int template_w = 0, template_h = 0;
};

struct SimulatedPair {
    SpectralCube ours;   // 8-band capture at our-camera resolution
    SpectralCube ref;    // untouched reference cube
    PairTruth truth;
};

// Cuts a (template_w x template_h) reference window at the planted offset,
// upsamples it by factor to our-camera resolution, and captures it. The
// downscale inside registration then lands back on template dims, so the
// planted offset is the NCC ground truth.
inline SimulatedPair make_pair(const SpectralCube& gt, const CaptureSpec& cap, int row, int col,
                               double factor, int template_w, int template_h) {
    require(factor >= 1.0, "make_pair: factor must be >= 1");
    require(template_w >= 8 && template_h >= 8, "make_pair: template must be at least 8x8");
    require(row >= 0 && col >= 0 && col + template_w <= gt.width && row + template_h <= gt.height,
            "make_pair: offset places the crop outside the reference");

    SpectralCube crop(template_w, template_h, gt.wavelengths);
    for (int b = 0; b < gt.bands; ++b)
        for (int y = 0; y < template_h; ++y)
            for (int x = 0; x < template_w; ++x)
                crop.at(x, y, b) = gt.at(col + x, row + y, b);

    const int ow = static_cast<int>(std::ceil(template_w * factor));
    const int oh = static_cast<int>(std::ceil(template_h * factor));
    SpectralCube upsampled = resize_bilinear(crop, ow, oh);

    SimulatedPair sp;
    sp.ours = capture(upsampled, cap);
    sp.ref = gt;
    sp.truth = {row, col, factor, template_w, template_h};
    return sp;
}

}  // namespace spectraforge
