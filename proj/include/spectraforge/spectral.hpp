#pragma once

// LED spectral response model, fine-to-8-band projection, and the normalized
// spectral-angle error metric with per-class statistics.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spectraforge/common.hpp"
#include "spectraforge/cube.hpp"

namespace spectraforge {

// One LED: emission peak and half width at half maximum, both in nm.
// Forward voltage / max current are capture-hardware metadata, not used here.
struct LedBandSpec {
    std::string name;
    double lambda_peak = 0;   // nm
    double delta_lambda = 0;  // nm, HWHM
};

// The eight LEDs of the capture head, ascending peak wavelength.
inline std::vector<LedBandSpec> default_led_table() {
    return {
        {"ultraviolet", 395.0, 10.0},
        {"blue", 466.0, 15.0},
        {"green", 520.0, 15.0},
        {"yellow_green", 573.0, 20.0},
        {"yellow", 585.0, 20.0},
        {"orange", 600.0, 20.0},
        {"red", 660.0, 17.0},
        {"infrared", 940.0, 40.0},
    };
}

// Text table, one LED per line: `name lambda_peak_nm delta_lambda_nm`, with
// `#` comments.
inline std::vector<LedBandSpec> load_led_table(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("led table: cannot open: " + path);
    std::vector<LedBandSpec> specs;
    std::string line;
    while (std::getline(f, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream is(line);
        LedBandSpec s;
        if (!(is >> s.name >> s.lambda_peak >> s.delta_lambda)) continue;
        require(s.lambda_peak > 0 && s.delta_lambda > 0,
                "led table: peak and half-width must be positive: " + s.name);
        specs.push_back(std::move(s));
    }
    require(!specs.empty(), "led table: no entries parsed from " + path);
    return specs;
}

// LED spectra are modeled as Gaussians whose HWHM equals delta_lambda, so
// sigma = delta_lambda / sqrt(2 ln 2). "On grid" means some grid point lies
// within 3 half-widths of the peak; a Gaussian tail is never exactly zero, so
// an explicit support radius stands in for "overlaps the grid".
inline std::vector<double> led_response(const LedBandSpec& spec,
                                        const std::vector<double>& wavelengths) {
    require(!wavelengths.empty(), "led_response: empty wavelength grid");
    require(spec.lambda_peak > 0 && spec.delta_lambda > 0,
            "led_response: peak and half-width must be positive");
    bool supported = false;
    for (double w : wavelengths)
        if (std::abs(w - spec.lambda_peak) <= 3.0 * spec.delta_lambda) supported = true;
    require(supported, "led_response: LED '" + spec.name + "' (" +
                           std::to_string(spec.lambda_peak) +
                           " nm) lies entirely outside the wavelength grid");

    const double sigma = spec.delta_lambda / std::sqrt(2.0 * std::log(2.0));
    std::vector<double> w(wavelengths.size());
    double sum = 0;
    for (size_t i = 0; i < wavelengths.size(); ++i) {
        double d = (wavelengths[i] - spec.lambda_peak) / sigma;
        w[i] = std::exp(-0.5 * d * d);
        sum += w[i];
    }
    for (double& x : w) x /= sum;
    return w;
}

// 8 x B_ref non-negative weights; each row sums to 1 and peaks at the grid
// point nearest its LED's peak wavelength. Rows are ordered by ascending peak.
struct ProjectionMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> weights;           // row-major
    std::vector<double> grid;              // source wavelengths
    std::vector<double> band_wavelengths;  // LED peaks, row order

    double at(int r, int c) const { return weights[static_cast<size_t>(r) * cols + c]; }
};

inline ProjectionMatrix build_projection(std::vector<LedBandSpec> specs,
                                         const std::vector<double>& grid) {
    require(!specs.empty(), "build_projection: no LEDs");
    std::stable_sort(specs.begin(), specs.end(),
                     [](const LedBandSpec& a, const LedBandSpec& b) {
                         return a.lambda_peak < b.lambda_peak;
                     });
    ProjectionMatrix P;
    P.rows = static_cast<int>(specs.size());
    P.cols = static_cast<int>(grid.size());
    P.grid = grid;
    P.weights.resize(static_cast<size_t>(P.rows) * P.cols);
    for (int r = 0; r < P.rows; ++r) {
        auto row = led_response(specs[static_cast<size_t>(r)], grid);
        std::copy(row.begin(), row.end(), P.weights.begin() + static_cast<size_t>(r) * P.cols);
        P.band_wavelengths.push_back(specs[static_cast<size_t>(r)].lambda_peak);
    }
    return P;
}

// Nearest-band row weights (1 at the grid point closest to each peak) for
// comparing against the Gaussian-weighted default.
inline ProjectionMatrix build_projection_nearest(std::vector<LedBandSpec> specs,
                                                 const std::vector<double>& grid) {
    ProjectionMatrix P = build_projection(std::move(specs), grid);
    for (int r = 0; r < P.rows; ++r) {
        size_t base = static_cast<size_t>(r) * P.cols;
        int best = 0;
        for (int c = 1; c < P.cols; ++c)
            if (std::abs(grid[static_cast<size_t>(c)] - P.band_wavelengths[static_cast<size_t>(r)]) <
                std::abs(grid[static_cast<size_t>(best)] - P.band_wavelengths[static_cast<size_t>(r)]))
                best = c;
        std::fill(P.weights.begin() + base, P.weights.begin() + base + P.cols, 0.0);
        P.weights[base + static_cast<size_t>(best)] = 1.0;
    }
    return P;
}

inline SpectralCube project_cube(const SpectralCube& gt, const ProjectionMatrix& P) {
    require(gt.bands == P.cols, "project_cube: cube bands != projection columns");
    SpectralCube out(gt.width, gt.height, P.band_wavelengths);
    out.raw = gt.raw;
    const size_t plane = gt.plane();
    parallel_for(P.rows, [&](std::int64_t r) {
        float* dst = out.band_ptr(static_cast<int>(r));
        const double* wrow = P.weights.data() + static_cast<size_t>(r) * P.cols;
        for (size_t i = 0; i < plane; ++i) {
            double acc = 0;
            for (int c = 0; c < P.cols; ++c)
                acc += wrow[c] * gt.data[static_cast<size_t>(c) * plane + i];
            dst[i] = static_cast<float>(acc);
        }
    });
    return out;
}

// H x W of per-pixel angular errors, normalized by pi/2 so the output lives
// in [0,1].
struct AngularErrorMap {
    int width = 0;
    int height = 0;
    std::vector<float> e;

    float at(int x, int y) const { return e[static_cast<size_t>(y) * width + x]; }
};

// arccos of the per-pixel spectral cosine, over pi/2. Scale-invariant by
// construction. Zero-vector convention: both zero -> 0, exactly one zero -> 1,
// so dead pixels present in both images do not inflate the error.
inline AngularErrorMap spectral_angle(const SpectralCube& gt, const SpectralCube& pred) {
    require(gt.width == pred.width && gt.height == pred.height && gt.bands == pred.bands,
            "spectral_angle: dimension mismatch");
    AngularErrorMap m;
    m.width = gt.width;
    m.height = gt.height;
    m.e.resize(gt.plane());
    const size_t plane = gt.plane();
    for (size_t i = 0; i < plane; ++i) {
        double dot = 0, na = 0, nb = 0;
        for (int b = 0; b < gt.bands; ++b) {
            double a = gt.data[static_cast<size_t>(b) * plane + i];
            double p = pred.data[static_cast<size_t>(b) * plane + i];
            dot += a * p;
            na += a * a;
            nb += p * p;
        }
        double err;
        if (na == 0 && nb == 0) {
            err = 0.0;
        } else if (na == 0 || nb == 0) {
            err = 1.0;
        } else {
            double cosv = clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
            err = std::acos(cosv) / (3.14159265358979323846 / 2.0);
            if (err > 1.0) err = 1.0;  // anti-correlated raw spectra saturate
        }
        m.e[i] = static_cast<float>(err);
    }
    return m;
}

struct ClassStats {
    double mean = 0;
    double stddev = 0;  // population
    size_t count = 0;
    bool defined = false;
};

struct RootSoilStats {
    ClassStats root;  // mask-valid pixels
    ClassStats soil;  // the rest
};

inline ClassStats stats_over(const AngularErrorMap& err, const ValidityMask& seg,
                             bool want_valid) {
    ClassStats s;
    double sum = 0, sum2 = 0;
    for (int y = 0; y < err.height; ++y)
        for (int x = 0; x < err.width; ++x)
            if (seg.get(x, y) == want_valid) {
                double v = err.at(x, y);
                sum += v;
                sum2 += v * v;
                ++s.count;
            }
    if (s.count > 0) {
        s.defined = true;
        s.mean = sum / static_cast<double>(s.count);
        double var = sum2 / static_cast<double>(s.count) - s.mean * s.mean;
        s.stddev = std::sqrt(std::max(0.0, var));
    }
    return s;
}

// Per-class error stats; segmentation marks root pixels valid.
inline RootSoilStats class_stats(const AngularErrorMap& err, const ValidityMask& seg) {
    require(seg.width == err.width && seg.height == err.height && seg.bands == 1,
            "class_stats: segmentation dimensions mismatch");
    RootSoilStats rs;
    rs.root = stats_over(err, seg, true);
    rs.soil = stats_over(err, seg, false);
    return rs;
}

}  // namespace spectraforge
