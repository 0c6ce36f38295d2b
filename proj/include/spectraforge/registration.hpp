#pragma once

// Registration of our-camera frames against reference HSI frames: density
// matching by area-average downscale, masked NCC template search over all
// integer placements, and paired-sample extraction for training data.

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "spectraforge/common.hpp"
#include "spectraforge/cube.hpp"

namespace spectraforge {

struct CropRect {
    int x = 0, y = 0, w = 0, h = 0;
};

struct MatchResult {
    int row = 0, col = 0;        // offset of the template inside the reference
    double score = 0;            // NCC in [-1, 1]
    double scale = 1.0;          // downscale factor that produced the template
    CropRect crop;               // matched reference sub-rectangle
};

// Area-weighted box filter with fractional pixel coverage; factor 1 is the
// identity. Output dims are floor(in / factor).
inline Image downscale_image(const Image& img, double factor) {
    require(factor >= 1.0, "downscale: factor must be >= 1");
    const int ow = static_cast<int>(std::floor(img.width / factor));
    const int oh = static_cast<int>(std::floor(img.height / factor));
    require(ow >= 8 && oh >= 8, "downscale: output smaller than 8x8");
    Image out(ow, oh);
    parallel_for(oh, [&](std::int64_t Y) {
        for (int X = 0; X < ow; ++X) {
            const double x0 = X * factor, x1 = (X + 1) * factor;
            const double y0 = Y * factor, y1 = (Y + 1) * factor;
            const int ix0 = static_cast<int>(std::floor(x0));
            const int iy0 = static_cast<int>(std::floor(y0));
            const int ix1 = std::min(img.width - 1, static_cast<int>(std::ceil(x1)) - 1);
            const int iy1 = std::min(img.height - 1, static_cast<int>(std::ceil(y1)) - 1);
            double acc = 0, wsum = 0;
            for (int y = iy0; y <= iy1; ++y) {
                const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
                if (wy <= 0) continue;
                for (int x = ix0; x <= ix1; ++x) {
                    const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
                    if (wx <= 0) continue;
                    acc += wx * wy * img.at(x, y);
                    wsum += wx * wy;
                }
            }
            out.at(X, static_cast<int>(Y)) = static_cast<float>(acc / wsum);
        }
    });
    return out;
}

inline SpectralCube downscale_to_density(const SpectralCube& cube, double factor) {
    std::vector<Image> bands;
    bands.reserve(static_cast<size_t>(cube.bands));
    for (int b = 0; b < cube.bands; ++b) bands.push_back(downscale_image(band_slice(cube, b), factor));
    return assemble_bands(bands, cube.wavelengths);
}

namespace detail {

struct MaskedStats {
    double mean = 0;
    double var_sum = 0;  // sum of squared deviations, not normalized
    std::int64_t n = 0;
};

inline MaskedStats masked_stats(const Image& img, const ValidityMask& mask) {
    MaskedStats s;
    double acc = 0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (mask.get(x, y, 0)) {
                acc += img.at(x, y);
                ++s.n;
            }
    if (s.n == 0) return s;
    s.mean = acc / static_cast<double>(s.n);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (mask.get(x, y, 0)) {
                double d = img.at(x, y) - s.mean;
                s.var_sum += d * d;
            }
    return s;
}

}  // namespace detail

// Masked normalized cross-correlation over every integer placement of the
// template inside the reference. Means and variances are taken over the
// template's valid pixels only, recomputed per window, so the score is
// invariant to affine intensity changes of either side. Ties break toward
// the row-major smallest offset; zero-variance reference windows are skipped.
inline MatchResult ncc_match(const Image& reference,
                             const std::vector<const Image*>& tmpl_bands,
                             const std::vector<const Image*>& ref_bands,
                             const ValidityMask& tmpl_mask) {
    require(!tmpl_bands.empty() && tmpl_bands.size() == ref_bands.size(),
            "ncc_match: band lists empty or mismatched");
    const Image& t0 = *tmpl_bands[0];
    require(t0.width <= reference.width && t0.height <= reference.height,
            "ncc_match: template larger than reference");
    require(tmpl_mask.width == t0.width && tmpl_mask.height == t0.height && tmpl_mask.bands == 1,
            "ncc_match: mask must be spatial and match the template");
    for (size_t b = 0; b < tmpl_bands.size(); ++b) {
        require(tmpl_bands[b]->width == t0.width && tmpl_bands[b]->height == t0.height,
                "ncc_match: template band dims differ");
        require(ref_bands[b]->width == reference.width && ref_bands[b]->height == reference.height,
                "ncc_match: reference band dims differ");
    }

    // Valid template pixel positions, flattened once.
    std::vector<std::pair<int, int>> pts;
    for (int y = 0; y < t0.height; ++y)
        for (int x = 0; x < t0.width; ++x)
            if (tmpl_mask.get(x, y, 0)) pts.emplace_back(x, y);
    require(pts.size() >= 2, "ncc_match: fewer than 2 valid template pixels");

    struct BandPre {
        const Image* t;
        const Image* r;
        double mean;
        double norm;  // sqrt of var_sum
    };
    std::vector<BandPre> pre;
    for (size_t b = 0; b < tmpl_bands.size(); ++b) {
        double acc = 0;
        for (auto [x, y] : pts) acc += tmpl_bands[b]->at(x, y);
        double mean = acc / static_cast<double>(pts.size());
        double vs = 0;
        for (auto [x, y] : pts) {
            double d = tmpl_bands[b]->at(x, y) - mean;
            vs += d * d;
        }
        require(vs > 0, "ncc_match: zero-variance template");
        pre.push_back({tmpl_bands[b], ref_bands[b], mean, std::sqrt(vs)});
    }

    const int rows = reference.height - t0.height + 1;
    const int cols = reference.width - t0.width + 1;
    std::vector<double> best_row(static_cast<size_t>(rows),
                                 -std::numeric_limits<double>::infinity());
    std::vector<int> best_col(static_cast<size_t>(rows), -1);

    parallel_for(rows, [&](std::int64_t r) {
        double best = -std::numeric_limits<double>::infinity();
        int bc = -1;
        for (int c = 0; c < cols; ++c) {
            double total = 0;
            bool usable = true;
            for (const BandPre& bp : pre) {
                double racc = 0;
                for (auto [x, y] : pts) racc += bp.r->at(c + x, static_cast<int>(r) + y);
                double rmean = racc / static_cast<double>(pts.size());
                double num = 0, rvs = 0;
                for (auto [x, y] : pts) {
                    double rv = bp.r->at(c + x, static_cast<int>(r) + y) - rmean;
                    num += rv * (bp.t->at(x, y) - bp.mean);
                    rvs += rv * rv;
                }
                if (rvs <= 0) {
                    usable = false;
                    break;
                }
                total += num / (std::sqrt(rvs) * bp.norm);
            }
            if (usable && total > best) {
                best = total;
                bc = c;
            }
        }
        best_row[static_cast<size_t>(r)] = best;
        best_col[static_cast<size_t>(r)] = bc;
    });

    int br = -1;
    double best = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < rows; ++r)
        if (best_col[static_cast<size_t>(r)] >= 0 && best_row[static_cast<size_t>(r)] > best) {
            best = best_row[static_cast<size_t>(r)];
            br = r;
        }
    require(br >= 0, "ncc_match: no placement with non-degenerate reference window");

    MatchResult m;
    m.row = br;
    m.col = best_col[static_cast<size_t>(br)];
    m.score = best / static_cast<double>(pre.size());
    m.crop = {m.col, m.row, t0.width, t0.height};
    return m;
}

inline MatchResult ncc_match(const Image& reference, const Image& tmpl,
                             const ValidityMask& tmpl_mask) {
    return ncc_match(reference, {&tmpl}, {&reference}, tmpl_mask);
}

struct PairSample {
    SpectralCube input;   // full-resolution our-camera cube, unchanged
    SpectralCube gt;      // reference crop at the matched placement
    MatchResult match;
    Image mismatch;       // |matched reference band - downscaled our band|
};

inline int nearest_band(const std::vector<double>& wavelengths, double nm) {
    int best = 0;
    double bd = std::abs(wavelengths[0] - nm);
    for (size_t i = 1; i < wavelengths.size(); ++i) {
        double d = std::abs(wavelengths[i] - nm);
        if (d < bd) {
            bd = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

// Registers our cube into the reference frame and cuts the aligned pair. The
// returned input keeps full resolution; the ground-truth crop carries the
// downscaled template's spatial dims. With multiband set, the placement score
// sums NCC over every our-band paired with its nearest reference band.
inline PairSample pair_samples(const SpectralCube& our_cube, const SpectralCube& ref_cube,
                               double factor, int band_for_match, bool multiband = false) {
    require(band_for_match >= 0 && band_for_match < our_cube.bands,
            "pair_samples: band_for_match out of range");
    SpectralCube small = downscale_to_density(our_cube, factor);

    std::vector<Image> tmpl_imgs, ref_imgs;
    std::vector<int> our_bands;
    if (multiband) {
        for (int b = 0; b < small.bands; ++b) our_bands.push_back(b);
    } else {
        our_bands.push_back(band_for_match);
    }
    for (int b : our_bands) {
        tmpl_imgs.push_back(band_slice(small, b));
        ref_imgs.push_back(
            band_slice(ref_cube, nearest_band(ref_cube.wavelengths, small.wavelengths[static_cast<size_t>(b)])));
    }
    std::vector<const Image*> tp, rp;
    for (size_t i = 0; i < tmpl_imgs.size(); ++i) {
        tp.push_back(&tmpl_imgs[i]);
        rp.push_back(&ref_imgs[i]);
    }

    ValidityMask all_valid(small.width, small.height, 1, true);
    size_t match_pos = 0;
    for (size_t i = 0; i < our_bands.size(); ++i)
        if (our_bands[i] == band_for_match) match_pos = i;
    MatchResult m = ncc_match(ref_imgs[match_pos], tp, rp, all_valid);
    m.scale = factor;

    PairSample ps;
    ps.match = m;
    ps.input = our_cube;
    ps.gt = SpectralCube(small.width, small.height, ref_cube.wavelengths);
    for (int b = 0; b < ref_cube.bands; ++b)
        for (int y = 0; y < small.height; ++y)
            for (int x = 0; x < small.width; ++x)
                ps.gt.at(x, y, b) = ref_cube.at(m.col + x, m.row + y, b);

    const Image& rb = ref_imgs[match_pos];
    const Image& tb = tmpl_imgs[match_pos];
    ps.mismatch = Image(small.width, small.height);
    for (int y = 0; y < small.height; ++y)
        for (int x = 0; x < small.width; ++x)
            ps.mismatch.at(x, y) = std::abs(rb.at(m.col + x, m.row + y) - tb.at(x, y));
    return ps;
}

}  // namespace spectraforge
