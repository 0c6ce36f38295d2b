#pragma once

// Flat-field ("reference white") correction, dark-field subtraction, and
// chessboard-driven geometric undistortion.
//
// Geometry: a point u in the undistorted camera frame maps to the observed
// (distorted) frame by a 2-coefficient radial polynomial about (cx, cy),
//
//     d = c + (u - c) * (1 + k1 r^2 + k2 r^4),   r = |u - c| / radius_norm,
//
// and a 2x3 affine maps the undistorted frame to the output frame. The radius
// is normalized by radius_norm so k1/k2 stay O(1) regardless of image size.

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spectraforge/common.hpp"
#include "spectraforge/cube.hpp"
#include "spectraforge/geometry.hpp"

namespace spectraforge {

struct DistortionModel {
    double k1 = 0, k2 = 0;
    double cx = 0, cy = 0;
    double radius_norm = 1.0;          // px scale for r in the radial polynomial
    Affine2 affine;                    // undistorted frame -> output frame

    static DistortionModel identity_model() { return {}; }

    double radial_scale(double r) const {
        double r2 = r * r;
        return 1.0 + k1 * r2 + k2 * r2 * r2;
    }

    // Undistorted -> observed.
    Vec2 distort_point(Vec2 u) const {
        double dx = u.x - cx, dy = u.y - cy;
        double r = std::sqrt(dx * dx + dy * dy) / radius_norm;
        double s = radial_scale(r);
        return {cx + dx * s, cy + dy * s};
    }

    // Observed -> undistorted, Newton on the scalar radius. Throws when the
    // iteration fails to reach 1e-8 px within 20 steps.
    Vec2 undistort_point(Vec2 d) const {
        double dx = d.x - cx, dy = d.y - cy;
        double rd = std::sqrt(dx * dx + dy * dy) / radius_norm;
        if (rd == 0) return {cx, cy};
        double ru = rd;
        bool ok = false;
        for (int it = 0; it < 20; ++it) {
            double r2 = ru * ru;
            double f = ru * (1.0 + k1 * r2 + k2 * r2 * r2) - rd;
            double fp = 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2;
            if (std::abs(fp) < 1e-14) break;
            double step = f / fp;
            ru -= step;
            if (std::abs(f) * radius_norm < 1e-8 || std::abs(step) * radius_norm < 1e-10) {
                ok = true;
                break;
            }
        }
        double r2 = ru * ru;
        if (!ok && std::abs(ru * (1.0 + k1 * r2 + k2 * r2 * r2) - rd) * radius_norm > 1e-8)
            throw ValidationError("undistort_point: Newton inversion did not converge");
        double scale = ru / rd;
        return {cx + dx * scale, cy + dy * scale};
    }
};

// Per-band white reference. The epsilon guard keeps near-black reference
// pixels from blowing up the ratio; scale is the target reflectance of white.
struct FlatFieldRef {
    SpectralCube white;
    double epsilon = 1e-4;
    double scale = 1.0;
};

// Chessboard correspondences: observed pixel vs integer lattice coordinate.
struct Corner {
    double obs_x = 0, obs_y = 0;
    double board_i = 0, board_j = 0;
};

struct CornerSet {
    std::vector<Corner> corners;
    double pitch = 1.0;  // px per lattice step in the rectified output frame
};

// Text format, one corner per line: `obs_x obs_y board_i board_j`, with `#`
// comments.
inline CornerSet load_corners(const std::string& path, double pitch) {
    std::ifstream f(path);
    if (!f) throw IoError("corners: cannot open: " + path);
    CornerSet cs;
    cs.pitch = pitch;
    std::string line;
    while (std::getline(f, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream is(line);
        Corner c;
        if (is >> c.obs_x >> c.obs_y >> c.board_i >> c.board_j) cs.corners.push_back(c);
    }
    return cs;
}

inline SpectralCube dark_field_subtract(const SpectralCube& lit, const SpectralCube& dark) {
    require(lit.width == dark.width && lit.height == dark.height && lit.bands == dark.bands,
            "dark_field_subtract: dimension mismatch");
    SpectralCube out(lit.width, lit.height, lit.wavelengths);
    for (size_t i = 0; i < lit.data.size(); ++i)
        out.data[i] = clamp(lit.data[i] - dark.data[i], 0.0f, 1.0f);
    return out;
}

inline std::pair<SpectralCube, ValidityMask> flat_field_correct(const SpectralCube& raw,
                                                                const FlatFieldRef& ref) {
    require(raw.width == ref.white.width && raw.height == ref.white.height &&
                raw.bands == ref.white.bands,
            "flat_field_correct: dimension mismatch");
    require(all_finite(ref.white.data), "flat_field_correct: non-finite reference");
    SpectralCube out(raw.width, raw.height, raw.wavelengths);
    ValidityMask mask(raw.width, raw.height, raw.bands);
    for (size_t i = 0; i < raw.data.size(); ++i) {
        double w = ref.white.data[i];
        if (w > ref.epsilon) {
            out.data[i] = static_cast<float>(
                clamp(static_cast<double>(raw.data[i]) / w * ref.scale, 0.0, 1.0));
        } else {
            out.data[i] = 0.0f;
            mask.bits[i] = 0;
        }
    }
    return {std::move(out), std::move(mask)};
}

namespace detail {

// Gaussian elimination with partial pivoting; A is n x n row-major.
inline std::vector<double> solve_linear(std::vector<double> A, std::vector<double> b, int n) {
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(A[static_cast<size_t>(r) * n + col]) >
                std::abs(A[static_cast<size_t>(piv) * n + col]))
                piv = r;
        if (std::abs(A[static_cast<size_t>(piv) * n + col]) < 1e-14)
            throw ValidationError("solve_linear: singular system");
        if (piv != col) {
            for (int c = 0; c < n; ++c)
                std::swap(A[static_cast<size_t>(piv) * n + c], A[static_cast<size_t>(col) * n + c]);
            std::swap(b[static_cast<size_t>(piv)], b[static_cast<size_t>(col)]);
        }
        for (int r = col + 1; r < n; ++r) {
            double f = A[static_cast<size_t>(r) * n + col] / A[static_cast<size_t>(col) * n + col];
            if (f == 0) continue;
            for (int c = col; c < n; ++c)
                A[static_cast<size_t>(r) * n + c] -= f * A[static_cast<size_t>(col) * n + c];
            b[static_cast<size_t>(r)] -= f * b[static_cast<size_t>(col)];
        }
    }
    std::vector<double> x(static_cast<size_t>(n));
    for (int r = n - 1; r >= 0; --r) {
        double acc = b[static_cast<size_t>(r)];
        for (int c = r + 1; c < n; ++c) acc -= A[static_cast<size_t>(r) * n + c] * x[static_cast<size_t>(c)];
        x[static_cast<size_t>(r)] = acc / A[static_cast<size_t>(r) * n + r];
    }
    return x;
}

// Least-squares 2x3 affine from point pairs (src -> dst).
inline Affine2 fit_affine(const std::vector<Vec2>& src, const std::vector<Vec2>& dst) {
    // Normal equations for x and y rows share the same 3x3 Gram matrix.
    std::vector<double> G(9, 0.0), bx(3, 0.0), by(3, 0.0);
    for (size_t i = 0; i < src.size(); ++i) {
        double row[3] = {src[i].x, src[i].y, 1.0};
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) G[static_cast<size_t>(a) * 3 + b] += row[a] * row[b];
            bx[static_cast<size_t>(a)] += row[a] * dst[i].x;
            by[static_cast<size_t>(a)] += row[a] * dst[i].y;
        }
    }
    auto xr = solve_linear(G, bx, 3);
    auto yr = solve_linear(G, by, 3);
    Affine2 A;
    A.m = {xr[0], xr[1], xr[2], yr[0], yr[1], yr[2]};
    return A;
}

}  // namespace detail

struct FitResult {
    DistortionModel model;
    double rms = 0;  // reprojection residual over the training corners, px
    int iterations = 0;
};

// Mean squared reprojection error of the corners under a candidate model.
// Board lattice points live in the rectified output frame (pitch * (i, j));
// prediction runs output -> undistorted -> observed.
inline double reprojection_rms(const DistortionModel& model, const CornerSet& corners) {
    require(!corners.corners.empty(), "reprojection_rms: no corners");
    Affine2 out_to_und = model.affine.inverse();
    double acc = 0;
    for (const Corner& c : corners.corners) {
        Vec2 b{c.board_i * corners.pitch, c.board_j * corners.pitch};
        Vec2 d = model.distort_point(out_to_und.apply(b));
        double ex = d.x - c.obs_x, ey = d.y - c.obs_y;
        acc += ex * ex + ey * ey;
    }
    return std::sqrt(acc / (2.0 * static_cast<double>(corners.corners.size())));
}

// Gauss-Newton over (k1, k2, cx, cy, G[6]) where G maps the rectified output
// frame to the undistorted frame. Numeric central-difference Jacobian, at most
// 200 iterations, converged when the step norm drops below 1e-10. The stored
// affine is G^-1 (undistorted -> output).
inline FitResult fit_distortion(const CornerSet& corners, double radius_norm) {
    const auto& cs = corners.corners;
    require(cs.size() >= 6, "fit_distortion: need at least 6 correspondences");
    require(radius_norm > 0, "fit_distortion: radius_norm must be positive");

    std::vector<Vec2> board, obs;
    for (const Corner& c : cs) {
        board.push_back({c.board_i * corners.pitch, c.board_j * corners.pitch});
        obs.push_back({c.obs_x, c.obs_y});
    }

    // Collinear board coordinates leave the affine unconstrained.
    {
        double sx = 0, sy = 0;
        for (auto& b : board) sx += b.x, sy += b.y;
        sx /= static_cast<double>(board.size());
        sy /= static_cast<double>(board.size());
        double sxx = 0, sxy = 0, syy = 0;
        for (auto& b : board) {
            sxx += (b.x - sx) * (b.x - sx);
            sxy += (b.x - sx) * (b.y - sy);
            syy += (b.y - sy) * (b.y - sy);
        }
        double det = sxx * syy - sxy * sxy;
        require(det > 1e-9 * (sxx + syy) * (sxx + syy) + 1e-12,
                "fit_distortion: degenerate (collinear) board coordinates");
    }

    // theta = [k1, k2, cx, cy, g0..g5]
    Affine2 G0 = detail::fit_affine(board, obs);
    double mx = 0, my = 0;
    for (auto& o : obs) mx += o.x, my += o.y;
    mx /= static_cast<double>(obs.size());
    my /= static_cast<double>(obs.size());
    std::array<double, 10> theta{0, 0, mx, my, G0.m[0], G0.m[1], G0.m[2], G0.m[3], G0.m[4], G0.m[5]};

    auto residuals = [&](const std::array<double, 10>& t, std::vector<double>& r) {
        DistortionModel m;
        m.k1 = t[0];
        m.k2 = t[1];
        m.cx = t[2];
        m.cy = t[3];
        m.radius_norm = radius_norm;
        Affine2 G;
        G.m = {t[4], t[5], t[6], t[7], t[8], t[9]};
        r.resize(board.size() * 2);
        for (size_t i = 0; i < board.size(); ++i) {
            Vec2 d = m.distort_point(G.apply(board[i]));
            r[2 * i] = d.x - obs[i].x;
            r[2 * i + 1] = d.y - obs[i].y;
        }
    };

    const int np = 10;
    const size_t nr = board.size() * 2;
    std::vector<double> r(nr), rp(nr), rm(nr), J(nr * np);
    FitResult fit;
    int it = 0;
    for (; it < 200; ++it) {
        residuals(theta, r);
        for (int p = 0; p < np; ++p) {
            double h = std::max(1e-7, 1e-7 * std::abs(theta[static_cast<size_t>(p)]));
            auto tp = theta, tm = theta;
            tp[static_cast<size_t>(p)] += h;
            tm[static_cast<size_t>(p)] -= h;
            residuals(tp, rp);
            residuals(tm, rm);
            for (size_t i = 0; i < nr; ++i)
                J[i * np + static_cast<size_t>(p)] = (rp[i] - rm[i]) / (2.0 * h);
        }
        // Normal equations with a tiny ridge: when k1=k2=0 the center has no
        // gradient and JtJ is rank-deficient.
        std::vector<double> JtJ(static_cast<size_t>(np) * np, 0.0), Jtr(np, 0.0);
        for (size_t i = 0; i < nr; ++i)
            for (int a = 0; a < np; ++a) {
                double ja = J[i * np + static_cast<size_t>(a)];
                if (ja == 0) continue;
                for (int b = 0; b < np; ++b)
                    JtJ[static_cast<size_t>(a) * np + b] += ja * J[i * np + static_cast<size_t>(b)];
                Jtr[static_cast<size_t>(a)] += ja * r[i];
            }
        for (int a = 0; a < np; ++a) JtJ[static_cast<size_t>(a) * np + a] += 1e-9;
        std::vector<double> step;
        try {
            step = detail::solve_linear(JtJ, Jtr, np);
        } catch (const ValidationError&) {
            throw ValidationError("fit_distortion: normal equations singular");
        }
        double norm = 0;
        for (int p = 0; p < np; ++p) {
            theta[static_cast<size_t>(p)] -= step[static_cast<size_t>(p)];
            norm += step[static_cast<size_t>(p)] * step[static_cast<size_t>(p)];
        }
        if (std::sqrt(norm) < 1e-10) break;
    }
    require(it < 200, "fit_distortion: no convergence after max iterations");

    DistortionModel m;
    m.k1 = theta[0];
    m.k2 = theta[1];
    m.cx = theta[2];
    m.cy = theta[3];
    m.radius_norm = radius_norm;
    Affine2 G;
    G.m = {theta[4], theta[5], theta[6], theta[7], theta[8], theta[9]};
    m.affine = G.inverse();
    fit.model = m;
    fit.iterations = it;
    fit.rms = reprojection_rms(m, corners);
    return fit;
}

// Resample into the rectified output frame: output pixel -> undistorted
// (inverse affine) -> observed (forward radial), bilinear lookup. Output
// pixels whose source sample falls outside the input, or touches an invalid
// input pixel, come out invalid with value 0.
inline std::pair<SpectralCube, ValidityMask> undistort(const SpectralCube& cube,
                                                       const DistortionModel& model,
                                                       const ValidityMask& mask) {
    require(mask.matches(cube), "undistort: mask dimensions mismatch");
    SpectralCube out(cube.width, cube.height, cube.wavelengths);
    ValidityMask omask(cube.width, cube.height, mask.bands, false);
    Affine2 out_to_und = model.affine.inverse();

    const int W = cube.width, H = cube.height;
    parallel_for(H, [&](std::int64_t yy) {
        const int y = static_cast<int>(yy);
        for (int x = 0; x < W; ++x) {
            Vec2 d = model.distort_point(out_to_und.apply({static_cast<double>(x), static_cast<double>(y)}));
            if (!(d.x >= 0 && d.x <= W - 1 && d.y >= 0 && d.y <= H - 1)) continue;
            int x0 = static_cast<int>(std::floor(d.x));
            int y0 = static_cast<int>(std::floor(d.y));
            int x1 = std::min(x0 + 1, W - 1);
            int y1 = std::min(y0 + 1, H - 1);
            double fx = d.x - x0, fy = d.y - y0;
            for (int b = 0; b < cube.bands; ++b) {
                int mb = mask.bands == 1 ? 0 : b;
                bool ok = mask.get(x0, y0, mb) && mask.get(x1, y0, mb) &&
                          mask.get(x0, y1, mb) && mask.get(x1, y1, mb);
                if (!ok) continue;
                double v00 = cube.at(x0, y0, b), v10 = cube.at(x1, y0, b);
                double v01 = cube.at(x0, y1, b), v11 = cube.at(x1, y1, b);
                double v = (1 - fy) * ((1 - fx) * v00 + fx * v10) +
                           fy * ((1 - fx) * v01 + fx * v11);
                out.at(x, y, b) = static_cast<float>(clamp(v, 0.0, 1.0));
                omask.set(x, y, mb, true);
            }
        }
    });
    return {std::move(out), std::move(omask)};
}

}  // namespace spectraforge
