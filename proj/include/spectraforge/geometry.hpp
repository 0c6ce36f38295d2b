#pragma once

#include <array>
#include <cmath>

#include "spectraforge/common.hpp"

namespace spectraforge {

struct Vec2 {
    double x = 0, y = 0;
};

// Row-major 2x3: [a b tx; c d ty].
struct Affine2 {
    std::array<double, 6> m{1, 0, 0, 0, 1, 0};

    static Affine2 identity() { return {}; }

    Vec2 apply(Vec2 p) const {
        return {m[0] * p.x + m[1] * p.y + m[2], m[3] * p.x + m[4] * p.y + m[5]};
    }

    // this ∘ other (apply other first).
    Affine2 compose(const Affine2& o) const {
        Affine2 r;
        r.m[0] = m[0] * o.m[0] + m[1] * o.m[3];
        r.m[1] = m[0] * o.m[1] + m[1] * o.m[4];
        r.m[2] = m[0] * o.m[2] + m[1] * o.m[5] + m[2];
        r.m[3] = m[3] * o.m[0] + m[4] * o.m[3];
        r.m[4] = m[3] * o.m[1] + m[4] * o.m[4];
        r.m[5] = m[3] * o.m[2] + m[4] * o.m[5] + m[5];
        return r;
    }

    Affine2 inverse() const {
        double det = m[0] * m[4] - m[1] * m[3];
        require(std::abs(det) > 1e-12, "affine: singular matrix");
        Affine2 r;
        r.m[0] = m[4] / det;
        r.m[1] = -m[1] / det;
        r.m[3] = -m[3] / det;
        r.m[4] = m[0] / det;
        r.m[2] = -(r.m[0] * m[2] + r.m[1] * m[5]);
        r.m[5] = -(r.m[3] * m[2] + r.m[4] * m[5]);
        return r;
    }
};

}  // namespace spectraforge
