#pragma once

// Training losses as scalar graph nodes. All reductions are means over
// mask-valid elements, so magnitudes do not depend on resolution. The two
// delta losses regularize the prediction alone: each element is charged its
// maximum absolute difference against spatial / spectral neighbors, with
// ties routed to the first achieving neighbor in scan order.

#include <cstdint>
#include <vector>

#include "spectraforge/common.hpp"
#include "spectraforge/tensor.hpp"

namespace spectraforge {

// Element validity for loss reductions. Empty = everything valid; a buffer of
// h*w entries broadcasts one spatial mask over batch and channels; a buffer
// of n*c*h*w addresses elements exactly.
struct ElementMask {
    std::vector<std::uint8_t> bits;

    bool valid(int n, int c, int y, int x, const TensorShape& s) const {
        if (bits.empty()) return true;
        const size_t spatial = static_cast<size_t>(s.h) * s.w;
        const size_t at_yx = static_cast<size_t>(y) * s.w + x;
        if (bits.size() == spatial) return bits[at_yx] != 0;
        return bits[(static_cast<size_t>(n) * s.c + c) * spatial + at_yx] != 0;
    }

    void check_size(const TensorShape& s, const char* op) const {
        const size_t spatial = static_cast<size_t>(s.h) * s.w;
        require(bits.empty() || bits.size() == spatial || bits.size() == s.numel(),
                std::string(op) + ": mask size matches neither the spatial plane nor the tensor");
    }
};

struct LossWeights {
    double w_mae = 0;
    double w_mse = 0;
    double w_dpix = 0;
    double w_dband = 0;
    double w_smoothl1 = 0;

    static LossWeights pretrain() { return {1, 1, 4, 4, 0}; }
    static LossWeights main_stage() { return {0, 0, 0, 0, 1}; }
};

namespace detail {

inline float sign_of(float d) { return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f); }

template <typename PerElement>
TensorPtr pointwise_loss(const TensorPtr& pred, const std::vector<float>& gt,
                         const ElementMask& mask, const char* name, PerElement fn) {
    require(gt.size() == pred->shape.numel(), std::string(name) + ": gt size mismatch");
    mask.check_size(pred->shape, name);
    const TensorShape s = pred->shape;
    double acc = 0;
    std::int64_t cnt = 0;
    size_t i = 0;
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x, ++i)
                    if (mask.valid(n, c, y, x, s)) {
                        acc += fn(pred->val[i] - gt[i], false, 0.0);
                        ++cnt;
                    }
    require(cnt > 0, std::string(name) + ": empty mask");
    auto y = make_tensor({1, 1, 1, 1});
    y->val[0] = static_cast<float>(acc / static_cast<double>(cnt));
    check_finite(*y, name);
    y->parents = {pred};
    y->backfn = [gt, mask, cnt, fn](Tensor& self) {
        Tensor& pt = *self.parents[0];
        const TensorShape s = pt.shape;
        const double g = static_cast<double>(self.grad[0]) / static_cast<double>(cnt);
        size_t i = 0;
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int y2 = 0; y2 < s.h; ++y2)
                    for (int x = 0; x < s.w; ++x, ++i)
                        if (mask.valid(n, c, y2, x, s))
                            pt.grad[i] += static_cast<float>(fn(pt.val[i] - gt[i], true, g));
    };
    return y;
}

}  // namespace detail

inline TensorPtr loss_mae(const TensorPtr& pred, const std::vector<float>& gt,
                          const ElementMask& mask = {}) {
    return detail::pointwise_loss(pred, gt, mask, "loss_mae",
                                  [](float d, bool back, double g) -> double {
                                      if (!back) return std::abs(static_cast<double>(d));
                                      return g * detail::sign_of(d);
                                  });
}

inline TensorPtr loss_mse(const TensorPtr& pred, const std::vector<float>& gt,
                          const ElementMask& mask = {}) {
    return detail::pointwise_loss(pred, gt, mask, "loss_mse",
                                  [](float d, bool back, double g) -> double {
                                      if (!back) return static_cast<double>(d) * d;
                                      return g * 2.0 * d;
                                  });
}

inline TensorPtr loss_smooth_l1(const TensorPtr& pred, const std::vector<float>& gt,
                                const ElementMask& mask = {}, double beta = 1.0) {
    require(beta > 0, "loss_smooth_l1: beta must be positive");
    return detail::pointwise_loss(
        pred, gt, mask, "loss_smooth_l1", [beta](float d, bool back, double g) -> double {
            const double ad = std::abs(static_cast<double>(d));
            if (!back) return ad < beta ? 0.5 * d * d / beta : ad - 0.5 * beta;
            return g * (ad < beta ? d / beta : static_cast<double>(detail::sign_of(d)));
        });
}

// Mean over elements of the max absolute difference against the 4-neighbor
// pixels (same band). Neighbor order: up, left, right, down. Elements with no
// valid neighbor pair are not counted.
inline TensorPtr loss_delta_pixel(const TensorPtr& pred, const ElementMask& mask = {}) {
    const TensorShape s = pred->shape;
    require(s.h >= 2 && s.w >= 2, "loss_delta_pixel: spatial dims must be at least 2x2");
    mask.check_size(s, "loss_delta_pixel");

    static constexpr int NB[4][2] = {{-1, 0}, {0, -1}, {0, 1}, {1, 0}};  // (dy, dx)
    // Captured by value: the closure outlives this call as the node's backfn.
    auto scan = [s, mask](const float* val, float* grad, double gscale) -> std::pair<double, std::int64_t> {
        double acc = 0;
        std::int64_t cnt = 0;
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const size_t base = (static_cast<size_t>(n) * s.c + c) * s.h * s.w;
                for (int y = 0; y < s.h; ++y)
                    for (int x = 0; x < s.w; ++x) {
                        if (!mask.valid(n, c, y, x, s)) continue;
                        const size_t i = base + static_cast<size_t>(y) * s.w + x;
                        float best = -1.0f;
                        size_t best_j = 0;
                        for (const auto& d : NB) {
                            const int ny = y + d[0], nx = x + d[1];
                            if (ny < 0 || ny >= s.h || nx < 0 || nx >= s.w) continue;
                            if (!mask.valid(n, c, ny, nx, s)) continue;
                            const size_t j = base + static_cast<size_t>(ny) * s.w + nx;
                            const float ad = std::abs(val[i] - val[j]);
                            if (ad > best) {
                                best = ad;
                                best_j = j;
                            }
                        }
                        if (best < 0.0f) continue;
                        ++cnt;
                        if (!grad) {
                            acc += best;
                        } else {
                            const float sg = detail::sign_of(val[i] - val[best_j]);
                            grad[i] += static_cast<float>(gscale * sg);
                            grad[best_j] -= static_cast<float>(gscale * sg);
                        }
                    }
            }
        return {acc, cnt};
    };

    auto [acc, cnt] = scan(pred->val.data(), nullptr, 0.0);
    require(cnt > 0, "loss_delta_pixel: no valid neighbor pairs");
    auto y = make_tensor({1, 1, 1, 1});
    y->val[0] = static_cast<float>(acc / static_cast<double>(cnt));
    check_finite(*y, "loss_delta_pixel");
    y->parents = {pred};
    y->backfn = [scan, cnt](Tensor& self) {
        Tensor& pt = *self.parents[0];
        scan(pt.val.data(), pt.grad.data(),
             static_cast<double>(self.grad[0]) / static_cast<double>(cnt));
    };
    return y;
}

// Mean over elements of the max absolute difference against the adjacent
// bands of the same pixel. Lower band checked first on ties.
inline TensorPtr loss_delta_bands(const TensorPtr& pred, const ElementMask& mask = {}) {
    const TensorShape s = pred->shape;
    require(s.c >= 2, "loss_delta_bands: needs at least 2 bands");
    mask.check_size(s, "loss_delta_bands");

    // Captured by value: the closure outlives this call as the node's backfn.
    auto scan = [s, mask](const float* val, float* grad, double gscale) -> std::pair<double, std::int64_t> {
        const size_t plane = static_cast<size_t>(s.h) * s.w;
        double acc = 0;
        std::int64_t cnt = 0;
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < s.h; ++y)
                    for (int x = 0; x < s.w; ++x) {
                        if (!mask.valid(n, c, y, x, s)) continue;
                        const size_t at_yx = static_cast<size_t>(y) * s.w + x;
                        const size_t i = (static_cast<size_t>(n) * s.c + c) * plane + at_yx;
                        float best = -1.0f;
                        size_t best_j = 0;
                        for (int dc = -1; dc <= 1; dc += 2) {
                            const int nc2 = c + dc;
                            if (nc2 < 0 || nc2 >= s.c) continue;
                            if (!mask.valid(n, nc2, y, x, s)) continue;
                            const size_t j = (static_cast<size_t>(n) * s.c + nc2) * plane + at_yx;
                            const float ad = std::abs(val[i] - val[j]);
                            if (ad > best) {
                                best = ad;
                                best_j = j;
                            }
                        }
                        if (best < 0.0f) continue;
                        ++cnt;
                        if (!grad) {
                            acc += best;
                        } else {
                            const float sg = detail::sign_of(val[i] - val[best_j]);
                            grad[i] += static_cast<float>(gscale * sg);
                            grad[best_j] -= static_cast<float>(gscale * sg);
                        }
                    }
        return {acc, cnt};
    };

    auto [acc, cnt] = scan(pred->val.data(), nullptr, 0.0);
    require(cnt > 0, "loss_delta_bands: no valid elements");
    auto y = make_tensor({1, 1, 1, 1});
    y->val[0] = static_cast<float>(acc / static_cast<double>(cnt));
    check_finite(*y, "loss_delta_bands");
    y->parents = {pred};
    y->backfn = [scan, cnt](Tensor& self) {
        Tensor& pt = *self.parents[0];
        scan(pt.val.data(), pt.grad.data(),
             static_cast<double>(self.grad[0]) / static_cast<double>(cnt));
    };
    return y;
}

// Weighted sum of the enabled components. Zero-weight components are not
// evaluated. With delta_vs_gt the two delta losses regularize pred - gt
// instead of pred itself.
inline TensorPtr composite_loss(const TensorPtr& pred, const std::vector<float>& gt,
                                const ElementMask& mask, const LossWeights& w, double beta = 1.0,
                                bool delta_vs_gt = false) {
    require(w.w_mae >= 0 && w.w_mse >= 0 && w.w_dpix >= 0 && w.w_dband >= 0 && w.w_smoothl1 >= 0,
            "composite_loss: weights must be non-negative");
    require(w.w_mae + w.w_mse + w.w_dpix + w.w_dband + w.w_smoothl1 > 0,
            "composite_loss: at least one weight must be positive");

    TensorPtr total;
    auto accumulate = [&total](TensorPtr term) {
        total = total ? add(total, term) : std::move(term);
    };

    if (w.w_mae > 0) accumulate(scale(loss_mae(pred, gt, mask), w.w_mae));
    if (w.w_mse > 0) accumulate(scale(loss_mse(pred, gt, mask), w.w_mse));
    if (w.w_dpix > 0 || w.w_dband > 0) {
        TensorPtr target = pred;
        if (delta_vs_gt) target = sub(pred, make_input(pred->shape, gt));
        if (w.w_dpix > 0) accumulate(scale(loss_delta_pixel(target, mask), w.w_dpix));
        if (w.w_dband > 0) accumulate(scale(loss_delta_bands(target, mask), w.w_dband));
    }
    if (w.w_smoothl1 > 0) accumulate(scale(loss_smooth_l1(pred, gt, mask, beta), w.w_smoothl1));
    return total;
}

}  // namespace spectraforge
