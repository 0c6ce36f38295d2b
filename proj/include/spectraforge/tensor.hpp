#pragma once

// Minimal reverse-mode autodiff over dense NCHW float tensors: exactly the op
// set the encoder-decoder needs. Graphs are built per forward pass; leaves
// are inputs or parameters, every op node stores a closure that scatters its
// gradient into its parents. Forward values are checked for NaN/Inf after
// every op so divergence surfaces at the op that produced it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "spectraforge/common.hpp"
#include "spectraforge/rng.hpp"

namespace spectraforge {

struct TensorShape {
    int n = 1, c = 1, h = 1, w = 1;

    size_t numel() const {
        return static_cast<size_t>(n) * c * h * w;
    }
    bool operator==(const TensorShape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
               std::to_string(w) + ")";
    }
};

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

struct Tensor {
    TensorShape shape;
    std::vector<float> val;
    std::vector<float> grad;  // allocated on demand by backward()
    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backfn;  // scatters this->grad into parents
    bool is_param = false;

    explicit Tensor(TensorShape s) : shape(s), val(s.numel(), 0.0f) {}

    void ensure_grad() {
        if (grad.size() != val.size()) grad.assign(val.size(), 0.0f);
    }
    float* plane(int n_, int c_) {
        return val.data() + (static_cast<size_t>(n_) * shape.c + c_) * shape.h * shape.w;
    }
    const float* plane(int n_, int c_) const {
        return val.data() + (static_cast<size_t>(n_) * shape.c + c_) * shape.h * shape.w;
    }
    float* gplane(int n_, int c_) {
        return grad.data() + (static_cast<size_t>(n_) * shape.c + c_) * shape.h * shape.w;
    }
};

inline TensorPtr make_tensor(TensorShape s) { return std::make_shared<Tensor>(s); }

inline TensorPtr make_input(TensorShape s, const std::vector<float>& data) {
    require(data.size() == s.numel(), "make_input: data size does not match shape " + s.str());
    auto t = make_tensor(s);
    t->val = data;
    return t;
}

// He-uniform: limit sqrt(6 / fan_in).
inline TensorPtr make_param(TensorShape s, Rng& rng, int fan_in) {
    require(fan_in > 0, "make_param: fan_in must be positive");
    auto t = make_tensor(s);
    t->is_param = true;
    const double limit = std::sqrt(6.0 / fan_in);
    for (float& v : t->val) v = static_cast<float>(rng.uniform(-limit, limit));
    return t;
}

inline void check_finite(const Tensor& t, const char* op) {
    for (float v : t.val)
        if (!std::isfinite(v))
            throw ValidationError(std::string(op) + ": non-finite value in forward output");
}

// Reverse topological order via iterative post-order DFS.
inline std::vector<Tensor*> topo_order(const TensorPtr& root) {
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // parents before children; walk backwards to backprop
}

inline void backward(const TensorPtr& loss) {
    require(loss->shape.numel() == 1, "backward: root must be scalar, got " + loss->shape.str());
    auto order = topo_order(loss);
    for (Tensor* t : order) {
        t->ensure_grad();
        std::fill(t->grad.begin(), t->grad.end(), 0.0f);
    }
    loss->grad[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backfn) (*it)->backfn(**it);
}

// y = x * k + bias, odd square kernel, same padding, stride 1.
inline TensorPtr conv2d(const TensorPtr& x, const TensorPtr& k, const TensorPtr& bias) {
    const int N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
    const int F = k->shape.n, KC = k->shape.c, KH = k->shape.h, KW = k->shape.w;
    require(KC == C, "conv2d: kernel channels " + std::to_string(KC) + " != input channels " +
                         std::to_string(C));
    require(KH == KW && KH % 2 == 1, "conv2d: kernel must be odd square, got " + k->shape.str());
    require(bias->shape.numel() == static_cast<size_t>(F), "conv2d: bias size != filter count");
    const int P = KH / 2;

    auto y = make_tensor({N, F, H, W});
    y->parents = {x, k, bias};

    // Shifted-row accumulation: for each kernel tap, add w * (source row
    // shifted by dx) into the output row. The inner loop is contiguous.
    parallel_for(static_cast<std::int64_t>(N) * F, [&](std::int64_t nf) {
        const int n = static_cast<int>(nf) / F, f = static_cast<int>(nf) % F;
        float* out = y->plane(n, f);
        const float b = bias->val[static_cast<size_t>(f)];
        for (size_t i = 0; i < static_cast<size_t>(H) * W; ++i) out[i] = b;
        for (int c = 0; c < C; ++c) {
            const float* src = x->plane(n, c);
            const float* kw = k->val.data() + (static_cast<size_t>(f) * C + c) * KH * KW;
            for (int dy = 0; dy < KH; ++dy) {
                const int sy0 = std::max(0, P - dy), sy1 = std::min(H, H + P - dy);
                for (int dx = 0; dx < KW; ++dx) {
                    const float wv = kw[dy * KW + dx];
                    if (wv == 0.0f) continue;
                    const int x0 = std::max(0, P - dx), x1 = std::min(W, W + P - dx);
                    for (int yy = sy0; yy < sy1; ++yy) {
                        float* orow = out + static_cast<size_t>(yy) * W;
                        const float* srow =
                            src + static_cast<size_t>(yy + dy - P) * W + (dx - P);
                        for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * srow[xx];
                    }
                }
            }
        }
    });
    check_finite(*y, "conv2d");

    y->backfn = [N, C, H, W, F, KH, KW, P](Tensor& self) {
        Tensor& xt = *self.parents[0];
        Tensor& kt = *self.parents[1];
        Tensor& bt = *self.parents[2];

        // dX: transposed correlation, gathered per input plane.
        parallel_for(static_cast<std::int64_t>(N) * C, [&](std::int64_t nc) {
            const int n = static_cast<int>(nc) / C, c = static_cast<int>(nc) % C;
            float* dst = xt.gplane(n, c);
            for (int f = 0; f < F; ++f) {
                const float* g = self.grad.data() +
                                 (static_cast<size_t>(n) * F + f) * H * W;
                const float* kw = kt.val.data() + (static_cast<size_t>(f) * C + c) * KH * KW;
                for (int dy = 0; dy < KH; ++dy) {
                    const int sy0 = std::max(0, P - dy), sy1 = std::min(H, H + P - dy);
                    for (int dx = 0; dx < KW; ++dx) {
                        const float wv = kw[dy * KW + dx];
                        if (wv == 0.0f) continue;
                        const int x0 = std::max(0, P - dx), x1 = std::min(W, W + P - dx);
                        for (int yy = sy0; yy < sy1; ++yy) {
                            const float* grow = g + static_cast<size_t>(yy) * W;
                            float* drow =
                                dst + static_cast<size_t>(yy + dy - P) * W + (dx - P);
                            for (int xx = x0; xx < x1; ++xx) drow[xx] += wv * grow[xx];
                        }
                    }
                }
            }
        });

        // dK: per (f, c) slice, shifted-row dot products summed over batch.
        parallel_for(static_cast<std::int64_t>(F) * C, [&](std::int64_t fc) {
            const int f = static_cast<int>(fc) / C, c = static_cast<int>(fc) % C;
            float* dk = kt.grad.data() + (static_cast<size_t>(f) * C + c) * KH * KW;
            for (int n = 0; n < N; ++n) {
                const float* src = xt.plane(n, c);
                const float* g = self.grad.data() + (static_cast<size_t>(n) * F + f) * H * W;
                for (int dy = 0; dy < KH; ++dy) {
                    const int sy0 = std::max(0, P - dy), sy1 = std::min(H, H + P - dy);
                    for (int dx = 0; dx < KW; ++dx) {
                        const int x0 = std::max(0, P - dx), x1 = std::min(W, W + P - dx);
                        double acc = 0;
                        for (int yy = sy0; yy < sy1; ++yy) {
                            const float* grow = g + static_cast<size_t>(yy) * W;
                            const float* srow =
                                src + static_cast<size_t>(yy + dy - P) * W + (dx - P);
                            for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * srow[xx];
                        }
                        dk[dy * KW + dx] += static_cast<float>(acc);
                    }
                }
            }
        });

        // dBias.
        for (int f = 0; f < F; ++f) {
            double acc = 0;
            for (int n = 0; n < N; ++n) {
                const float* g = self.grad.data() + (static_cast<size_t>(n) * F + f) * H * W;
                for (size_t i = 0; i < static_cast<size_t>(H) * W; ++i) acc += g[i];
            }
            bt.grad[static_cast<size_t>(f)] += static_cast<float>(acc);
        }
    };
    return y;
}

// 2x2 max pooling, stride 2; dims must be even. Ties route to the first
// maximum in (dy, dx) scan order so the subgradient is deterministic.
inline TensorPtr maxpool2(const TensorPtr& x) {
    const int N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
    require(H % 2 == 0 && W % 2 == 0, "maxpool2: dims must be even, got " + x->shape.str());
    const int OH = H / 2, OW = W / 2;
    auto y = make_tensor({N, C, OH, OW});
    y->parents = {x};

    auto arg = std::make_shared<std::vector<std::int32_t>>(y->shape.numel());
    parallel_for(static_cast<std::int64_t>(N) * C, [&](std::int64_t nc) {
        const int n = static_cast<int>(nc) / C, c = static_cast<int>(nc) % C;
        const float* src = x->plane(n, c);
        float* out = y->plane(n, c);
        std::int32_t* am = arg->data() + (static_cast<size_t>(n) * C + c) * OH * OW;
        for (int oy = 0; oy < OH; ++oy)
            for (int ox = 0; ox < OW; ++ox) {
                float best = -std::numeric_limits<float>::infinity();
                std::int32_t bi = 0;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int sy = 2 * oy + dy, sx = 2 * ox + dx;
                        const float v = src[static_cast<size_t>(sy) * W + sx];
                        if (v > best) {
                            best = v;
                            bi = static_cast<std::int32_t>(sy) * W + sx;
                        }
                    }
                out[static_cast<size_t>(oy) * OW + ox] = best;
                am[static_cast<size_t>(oy) * OW + ox] = bi;
            }
    });
    check_finite(*y, "maxpool2");

    y->backfn = [N, C, OH, OW, arg](Tensor& self) {
        Tensor& xt = *self.parents[0];
        parallel_for(static_cast<std::int64_t>(N) * C, [&](std::int64_t nc) {
            const int n = static_cast<int>(nc) / C, c = static_cast<int>(nc) % C;
            float* dst = xt.gplane(n, c);
            const float* g = self.grad.data() + (static_cast<size_t>(n) * C + c) * OH * OW;
            const std::int32_t* am = arg->data() + (static_cast<size_t>(n) * C + c) * OH * OW;
            for (size_t i = 0; i < static_cast<size_t>(OH) * OW; ++i)
                dst[am[i]] += g[i];
        });
    };
    return y;
}

// Bilinear resize with half-pixel centers, edges clamped. Constant in,
// constant out: the four tap weights always sum to 1.
inline TensorPtr bilinear_resize(const TensorPtr& x, int oh, int ow) {
    const int N = x->shape.n, C = x->shape.c, H = x->shape.h, W = x->shape.w;
    require(oh > 0 && ow > 0, "bilinear_resize: target dims must be positive");
    auto y = make_tensor({N, C, oh, ow});
    y->parents = {x};

    struct Tap {
        int i0, i1;
        float w1;  // weight of i1; i0 gets 1 - w1
    };
    auto make_taps = [](int in, int out) {
        std::vector<Tap> taps(static_cast<size_t>(out));
        const double s = static_cast<double>(in) / out;
        for (int o = 0; o < out; ++o) {
            double f = clamp((o + 0.5) * s - 0.5, 0.0, static_cast<double>(in - 1));
            int i0 = static_cast<int>(f);
            int i1 = std::min(i0 + 1, in - 1);
            taps[static_cast<size_t>(o)] = {i0, i1, static_cast<float>(f - i0)};
        }
        return taps;
    };
    auto tx = std::make_shared<std::vector<Tap>>(make_taps(W, ow));
    auto ty = std::make_shared<std::vector<Tap>>(make_taps(H, oh));

    parallel_for(static_cast<std::int64_t>(N) * C, [&](std::int64_t nc) {
        const int n = static_cast<int>(nc) / C, c = static_cast<int>(nc) % C;
        const float* src = x->plane(n, c);
        float* out = y->plane(n, c);
        for (int oy = 0; oy < oh; ++oy) {
            const Tap& tyv = (*ty)[static_cast<size_t>(oy)];
            const float* r0 = src + static_cast<size_t>(tyv.i0) * W;
            const float* r1 = src + static_cast<size_t>(tyv.i1) * W;
            for (int ox = 0; ox < ow; ++ox) {
                const Tap& txv = (*tx)[static_cast<size_t>(ox)];
                const float top = r0[txv.i0] * (1.0f - txv.w1) + r0[txv.i1] * txv.w1;
                const float bot = r1[txv.i0] * (1.0f - txv.w1) + r1[txv.i1] * txv.w1;
                out[static_cast<size_t>(oy) * ow + ox] = top * (1.0f - tyv.w1) + bot * tyv.w1;
            }
        }
    });
    check_finite(*y, "bilinear_resize");

    y->backfn = [N, C, H, W, oh, ow, tx, ty](Tensor& self) {
        Tensor& xt = *self.parents[0];
        // Scatter-add collides across output pixels, so accumulate per input
        // plane sequentially; plane pairs stay disjoint.
        parallel_for(static_cast<std::int64_t>(N) * C, [&](std::int64_t nc) {
            const int n = static_cast<int>(nc) / C, c = static_cast<int>(nc) % C;
            float* dst = xt.gplane(n, c);
            const float* g = self.grad.data() + (static_cast<size_t>(n) * C + c) * oh * ow;
            for (int oy = 0; oy < oh; ++oy) {
                const Tap& tyv = (*ty)[static_cast<size_t>(oy)];
                float* d0 = dst + static_cast<size_t>(tyv.i0) * W;
                float* d1 = dst + static_cast<size_t>(tyv.i1) * W;
                for (int ox = 0; ox < ow; ++ox) {
                    const Tap& txv = (*tx)[static_cast<size_t>(ox)];
                    const float gv = g[static_cast<size_t>(oy) * ow + ox];
                    d0[txv.i0] += gv * (1.0f - tyv.w1) * (1.0f - txv.w1);
                    d0[txv.i1] += gv * (1.0f - tyv.w1) * txv.w1;
                    d1[txv.i0] += gv * tyv.w1 * (1.0f - txv.w1);
                    d1[txv.i1] += gv * tyv.w1 * txv.w1;
                }
            }
        });
    };
    return y;
}

inline TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape.n == b->shape.n && a->shape.h == b->shape.h && a->shape.w == b->shape.w,
            "concat_channels: shapes " + a->shape.str() + " vs " + b->shape.str());
    const int N = a->shape.n, H = a->shape.h, W = a->shape.w;
    const int CA = a->shape.c, CB = b->shape.c;
    auto y = make_tensor({N, CA + CB, H, W});
    y->parents = {a, b};
    const size_t plane = static_cast<size_t>(H) * W;
    for (int n = 0; n < N; ++n) {
        std::copy(a->plane(n, 0), a->plane(n, 0) + plane * CA, y->plane(n, 0));
        std::copy(b->plane(n, 0), b->plane(n, 0) + plane * CB, y->plane(n, CA));
    }
    check_finite(*y, "concat_channels");
    y->backfn = [N, CA, CB, plane](Tensor& self) {
        Tensor& at = *self.parents[0];
        Tensor& bt = *self.parents[1];
        for (int n = 0; n < N; ++n) {
            const float* g = self.grad.data() + static_cast<size_t>(n) * (CA + CB) * plane;
            float* ga = at.grad.data() + static_cast<size_t>(n) * CA * plane;
            float* gb = bt.grad.data() + static_cast<size_t>(n) * CB * plane;
            for (size_t i = 0; i < plane * CA; ++i) ga[i] += g[i];
            for (size_t i = 0; i < plane * CB; ++i) gb[i] += g[plane * CA + i];
        }
    };
    return y;
}

inline TensorPtr leaky_relu(const TensorPtr& x, float slope = 0.01f) {
    auto y = make_tensor(x->shape);
    y->parents = {x};
    for (size_t i = 0; i < x->val.size(); ++i) {
        const float v = x->val[i];
        y->val[i] = v > 0.0f ? v : slope * v;
    }
    check_finite(*y, "leaky_relu");
    y->backfn = [slope](Tensor& self) {
        Tensor& xt = *self.parents[0];
        for (size_t i = 0; i < self.grad.size(); ++i)
            xt.grad[i] += self.grad[i] * (xt.val[i] > 0.0f ? 1.0f : slope);
    };
    return y;
}

inline TensorPtr sigmoid(const TensorPtr& x) {
    auto y = make_tensor(x->shape);
    y->parents = {x};
    for (size_t i = 0; i < x->val.size(); ++i)
        y->val[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x->val[i]))));
    check_finite(*y, "sigmoid");
    y->backfn = [](Tensor& self) {
        Tensor& xt = *self.parents[0];
        for (size_t i = 0; i < self.grad.size(); ++i) {
            const float s = self.val[i];
            xt.grad[i] += self.grad[i] * s * (1.0f - s);
        }
    };
    return y;
}

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape == b->shape, "add: shapes " + a->shape.str() + " vs " + b->shape.str());
    auto y = make_tensor(a->shape);
    y->parents = {a, b};
    for (size_t i = 0; i < y->val.size(); ++i) y->val[i] = a->val[i] + b->val[i];
    check_finite(*y, "add");
    y->backfn = [](Tensor& self) {
        Tensor& at = *self.parents[0];
        Tensor& bt = *self.parents[1];
        for (size_t i = 0; i < self.grad.size(); ++i) {
            at.grad[i] += self.grad[i];
            bt.grad[i] += self.grad[i];
        }
    };
    return y;
}

inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    require(a->shape == b->shape, "sub: shapes " + a->shape.str() + " vs " + b->shape.str());
    auto y = make_tensor(a->shape);
    y->parents = {a, b};
    for (size_t i = 0; i < y->val.size(); ++i) y->val[i] = a->val[i] - b->val[i];
    check_finite(*y, "sub");
    y->backfn = [](Tensor& self) {
        Tensor& at = *self.parents[0];
        Tensor& bt = *self.parents[1];
        for (size_t i = 0; i < self.grad.size(); ++i) {
            at.grad[i] += self.grad[i];
            bt.grad[i] -= self.grad[i];
        }
    };
    return y;
}

inline TensorPtr scale(const TensorPtr& x, double factor) {
    auto y = make_tensor(x->shape);
    y->parents = {x};
    const float f = static_cast<float>(factor);
    for (size_t i = 0; i < y->val.size(); ++i) y->val[i] = x->val[i] * f;
    check_finite(*y, "scale");
    y->backfn = [f](Tensor& self) {
        Tensor& xt = *self.parents[0];
        for (size_t i = 0; i < self.grad.size(); ++i) xt.grad[i] += self.grad[i] * f;
    };
    return y;
}

// Adam with bias correction. State buffers live as long as the optimizer.
struct AdamState {
    std::vector<float> m, v;
    std::int64_t t = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline void adam_step(Tensor& param, AdamState& state, const AdamConfig& cfg) {
    require(param.grad.size() == param.val.size(), "adam_step: parameter has no gradient");
    if (state.m.size() != param.val.size()) {
        state.m.assign(param.val.size(), 0.0f);
        state.v.assign(param.val.size(), 0.0f);
        state.t = 0;
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < param.val.size(); ++i) {
        const double g = param.grad[i];
        const double m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        const double v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = static_cast<float>(m);
        state.v[i] = static_cast<float>(v);
        const double mh = m / bc1, vh = v / bc2;
        param.val[i] = static_cast<float>(param.val[i] - cfg.lr * mh / (std::sqrt(vh) + cfg.eps));
    }
}

}  // namespace spectraforge
