#pragma once

#include "glvd/tensor/rng.hpp"
#include "glvd/tensor/tensor.hpp"

namespace glvd {

// x[M,K] * w[O,K]^T + b  -> [M,O].  b may be an undefined Tensor (no bias).
// Row o of the output is b[o] plus a dot_k over k in ascending order; any
// per-row shortcut that uses dot_k on the same data is bitwise identical.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {}) {
    GLVD_CHECK(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1),
               "linear: ", shape_str(x.shape()), " x ", shape_str(w.shape()));
    const int M = x.dim(0), K = x.dim(1), O = w.dim(0);
    if (b.defined())
        GLVD_CHECK(b.rank() == 1 && b.dim(0) == O, "linear: bad bias shape");
    std::vector<double> v(static_cast<std::size_t>(M) * O, 0.0);
    if (b.defined())
        for (int i = 0; i < M; ++i)
            std::memcpy(&v[static_cast<std::size_t>(i) * O], b.data(),
                        static_cast<std::size_t>(O) * sizeof(double));
    gemm_nt(M, O, K, x.data(), w.data(), v.data());
    auto xn = x.node(), wn = w.node();
    auto bn = b.defined() ? b.node() : nullptr;
    return make_op({M, O}, std::move(v), {x, w, b},
                   [xn, wn, bn, M, K, O](TensorNode& o) {
        if (xn->requires_grad) {
            xn->ensure_grad();  // dX = dOut * W
            gemm_nn(M, K, O, o.grad.data(), wn->val.data(), xn->grad.data());
        }
        if (wn->requires_grad) {
            wn->ensure_grad();  // dW = dOut^T * X
            gemm_tn(O, K, M, o.grad.data(), xn->val.data(), wn->grad.data());
        }
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < O; ++j)
                    bn->grad[static_cast<std::size_t>(j)] +=
                        o.grad[static_cast<std::size_t>(i) * O + j];
        }
    });
}

// Linear layer whose effective weight rows are direction v / |v| times a
// learned per-row scale g, so the effective row norms equal |g|.
inline Tensor weight_norm_linear(const Tensor& x, const Tensor& v,
                                 const Tensor& g, const Tensor& b = {}) {
    return linear(x, row_scale(v, div(g, row_norms(v))), b);
}

// Materialized effective weight of a weight-normalized layer; shared by the
// full-output path and the per-query diagonal path so both dot the exact
// same matrix.
inline Tensor weight_norm_effective(const Tensor& v, const Tensor& g) {
    return row_scale(v, div(g, row_norms(v)));
}

namespace detail {
// im2col for a [Cin,H,W] image: rows indexed by (ci,ky,kx), columns by
// output pixel. Out-of-bounds taps read as zero.
inline void im2col(const double* x, int Cin, int H, int W, int kh, int kw,
                   int stride, int pad, int Ho, int Wo, double* cols) {
    const int P = Ho * Wo;
    int r = 0;
    for (int ci = 0; ci < Cin; ++ci)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx, ++r) {
                double* dst = cols + static_cast<std::size_t>(r) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[oy * Wo + ox] =
                            (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                ? x[(static_cast<std::size_t>(ci) * H + iy) * W + ix]
                                : 0.0;
                    }
                }
            }
}

inline void col2im_add(const double* cols, int Cin, int H, int W, int kh,
                       int kw, int stride, int pad, int Ho, int Wo, double* dx) {
    const int P = Ho * Wo;
    int r = 0;
    for (int ci = 0; ci < Cin; ++ci)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx, ++r) {
                const double* src = cols + static_cast<std::size_t>(r) * P;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        dx[(static_cast<std::size_t>(ci) * H + iy) * W + ix] +=
                            src[oy * Wo + ox];
                    }
                }
            }
}
}  // namespace detail

// x[Cin,H,W], w[Cout, Cin*kh*kw], b[Cout] -> [Cout,Ho,Wo].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                     int kh, int kw, int stride = 1, int pad = 0) {
    GLVD_CHECK(x.rank() == 3, "conv2d input must be [C,H,W]");
    const int Cin = x.dim(0), H = x.dim(1), W = x.dim(2);
    GLVD_CHECK(w.rank() == 2 && w.dim(1) == Cin * kh * kw,
               "conv2d: weight ", shape_str(w.shape()), " does not match Cin=",
               Cin, " k=", kh, "x", kw);
    const int Cout = w.dim(0);
    GLVD_CHECK(stride >= 1, "conv2d: bad stride");
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    GLVD_CHECK(Ho > 0 && Wo > 0, "conv2d: empty output");
    const int K = Cin * kh * kw, P = Ho * Wo;

    thread_local std::vector<double> cols;
    cols.assign(static_cast<std::size_t>(K) * P, 0.0);
    detail::im2col(x.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo, cols.data());

    std::vector<double> v(static_cast<std::size_t>(Cout) * P, 0.0);
    if (b.defined()) {
        GLVD_CHECK(b.rank() == 1 && b.dim(0) == Cout, "conv2d: bad bias shape");
        for (int c = 0; c < Cout; ++c)
            std::fill_n(&v[static_cast<std::size_t>(c) * P], P, b.data()[c]);
    }
    gemm_nn(Cout, P, K, w.data(), cols.data(), v.data());

    auto xn = x.node(), wn = w.node();
    auto bnode = b.defined() ? b.node() : nullptr;
    return make_op({Cout, Ho, Wo}, std::move(v), {x, w, b},
                   [=](TensorNode& o) {
        thread_local std::vector<double> bcols, dcols;
        bcols.assign(static_cast<std::size_t>(K) * P, 0.0);
        detail::im2col(xn->val.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                       bcols.data());
        if (wn->requires_grad) {
            wn->ensure_grad();  // dW = dOut2d * cols^T
            gemm_nt(Cout, K, P, o.grad.data(), bcols.data(), wn->grad.data());
        }
        if (bnode && bnode->requires_grad) {
            bnode->ensure_grad();
            for (int c = 0; c < Cout; ++c) {
                double s = 0.0;
                for (int p = 0; p < P; ++p)
                    s += o.grad[static_cast<std::size_t>(c) * P + p];
                bnode->grad[static_cast<std::size_t>(c)] += s;
            }
        }
        if (xn->requires_grad) {
            xn->ensure_grad();  // dcols = W^T * dOut2d, then scatter
            dcols.assign(static_cast<std::size_t>(K) * P, 0.0);
            gemm_tn(K, P, Cout, wn->val.data(), o.grad.data(), dcols.data());
            detail::col2im_add(dcols.data(), Cin, H, W, kh, kw, stride, pad, Ho,
                               Wo, xn->grad.data());
        }
    });
}

// Group normalization over [C,H,W] with per-channel affine parameters.
inline Tensor group_norm(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, int groups, double eps = 1e-5) {
    GLVD_CHECK(x.rank() == 3, "group_norm input must be [C,H,W]");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    GLVD_CHECK(groups >= 1 && C % groups == 0,
               "group_norm: C=", C, " not divisible by groups=", groups);
    GLVD_CHECK(gamma.rank() == 1 && gamma.dim(0) == C && beta.rank() == 1 &&
                   beta.dim(0) == C,
               "group_norm: affine params must be [C]");
    const int cg = C / groups, hw = H * W;
    const std::size_t gn = static_cast<std::size_t>(cg) * hw;

    std::vector<double> v(x.numel()), mu(static_cast<std::size_t>(groups)),
        inv(static_cast<std::size_t>(groups));
    for (int g = 0; g < groups; ++g) {
        const double* xs = x.data() + static_cast<std::size_t>(g) * gn;
        double m = 0.0;
        for (std::size_t i = 0; i < gn; ++i) m += xs[i];
        m /= static_cast<double>(gn);
        double var = 0.0;
        for (std::size_t i = 0; i < gn; ++i) {
            const double d = xs[i] - m;
            var += d * d;
        }
        var /= static_cast<double>(gn);
        mu[static_cast<std::size_t>(g)] = m;
        inv[static_cast<std::size_t>(g)] = 1.0 / std::sqrt(var + eps);
    }
    for (int c = 0; c < C; ++c) {
        const int g = c / cg;
        const double ga = gamma.data()[c], be = beta.data()[c];
        const double m = mu[static_cast<std::size_t>(g)],
                     iv = inv[static_cast<std::size_t>(g)];
        for (int p = 0; p < hw; ++p) {
            const std::size_t k = static_cast<std::size_t>(c) * hw + p;
            v[k] = ga * (x.data()[k] - m) * iv + be;
        }
    }

    auto xn = x.node(), gn_ = gamma.node(), bn = beta.node();
    return make_op({C, H, W}, std::move(v), {x, gamma, beta},
                   [xn, gn_, bn, C, cg, hw, groups, mu, inv](TensorNode& o) {
        const std::size_t gsz = static_cast<std::size_t>(cg) * hw;
        if (gn_->requires_grad || bn->requires_grad) {
            gn_->ensure_grad();
            bn->ensure_grad();
            for (int c = 0; c < C; ++c) {
                const int g = c / cg;
                const double m = mu[static_cast<std::size_t>(g)],
                             iv = inv[static_cast<std::size_t>(g)];
                double dg = 0.0, db = 0.0;
                for (int p = 0; p < hw; ++p) {
                    const std::size_t k = static_cast<std::size_t>(c) * hw + p;
                    dg += o.grad[k] * (xn->val[k] - m) * iv;
                    db += o.grad[k];
                }
                gn_->grad[static_cast<std::size_t>(c)] += dg;
                bn->grad[static_cast<std::size_t>(c)] += db;
            }
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int g = 0; g < groups; ++g) {
                const double m = mu[static_cast<std::size_t>(g)],
                             iv = inv[static_cast<std::size_t>(g)];
                const std::size_t base = static_cast<std::size_t>(g) * gsz;
                // h = dy * gamma; dx = iv*(h - mean(h) - xhat*mean(h*xhat))
                double mh = 0.0, mhx = 0.0;
                for (std::size_t i = 0; i < gsz; ++i) {
                    const std::size_t k = base + i;
                    const int c = static_cast<int>(k) / hw;
                    const double h = o.grad[k] * gn_->val[static_cast<std::size_t>(c)];
                    const double xh = (xn->val[k] - m) * iv;
                    mh += h;
                    mhx += h * xh;
                }
                mh /= static_cast<double>(gsz);
                mhx /= static_cast<double>(gsz);
                for (std::size_t i = 0; i < gsz; ++i) {
                    const std::size_t k = base + i;
                    const int c = static_cast<int>(k) / hw;
                    const double h = o.grad[k] * gn_->val[static_cast<std::size_t>(c)];
                    const double xh = (xn->val[k] - m) * iv;
                    xn->grad[k] += iv * (h - mh - xh * mhx);
                }
            }
        }
    });
}

// 2x2 max pooling with stride 2; ties resolve to the first element in scan
// order so the backward routing is deterministic.
inline Tensor max_pool2(const Tensor& x) {
    GLVD_CHECK(x.rank() == 3, "max_pool2 input must be [C,H,W]");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    GLVD_CHECK(H >= 2 && W >= 2, "max_pool2: input too small");
    const int Ho = H / 2, Wo = W / 2;
    std::vector<double> v(static_cast<std::size_t>(C) * Ho * Wo);
    auto idx = std::make_shared<std::vector<std::size_t>>(v.size());
    for (int c = 0; c < C; ++c)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                std::size_t best = 0;
                double bv = -1e308;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::size_t k =
                            (static_cast<std::size_t>(c) * H + 2 * oy + dy) * W +
                            2 * ox + dx;
                        if (x.data()[k] > bv) {
                            bv = x.data()[k];
                            best = k;
                        }
                    }
                const std::size_t ok =
                    (static_cast<std::size_t>(c) * Ho + oy) * Wo + ox;
                v[ok] = bv;
                (*idx)[ok] = best;
            }
    auto xn = x.node();
    return make_op({C, Ho, Wo}, std::move(v), {x}, [xn, idx](TensorNode& o) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            xn->grad[(*idx)[i]] += o.grad[i];
    });
}

inline Tensor upsample_nearest2(const Tensor& x) {
    GLVD_CHECK(x.rank() == 3, "upsample_nearest2 input must be [C,H,W]");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    std::vector<double> v(static_cast<std::size_t>(C) * 4 * H * W);
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < H; ++y)
            for (int x2 = 0; x2 < W; ++x2) {
                const double s = x(c, y, x2);
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        v[(static_cast<std::size_t>(c) * 2 * H + 2 * y + dy) *
                              (2 * W) +
                          2 * x2 + dx] = s;
            }
    auto xn = x.node();
    return make_op({C, 2 * H, 2 * W}, std::move(v), {x},
                   [xn, C, H, W](TensorNode& o) {
        xn->ensure_grad();
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int x2 = 0; x2 < W; ++x2) {
                    double g = 0.0;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx)
                            g += o.grad[(static_cast<std::size_t>(c) * 2 * H +
                                         2 * y + dy) *
                                            (2 * W) +
                                        2 * x2 + dx];
                    xn->grad[(static_cast<std::size_t>(c) * H + y) * W + x2] += g;
                }
    });
}

namespace detail {
// Continuous texel coordinate for a normalized coordinate in [-1,1]; texel
// centers sit at (2i+1)/n - 1. Returns the coordinate clamped to the valid
// range and whether clamping fired (zero positional gradient there).
inline std::pair<double, bool> texel_coord(double u, int n) {
    double t = (u + 1.0) * 0.5 * n - 0.5;
    if (t < 0.0) return {0.0, true};
    if (t > n - 1.0) return {static_cast<double>(n - 1), true};
    return {t, false};
}
}  // namespace detail

// Samples map[C,H,W] at P points given in [-1,1]^2 (x right, y down) with
// bilinear filtering and border clamping -> [P,C].
inline Tensor bilinear_sample(const Tensor& map, const Tensor& pts) {
    GLVD_CHECK(map.rank() == 3, "bilinear_sample: map must be [C,H,W]");
    GLVD_CHECK(pts.rank() == 2 && pts.dim(1) == 2,
               "bilinear_sample: points must be [P,2]");
    const int C = map.dim(0), H = map.dim(1), W = map.dim(2), P = pts.dim(0);
    std::vector<double> v(static_cast<std::size_t>(P) * C);

    struct Tap {
        int x0, x1, y0, y1;
        double wx, wy;
        bool cx, cy;
    };
    auto taps = std::make_shared<std::vector<Tap>>(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
        auto [tx, cx] = detail::texel_coord(pts(p, 0), W);
        auto [ty, cy] = detail::texel_coord(pts(p, 1), H);
        Tap t;
        t.x0 = static_cast<int>(std::floor(tx));
        t.y0 = static_cast<int>(std::floor(ty));
        t.x1 = std::min(t.x0 + 1, W - 1);
        t.y1 = std::min(t.y0 + 1, H - 1);
        t.wx = tx - t.x0;
        t.wy = ty - t.y0;
        t.cx = cx;
        t.cy = cy;
        (*taps)[static_cast<std::size_t>(p)] = t;
        for (int c = 0; c < C; ++c) {
            const double v00 = map(c, t.y0, t.x0), v01 = map(c, t.y0, t.x1);
            const double v10 = map(c, t.y1, t.x0), v11 = map(c, t.y1, t.x1);
            v[static_cast<std::size_t>(p) * C + c] =
                (1 - t.wy) * ((1 - t.wx) * v00 + t.wx * v01) +
                t.wy * ((1 - t.wx) * v10 + t.wx * v11);
        }
    }
    auto mn = map.node(), pn = pts.node();
    return make_op({P, C}, std::move(v), {map, pts},
                   [mn, pn, taps, C, H, W, P](TensorNode& o) {
        if (mn->requires_grad) {
            mn->ensure_grad();
            for (int p = 0; p < P; ++p) {
                const Tap& t = (*taps)[static_cast<std::size_t>(p)];
                for (int c = 0; c < C; ++c) {
                    const double g = o.grad[static_cast<std::size_t>(p) * C + c];
                    const std::size_t row = static_cast<std::size_t>(c) * H;
                    mn->grad[(row + t.y0) * W + t.x0] += g * (1 - t.wy) * (1 - t.wx);
                    mn->grad[(row + t.y0) * W + t.x1] += g * (1 - t.wy) * t.wx;
                    mn->grad[(row + t.y1) * W + t.x0] += g * t.wy * (1 - t.wx);
                    mn->grad[(row + t.y1) * W + t.x1] += g * t.wy * t.wx;
                }
            }
        }
        if (pn->requires_grad) {
            pn->ensure_grad();
            for (int p = 0; p < P; ++p) {
                const Tap& t = (*taps)[static_cast<std::size_t>(p)];
                double gx = 0.0, gy = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double g = o.grad[static_cast<std::size_t>(p) * C + c];
                    const std::size_t row = static_cast<std::size_t>(c) * H;
                    const double v00 = mn->val[(row + t.y0) * W + t.x0];
                    const double v01 = mn->val[(row + t.y0) * W + t.x1];
                    const double v10 = mn->val[(row + t.y1) * W + t.x0];
                    const double v11 = mn->val[(row + t.y1) * W + t.x1];
                    gx += g * ((1 - t.wy) * (v01 - v00) + t.wy * (v11 - v10));
                    gy += g * ((1 - t.wx) * (v10 - v00) + t.wx * (v11 - v01));
                }
                if (!t.cx)
                    pn->grad[static_cast<std::size_t>(p) * 2] += gx * 0.5 * W;
                if (!t.cy)
                    pn->grad[static_cast<std::size_t>(p) * 2 + 1] += gy * 0.5 * H;
            }
        }
    });
}

// Inverted binary dropout. Training mode zeroes features and rescales the
// survivors by 1/(1-p); eval mode is the identity. For [C,H,W] activations
// whole channel planes drop together; for [Q,C] descriptors each feature of
// each row drops independently.
inline Tensor binary_dropout(const Tensor& x, double p, bool training, Rng& rng) {
    GLVD_CHECK(p >= 0.0 && p < 1.0, "binary_dropout: p out of range");
    if (!training || p == 0.0) return x;
    const double keep = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<double>>();
    std::vector<double> v(x.numel());
    if (x.rank() == 3) {
        const int C = x.dim(0);
        const std::size_t hw = x.numel() / static_cast<std::size_t>(C);
        mask->resize(static_cast<std::size_t>(C));
        for (int c = 0; c < C; ++c) {
            const double m = rng.coin(p) ? 0.0 : keep;
            (*mask)[static_cast<std::size_t>(c)] = m;
            for (std::size_t i = 0; i < hw; ++i)
                v[static_cast<std::size_t>(c) * hw + i] =
                    x.data()[static_cast<std::size_t>(c) * hw + i] * m;
        }
        auto xn = x.node();
        return make_op(x.shape(), std::move(v), {x}, [xn, mask, hw](TensorNode& o) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                xn->grad[i] += o.grad[i] * (*mask)[i / hw];
        });
    }
    mask->resize(x.numel());
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double m = rng.coin(p) ? 0.0 : keep;
        (*mask)[i] = m;
        v[i] = x.data()[i] * m;
    }
    auto xn = x.node();
    return make_op(x.shape(), std::move(v), {x}, [xn, mask](TensorNode& o) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            xn->grad[i] += o.grad[i] * (*mask)[i];
    });
}

// Numerically stable binary cross-entropy on logits -> scalar mean.
inline Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    check_same_shape(logits, targets, "bce_with_logits");
    const std::size_t n = logits.numel();
    GLVD_CHECK(n > 0, "bce_with_logits: empty input");
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits.data()[i], t = targets.data()[i];
        // log(1+e^z) computed without overflow
        const double sp = z > 0 ? z + std::log1p(std::exp(-z))
                                : std::log1p(std::exp(z));
        loss += sp - t * z;
    }
    const double inv = 1.0 / static_cast<double>(n);
    auto ln = logits.node(), tn = targets.node();
    return make_op({1}, {loss * inv}, {logits, targets},
                   [ln, tn, inv, n](TensorNode& o) {
        if (!ln->requires_grad) return;
        ln->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            const double s = 1.0 / (1.0 + std::exp(-ln->val[i]));
            ln->grad[i] += o.grad[0] * inv * (s - tn->val[i]);
        }
    });
}

// ------------------------- parameter initializers --------------------------

inline Tensor init_uniform(Shape shape, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t(std::move(shape), 0.0, true);
    for (std::size_t i = 0; i < t.numel(); ++i)
        t.data()[i] = rng.uniform(-bound, bound);
    return t;
}

inline Tensor init_zeros(Shape shape) { return Tensor(std::move(shape), 0.0, true); }

inline Tensor init_const(Shape shape, double v) {
    return Tensor(std::move(shape), v, true);
}

}  // namespace glvd
