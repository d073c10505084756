#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "glvd/config.hpp"
#include "glvd/tensor/tensor.hpp"

namespace glvd {

namespace detail {

inline void check_displacement_shapes(const Tensor& pred,
                                      const Tensor& target) {
    GLVD_CHECK(pred.rank() == 2 && target.rank() == 2 &&
                   pred.shape() == target.shape(),
               "displacement loss: prediction and target shapes must match");
    GLVD_CHECK(pred.dim(1) % 3 == 0,
               "displacement loss: columns must be 3-vectors per target");
}

// Norm-clips every 3-column block of a [M,3T] matrix to max_norm,
// preserving direction. Pure data (no gradient through the result).
inline Tensor clip_blocks(const Tensor& x, double max_norm) {
    const int M = x.dim(0), cols = x.dim(1);
    std::vector<double> v(x.numel());
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < cols; j += 3) {
            const double a = x(i, j), b = x(i, j + 1), c = x(i, j + 2);
            const double n = std::sqrt(a * a + b * b + c * c);
            const double s = n > max_norm ? max_norm / n : 1.0;
            const std::size_t base =
                static_cast<std::size_t>(i) * cols + static_cast<std::size_t>(j);
            v[base] = a * s;
            v[base + 1] = b * s;
            v[base + 2] = c * s;
        }
    return Tensor::from(x.shape(), std::move(v));
}

}  // namespace detail

// Direction-plus-magnitude objective over all (query, target) displacement
// pairs:
//
//   L = mean_{i,j} [ w_dir * (1 - cos(pred, target))
//                  + w_mag * | min(|pred|, tau) - min(|target|, tau) | ]
//
// The cosine denominator carries +eps so zero-length vectors stay finite; a
// target of exactly zero length contributes only the magnitude term (there
// is no meaningful direction to match). Magnitudes are clipped on BOTH
// sides, so once a pair's lengths both exceed tau the term vanishes and
// supervision is purely directional — this is what keeps far-away targets
// from dominating and forces locality in the features.
//
// Subgradient choices at the non-smooth points: zero-length predictions take
// a zero directional gradient, the magnitude kink at |pred| == tau takes the
// clipped (zero) branch, and |a - b| at a == b takes slope zero.
inline Tensor cosmag_loss(const Tensor& pred, const Tensor& target,
                          double w_dir, double w_mag, double tau, double eps) {
    detail::check_displacement_shapes(pred, target);
    const int M = pred.dim(0), cols = pred.dim(1);
    const int pairs = M * (cols / 3);

    const double* pv = pred.data();
    const double* tv = target.data();
    const std::size_t n3 = pred.numel();
    double total = 0.0;
    for (std::size_t k = 0; k < n3; k += 3) {
        const double px = pv[k], py = pv[k + 1], pz = pv[k + 2];
        const double tx = tv[k], ty = tv[k + 1], tz = tv[k + 2];
        const double np = std::sqrt(px * px + py * py + pz * pz);
        const double nt = std::sqrt(tx * tx + ty * ty + tz * tz);
        if (nt > 0.0) {
            const double dot = px * tx + py * ty + pz * tz;
            total += w_dir * (1.0 - dot / (np * nt + eps));
        }
        total += w_mag * std::fabs(std::min(np, tau) - std::min(nt, tau));
    }
    const double val = total / pairs;

    auto tgt = std::make_shared<std::vector<double>>(target.vals());
    auto pn = pred.node();
    return make_op(
        {1}, {val}, {pred},
        [pn, tgt, pairs, w_dir, w_mag, tau, eps](TensorNode& o) {
            if (!pn->requires_grad) return;
            pn->ensure_grad();
            const double g = o.grad[0] / pairs;
            const std::vector<double>& t = *tgt;
            for (std::size_t k = 0; k < pn->val.size(); k += 3) {
                const double px = pn->val[k], py = pn->val[k + 1],
                             pz = pn->val[k + 2];
                const double tx = t[k], ty = t[k + 1], tz = t[k + 2];
                const double np = std::sqrt(px * px + py * py + pz * pz);
                const double nt = std::sqrt(tx * tx + ty * ty + tz * tz);
                double gx = 0.0, gy = 0.0, gz = 0.0;
                if (nt > 0.0 && np > 1e-12) {
                    const double dot = px * tx + py * ty + pz * tz;
                    const double denom = np * nt + eps;
                    const double c2 = dot * nt / (np * denom * denom);
                    gx -= w_dir * (tx / denom - c2 * px);
                    gy -= w_dir * (ty / denom - c2 * py);
                    gz -= w_dir * (tz / denom - c2 * pz);
                }
                const double mp = std::min(np, tau);
                const double mt = std::min(nt, tau);
                if (mp != mt && np < tau && np > 0.0) {
                    const double s = w_mag * (mp > mt ? 1.0 : -1.0) / np;
                    gx += s * px;
                    gy += s * py;
                    gz += s * pz;
                }
                pn->grad[k] += g * gx;
                pn->grad[k + 1] += g * gy;
                pn->grad[k + 2] += g * gz;
            }
        });
}

// Plain squared-distance objective against the norm-clipped target
// displacement field (the simpler loss the direction/magnitude split is
// compared against):  L = mean_{i,j} |pred_ij - clip_tau(target_ij)|^2.
inline Tensor l2_loss(const Tensor& pred, const Tensor& target, double tau) {
    detail::check_displacement_shapes(pred, target);
    const int pairs = pred.dim(0) * (pred.dim(1) / 3);
    const Tensor clipped = detail::clip_blocks(target, tau);
    return scale(sum(square(sub(pred, clipped))), 1.0 / pairs);
}

// Loss family selected by the configuration; `pred` and `target` hold one
// 3-vector per (query, target) pair, flattened to [M,3T].
inline Tensor displacement_loss(const Tensor& pred, const Tensor& target,
                                const ExperimentConfig& cfg) {
    if (cfg.loss == "l2") return l2_loss(pred, target, cfg.clip_train);
    GLVD_CHECK(cfg.loss == "cosmag", "displacement loss: unknown loss '",
               cfg.loss, "'");
    return cosmag_loss(pred, target, cfg.lambda_dir, cfg.lambda_mag,
                       cfg.clip_train, cfg.cos_eps);
}

}  // namespace glvd
