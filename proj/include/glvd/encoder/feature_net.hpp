#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "glvd/config.hpp"
#include "glvd/encoder/params.hpp"
#include "glvd/geometry/camera.hpp"
#include "glvd/synth/raster.hpp"
#include "glvd/tensor/layers.hpp"

namespace glvd {

// Channel concatenation for [C_i,H,W] maps — the rank-3 sibling of hstack.
inline Tensor concat_channels(const std::vector<Tensor>& xs) {
    GLVD_CHECK(!xs.empty(), "concat_channels: no inputs");
    const int H = xs[0].dim(1), W = xs[0].dim(2);
    int C = 0;
    std::size_t total = 0;
    for (const Tensor& x : xs) {
        GLVD_CHECK(x.rank() == 3 && x.dim(1) == H && x.dim(2) == W,
                   "concat_channels: got ", shape_str(x.shape()),
                   ", expected [*,", H, ",", W, "]");
        C += x.dim(0);
        total += x.numel();
    }
    std::vector<double> v;
    v.reserve(total);
    for (const Tensor& x : xs) v.insert(v.end(), x.vals().begin(), x.vals().end());
    Tensor out = Tensor::from({C, H, W}, std::move(v));

    bool need = false;
    if (grad_mode())
        for (const Tensor& x : xs)
            if (x.requires_grad()) need = true;
    if (!need) return out;
    out.set_requires_grad(true);
    auto parents =
        std::make_shared<std::vector<std::shared_ptr<TensorNode>>>();
    for (const Tensor& x : xs) parents->push_back(x.node());
    auto& node = *out.node();
    node.parents.assign(parents->begin(), parents->end());
    node.backprop = [parents](TensorNode& o) {
        std::size_t off = 0;
        for (auto& p : *parents) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->val.size(); ++i)
                    p->grad[i] += o.grad[off + i];
            }
            off += p->val.size();
        }
    };
    return out;
}

// conv(k×k, pad k/2) + group-norm + relu. Stride 2 halves the spatial size.
struct ConvBlock {
    Parameter w, b, gamma, beta;
    int k = 3, stride = 1, groups = 1;

    ConvBlock() = default;
    ConvBlock(const std::string& name, int cin, int cout, int groups_, Rng& rng,
              int k_ = 3, int stride_ = 1)
        : w(name + ".w", init_uniform({cout, cin * k_ * k_}, cin * k_ * k_, rng)),
          b(name + ".b", init_zeros({cout})),
          gamma(name + ".gamma", init_const({cout}, 1.0)),
          beta(name + ".beta", init_zeros({cout})),
          k(k_),
          stride(stride_),
          groups(groups_) {}

    Tensor operator()(const Tensor& x) const {
        return relu(group_norm(conv2d(x, w.value, b.value, k, k, stride, k / 2),
                               gamma.value, beta.value, groups));
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&w);
        out.push_back(&b);
        out.push_back(&gamma);
        out.push_back(&beta);
    }
};

// One hourglass: two stride-2 encoder blocks, a bottleneck, then two
// nearest-neighbour upsamplings, each adding the skip from the matching
// resolution before a conv block. Needs the spatial size divisible by 4.
struct HourglassStack {
    ConvBlock down1, down2, mid, up1, up2;

    HourglassStack() = default;
    HourglassStack(const std::string& name, int ch, int groups, Rng& rng)
        : down1(name + ".down1", ch, ch, groups, rng, 3, 2),
          down2(name + ".down2", ch, ch, groups, rng, 3, 2),
          mid(name + ".mid", ch, ch, groups, rng),
          up1(name + ".up1", ch, ch, groups, rng),
          up2(name + ".up2", ch, ch, groups, rng) {}

    Tensor operator()(const Tensor& x) const {
        const Tensor d1 = down1(x);
        const Tensor d2 = down2(d1);
        const Tensor u1 = up1(add(upsample_nearest2(mid(d2)), d1));
        return up2(add(upsample_nearest2(u1), x));
    }

    void collect(std::vector<Parameter*>& out) {
        down1.collect(out);
        down2.collect(out);
        mid.collect(out);
        up1.collect(out);
        up2.collect(out);
    }
};

// One feature map per stack; query descriptors concatenate one bilinear
// sample from each, so the descriptor dimension is channels × stacks.
using FeatureMaps = std::vector<Tensor>;

// Pixel-aligned vertex features: a stem conv over [image, mask] followed by
// residually chained hourglass stacks. The trunk entering stack s+1 is the
// trunk entering stack s plus that stack's output map.
struct FeatureNet {
    int channels = 0, stacks = 0;
    ConvBlock stem;
    std::vector<HourglassStack> stack_nets;

    FeatureNet() = default;
    FeatureNet(const ExperimentConfig& cfg, Rng& rng)
        : channels(cfg.channels),
          stacks(cfg.stacks),
          stem("fv.stem", kImageChannels + 1, cfg.channels, cfg.groups, rng) {
        stack_nets.reserve(static_cast<std::size_t>(cfg.stacks));
        for (int s = 0; s < cfg.stacks; ++s)
            stack_nets.emplace_back(cat("fv.s", s), cfg.channels, cfg.groups,
                                    rng);
    }

    int descriptor_dim() const { return channels * stacks; }

    FeatureMaps operator()(const Tensor& image, const Tensor& mask) const {
        GLVD_CHECK(image.rank() == 3 && mask.rank() == 3 && mask.dim(0) == 1 &&
                       image.dim(1) == mask.dim(1) &&
                       image.dim(2) == mask.dim(2),
                   "feature net: image ", shape_str(image.shape()),
                   " and mask ", shape_str(mask.shape()), " must be aligned");
        GLVD_CHECK(image.dim(1) % 4 == 0 && image.dim(2) % 4 == 0,
                   "feature net: spatial size must be divisible by 4, got ",
                   image.dim(1), "x", image.dim(2));
        Tensor trunk = stem(concat_channels({image, mask}));
        FeatureMaps maps;
        maps.reserve(stack_nets.size());
        for (const HourglassStack& s : stack_nets) {
            Tensor f = s(trunk);
            trunk = add(trunk, f);
            maps.push_back(std::move(f));
        }
        return maps;
    }

    void collect(std::vector<Parameter*>& out) {
        stem.collect(out);
        for (HourglassStack& s : stack_nets) s.collect(out);
    }
};

inline Tensor points_tensor(const std::vector<Vec3>& pts) {
    std::vector<double> v;
    v.reserve(pts.size() * 3);
    for (const Vec3& p : pts) {
        v.push_back(p.x);
        v.push_back(p.y);
        v.push_back(p.z);
    }
    return Tensor::from({static_cast<int>(pts.size()), 3}, std::move(v));
}

// Where a batch of world points lands on one view's sampling grid. `front`
// is 1 where the point projects and 0 behind the camera, and `jac` holds the
// row-major 2×3 Jacobian d(normalized uv)/d(world point) — zero for behind
// points — used to map pixel-space gradients back to world space.
struct ProjectedQueries {
    Tensor pts;    // [P,2] normalized coordinates in [-1,1]
    Tensor front;  // [P] visibility mask
    std::shared_ptr<std::vector<std::array<double, 6>>> jac;
};

inline ProjectedQueries project_points(const std::vector<Vec3>& points,
                                       const CameraView& cam) {
    const int P = static_cast<int>(points.size());
    std::vector<double> pts(static_cast<std::size_t>(P) * 2, 0.0);
    std::vector<double> front(static_cast<std::size_t>(P), 0.0);
    auto jac = std::make_shared<std::vector<std::array<double, 6>>>(
        static_cast<std::size_t>(P), std::array<double, 6>{});
    const double su = 2.0 / cam.width, sv = 2.0 / cam.height;
    for (int i = 0; i < P; ++i) {
        const auto pr = cam.project(points[i]);
        if (pr.behind) continue;
        const Vec3 n = cam.pixel_to_norm(pr.u, pr.v);
        pts[static_cast<std::size_t>(i) * 2] = n.x;
        pts[static_cast<std::size_t>(i) * 2 + 1] = n.y;
        front[static_cast<std::size_t>(i)] = 1.0;
        // u = fx·a/c + cx with a = r0·p + t0, c = r2·p + t2, so
        // du/dp = fx·(r0·c − a·r2)/c²; normalized coords add the 2/size scale.
        const Vec3 c = cam.world_to_cam(points[i]);
        const double inv2 = 1.0 / (c.z * c.z);
        auto& J = (*jac)[static_cast<std::size_t>(i)];
        for (int k = 0; k < 3; ++k) {
            const double r0k = cam.rotation(0, k), r1k = cam.rotation(1, k),
                         r2k = cam.rotation(2, k);
            J[static_cast<std::size_t>(k)] =
                su * cam.fx * (r0k * c.z - c.x * r2k) * inv2;
            J[static_cast<std::size_t>(3 + k)] =
                sv * cam.fy * (r1k * c.z - c.y * r2k) * inv2;
        }
    }
    return {Tensor::from({P, 2}, std::move(pts)),
            Tensor::from({P}, std::move(front)), std::move(jac)};
}

// Per-stack bilinear samples concatenated into one row per query; rows of
// behind-camera queries are forced to exactly zero by the visibility mask.
inline Tensor sample_descriptors(const FeatureMaps& maps,
                                 const ProjectedQueries& q) {
    GLVD_CHECK(!maps.empty(), "sample_descriptors: no feature maps");
    std::vector<Tensor> parts;
    parts.reserve(maps.size());
    for (const Tensor& m : maps) parts.push_back(bilinear_sample(m, q.pts));
    return row_scale(parts.size() == 1 ? parts[0] : hstack(parts), q.front);
}

// Spatial derivative of bilinear samples w.r.t. the normalized coordinates:
// out[p, c] = ∂sample_c/∂u, out[p, C+c] = ∂sample_c/∂v, with the same border
// clamping (zero derivative) as bilinear_sample's own positional gradient.
// The result is linear in the map texels, so it stays differentiable w.r.t.
// the map — which is what lets gradient-penalty losses train the encoder.
inline Tensor bilinear_uv_grad(const Tensor& map, const Tensor& pts) {
    GLVD_CHECK(map.rank() == 3, "bilinear_uv_grad: map must be [C,H,W]");
    GLVD_CHECK(pts.rank() == 2 && pts.dim(1) == 2,
               "bilinear_uv_grad: points must be [P,2]");
    const int C = map.dim(0), H = map.dim(1), W = map.dim(2), P = pts.dim(0);

    struct Tap {
        int x0, x1, y0, y1;
        double wx, wy, gu, gv;  // gu/gv: d(texel coord)/d(normalized coord)
    };
    auto taps = std::make_shared<std::vector<Tap>>(static_cast<std::size_t>(P));
    std::vector<double> v(static_cast<std::size_t>(P) * 2 * C);
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
        t.gu = cx ? 0.0 : 0.5 * W;
        t.gv = cy ? 0.0 : 0.5 * H;
        (*taps)[static_cast<std::size_t>(p)] = t;
        for (int c = 0; c < C; ++c) {
            const double v00 = map(c, t.y0, t.x0), v01 = map(c, t.y0, t.x1);
            const double v10 = map(c, t.y1, t.x0), v11 = map(c, t.y1, t.x1);
            v[static_cast<std::size_t>(p) * 2 * C + c] =
                ((1 - t.wy) * (v01 - v00) + t.wy * (v11 - v10)) * t.gu;
            v[static_cast<std::size_t>(p) * 2 * C + C + c] =
                ((1 - t.wx) * (v10 - v00) + t.wx * (v11 - v01)) * t.gv;
        }
    }
    auto mn = map.node();
    return make_op({P, 2 * C}, std::move(v), {map, pts},
                   [mn, taps, C, H, W, P](TensorNode& o) {
        if (!mn->requires_grad) return;
        mn->ensure_grad();
        for (int p = 0; p < P; ++p) {
            const Tap& t = (*taps)[static_cast<std::size_t>(p)];
            for (int c = 0; c < C; ++c) {
                const double gu =
                    o.grad[static_cast<std::size_t>(p) * 2 * C + c] * t.gu;
                const double gv =
                    o.grad[static_cast<std::size_t>(p) * 2 * C + C + c] * t.gv;
                const std::size_t row = static_cast<std::size_t>(c) * H;
                mn->grad[(row + t.y0) * W + t.x0] +=
                    -gu * (1 - t.wy) - gv * (1 - t.wx);
                mn->grad[(row + t.y0) * W + t.x1] += gu * (1 - t.wy) - gv * t.wx;
                mn->grad[(row + t.y1) * W + t.x0] += -gu * t.wy + gv * (1 - t.wx);
                mn->grad[(row + t.y1) * W + t.x1] += gu * t.wy + gv * t.wx;
            }
        }
    });
}

// Maps per-query pixel-space gradients [P,2] to world space [P,3] through
// the constant projection Jacobians: out_p = J_pᵀ · g_p.
inline Tensor world_grad_from_pixel_grad(const Tensor& g_pix,
                                         const ProjectedQueries& q) {
    GLVD_CHECK(g_pix.rank() == 2 && g_pix.dim(1) == 2 &&
                   g_pix.dim(0) == static_cast<int>(q.jac->size()),
               "world_grad_from_pixel_grad: shape mismatch");
    const int P = g_pix.dim(0);
    auto jac = q.jac;
    std::vector<double> v(static_cast<std::size_t>(P) * 3);
    for (int p = 0; p < P; ++p) {
        const auto& J = (*jac)[static_cast<std::size_t>(p)];
        for (int k = 0; k < 3; ++k)
            v[static_cast<std::size_t>(p) * 3 + k] =
                J[static_cast<std::size_t>(k)] * g_pix(p, 0) +
                J[static_cast<std::size_t>(3 + k)] * g_pix(p, 1);
    }
    auto gn = g_pix.node();
    return make_op({P, 3}, std::move(v), {g_pix},
                   [gn, jac, P](TensorNode& o) {
        if (!gn->requires_grad) return;
        gn->ensure_grad();
        for (int p = 0; p < P; ++p) {
            const auto& J = (*jac)[static_cast<std::size_t>(p)];
            for (int k = 0; k < 3; ++k) {
                const double g = o.grad[static_cast<std::size_t>(p) * 3 + k];
                gn->grad[static_cast<std::size_t>(p) * 2] +=
                    J[static_cast<std::size_t>(k)] * g;
                gn->grad[static_cast<std::size_t>(p) * 2 + 1] +=
                    J[static_cast<std::size_t>(3 + k)] * g;
            }
        }
    });
}

}  // namespace glvd
