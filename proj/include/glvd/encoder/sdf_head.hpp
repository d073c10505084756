#pragma once

#include <string>
#include <vector>

#include "glvd/config.hpp"
#include "glvd/encoder/feature_net.hpp"
#include "glvd/geometry/chamfer.hpp"
#include "glvd/synth/corpus.hpp"

namespace glvd {

// Scalar implicit-surface head used to pretrain the feature net: a 3-layer
// MLP over [stacked query descriptor, query position].
struct SdfNet {
    Parameter w1, b1, w2, b2, w3, b3;

    SdfNet() = default;
    SdfNet(const ExperimentConfig& cfg, Rng& rng) {
        const int in = cfg.channels * cfg.stacks + 3, h = cfg.sdf_hidden;
        w1 = Parameter("sdf.w1", init_uniform({h, in}, in, rng));
        b1 = Parameter("sdf.b1", init_zeros({h}));
        w2 = Parameter("sdf.w2", init_uniform({h, h}, h, rng));
        b2 = Parameter("sdf.b2", init_zeros({h}));
        w3 = Parameter("sdf.w3", init_uniform({1, h}, h, rng));
        b3 = Parameter("sdf.b3", init_zeros({1}));
    }

    // desc: [P,D], x: [P,3] -> [P,1]
    Tensor operator()(const Tensor& desc, const Tensor& x) const {
        Tensor h = relu(linear(hstack({desc, x}), w1.value, b1.value));
        h = relu(linear(h, w2.value, b2.value));
        return linear(h, w3.value, b3.value);
    }

    void collect(std::vector<Parameter*>& out) {
        for (Parameter* p : {&w1, &b1, &w2, &b2, &w3, &b3}) out.push_back(p);
    }
};

struct SdfEval {
    Tensor values;  // [P,1]
    Tensor grads;   // [P,3] d(value)/d(world point), in-graph
};

namespace detail {
// 0/1 mask of positive entries, captured as a constant: multiplying by it
// reproduces exactly what relu's backward pass would route.
inline Tensor positive_mask(const Tensor& z) {
    std::vector<double> m(z.numel());
    for (std::size_t i = 0; i < z.numel(); ++i)
        m[i] = z.data()[i] > 0.0 ? 1.0 : 0.0;
    return Tensor::from(z.shape(), std::move(m));
}

inline Tensor ones_col(int n) { return Tensor({n, 1}, 1.0); }
}  // namespace detail

// Evaluates the SDF at world points through one view and also constructs the
// gradient of each value w.r.t. its query point *inside the graph*, so a
// loss on the gradient still trains every network parameter. The gradient
// assembles the chain rule explicitly — MLP weights gated by constant relu
// masks, bilinear tap derivatives linear in the feature maps, and constant
// projection Jacobians — which evaluates to exactly what reverse mode would
// produce, while remaining differentiable w.r.t. the parameters (relu and
// bilinear curvature vanish almost everywhere, the usual piecewise-linear
// double-backward semantics).
inline SdfEval sdf_eval(const FeatureMaps& maps, const SdfNet& head,
                        const std::vector<Vec3>& points,
                        const CameraView& cam) {
    GLVD_CHECK(!maps.empty(), "sdf_eval: no feature maps");
    const int P = static_cast<int>(points.size());
    const int C = maps[0].dim(0);
    const int D = C * static_cast<int>(maps.size());

    const ProjectedQueries q = project_points(points, cam);
    const Tensor x = points_tensor(points);
    const Tensor desc = sample_descriptors(maps, q);

    const Tensor z1 = linear(hstack({desc, x}), head.w1.value, head.b1.value);
    const Tensor h1 = relu(z1);
    const Tensor z2 = linear(h1, head.w2.value, head.b2.value);
    const Tensor h2 = relu(z2);
    const Tensor s = linear(h2, head.w3.value, head.b3.value);

    const Tensor m1 = detail::positive_mask(z1);
    const Tensor m2 = detail::positive_mask(z2);
    const Tensor g_h2 = matmul(detail::ones_col(P), head.w3.value);  // [P,H]
    const Tensor g_h1 = matmul(mul(g_h2, m2), head.w2.value);        // [P,H]
    const Tensor g_in = matmul(mul(g_h1, m1), head.w1.value);        // [P,D+3]
    const Tensor g_desc = slice_cols(g_in, 0, D);
    const Tensor g_x_direct = slice_cols(g_in, D, 3);

    Tensor du, dv;  // [P,1] each: d(value)/d(normalized uv)
    const Tensor ones_c = detail::ones_col(C);
    for (std::size_t st = 0; st < maps.size(); ++st) {
        const Tensor part = bilinear_uv_grad(maps[st], q.pts);  // [P,2C]
        const Tensor gd = slice_cols(g_desc, static_cast<int>(st) * C, C);
        const Tensor du_s = matmul(mul(gd, slice_cols(part, 0, C)), ones_c);
        const Tensor dv_s = matmul(mul(gd, slice_cols(part, C, C)), ones_c);
        du = du.defined() ? add(du, du_s) : du_s;
        dv = dv.defined() ? add(dv, dv_s) : dv_s;
    }
    const Tensor g_pix = hstack({du, dv});
    const Tensor grads = add(g_x_direct, world_grad_from_pixel_grad(g_pix, q));
    return {s, grads};
}

// Mean absolute value: drives the field to zero on surface samples.
inline Tensor surface_loss(const Tensor& values) { return mean(abs_t(values)); }

// Mean squared deviation of the gradient norm from one.
inline Tensor eikonal_loss(const Tensor& grads) {
    GLVD_CHECK(grads.rank() == 2 && grads.dim(1) == 3,
               "eikonal_loss expects [P,3] gradients");
    return mean(square(add_scalar(row_norms(grads), -1.0)));
}

struct SdfLossTerms {
    Tensor surf, eik, total;
};

// Pretraining objective for one scene and view: the surface term on
// area-uniform mesh samples, the eikonal term on uniform volume samples in
// [-1,1]^3, combined as surf + weight·eik. The feature maps are computed
// once and shared by both terms.
inline SdfLossTerms sdf_losses(const FeatureNet& fv, const SdfNet& head,
                               const SceneData& scene, int view, int n_surface,
                               int n_volume, double eikonal_weight, Rng& rng) {
    GLVD_CHECK(view >= 0 && view < static_cast<int>(scene.images.size()),
               "sdf_losses: view ", view, " out of range");
    GLVD_CHECK(n_surface >= 1 && n_volume >= 1, "sdf_losses: empty sample set");
    const Tensor& image = scene.images[static_cast<std::size_t>(view)];
    const FeatureMaps maps = fv(image, mask_of(image));
    const CameraView& cam = scene.cameras[static_cast<std::size_t>(view)];

    const std::vector<Vec3> surf_pts = sample_surface(scene.mesh, n_surface, rng);
    std::vector<Vec3> vol_pts(static_cast<std::size_t>(n_volume));
    for (Vec3& p : vol_pts)
        p = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
             rng.uniform(-1.0, 1.0)};

    const ProjectedQueries qs = project_points(surf_pts, cam);
    const Tensor desc_s = sample_descriptors(maps, qs);
    const Tensor surf = surface_loss(head(desc_s, points_tensor(surf_pts)));
    const Tensor eik = eikonal_loss(sdf_eval(maps, head, vol_pts, cam).grads);
    return {surf, eik, add(surf, scale(eik, eikonal_weight))};
}

}  // namespace glvd
