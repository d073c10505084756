#pragma once

#include <vector>

#include "glvd/descent/model.hpp"
#include "glvd/synth/corpus.hpp"

namespace glvd {

// One conditioning image with its camera.
struct ViewInput {
    Tensor image;  // [5,H,W] render
    Tensor mask;   // [1,H,W] silhouette
    CameraView cam;
};

inline ViewInput scene_view(const SceneData& scene, int view) {
    GLVD_CHECK(view >= 0 && view < static_cast<int>(scene.images.size()),
               "view ", view, " out of range for scene ", scene.dir);
    const Tensor& img = scene.images[static_cast<std::size_t>(view)];
    return {img, mask_of(img), scene.cameras[static_cast<std::size_t>(view)]};
}

// Everything the descent loop samples from, computed once per scene. Graph
// participation follows the ambient gradient mode, so the same routine
// serves inference (constants) and training (differentiable maps).
struct SceneFeatures {
    std::vector<FeatureMaps> fv;  // per view, one map per stack
    std::vector<Tensor> fk;       // per view; only when the branch is active
    std::vector<CameraView> cams;
};

inline SceneFeatures compute_features(const GlvdModel& model,
                                      const std::vector<ViewInput>& views) {
    GLVD_CHECK(!views.empty(), "feature computation needs at least one view");
    SceneFeatures f;
    for (const ViewInput& v : views) {
        f.fv.push_back(model.fv(v.image, v.mask));
        if (model.keypoint_branch_active()) {
            Tensor heat;
            if (model.cfg.use_heatmaps) {
                GLVD_CHECK(model.hm.has_value(),
                           "model wants heatmaps but carries no prior");
                heat = model.hm->frozen(v.image, v.mask);
            }
            f.fk.push_back((*model.fs)(v.image, v.mask, f.fv.back()[0], heat));
        }
        f.cams.push_back(v.cam);
    }
    return f;
}

// The optimizer's iterate: current vertex and keypoint estimates.
struct DescentState {
    Tensor vertices;   // [N,3]
    Tensor keypoints;  // [K,3]
    int iteration = 0;
};

inline std::vector<Vec3> tensor_to_points(const Tensor& t) {
    GLVD_CHECK(t.rank() == 2 && t.dim(1) == 3, "expected a [P,3] tensor");
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(t.dim(0)));
    for (int i = 0; i < t.dim(0); ++i)
        out.push_back({t(i, 0), t(i, 1), t(i, 2)});
    return out;
}

// Keypoint-branch update: per view the input row for keypoint j is its
// current position plus the keypoint feature map sampled there; trunks are
// averaged over views and the head's diagonal gives one displacement per
// keypoint, clipped onto the step-size sphere.
inline Tensor g_k_step(const GlvdModel& model, const DescentState& state,
                       const SceneFeatures& feats, double clip) {
    GLVD_CHECK(model.gk.has_value(),
               "keypoint branch is inactive with encoding 'none'");
    GLVD_CHECK(!feats.cams.empty(), "keypoint step: no views");
    const std::vector<Vec3> pts = tensor_to_points(state.keypoints);
    std::vector<Tensor> inputs;
    inputs.reserve(feats.cams.size());
    for (std::size_t v = 0; v < feats.cams.size(); ++v) {
        const ProjectedQueries q = project_points(pts, feats.cams[v]);
        const Tensor desc = sample_descriptors({feats.fk[v]}, q);
        inputs.push_back(hstack({state.keypoints, desc}));
    }
    return clip_rows(model.gk->diagonal(model.gk->trunk(inputs)), clip);
}

// Vertex-branch update: per view the input row for vertex i is its optional
// position, its pixel-aligned descriptor, and the spatial encoding payload
// built from the current keypoints.
inline Tensor g_v_step(const GlvdModel& model, const DescentState& state,
                       const SceneFeatures& feats, double clip) {
    GLVD_CHECK(!feats.cams.empty(), "vertex step: no views");
    const std::vector<Vec3> pts = tensor_to_points(state.vertices);
    std::vector<Tensor> inputs;
    inputs.reserve(feats.cams.size());
    for (std::size_t v = 0; v < feats.cams.size(); ++v) {
        const ProjectedQueries q = project_points(pts, feats.cams[v]);
        const Tensor desc = sample_descriptors(feats.fv[v], q);
        const Tensor payload = encoding_payload(
            model.cfg.encoding, state.vertices, state.keypoints, desc,
            model.attn ? &*model.attn : nullptr);
        std::vector<Tensor> parts;
        if (model.cfg.include_vertex_pos) parts.push_back(state.vertices);
        parts.push_back(desc);
        if (payload.defined()) parts.push_back(payload);
        inputs.push_back(parts.size() == 1 ? parts[0] : hstack(parts));
    }
    Tensor h = model.gv.trunk(inputs);
    if (model.gattn) h = (*model.gattn)(h);
    return clip_rows(model.gv.diagonal(h), clip);
}

struct DescentResult {
    Mesh mesh;                          // final vertices on the template topology
    std::vector<DescentState> history;  // states 0 (init) .. steps
};

// Keypoints start uniformly in the [-1,1] cube from the given seed; the
// draw is made in all modes so downstream consumers see a deterministic
// state, but with encoding "none" nothing ever reads it.
inline Tensor init_keypoints(int count, std::uint64_t seed) {
    Rng rng(seed);
    Tensor kp({count, 3}, 0.0);
    for (std::size_t i = 0; i < kp.numel(); ++i)
        kp.data()[i] = rng.uniform(-1.0, 1.0);
    return kp;
}

// The iteration loop on precomputed features; exposed separately so callers
// can amortize (or time) feature extraction apart from the loop itself.
inline DescentResult descend(const GlvdModel& model, const SceneFeatures& feats,
                             int steps, std::uint64_t keypoint_seed,
                             const std::vector<Vec3>* init_vertices = nullptr) {
    GLVD_CHECK(steps >= 0, "descent: negative step count");
    NoGrad ng;
    DescentState st;
    st.vertices = points_tensor(init_vertices ? *init_vertices
                                              : model.template_mesh.vertices);
    GLVD_CHECK(st.vertices.dim(0) == model.n_vertices(),
               "descent: init has ", st.vertices.dim(0), " vertices, template ",
               model.n_vertices());
    st.keypoints = init_keypoints(model.n_keypoints(), keypoint_seed);
    st.iteration = 0;

    DescentResult out;
    out.history.push_back(st);
    const double clip = model.cfg.clip_infer;
    const bool sequential = model.cfg.scheme == "sequential";
    for (int t = 1; t <= steps; ++t) {
        DescentState next;
        next.iteration = t;
        if (model.keypoint_branch_active()) {
            const Tensor dk = g_k_step(model, st, feats, clip);
            if (sequential) {
                // Keypoints move first; the vertex update sees the new ones.
                next.keypoints = add(st.keypoints, dk);
                const DescentState mid{st.vertices, next.keypoints, t};
                next.vertices = add(st.vertices,
                                    g_v_step(model, mid, feats, clip));
            } else {
                // Parallel update: both displacements read the same state.
                const Tensor dv = g_v_step(model, st, feats, clip);
                next.keypoints = add(st.keypoints, dk);
                next.vertices = add(st.vertices, dv);
            }
        } else {
            next.keypoints = st.keypoints;
            next.vertices =
                add(st.vertices, g_v_step(model, st, feats, clip));
        }
        st = std::move(next);
        out.history.push_back(st);
    }

    out.mesh = model.template_mesh;
    out.mesh.vertices = tensor_to_points(st.vertices);
    return out;
}

inline DescentResult run_descent(const GlvdModel& model,
                                 const std::vector<ViewInput>& views,
                                 int steps, std::uint64_t keypoint_seed,
                                 const std::vector<Vec3>* init_vertices = nullptr) {
    NoGrad ng;
    const SceneFeatures feats = compute_features(model, views);
    return descend(model, feats, steps, keypoint_seed, init_vertices);
}

// ----------------------- reference-space handling --------------------------

// Single-view reconstruction works in the conditioning camera's rotation
// frame: x_ref = R_ref · x_world (heads are centered, so rotation alone
// keeps the cube centered). Cameras re-expressed in that frame keep their
// translations; the reference view itself becomes the identity rotation
// looking down +z.
struct ReferenceFrame {
    Mat3 rot;  // world -> reference
};

inline ReferenceFrame reference_frame(const CameraView& reference_view) {
    return {reference_view.rotation};
}

inline ReferenceFrame canonical_frame() { return {Mat3::identity()}; }

inline CameraView in_reference(const CameraView& cam, const ReferenceFrame& rf) {
    CameraView out = cam;
    out.rotation = cam.rotation * rf.rot.transposed();
    return out;
}

inline Vec3 in_reference(const Vec3& p, const ReferenceFrame& rf) {
    return rf.rot * p;
}

inline Mesh in_reference(const Mesh& mesh, const ReferenceFrame& rf) {
    Mesh out = mesh;
    for (Vec3& v : out.vertices) v = rf.rot * v;
    return out;
}

inline std::vector<Vec3> in_reference(const std::vector<Vec3>& pts,
                                      const ReferenceFrame& rf) {
    std::vector<Vec3> out;
    out.reserve(pts.size());
    for (const Vec3& p : pts) out.push_back(rf.rot * p);
    return out;
}

}  // namespace glvd
