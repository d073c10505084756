#pragma once

#include <optional>
#include <string>
#include <vector>

#include "glvd/descent/branches.hpp"
#include "glvd/descent/encoding.hpp"
#include "glvd/encoder/feature_net.hpp"
#include "glvd/encoder/fusion_net.hpp"
#include "glvd/encoder/heatmap_net.hpp"
#include "glvd/geometry/mesh.hpp"

namespace glvd {

// The full reconstruction model: the feature encoder, the (frozen) keypoint
// heatmap prior, the fusion net and keypoint branch that track guiding
// keypoints, and the vertex branch that moves the template mesh. Which parts
// exist follows the configuration: with spatial encoding "none" the whole
// keypoint side is absent, and the heatmap prior only exists when the fusion
// net consumes it.
struct GlvdModel {
    ExperimentConfig cfg;
    Mesh template_mesh;                // mean shape; topology of every output
    std::vector<int> keypoint_indices; // template vertices acting as keypoints

    FeatureNet fv;
    std::optional<HeatmapNet> hm;           // frozen prior, never trained here
    std::optional<FusionNet> fs;
    std::optional<DisplacementBranch> gk;
    DisplacementBranch gv;
    std::optional<AttentionScorer> attn;
    std::optional<GlobalAttention> gattn;

    GlvdModel() = default;
    GlvdModel(const ExperimentConfig& cfg_, Mesh template_mesh_,
              std::vector<int> keypoint_indices_, Rng& rng)
        : cfg(cfg_),
          template_mesh(std::move(template_mesh_)),
          keypoint_indices(std::move(keypoint_indices_)),
          fv(cfg_, rng) {
        cfg.validate();
        GLVD_CHECK(static_cast<int>(keypoint_indices.size()) ==
                       cfg.keypoint_count,
                   "model: expected ", cfg.keypoint_count,
                   " keypoint indices, got ", keypoint_indices.size());
        template_mesh.validate();
        for (int k : keypoint_indices)
            GLVD_CHECK(k >= 0 && k < template_mesh.n_vertices(),
                       "model: keypoint index ", k, " outside the template");

        const int K = cfg.keypoint_count;
        const int N = template_mesh.n_vertices();
        if (keypoint_branch_active()) {
            if (cfg.use_heatmaps) hm.emplace(cfg, rng);
            fs.emplace(cfg, rng);
            gk.emplace("gk", 3 + cfg.channels, cfg.gk_hidden, K, false, rng);
        }
        const int gv_in = (cfg.include_vertex_pos ? 3 : 0) +
                          fv.descriptor_dim() + encoding_dim(cfg.encoding, K);
        gv = DisplacementBranch("gv", gv_in, cfg.gv_hidden, N, true, rng);
        if (cfg.encoding == "attention")
            attn.emplace("attn", fv.descriptor_dim(), K, cfg.attention_hidden,
                         rng);
        if (cfg.global_attention)
            gattn.emplace("gattn", cfg.gv_hidden, cfg.attention_hidden, rng);
    }

    bool keypoint_branch_active() const { return cfg.encoding != "none"; }

    int n_vertices() const { return template_mesh.n_vertices(); }
    int n_keypoints() const { return cfg.keypoint_count; }

    // Everything gradient descent may touch. The heatmap prior is excluded
    // by construction, which is what keeps it bit-frozen through training.
    std::vector<Parameter*> trainable() {
        std::vector<Parameter*> out;
        fv.collect(out);
        if (fs) fs->collect(out);
        if (gk) gk->collect(out);
        gv.collect(out);
        if (attn) attn->collect(out);
        if (gattn) gattn->collect(out);
        return out;
    }

    std::vector<Parameter*> all_parameters() {
        std::vector<Parameter*> out = trainable();
        if (hm) hm->collect(out);
        return out;
    }

    // Ground-truth keypoint positions of a mesh sharing the template
    // topology.
    std::vector<Vec3> keypoints_of(const Mesh& mesh) const {
        return keypoint_positions(mesh, keypoint_indices);
    }
};

namespace detail {

inline Tensor vec3_rows(const std::vector<Vec3>& pts) {
    return points_tensor(pts);
}

inline Tensor faces_tensor(const Mesh& mesh) {
    std::vector<double> v;
    v.reserve(mesh.faces.size() * 3);
    for (const auto& f : mesh.faces)
        for (int c = 0; c < 3; ++c) v.push_back(static_cast<double>(f[c]));
    return Tensor::from({mesh.n_faces(), 3}, std::move(v));
}

inline Tensor int_row(const std::vector<int>& xs) {
    std::vector<double> v(xs.begin(), xs.end());
    return Tensor::from({static_cast<int>(xs.size())}, std::move(v));
}

inline std::vector<int> row_ints(const Tensor& t) {
    std::vector<int> out;
    out.reserve(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i)
        out.push_back(static_cast<int>(t.data()[i]));
    return out;
}

}  // namespace detail

// One self-contained checkpoint: every parameter (including the frozen
// heatmap prior when present), the template mesh, the keypoint selection,
// and the full configuration text. Anything needed to reconstruct is in the
// file.
inline void save_model(const std::string& path, GlvdModel& model) {
    auto entries = checkpoint_entries(model.all_parameters());
    entries.emplace_back("template.vertices",
                         detail::vec3_rows(model.template_mesh.vertices));
    entries.emplace_back("template.faces",
                         detail::faces_tensor(model.template_mesh));
    entries.emplace_back("template.keypoints",
                         detail::int_row(model.keypoint_indices));
    nlohmann::json meta;
    meta["kind"] = "glvd.model";
    meta["config"] = model.cfg.to_text();
    save_tensor_file(path, entries, model.cfg.fingerprint(), meta);
}

inline GlvdModel load_model(const std::string& path,
                            const std::string& expected_fingerprint = {}) {
    const TensorFile tf = load_tensor_file(path);
    GLVD_CHECK(tf.meta.value("kind", "") == "glvd.model",
               "checkpoint ", path, ": not a model checkpoint");
    if (!expected_fingerprint.empty())
        GLVD_CHECK(tf.fingerprint == expected_fingerprint,
                   "checkpoint ", path, ": architecture fingerprint ",
                   tf.fingerprint, " does not match the configured ",
                   expected_fingerprint);
    const ExperimentConfig cfg =
        parse_config_text(tf.meta.at("config").get<std::string>());
    GLVD_CHECK(cfg.fingerprint() == tf.fingerprint,
               "checkpoint ", path,
               ": stored config does not match its fingerprint");

    Mesh tmpl;
    const Tensor tv = tf.get("template.vertices");
    GLVD_CHECK(tv.rank() == 2 && tv.dim(1) == 3,
               "checkpoint ", path, ": bad template vertices");
    for (int i = 0; i < tv.dim(0); ++i)
        tmpl.vertices.push_back({tv(i, 0), tv(i, 1), tv(i, 2)});
    const Tensor tfc = tf.get("template.faces");
    for (int i = 0; i < tfc.dim(0); ++i)
        tmpl.faces.push_back({static_cast<int>(tfc(i, 0)),
                              static_cast<int>(tfc(i, 1)),
                              static_cast<int>(tfc(i, 2))});

    Rng rng(0);  // placeholder weights, overwritten below
    GlvdModel model(cfg, std::move(tmpl),
                    detail::row_ints(tf.get("template.keypoints")), rng);
    load_parameters(model.all_parameters(), tf);
    return model;
}

// Installs surrogate heatmap weights from their standalone training
// checkpoint into the model's frozen prior slot.
inline void attach_heatmap_weights(GlvdModel& model, const std::string& path) {
    GLVD_CHECK(model.hm.has_value(),
               "model has no heatmap prior (encoding '", model.cfg.encoding,
               "', use_heatmaps=", model.cfg.use_heatmaps ? "true" : "false",
               ")");
    model.hm = load_heatmap_net(path, model.cfg);
}

}  // namespace glvd
