#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "glvd/config.hpp"
#include "glvd/geometry/keypoints.hpp"
#include "glvd/synth/augment.hpp"
#include "glvd/synth/scene.hpp"
#include "glvd/tensor/serialize.hpp"

namespace glvd {

inline const std::vector<std::string>& corpus_splits() {
    static const std::vector<std::string> s{"train", "val", "test"};
    return s;
}

namespace detail {
inline std::string identity_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "identity_%04d", index);
    return buf;
}
}  // namespace detail

inline std::string scene_dir_path(const std::string& root,
                                  const std::string& split, int index) {
    return root + "/" + split + "/" + detail::identity_dir_name(index);
}

// Deterministic scene construction: (seed, split, index) fully determine the
// identity, the optional mirroring, and the cameras. Augmentation happens at
// render time so the stored intrinsics always match the stored pixels.
inline SynthScene build_scene(const ExperimentConfig& cfg, const Mesh& tmpl,
                              const IdentityBasis& basis, std::uint64_t seed,
                              const std::string& split, int index,
                              NormTransform* applied = nullptr) {
    Rng rng(Rng::derive(seed, fnv1a(split), static_cast<std::uint64_t>(index), 1));
    SynthScene scene;
    scene.identity = sample_identity(rng, cfg.identity_dim, cfg.identity_scale);
    scene.mesh = generate_identity(scene.identity, tmpl, basis, applied);
    scene.cameras = orbit_cameras(cfg.yaw_list(), cfg.orbit_radius,
                                  cfg.image_size, cfg.focal_scale);
    if (split == "train" && rng.coin(cfg.symmetrize_prob))
        scene = symmetrize(scene);
    return scene;
}

namespace detail {

inline nlohmann::json camera_json(const CameraView& cam) {
    nlohmann::json j;
    j["yaw"] = cam.yaw_deg;
    j["width"] = cam.width;
    j["height"] = cam.height;
    j["fx"] = cam.fx;
    j["fy"] = cam.fy;
    j["cx"] = cam.cx;
    j["cy"] = cam.cy;
    j["rotation"] = cam.rotation.m;
    j["translation"] = {cam.translation.x, cam.translation.y, cam.translation.z};
    return j;
}

inline CameraView camera_from_json(const nlohmann::json& j) {
    CameraView cam;
    cam.yaw_deg = j.at("yaw").get<double>();
    cam.width = j.at("width").get<int>();
    cam.height = j.at("height").get<int>();
    cam.fx = j.at("fx").get<double>();
    cam.fy = j.at("fy").get<double>();
    cam.cx = j.at("cx").get<double>();
    cam.cy = j.at("cy").get<double>();
    cam.rotation.m = j.at("rotation").get<std::array<double, 9>>();
    const auto t = j.at("translation").get<std::array<double, 3>>();
    cam.translation = {t[0], t[1], t[2]};
    cam.validate();
    return cam;
}

}  // namespace detail

// Writes one identity directory: mesh.ply, one tensor container per view,
// and meta.json with the identity coefficients, the normalization transform
// applied at generation, and the (possibly augmentation-adjusted) cameras.
inline void write_scene_dir(const std::string& dir, const SynthScene& scene,
                            const std::vector<Tensor>& images,
                            const NormTransform& norm,
                            const std::string& fingerprint,
                            const std::string& split, int index) {
    GLVD_CHECK(images.size() == scene.cameras.size(),
               "every camera needs a rendered view");
    std::filesystem::create_directories(dir);
    save_ply(dir + "/mesh.ply", scene.mesh);
    nlohmann::json meta;
    meta["split"] = split;
    meta["index"] = index;
    meta["mirrored"] = scene.mirrored;
    meta["identity"] = scene.identity.coeffs;
    meta["normalization"] = {{"scale", norm.scale},
                             {"center", {norm.center.x, norm.center.y,
                                         norm.center.z}}};
    auto& views = meta["views"] = nlohmann::json::array();
    for (std::size_t v = 0; v < images.size(); ++v) {
        views.push_back(detail::camera_json(scene.cameras[v]));
        nlohmann::json vm;
        vm["view"] = v;
        vm["yaw"] = scene.cameras[v].yaw_deg;
        save_tensor_file(dir + "/view_" + std::to_string(v) + ".bin",
                         {{"image", images[v]}}, fingerprint, vm);
    }
    write_file_bytes(dir + "/meta.json", meta.dump(2) + "\n");
}

// One loaded identity directory.
struct SceneData {
    std::string dir;
    Mesh mesh;
    std::vector<CameraView> cameras;
    std::vector<Tensor> images;  // each [5, H, W]
    IdentityParams identity;
    NormTransform norm;
    bool mirrored = false;

    int view_by_yaw(double yaw) const {
        for (std::size_t v = 0; v < cameras.size(); ++v)
            if (cameras[v].yaw_deg == yaw) return static_cast<int>(v);
        fail("scene ", dir, " has no view at yaw ", yaw);
    }
};

inline SceneData load_scene_dir(const std::string& dir) {
    SceneData s;
    s.dir = dir;
    s.mesh = load_ply(dir + "/mesh.ply");
    const nlohmann::json meta =
        nlohmann::json::parse(read_file_bytes(dir + "/meta.json"));
    s.identity.coeffs = meta.at("identity").get<std::vector<double>>();
    s.mirrored = meta.at("mirrored").get<bool>();
    s.norm.scale = meta.at("normalization").at("scale").get<double>();
    const auto c =
        meta.at("normalization").at("center").get<std::array<double, 3>>();
    s.norm.center = {c[0], c[1], c[2]};
    for (const auto& vj : meta.at("views"))
        s.cameras.push_back(detail::camera_from_json(vj));
    for (std::size_t v = 0; v < s.cameras.size(); ++v) {
        const TensorFile tf =
            load_tensor_file(dir + "/view_" + std::to_string(v) + ".bin");
        s.images.push_back(tf.get("image"));
        GLVD_CHECK(s.images.back().rank() == 3 &&
                       s.images.back().dim(0) == kImageChannels,
                   "view file ", v, " in ", dir, " is not a [5, H, W] render");
    }
    s.mesh.validate();
    return s;
}

// The corpus index: everything a consumer needs to locate scenes and to
// reconstruct with the same template, keypoints, and settings.
struct CorpusIndex {
    std::string root;
    std::string fingerprint;
    std::uint64_t seed = 0;
    ExperimentConfig config;
    std::vector<int> keypoint_indices;
    Mesh mean_mesh;
    std::map<std::string, int> split_counts;

    int count(const std::string& split) const {
        auto it = split_counts.find(split);
        GLVD_CHECK(it != split_counts.end(), "corpus has no split '", split, "'");
        return it->second;
    }

    std::vector<std::string> scene_dirs(const std::string& split) const {
        std::vector<std::string> dirs;
        for (int i = 0; i < count(split); ++i)
            dirs.push_back(scene_dir_path(root, split, i));
        return dirs;
    }
};

// Generates every split, the train-mean mesh, the keypoint selection, and
// the index file. Byte-for-byte deterministic in (config, seed).
inline CorpusIndex generate_corpus(const ExperimentConfig& cfg,
                                   const std::string& root,
                                   std::uint64_t seed) {
    cfg.validate();
    const Mesh tmpl = make_head_template(cfg.template_grid);
    const IdentityBasis basis = IdentityBasis::standard(cfg.identity_dim, tmpl);
    const std::vector<double> yaws = cfg.yaw_list();
    const std::string fingerprint = cfg.fingerprint();
    std::filesystem::create_directories(root);

    std::vector<Vec3> mean_accum(tmpl.vertices.size());
    CorpusIndex index;
    index.root = root;
    index.fingerprint = fingerprint;
    index.seed = seed;
    index.config = cfg;

    const std::map<std::string, int> counts{{"train", cfg.train_identities},
                                            {"val", cfg.val_identities},
                                            {"test", cfg.test_identities}};
    for (const std::string& split : corpus_splits()) {
        const int n = counts.at(split);
        index.split_counts[split] = n;
        for (int i = 0; i < n; ++i) {
            NormTransform norm;
            SynthScene scene = build_scene(cfg, tmpl, basis, seed, split, i, &norm);
            std::vector<Tensor> images;
            for (std::size_t v = 0; v < scene.cameras.size(); ++v) {
                Tensor img =
                    rasterize(scene.mesh, scene.cameras[v], cfg.orbit_radius)
                        .image;
                if (split == "train" && cfg.augment) {
                    Rng arng(Rng::derive(seed, fnv1a(split),
                                         static_cast<std::uint64_t>(i),
                                         1000 + static_cast<std::uint64_t>(v)));
                    const AugmentParams p = draw_augment_params(
                        arng, cfg.image_size, cfg.image_size,
                        cfg.blur_sigma_max, cfg.crop_zoom_min);
                    apply_augment(img, scene.cameras[v], p);
                }
                images.push_back(std::move(img));
            }
            write_scene_dir(scene_dir_path(root, split, i), scene, images,
                            norm, fingerprint, split, i);
            if (split == "train")
                for (std::size_t k = 0; k < mean_accum.size(); ++k)
                    mean_accum[k] += scene.mesh.vertices[k];
        }
    }

    index.mean_mesh = tmpl;
    for (std::size_t k = 0; k < mean_accum.size(); ++k)
        index.mean_mesh.vertices[k] =
            mean_accum[k] / static_cast<double>(cfg.train_identities);
    save_ply(root + "/mean_mesh.ply", index.mean_mesh);
    index.keypoint_indices =
        farthest_point_sample(index.mean_mesh, cfg.keypoint_count);

    nlohmann::json j;
    j["format"] = "glvd.corpus.v1";
    j["fingerprint"] = fingerprint;
    j["seed"] = seed;
    j["splits"] = index.split_counts;
    j["yaws"] = yaws;
    j["keypoints"] = index.keypoint_indices;
    j["mean_mesh"] = "mean_mesh.ply";
    j["config"] = cfg.to_text();
    write_file_bytes(root + "/corpus.json", j.dump(2) + "\n");
    return index;
}

inline CorpusIndex load_corpus(const std::string& root) {
    const std::string path = root + "/corpus.json";
    GLVD_CHECK(std::filesystem::exists(path),
               "no corpus at ", root, " (missing corpus.json)");
    const nlohmann::json j = nlohmann::json::parse(read_file_bytes(path));
    GLVD_CHECK(j.at("format").get<std::string>() == "glvd.corpus.v1",
               "unrecognized corpus format in ", path);
    CorpusIndex index;
    index.root = root;
    index.fingerprint = j.at("fingerprint").get<std::string>();
    index.seed = j.at("seed").get<std::uint64_t>();
    index.config = parse_config_text(j.at("config").get<std::string>());
    index.keypoint_indices = j.at("keypoints").get<std::vector<int>>();
    index.split_counts =
        j.at("splits").get<std::map<std::string, int>>();
    index.mean_mesh =
        load_ply(root + "/" + j.at("mean_mesh").get<std::string>());
    GLVD_CHECK(index.fingerprint == index.config.fingerprint(),
               "corpus fingerprint does not match its stored config");
    return index;
}

}  // namespace glvd
