#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "glvd/encoder/fusion_net.hpp"
#include "glvd/encoder/heatmap_net.hpp"
#include "glvd/encoder/sdf_head.hpp"
#include "support/gradcheck.hpp"

using namespace glvd;

namespace {

ExperimentConfig tiny_cfg() {
    ExperimentConfig c;
    c.train_identities = 6;
    c.val_identities = 2;
    c.test_identities = 1;
    c.identity_dim = 8;
    c.yaw_angles = "0,-30,30";
    c.image_size = 32;
    c.keypoint_count = 12;
    c.template_grid = 8;
    c.augment = false;
    c.channels = 16;
    c.stacks = 2;
    c.groups = 4;
    c.heatmap_channels = 16;
    c.sdf_hidden = 32;
    c.lr = 3e-3;
    c.heatmap_epochs = 200;
    // Keep every rendered view un-mirrored: mirroring swaps the lateral
    // keypoint indices between sides, which makes their image locations
    // genuinely ambiguous and wrecks the localization bound checked below.
    c.symmetrize_prob = 0.0;
    return c;
}

struct EncFixture {
    ExperimentConfig cfg;
    CorpusIndex index;
    std::vector<SceneData> train, val;
};

EncFixture& fixture() {
    static EncFixture f = [] {
        EncFixture e;
        e.cfg = tiny_cfg();
        const std::string root =
            (std::filesystem::temp_directory_path() / "glvd_encoder_corpus")
                .string();
        std::filesystem::remove_all(root);
        e.index = generate_corpus(e.cfg, root, 77);
        for (const auto& d : e.index.scene_dirs("train"))
            e.train.push_back(load_scene_dir(d));
        for (const auto& d : e.index.scene_dirs("val"))
            e.val.push_back(load_scene_dir(d));
        return e;
    }();
    return f;
}

Tensor random_image(int c, int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(static_cast<std::size_t>(c) * h * w);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return Tensor::from({c, h, w}, std::move(v));
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

// The single-view SDF value at one world point, values only, full chain.
double sdf_value_at(const FeatureMaps& maps, const SdfNet& head, const Vec3& p,
                    const CameraView& cam) {
    NoGrad off;
    const std::vector<Vec3> pts{p};
    const ProjectedQueries q = project_points(pts, cam);
    return head(sample_descriptors(maps, q), points_tensor(pts)).value();
}

}  // namespace

TEST_CASE("feature net emits one map per stack at the render resolution") {
    ExperimentConfig cfg = tiny_cfg();
    Rng rng(11);
    FeatureNet fv(cfg, rng);
    const Tensor image = random_image(kImageChannels, 32, 32, 5);
    const Tensor mask = random_image(1, 32, 32, 6);
    NoGrad off;
    const FeatureMaps maps = fv(image, mask);
    REQUIRE(maps.size() == 2);
    for (const Tensor& m : maps) {
        CHECK(m.shape() == Shape{16, 32, 32});
        for (double v : m.vals()) CHECK(std::isfinite(v));
    }
    CHECK(fv.descriptor_dim() == 32);

    // Same input, same parameters: bitwise identical features.
    const FeatureMaps again = fv(image, mask);
    for (std::size_t s = 0; s < maps.size(); ++s)
        CHECK(maps[s].vals() == again[s].vals());
}

TEST_CASE("feature net at full configuration keeps 64x64x64 maps per stack") {
    ExperimentConfig cfg;  // defaults: 64 channels, 4 stacks, 64px renders
    Rng rng(3);
    FeatureNet fv(cfg, rng);
    const Tensor image = random_image(kImageChannels, 64, 64, 7);
    const Tensor mask = random_image(1, 64, 64, 8);
    NoGrad off;
    const FeatureMaps maps = fv(image, mask);
    REQUIRE(maps.size() == 4);
    for (const Tensor& m : maps) CHECK(m.shape() == Shape{64, 64, 64});
    CHECK(fv.descriptor_dim() == 256);
}

TEST_CASE("feature net rejects spatial sizes not divisible by four") {
    ExperimentConfig cfg = tiny_cfg();
    Rng rng(11);
    FeatureNet fv(cfg, rng);
    const Tensor image = random_image(kImageChannels, 30, 30, 5);
    const Tensor mask = random_image(1, 30, 30, 6);
    CHECK_THROWS_WITH_AS(fv(image, mask),
                         doctest::Contains("divisible by 4"), Error);
}

TEST_CASE("feature net stays finite on an all-zero input") {
    ExperimentConfig cfg = tiny_cfg();
    Rng rng(11);
    FeatureNet fv(cfg, rng);
    NoGrad off;
    const FeatureMaps maps = fv(Tensor({kImageChannels, 16, 16}, 0.0),
                                Tensor({1, 16, 16}, 0.0));
    for (const Tensor& m : maps)
        for (double v : m.vals()) CHECK(std::isfinite(v));
}

TEST_CASE("feature net gradients match finite differences through two stacks") {
    ExperimentConfig cfg = tiny_cfg();
    cfg.channels = 8;
    cfg.groups = 4;
    Rng rng(21);
    FeatureNet fv(cfg, rng);
    Tensor image = random_image(kImageChannels, 8, 8, 31);
    const Tensor mask = random_image(1, 8, 8, 32);

    // Random projection weights make the scalar loss sensitive to every
    // output element.
    std::vector<Tensor> probes;
    for (int s = 0; s < 2; ++s) probes.push_back(random_image(8, 8, 8, 40 + s));

    auto loss_fn = [&]() {
        const FeatureMaps maps = fv(image, mask);
        Tensor loss = sum(mul(maps[0], probes[0]));
        return add(loss, sum(mul(maps[1], probes[1])));
    };
    const double err = testing::gradcheck(
        loss_fn,
        {fv.stem.w.value, fv.stack_nets[0].down1.w.value,
         fv.stack_nets[0].mid.gamma.value, fv.stack_nets[1].up2.w.value,
         fv.stack_nets[1].up2.b.value, image});
    CHECK(err <= 1e-6);
}

TEST_CASE("descriptors read texel centers exactly and vanish behind camera") {
    const int C = 3, H = 16, W = 16;
    const FeatureMaps maps = {random_image(C, H, W, 51), random_image(C, H, W, 52)};
    const CameraView cam = make_orbit_camera(0.0, 2.5, W, H, 1.05);

    // Hand-built queries at exact texel centers.
    const std::vector<std::pair<int, int>> px = {{0, 0}, {7, 3}, {15, 15}, {4, 9}};
    std::vector<double> coords;
    for (auto [i, j] : px) {
        const Vec3 n = cam.pixel_to_norm(i, j);
        coords.push_back(n.x);
        coords.push_back(n.y);
    }
    ProjectedQueries q;
    q.pts = Tensor::from({static_cast<int>(px.size()), 2}, std::move(coords));
    q.front = Tensor({static_cast<int>(px.size())}, 1.0);
    q.jac = std::make_shared<std::vector<std::array<double, 6>>>(px.size());
    NoGrad off;
    const Tensor desc = sample_descriptors(maps, q);
    REQUIRE(desc.shape() == Shape{4, 2 * C});
    for (std::size_t p = 0; p < px.size(); ++p)
        for (int s = 0; s < 2; ++s)
            for (int c = 0; c < C; ++c)
                CHECK(desc(static_cast<int>(p), s * C + c) ==
                      maps[static_cast<std::size_t>(s)](c, px[p].second,
                                                        px[p].first));

    // A point behind the camera contributes an exactly zero descriptor row.
    const ProjectedQueries qb = project_points({{0.0, 0.0, 4.0}}, cam);
    CHECK(qb.front(0) == 0.0);
    const Tensor desc_b = sample_descriptors(maps, qb);
    for (int c = 0; c < 2 * C; ++c) CHECK(desc_b(0, c) == 0.0);

    // Continuity: a one-millionth-pixel move changes the descriptor by far
    // less than 1e-4 of the feature range.
    double range = 0.0;
    for (const Tensor& m : maps) {
        double lo = m.vals()[0], hi = m.vals()[0];
        for (double v : m.vals()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        range = std::max(range, hi - lo);
    }
    Rng rng(53);
    for (int trial = 0; trial < 50; ++trial) {
        const double u = rng.uniform(0.5, W - 1.5), v = rng.uniform(0.5, H - 1.5);
        ProjectedQueries qa;
        const Vec3 n0 = cam.pixel_to_norm(u, v);
        const Vec3 n1 = cam.pixel_to_norm(u + 1e-6, v);
        qa.pts = Tensor::from({2, 2}, {n0.x, n0.y, n1.x, n1.y});
        qa.front = Tensor({2}, 1.0);
        qa.jac = std::make_shared<std::vector<std::array<double, 6>>>(2);
        const Tensor d = sample_descriptors(maps, qa);
        for (int c = 0; c < 2 * C; ++c)
            CHECK(std::fabs(d(0, c) - d(1, c)) <= 1e-4 * range);
    }
}

TEST_CASE("projection jacobians match finite differences of the projector") {
    const CameraView cam = make_orbit_camera(30.0, 2.5, 32, 32, 1.05);
    Rng rng(61);
    const double h = 1e-6;
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 p{rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                     rng.uniform(-0.8, 0.8)};
        const ProjectedQueries q = project_points({p}, cam);
        REQUIRE(q.front(0) == 1.0);
        for (int k = 0; k < 3; ++k) {
            Vec3 lo = p, hi = p;
            (&lo.x)[k] -= h;
            (&hi.x)[k] += h;
            const ProjectedQueries qlo = project_points({lo}, cam);
            const ProjectedQueries qhi = project_points({hi}, cam);
            for (int axis = 0; axis < 2; ++axis) {
                const double fd = (qhi.pts(0, axis) - qlo.pts(0, axis)) / (2 * h);
                const double an = (*q.jac)[0][static_cast<std::size_t>(
                    axis * 3 + k)];
                CHECK(std::fabs(fd - an) <= 1e-6 * std::max(1.0, std::fabs(an)));
            }
        }
    }
}

TEST_CASE("heatmap targets paint gaussians only for visible keypoints") {
    const EncFixture& f = fixture();
    const SceneData& scene = f.train[0];
    const CameraView& cam = scene.cameras[0];
    const std::vector<Vec3> kp =
        keypoint_positions(scene.mesh, f.index.keypoint_indices);
    const Tensor targets = heatmap_targets(kp, cam, 2.0);
    REQUIRE(targets.shape() == Shape{12, 32, 32});

    for (int k = 0; k < 12; ++k) {
        const auto pr = cam.project(kp[static_cast<std::size_t>(k)]);
        REQUIRE(!pr.behind);
        REQUIRE(pr.inside);
        for (int y = 0; y < 32; y += 7)
            for (int x = 0; x < 32; x += 7) {
                const double du = x - pr.u, dv = y - pr.v;
                CHECK(targets(k, y, x) ==
                      std::exp(-(du * du + dv * dv) / 8.0));
            }
    }

    // A keypoint behind the camera gets an all-zero map.
    const Tensor hidden = heatmap_targets({{0.0, 0.0, 4.0}}, cam, 2.0);
    for (double v : hidden.vals()) CHECK(v == 0.0);

    // The untrained net already honors the output contract: [K,H,W] in [0,1].
    ExperimentConfig cfg = f.cfg;
    Rng rng(71);
    HeatmapNet net(cfg, rng);
    const Tensor maps = net.frozen(scene.images[0], mask_of(scene.images[0]));
    REQUIRE(maps.shape() == Shape{12, 32, 32});
    CHECK(!maps.requires_grad());
    for (double v : maps.vals()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    // At the full configuration the surrogate stays a small net.
    ExperimentConfig full;
    Rng rng2(72);
    HeatmapNet big(full, rng2);
    CHECK(big.parameter_count() >= 20000);
    CHECK(big.parameter_count() <= 80000);
}

TEST_CASE("heatmap surrogate localizes keypoints after its training stage") {
    const EncFixture& f = fixture();
    Rng rng(81);
    HeatmapNet net(f.cfg, rng);
    const HeatmapTrainStats stats =
        train_heatmap_net(net, f.train, f.index.keypoint_indices, f.cfg);
    CHECK(stats.pairs == 18);
    CHECK(stats.final_loss < stats.first_loss);

    const double err_px =
        heatmap_eval_px(net, f.val, f.index.keypoint_indices, 45.0);
    MESSAGE("surrogate mean argmax error: ", err_px, " px");
    CHECK(err_px <= 2.0);

    // Round-trip through a checkpoint preserves the evaluation bitwise.
    const std::string path =
        (std::filesystem::temp_directory_path() / "glvd_hm_ckpt.bin").string();
    save_heatmap_net(path, net, f.cfg);
    HeatmapNet back = load_heatmap_net(path, f.cfg);
    CHECK(heatmap_eval_px(back, f.val, f.index.keypoint_indices, 45.0) ==
          err_px);

    // A config with a different architecture must refuse the checkpoint.
    ExperimentConfig other = f.cfg;
    other.heatmap_channels = 8;
    CHECK_THROWS_WITH_AS(load_heatmap_net(path, other),
                         doctest::Contains("fingerprint"), Error);
    CHECK_THROWS_WITH_AS(load_heatmap_net("/nonexistent/hm.bin", f.cfg),
                         doctest::Contains("cannot open"), Error);
}

TEST_CASE("fusion branch fuses aligned inputs and routes gradients") {
    const EncFixture& f = fixture();
    const SceneData& scene = f.train[1];
    const Tensor& image = scene.images[0];
    const Tensor mask = mask_of(image);

    ExperimentConfig cfg = f.cfg;
    Rng rng(91);
    FeatureNet fv(cfg, rng);
    HeatmapNet hm(cfg, rng);
    FusionNet fs(cfg, rng);

    const Tensor heat = hm.frozen(image, mask);
    const FeatureMaps maps = fv(image, mask);
    const Tensor fk = fs(image, mask, maps[0], heat);
    REQUIRE(fk.shape() == Shape{16, 32, 32});

    // Wrong landmark count and missing heatmaps are hard errors.
    CHECK_THROWS_WITH_AS(fs(image, mask, maps[0], Tensor({13, 32, 32}, 0.0)),
                         doctest::Contains("heatmap channels"), Error);
    CHECK_THROWS_WITH_AS(fs(image, mask, maps[0]),
                         doctest::Contains("none supplied"), Error);

    // Gradients reach the fusion stem and the shared first stack, but never
    // the frozen landmark net, and never the unused second stack.
    sum(fk).backward();
    CHECK(max_abs(fs.stem.w.value.grad()) > 0.0);
    CHECK(max_abs(fv.stem.w.value.grad()) > 0.0);
    CHECK(max_abs(fv.stack_nets[0].up2.w.value.grad()) > 0.0);
    CHECK(hm.head_w.value.node()->grad.empty());
    CHECK(hm.block1.w.value.node()->grad.empty());
    CHECK(fv.stack_nets[1].up2.w.value.node()->grad.empty());

    // Without the heatmap input the branch runs on its own.
    ExperimentConfig lean = cfg;
    lean.use_heatmaps = false;
    Rng rng2(92);
    FusionNet fs2(lean, rng2);
    NoGrad off;
    CHECK(fs2(image, mask, maps[0]).shape() == Shape{16, 32, 32});
}

TEST_CASE("planted unit field zeroes both pretraining losses") {
    // Values of f(x) = x_z on the plane z = 0, gradient (0,0,1) everywhere.
    const int P = 64;
    CHECK(surface_loss(Tensor({P, 1}, 0.0)).value() == 0.0);
    std::vector<double> g;
    for (int i = 0; i < P; ++i) {
        g.push_back(0.0);
        g.push_back(0.0);
        g.push_back(1.0);
    }
    CHECK(eikonal_loss(Tensor::from({P, 3}, std::move(g))).value() == 0.0);
}

TEST_CASE("sdf input gradients match central finite differences") {
    const EncFixture& f = fixture();
    const SceneData& scene = f.val[0];
    const Tensor& image = scene.images[0];
    const CameraView& cam = scene.cameras[0];

    ExperimentConfig cfg = f.cfg;
    cfg.channels = 8;
    cfg.stacks = 2;
    Rng rng(101);
    FeatureNet fv(cfg, rng);
    SdfNet head(cfg, rng);

    NoGrad off;
    const FeatureMaps maps = fv(image, mask_of(image));

    Rng prng(102);
    std::vector<Vec3> pts;
    for (int i = 0; i < 40; ++i)
        pts.push_back({prng.uniform(-0.8, 0.8), prng.uniform(-0.8, 0.8),
                       prng.uniform(-0.8, 0.8)});
    const SdfEval eval = sdf_eval(maps, head, pts, cam);
    const ProjectedQueries q = project_points(pts, cam);

    const double h = 1e-6;
    int checked = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        // Keep probes away from texel-cell corners, where the sampled field
        // has legitimate kinks and one-sided derivatives.
        const double tx =
            (q.pts(static_cast<int>(i), 0) + 1.0) * 0.5 * cam.width - 0.5;
        const double ty =
            (q.pts(static_cast<int>(i), 1) + 1.0) * 0.5 * cam.height - 0.5;
        const double fx = tx - std::floor(tx), fy = ty - std::floor(ty);
        if (fx < 0.05 || fx > 0.95 || fy < 0.05 || fy > 0.95) continue;
        const double gnorm = std::hypot(eval.grads(static_cast<int>(i), 0),
                                        eval.grads(static_cast<int>(i), 1),
                                        eval.grads(static_cast<int>(i), 2));
        if (gnorm < 1e-3) continue;
        ++checked;
        for (int k = 0; k < 3; ++k) {
            Vec3 lo = pts[i], hi = pts[i];
            (&lo.x)[k] -= h;
            (&hi.x)[k] += h;
            const double fd = (sdf_value_at(maps, head, hi, cam) -
                               sdf_value_at(maps, head, lo, cam)) /
                              (2 * h);
            const double an = eval.grads(static_cast<int>(i), k);
            CHECK(std::fabs(fd - an) <= 1e-5 * std::max(1.0, gnorm));
        }
    }
    CHECK(checked >= 15);
}

TEST_CASE("eikonal loss backpropagates into network parameters") {
    const EncFixture& f = fixture();
    const SceneData& scene = f.val[1];
    const Tensor& image = scene.images[1];
    const CameraView& cam = scene.cameras[1];

    ExperimentConfig cfg = f.cfg;
    cfg.channels = 8;
    cfg.stacks = 2;
    cfg.image_size = 16;
    Rng rng(111);
    FeatureNet fv(cfg, rng);
    SdfNet head(cfg, rng);

    Rng prng(112);
    std::vector<Vec3> pts;
    for (int i = 0; i < 6; ++i)
        pts.push_back({prng.uniform(-0.7, 0.7), prng.uniform(-0.7, 0.7),
                       prng.uniform(-0.7, 0.7)});

    auto loss_fn = [&]() {
        const FeatureMaps maps = fv(image, mask_of(image));
        return eikonal_loss(sdf_eval(maps, head, pts, cam).grads);
    };
    const double err = testing::gradcheck(
        loss_fn, {head.b1.value, head.w3.value, fv.stem.b.value,
                  fv.stack_nets[0].mid.gamma.value});
    CHECK(err <= 1e-6);
}

TEST_CASE("sdf losses combine surface and volume terms deterministically") {
    const EncFixture& f = fixture();
    const SceneData& scene = f.train[2];

    ExperimentConfig cfg = f.cfg;
    cfg.channels = 8;
    Rng rng(121);
    FeatureNet fv(cfg, rng);
    SdfNet head(cfg, rng);

    NoGrad off;
    Rng s1(131), s2(131);
    const SdfLossTerms a = sdf_losses(fv, head, scene, 0, 64, 64, 0.1, s1);
    const SdfLossTerms b = sdf_losses(fv, head, scene, 0, 64, 64, 0.1, s2);
    CHECK(a.surf.value() == b.surf.value());
    CHECK(a.eik.value() == b.eik.value());
    CHECK(a.total.value() == a.surf.value() + 0.1 * a.eik.value());
    CHECK(std::isfinite(a.total.value()));
    CHECK(a.surf.value() > 0.0);
    CHECK(a.eik.value() > 0.0);

    CHECK_THROWS_WITH_AS(sdf_losses(fv, head, scene, 9, 8, 8, 0.1, s1),
                         doctest::Contains("out of range"), Error);
}

TEST_CASE("checkpoints restore parameters exactly and reject foreign configs") {
    ExperimentConfig cfg = tiny_cfg();
    Rng rng(141);
    FeatureNet fv(cfg, rng);
    std::vector<Parameter*> params;
    fv.collect(params);

    const std::string path =
        (std::filesystem::temp_directory_path() / "glvd_fv_ckpt.bin").string();
    save_params_file(path, params, cfg.fingerprint(), {{"kind", "features"}});
    const std::vector<double> saved_stem = fv.stem.w.value.vals();

    // Scramble, then restore.
    for (Parameter* p : params)
        for (double& v : p->value.vals()) v += 1.0;
    load_parameters(params, load_params_file(path, cfg.fingerprint()));
    CHECK(fv.stem.w.value.vals() == saved_stem);

    ExperimentConfig other = cfg;
    other.stacks = 3;
    CHECK_THROWS_WITH_AS(load_params_file(path, other.fingerprint()),
                         doctest::Contains("fingerprint"), Error);

    // Containers with missing or reshaped entries are rejected by name.
    Rng rng2(142);
    save_tensor_file(path, {{"fv.stem.w", Tensor({2, 2}, 0.0)}},
                     cfg.fingerprint());
    const TensorFile bad = load_params_file(path, cfg.fingerprint());
    CHECK_THROWS_WITH_AS(load_parameters(params, bad),
                         doctest::Contains("shape mismatch"), Error);
    CHECK_THROWS_WITH_AS(bad.get("fv.s0.mid.w"),
                         doctest::Contains("missing entry"), Error);
}
