#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "glvd/descent/run.hpp"
#include "glvd/synth/corpus.hpp"
#include "support/gradcheck.hpp"

using namespace glvd;

namespace {

bool same_bits(const Tensor& a, const Tensor& b) {
    if (!a.defined() || !b.defined()) return a.defined() == b.defined();
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.data(), b.data(), a.numel() * sizeof(double)) == 0;
}

bool same_points(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            const double x = a[i][c], y = b[i][c];
            if (std::memcmp(&x, &y, sizeof(double)) != 0) return false;
        }
    return true;
}

bool all_finite(const Tensor& t) {
    for (std::size_t i = 0; i < t.numel(); ++i)
        if (!std::isfinite(t.data()[i])) return false;
    return true;
}

double max_row_norm(const Tensor& d) {
    double worst = 0.0;
    for (int i = 0; i < d.dim(0); ++i)
        worst = std::max(worst, std::sqrt(d(i, 0) * d(i, 0) +
                                          d(i, 1) * d(i, 1) +
                                          d(i, 2) * d(i, 2)));
    return worst;
}

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
    Tensor t(shape, 0.0);
    for (std::size_t i = 0; i < t.numel(); ++i)
        t.data()[i] = rng.uniform(lo, hi);
    return t;
}

ExperimentConfig tiny_cfg() {
    ExperimentConfig c;
    c.train_identities = 1;
    c.val_identities = 1;
    c.test_identities = 1;
    c.identity_dim = 4;
    c.yaw_angles = "0,-30,30";
    c.image_size = 16;
    c.keypoint_count = 6;
    c.template_grid = 4;  // 98 template vertices
    c.augment = false;
    c.channels = 8;
    c.stacks = 2;
    c.groups = 4;
    c.heatmap_channels = 8;
    c.gk_hidden = 32;
    c.gv_hidden = 48;
    c.attention_hidden = 16;
    return c;
}

struct DescentFixture {
    ExperimentConfig cfg;
    Mesh tmpl;
    std::vector<int> kp_indices;
    SynthScene scene;
    std::vector<ViewInput> views;
};

DescentFixture& fixture() {
    static DescentFixture f = [] {
        DescentFixture d;
        d.cfg = tiny_cfg();
        d.tmpl = make_head_template(d.cfg.template_grid);
        d.kp_indices = farthest_point_sample(d.tmpl, d.cfg.keypoint_count);
        const IdentityBasis basis =
            IdentityBasis::standard(d.cfg.identity_dim, d.tmpl);
        d.scene = build_scene(d.cfg, d.tmpl, basis, 5, "val", 0);
        for (std::size_t v = 0; v < d.scene.cameras.size(); ++v) {
            const Tensor img =
                rasterize(d.scene.mesh, d.scene.cameras[v], d.cfg.orbit_radius)
                    .image;
            d.views.push_back({img, mask_of(img), d.scene.cameras[v]});
        }
        return d;
    }();
    return f;
}

GlvdModel make_model(const std::string& encoding, std::uint64_t seed = 7,
                     bool heatmaps = true, bool global_attention = false,
                     const std::string& scheme = "iterative") {
    const DescentFixture& f = fixture();
    ExperimentConfig c = f.cfg;
    c.encoding = encoding;
    c.use_heatmaps = heatmaps;
    c.global_attention = global_attention;
    c.scheme = scheme;
    Rng rng(seed);
    return GlvdModel(c, f.tmpl, f.kp_indices, rng);
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("encoding: payload widths and exact contents per mode") {
    Rng rng(31);
    const int Q = 5, K = 6;
    Tensor queries = random_tensor({Q, 3}, rng);
    const Tensor keypoints = random_tensor({K, 3}, rng);

    CHECK(encoding_dim("relative", K) == 3 * K);
    CHECK(encoding_dim("concat", K) == 3 * K);
    CHECK(encoding_dim("norm", K) == K);
    CHECK(encoding_dim("attention", K) == 3);
    CHECK(encoding_dim("none", K) == 0);
    CHECK_THROWS_WITH_AS(encoding_dim("fourier", K),
                         doctest::Contains("encoding"), Error);

    // Offsets point from the query to each keypoint, coordinate for
    // coordinate, with no arithmetic beyond one subtraction.
    const Tensor rel = relative_offsets(queries, keypoints);
    REQUIRE(rel.dim(0) == Q);
    REQUIRE(rel.dim(1) == 3 * K);
    for (int q = 0; q < Q; ++q)
        for (int j = 0; j < K; ++j)
            for (int c = 0; c < 3; ++c)
                CHECK(rel(q, 3 * j + c) == keypoints(j, c) - queries(q, c));

    // A query sitting exactly on a keypoint gets an exactly-zero offset.
    for (int c = 0; c < 3; ++c) queries.data()[c] = keypoints(2, c);
    const Tensor rel2 = relative_offsets(queries, keypoints);
    for (int c = 0; c < 3; ++c) CHECK(rel2(0, 6 + c) == 0.0);

    // Broadcast mode repeats the flattened keypoints in every row.
    const Tensor bc = keypoints_broadcast(Q, keypoints);
    REQUIRE(bc.dim(0) == Q);
    REQUIRE(bc.dim(1) == 3 * K);
    for (int q = 0; q < Q; ++q)
        for (int j = 0; j < K; ++j)
            for (int c = 0; c < 3; ++c)
                CHECK(bc(q, 3 * j + c) == keypoints(j, c));

    // Distances reduce each offset triple with the canonical Euclidean
    // expression.
    const Tensor dist = keypoint_distances(queries, keypoints);
    REQUIRE(dist.dim(0) == Q);
    REQUIRE(dist.dim(1) == K);
    for (int q = 0; q < Q; ++q)
        for (int j = 0; j < K; ++j) {
            const double x = rel2(q, 3 * j), y = rel2(q, 3 * j + 1),
                         z = rel2(q, 3 * j + 2);
            CHECK(dist(q, j) == std::sqrt(x * x + y * y + z * z));
        }
    CHECK(dist(0, 2) == 0.0);

    // The payload dispatcher matches the standalone builders and rejects
    // unknown modes; "none" yields no payload at all.
    const Tensor desc = random_tensor({Q, 4}, rng);
    CHECK(same_bits(encoding_payload("relative", queries, keypoints, desc,
                                     nullptr),
                    relative_offsets(queries, keypoints)));
    CHECK(same_bits(encoding_payload("concat", queries, keypoints, desc,
                                     nullptr),
                    keypoints_broadcast(Q, keypoints)));
    CHECK(same_bits(encoding_payload("norm", queries, keypoints, desc,
                                     nullptr),
                    keypoint_distances(queries, keypoints)));
    CHECK_FALSE(
        encoding_payload("none", queries, keypoints, desc, nullptr).defined());
    CHECK_THROWS_WITH_AS(
        encoding_payload("fourier", queries, keypoints, desc, nullptr),
        doctest::Contains("encoding"), Error);
    CHECK_THROWS_WITH_AS(
        encoding_payload("attention", queries, keypoints, desc, nullptr),
        doctest::Contains("scorer"), Error);
}

TEST_CASE("encoding: attention payload is a convex blend of the offsets") {
    Rng rng(57);
    const int Q = 7, K = 6, D = 8;
    const Tensor queries = random_tensor({Q, 3}, rng);
    const Tensor keypoints = random_tensor({K, 3}, rng);
    Tensor desc = random_tensor({Q, D}, rng);
    const AttentionScorer scorer("s", D, K, 16, rng);

    const Tensor dist = keypoint_distances(queries, keypoints);
    const Tensor w = scorer(desc, dist);
    REQUIRE(w.dim(0) == Q);
    REQUIRE(w.dim(1) == K);
    for (int q = 0; q < Q; ++q) {
        double row = 0.0;
        for (int j = 0; j < K; ++j) {
            CHECK(w(q, j) >= 0.0);
            row += w(q, j);
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }

    // The blended payload equals a plain ascending-index accumulation of
    // weight * offset, bit for bit.
    const Tensor payload =
        encoding_payload("attention", queries, keypoints, desc, &scorer);
    REQUIRE(payload.dim(0) == Q);
    REQUIRE(payload.dim(1) == 3);
    const Tensor rel = relative_offsets(queries, keypoints);
    for (int q = 0; q < Q; ++q)
        for (int c = 0; c < 3; ++c) {
            double acc = 0.0;
            for (int j = 0; j < K; ++j) acc += w(q, j) * rel(q, 3 * j + c);
            CHECK(payload(q, c) == acc);
        }

    // The scorer path is differentiable: descriptors and every scorer
    // parameter receive gradient from the payload.
    AttentionScorer train("t", D, K, 16, rng);
    desc.set_requires_grad(true);
    Tensor loss = sum(square(
        encoding_payload("attention", queries, keypoints, desc, &train)));
    loss.backward();
    auto nonzero = [](const std::vector<double>& g) {
        for (double x : g)
            if (x != 0.0) return true;
        return false;
    };
    CHECK(nonzero(desc.grad()));
    CHECK(nonzero(train.w1.value.grad()));
    CHECK(nonzero(train.b1.value.grad()));
    CHECK(nonzero(train.w2.value.grad()));
    CHECK(nonzero(train.b2.value.grad()));
}

TEST_CASE("branch: view aggregation is order-free and exact for duplicates") {
    Rng rng(11);
    const int Q = 9, in = 10;
    const DisplacementBranch br("b", in, 16, 4, true, rng);
    const Tensor a = random_tensor({Q, in}, rng);
    const Tensor b = random_tensor({Q, in}, rng);
    const Tensor c = random_tensor({Q, in}, rng);

    // Any arrival order of the per-view activations gives the same bits.
    const Tensor abc = br.trunk({a, b, c});
    CHECK(same_bits(abc, br.trunk({c, a, b})));
    CHECK(same_bits(abc, br.trunk({b, c, a})));
    CHECK(same_bits(abc, br.trunk({c, b, a})));

    // One view passes through untouched by the aggregation.
    const Tensor single = br.trunk({a});
    CHECK(same_bits(single, relu(br.l2(relu(br.l1(a))))));

    // Feeding the same view twice is exactly the single view: the mean of
    // two identical values divides by a power of two.
    CHECK(same_bits(br.trunk({a, a}), single));

    CHECK_THROWS_WITH_AS(br.trunk({}), doctest::Contains("no views"), Error);
}

TEST_CASE("branch: diagonal head equals the matching rows of the full head") {
    Rng rng(19);
    const int T = 13, hidden = 12;
    for (const bool normed : {false, true}) {
        const DisplacementBranch br("b", 7, hidden, T, normed, rng);
        const Tensor h = random_tensor({T, hidden}, rng);
        const Tensor full = br.full(h);
        const Tensor diag = br.diagonal(h);
        REQUIRE(full.dim(0) == T);
        REQUIRE(full.dim(1) == 3 * T);
        REQUIRE(diag.dim(0) == T);
        REQUIRE(diag.dim(1) == 3);
        for (int i = 0; i < T; ++i)
            for (int c = 0; c < 3; ++c)
                CHECK(diag(i, c) == full(i, 3 * i + c));
    }
}

TEST_CASE("branch: weight-normalized rows stay calibrated") {
    Rng rng(23);
    const DenseLayer layer("wn", 6, 5, true, rng);

    // Effective row norms equal the gains.
    const Tensor w = layer.weight();
    const Tensor norms = row_norms(w);
    for (int o = 0; o < 5; ++o)
        CHECK(norms.data()[o] ==
              doctest::Approx(layer.g.value.data()[o]).epsilon(1e-12));

    // At initialization the gain calibration makes the effective weight the
    // raw directions, bit for bit.
    CHECK(same_bits(w, layer.v.value));

    // Both the direction matrix and the gains receive correct gradients.
    Tensor x = random_tensor({4, 6}, rng);
    Tensor v = random_tensor({5, 6}, rng);
    Tensor g = random_tensor({5}, rng, 0.5, 1.5);
    Tensor b = random_tensor({5}, rng);
    const double err = testing::gradcheck(
        [&] { return sum(square(weight_norm_linear(x, v, g, b))); },
        {x, v, g, b});
    CHECK(err < 1e-6);
}

TEST_CASE("branch: row clipping preserves direction and short rows") {
    Tensor d({3, 3}, 0.0);
    // Row 0: norm 0.4. Row 1: norm 0.05. Row 2: exactly zero.
    d.data()[0] = 0.4 * 0.6;
    d.data()[1] = 0.4 * 0.8;
    d.data()[4] = 0.05;
    const Tensor clipped = clip_rows(d, 0.1);

    const double n0 = std::sqrt(clipped(0, 0) * clipped(0, 0) +
                                clipped(0, 1) * clipped(0, 1));
    CHECK(n0 == doctest::Approx(0.1).epsilon(1e-12));
    const double cosang =
        (clipped(0, 0) * d(0, 0) + clipped(0, 1) * d(0, 1)) / (n0 * 0.4);
    CHECK(cosang >= 1.0 - 1e-12);

    for (int c = 0; c < 3; ++c) {
        CHECK(clipped(1, c) == d(1, c));
        CHECK(clipped(2, c) == 0.0);
    }
}

TEST_CASE("descent: encoding 'none' ignores keypoints entirely") {
    const DescentFixture& f = fixture();
    const GlvdModel plain = make_model("none");

    // The keypoint seed is irrelevant when no payload reads the keypoints.
    const DescentResult r1 = run_descent(plain, f.views, 3, 1);
    const DescentResult r2 = run_descent(plain, f.views, 3, 999);
    CHECK(same_points(r1.mesh.vertices, r2.mesh.vertices));

    // Keypoints are carried through untouched.
    for (const DescentState& s : r1.history)
        CHECK(same_bits(s.keypoints, r1.history[0].keypoints));

    // With no keypoint branch the update schemes coincide exactly.
    const GlvdModel seq = make_model("none", 7, true, false, "sequential");
    const DescentResult r3 = run_descent(seq, f.views, 3, 1);
    CHECK(same_points(r1.mesh.vertices, r3.mesh.vertices));

    // With an active branch the schemes genuinely differ.
    const GlvdModel it_rel = make_model("relative");
    const GlvdModel seq_rel = make_model("relative", 7, true, false,
                                         "sequential");
    const DescentResult r4 = run_descent(it_rel, f.views, 3, 1);
    const DescentResult r5 = run_descent(seq_rel, f.views, 3, 1);
    CHECK_FALSE(same_points(r4.mesh.vertices, r5.mesh.vertices));
}

TEST_CASE("descent: history bookkeeping, step bound, reproducibility") {
    const DescentFixture& f = fixture();
    const GlvdModel model = make_model("relative");

    const DescentResult res = run_descent(model, f.views, 4, 11);
    REQUIRE(res.history.size() == 5);
    const Tensor tmpl_pts = points_tensor(model.template_mesh.vertices);
    CHECK(same_bits(res.history[0].vertices, tmpl_pts));
    CHECK(same_bits(res.history[0].keypoints,
                    init_keypoints(model.n_keypoints(), 11)));
    const double clip = model.cfg.clip_infer;
    for (std::size_t t = 0; t < res.history.size(); ++t) {
        CHECK(res.history[t].iteration == static_cast<int>(t));
        CHECK(all_finite(res.history[t].vertices));
        CHECK(all_finite(res.history[t].keypoints));
        if (t == 0) continue;
        CHECK(max_row_norm(sub(res.history[t].vertices,
                               res.history[t - 1].vertices)) <= clip + 1e-12);
        CHECK(max_row_norm(sub(res.history[t].keypoints,
                               res.history[t - 1].keypoints)) <= clip + 1e-12);
    }
    CHECK(same_points(res.mesh.vertices,
                      tensor_to_points(res.history.back().vertices)));
    CHECK(res.mesh.faces == model.template_mesh.faces);

    // Zero steps: the initial state comes back unchanged.
    const DescentResult zero = run_descent(model, f.views, 0, 11);
    REQUIRE(zero.history.size() == 1);
    CHECK(same_points(zero.mesh.vertices, model.template_mesh.vertices));

    // Same seed, same views: the whole trajectory repeats bitwise.
    const DescentResult rep = run_descent(model, f.views, 4, 11);
    for (std::size_t t = 0; t < res.history.size(); ++t) {
        CHECK(same_bits(rep.history[t].vertices, res.history[t].vertices));
        CHECK(same_bits(rep.history[t].keypoints, res.history[t].keypoints));
    }

    // A different keypoint seed changes the trajectory here (the payload
    // reads the keypoints in relative mode).
    const DescentResult other = run_descent(model, f.views, 4, 12);
    CHECK_FALSE(same_points(res.mesh.vertices, other.mesh.vertices));

    CHECK_THROWS_WITH_AS(run_descent(model, {}, 4, 11),
                         doctest::Contains("at least one view"), Error);
}

TEST_CASE("descent: each encoding mode runs and stays inside the cube") {
    const DescentFixture& f = fixture();
    for (const std::string mode :
         {"relative", "concat", "norm", "attention", "none"}) {
        CAPTURE(mode);
        const GlvdModel model = make_model(mode);
        const DescentResult res = run_descent(model, f.views, 3, 5);
        CHECK(all_finite(res.history.back().vertices));
        // 10 steps at most 0.1 each from a unit-scale template cannot leave
        // a generous bounding box.
        for (const Vec3& p : res.mesh.vertices)
            for (int c = 0; c < 3; ++c) CHECK(std::fabs(p[c]) < 2.5);
    }
}

TEST_CASE("descent: duplicated views reconstruct exactly like the single view") {
    const DescentFixture& f = fixture();
    const GlvdModel model = make_model("relative");
    const std::vector<ViewInput> one{f.views[0]};
    const std::vector<ViewInput> two{f.views[0], f.views[0]};
    const DescentResult r1 = run_descent(model, one, 3, 21);
    const DescentResult r2 = run_descent(model, two, 3, 21);
    CHECK(same_points(r1.mesh.vertices, r2.mesh.vertices));
}

TEST_CASE("descent: view order never changes the reconstruction") {
    const DescentFixture& f = fixture();
    const GlvdModel model = make_model("relative");
    const std::vector<ViewInput> fwd{f.views[0], f.views[1], f.views[2]};
    const std::vector<ViewInput> rot{f.views[2], f.views[0], f.views[1]};
    const DescentResult r1 = run_descent(model, fwd, 3, 21);
    const DescentResult r2 = run_descent(model, rot, 3, 21);
    for (std::size_t t = 0; t < r1.history.size(); ++t) {
        CHECK(same_bits(r1.history[t].vertices, r2.history[t].vertices));
        CHECK(same_bits(r1.history[t].keypoints, r2.history[t].keypoints));
    }
}

TEST_CASE("descent: views behind the camera contribute zero descriptors") {
    const DescentFixture& f = fixture();
    const GlvdModel model = make_model("relative");

    // A camera at z = -10 looking down +z has the whole head behind it.
    CameraView behind = f.views[0].cam;
    behind.rotation = Mat3::identity();
    behind.translation = {0.0, 0.0, -10.0};
    const ViewInput bad{f.views[0].image, f.views[0].mask, behind};

    const SceneFeatures feats = compute_features(model, {bad});
    const ProjectedQueries q =
        project_points(model.template_mesh.vertices, behind);
    for (std::size_t i = 0; i < q.front.numel(); ++i)
        CHECK(q.front.data()[i] == 0.0);
    const Tensor desc = sample_descriptors(feats.fv[0], q);
    for (std::size_t i = 0; i < desc.numel(); ++i)
        CHECK(desc.data()[i] == 0.0);

    // The step still runs on positional and payload inputs alone.
    const DescentResult res = run_descent(model, {bad}, 3, 3);
    CHECK(all_finite(res.history.back().vertices));
    CHECK(all_finite(res.history.back().keypoints));
}

TEST_CASE("model: checkpoints restore bitwise-identical reconstructions") {
    const DescentFixture& f = fixture();
    GlvdModel model = make_model("relative");
    const std::string path = temp_path("glvd_model_ckpt.bin");
    save_model(path, model);

    GlvdModel loaded = load_model(path, model.cfg.fingerprint());
    CHECK(loaded.cfg.fingerprint() == model.cfg.fingerprint());
    CHECK(loaded.keypoint_indices == model.keypoint_indices);
    CHECK(same_points(loaded.template_mesh.vertices,
                      model.template_mesh.vertices));
    CHECK(loaded.template_mesh.faces == model.template_mesh.faces);

    auto pa = model.all_parameters();
    auto pb = loaded.all_parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i]->name == pb[i]->name);
        CHECK(same_bits(pa[i]->value, pb[i]->value));
    }

    const DescentResult r1 = run_descent(model, f.views, 3, 9);
    const DescentResult r2 = run_descent(loaded, f.views, 3, 9);
    CHECK(same_points(r1.mesh.vertices, r2.mesh.vertices));

    // A different architecture fingerprint is rejected outright.
    CHECK_THROWS_WITH_AS(load_model(path, "deadbeef"),
                         doctest::Contains("fingerprint"), Error);

    // Files of another kind are refused by name.
    const std::string hm_path = temp_path("glvd_not_a_model.bin");
    REQUIRE(model.hm.has_value());
    save_heatmap_net(hm_path, *model.hm, model.cfg);
    CHECK_THROWS_WITH_AS(load_model(hm_path),
                         doctest::Contains("not a model checkpoint"), Error);

    // Tampering with the stored configuration is caught by the recorded
    // fingerprint.
    const TensorFile tf = load_tensor_file(path);
    std::vector<std::pair<std::string, Tensor>> entries;
    for (const std::string& name : tf.order)
        entries.emplace_back(name, tf.get(name));
    nlohmann::json meta = tf.meta;
    std::string text = meta.at("config").get<std::string>();
    const auto pos = text.find("keypoint_count = 6");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 18, "keypoint_count = 7");
    meta["config"] = text;
    const std::string tampered = temp_path("glvd_model_tampered.bin");
    save_tensor_file(tampered, entries, tf.fingerprint, meta);
    CHECK_THROWS_WITH_AS(load_model(tampered),
                         doctest::Contains("stored config"), Error);
}

TEST_CASE("model: heatmap weights install only where a prior exists") {
    GlvdModel a = make_model("relative", 7);
    GlvdModel b = make_model("relative", 1234);
    REQUIRE(a.hm.has_value());
    REQUIRE(b.hm.has_value());

    const std::string path = temp_path("glvd_hm_attach.bin");
    save_heatmap_net(path, *a.hm, a.cfg);

    // Before: independently seeded priors differ.
    std::vector<Parameter*> ha, hb;
    a.hm->collect(ha);
    b.hm->collect(hb);
    bool any_diff = false;
    for (std::size_t i = 0; i < ha.size(); ++i)
        if (!same_bits(ha[i]->value, hb[i]->value)) any_diff = true;
    CHECK(any_diff);

    attach_heatmap_weights(b, path);
    hb.clear();
    b.hm->collect(hb);
    REQUIRE(ha.size() == hb.size());
    for (std::size_t i = 0; i < ha.size(); ++i)
        CHECK(same_bits(ha[i]->value, hb[i]->value));

    GlvdModel none = make_model("none");
    CHECK_THROWS_WITH_AS(attach_heatmap_weights(none, path),
                         doctest::Contains("no heatmap prior"), Error);

    // The prior is never part of the trainable set, in any mode.
    std::vector<Parameter*> tr = a.trainable();
    for (Parameter* p : tr)
        CHECK(p->name.rfind("hm.", 0) != 0);
    CHECK(a.all_parameters().size() == tr.size() + ha.size());
}

TEST_CASE("model: structure follows the configuration switches") {
    const GlvdModel rel = make_model("relative");
    CHECK(rel.hm.has_value());
    CHECK(rel.fs.has_value());
    CHECK(rel.gk.has_value());
    CHECK_FALSE(rel.attn.has_value());
    CHECK_FALSE(rel.gattn.has_value());

    const GlvdModel att = make_model("attention");
    CHECK(att.attn.has_value());

    const GlvdModel none = make_model("none");
    CHECK_FALSE(none.hm.has_value());
    CHECK_FALSE(none.fs.has_value());
    CHECK_FALSE(none.gk.has_value());

    const GlvdModel no_heat = make_model("relative", 7, false);
    CHECK_FALSE(no_heat.hm.has_value());
    CHECK(no_heat.fs.has_value());

    GlvdModel ga = make_model("relative", 7, true, true);
    CHECK(ga.gattn.has_value());
    GlvdModel plain = make_model("relative");
    CHECK(ga.trainable().size() == plain.trainable().size() + 4);
    CHECK(ga.cfg.fingerprint() != plain.cfg.fingerprint());
    const DescentResult res = run_descent(ga, fixture().views, 2, 5);
    CHECK(all_finite(res.history.back().vertices));
}

TEST_CASE("descent: keypoint step contracts") {
    const DescentFixture& f = fixture();
    const GlvdModel model = make_model("relative");
    const SceneFeatures feats = compute_features(model, f.views);

    DescentState st;
    st.vertices = points_tensor(model.template_mesh.vertices);
    st.keypoints = init_keypoints(model.n_keypoints(), 3);

    const Tensor dk = g_k_step(model, st, feats, 0.1);
    REQUIRE(dk.dim(0) == model.n_keypoints());
    REQUIRE(dk.dim(1) == 3);
    CHECK(max_row_norm(dk) <= 0.1 + 1e-12);

    const GlvdModel none = make_model("none");
    const SceneFeatures nfeats = compute_features(none, f.views);
    CHECK_THROWS_WITH_AS(g_k_step(none, st, nfeats, 0.1),
                         doctest::Contains("inactive"), Error);
    CHECK_THROWS_WITH_AS(g_k_step(model, st, SceneFeatures{}, 0.1),
                         doctest::Contains("no views"), Error);
    CHECK_THROWS_WITH_AS(g_v_step(model, st, SceneFeatures{}, 0.1),
                         doctest::Contains("no views"), Error);
}

TEST_CASE("reference frame: the conditioning view is rotated onto +z") {
    const DescentFixture& f = fixture();
    const CameraView cam = f.views[1].cam;
    const ReferenceFrame rf = reference_frame(cam);

    const CameraView ref_cam = in_reference(cam, rf);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            CHECK(ref_cam.rotation(i, j) ==
                  doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
    CHECK(ref_cam.translation.x == cam.translation.x);
    CHECK(ref_cam.translation.y == cam.translation.y);
    CHECK(ref_cam.translation.z == cam.translation.z);

    // Projections are invariant: rotating world and camera together leaves
    // every image point where it was.
    Rng rng(41);
    for (int i = 0; i < 20; ++i) {
        const Vec3 p{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                     rng.uniform(-1.0, 1.0)};
        for (const ViewInput& view : f.views) {
            const CameraView moved = in_reference(view.cam, rf);
            const CameraView::Projection before = view.cam.project(p);
            const CameraView::Projection after =
                moved.project(in_reference(p, rf));
            REQUIRE_FALSE(before.behind);
            REQUIRE_FALSE(after.behind);
            CHECK(after.u == doctest::Approx(before.u).epsilon(1e-9));
            CHECK(after.v == doctest::Approx(before.v).epsilon(1e-9));
        }
    }

    // Rigid: pairwise distances survive the change of frame.
    const Mesh moved = in_reference(f.scene.mesh, rf);
    CHECK(moved.faces == f.scene.mesh.faces);
    const auto& va = f.scene.mesh.vertices;
    const auto& vb = moved.vertices;
    for (std::size_t i = 1; i < va.size(); i += 17)
        CHECK(norm(vb[i] - vb[0]) ==
              doctest::Approx(norm(va[i] - va[0])).epsilon(1e-12));

    // The canonical frame is the identity.
    const Vec3 p{0.3, -0.4, 0.5};
    const Vec3 same = in_reference(p, canonical_frame());
    CHECK(same.x == p.x);
    CHECK(same.y == p.y);
    CHECK(same.z == p.z);
}

TEST_CASE("descent: iteration cost grows linearly with the step count") {
    // Bigger instance so one step costs far more than the timer noise.
    ExperimentConfig c = tiny_cfg();
    c.image_size = 32;
    c.keypoint_count = 12;
    c.template_grid = 8;  // 386 template vertices
    c.channels = 16;
    c.gk_hidden = 64;
    c.gv_hidden = 128;

    const Mesh tmpl = make_head_template(c.template_grid);
    const IdentityBasis basis = IdentityBasis::standard(c.identity_dim, tmpl);
    const SynthScene scene = build_scene(c, tmpl, basis, 5, "val", 0);
    std::vector<ViewInput> views;
    for (int v = 0; v < 2; ++v) {
        const Tensor img =
            rasterize(scene.mesh, scene.cameras[v], c.orbit_radius).image;
        views.push_back({img, mask_of(img), scene.cameras[v]});
    }
    Rng rng(7);
    const GlvdModel model(c, tmpl, farthest_point_sample(tmpl, c.keypoint_count),
                          rng);
    const SceneFeatures feats = compute_features(model, views);

    using Clock = std::chrono::steady_clock;
    auto best_of3 = [&](int steps) {
        double best = 1e100;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = Clock::now();
            descend(model, feats, steps, 7);
            best = std::min(best,
                            std::chrono::duration<double>(Clock::now() - t0)
                                .count());
        }
        return best;
    };
    best_of3(5);  // warm up allocators
    const double t10 = best_of3(10);
    const double t20 = best_of3(20);
    CAPTURE(t10);
    CAPTURE(t20);
    CHECK(t10 > 0.0);
    CHECK(t20 / t10 > 1.6);
    CHECK(t20 / t10 < 2.4);
}
