#include "doctest.h"
#include "glvd/config.hpp"

using namespace glvd;

TEST_CASE("config: defaults validate and canonical text round-trips exactly") {
    ExperimentConfig c;
    c.validate();
    const std::string text = c.to_text();
    ExperimentConfig back = parse_config_text(text);
    CHECK(back.to_text() == text);
    CHECK(back.fingerprint() == c.fingerprint());
}

TEST_CASE("config: set() overrides match file parsing") {
    ExperimentConfig a;
    a.set("model.channels", "24");
    a.set("corpus.yaw_angles", "0,45,-45");
    a.set("train.loss", "l2");
    a.set("model.use_heatmaps", "false");

    ExperimentConfig b = parse_config_text(
        "[model]\n"
        "channels = 24\n"
        "use_heatmaps = false\n"
        "[corpus]\n"
        "yaw_angles = \"0,45,-45\"  # quoted strings are unwrapped\n"
        "[train]\n"
        "loss = l2\n");
    CHECK(a.to_text() == b.to_text());
    CHECK(a.yaw_list() == std::vector<double>{0.0, 45.0, -45.0});
}

TEST_CASE("config: unknown keys are rejected by name") {
    ExperimentConfig c;
    CHECK_THROWS_WITH_AS(c.set("model.chanels", "3"),
                         "unknown config key 'model.chanels'", UsageError);
    CHECK_THROWS_AS(parse_config_text("[model]\nchanels = 3\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("channels = 3\n"), Error);  // no section
    CHECK_THROWS_AS(parse_config_text("[model]\nchannels 3\n"), UsageError);
}

TEST_CASE("config: value parsing is strict") {
    ExperimentConfig c;
    CHECK_THROWS_AS(c.set("model.channels", "3.5"), UsageError);
    CHECK_THROWS_AS(c.set("model.channels", "abc"), UsageError);
    CHECK_THROWS_AS(c.set("corpus.augment", "yes"), UsageError);
    c.set("corpus.augment", "0");
    CHECK(!c.augment);
    c.set("train.lr", "2.5e-4");
    CHECK(c.lr == 2.5e-4);
}

TEST_CASE("config: validation enforces ranges") {
    ExperimentConfig c;
    c.clip_infer = 0.04;
    CHECK_THROWS_AS(c.validate(), Error);
    c.clip_infer = 0.5;
    c.validate();
    c.loss = "huber";
    CHECK_THROWS_AS(c.validate(), Error);
    c.loss = "l2";
    c.encoding = "fourier";
    CHECK_THROWS_AS(c.validate(), Error);
    c.encoding = "none";
    c.view_counts = "9";  // only 8 yaws available
    CHECK_THROWS_AS(c.validate(), Error);
    c.view_counts = "1,3";
    c.validate();
}

TEST_CASE("config: fingerprint tracks architecture, ignores schedules") {
    ExperimentConfig a, b;
    b.lr = 123.0;
    b.epochs_decay = 7;
    b.keypoint_noise_std = 0.5;
    b.feature_dropout = 0.9;
    CHECK(a.fingerprint() == b.fingerprint());

    ExperimentConfig c;
    c.channels = 32;
    CHECK(c.fingerprint() != a.fingerprint());
    ExperimentConfig d;
    d.use_heatmaps = false;
    CHECK(d.fingerprint() != a.fingerprint());
    ExperimentConfig e;
    e.global_attention = true;
    CHECK(e.fingerprint() != a.fingerprint());
    ExperimentConfig f;
    f.encoding = "none";
    CHECK(f.fingerprint() != a.fingerprint());
}
