#pragma once

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "glvd/common.hpp"

namespace glvd {

// Full experiment configuration. One flat struct covers corpus generation,
// model architecture, training, SDF pretraining, the heatmap net, descent
// and evaluation; files use `key = value` lines grouped under [section]
// headers, and every key can be overridden from the command line.
struct ExperimentConfig {
    // [corpus]
    int train_identities = 100;
    int val_identities = 10;
    int test_identities = 10;
    int identity_dim = 16;
    double identity_scale = 1.0;
    std::string yaw_angles = "0,-30,30,-60,60,-90,90,180";
    int image_size = 64;
    double orbit_radius = 2.5;
    double focal_scale = 1.05;
    double mm_per_unit = 100.0;
    int keypoint_count = 18;
    int template_grid = 10;
    bool augment = true;
    double blur_sigma_max = 1.0;
    double crop_zoom_min = 0.9;
    double symmetrize_prob = 0.5;

    // [model]
    int channels = 64;
    int stacks = 4;
    int groups = 8;
    int gk_hidden = 256;
    int gv_hidden = 512;
    int sdf_hidden = 256;
    int heatmap_channels = 48;
    int attention_hidden = 64;
    bool include_vertex_pos = true;
    bool use_heatmaps = true;
    bool global_attention = false;
    std::string encoding = "relative";  // relative|concat|norm|attention|none
    std::string reference_space = "camera";  // camera|canonical

    // [train]
    std::string loss = "cosmag";  // cosmag|l2
    int batch_scenes = 4;
    double lr = 1e-3;
    int epochs_warm = 50;
    int epochs_decay = 200;
    int queries_per_scene = 1400;
    double clip_train = 0.1;
    double lambda_dir = 0.5;
    double lambda_mag = 0.5;
    double cos_eps = 1e-8;
    double keypoint_noise_std = 0.02;
    double feature_dropout = 0.1;
    double query_jitter_std = 0.05;
    double surface_fraction = 0.5;

    // [sdf]
    int sdf_n_surface = 512;
    int sdf_n_volume = 512;
    double eikonal_weight = 0.1;
    int sdf_epochs_warm = 50;
    int sdf_epochs_decay = 200;

    // [heatmap]
    double heatmap_sigma_px = 2.0;
    int heatmap_epochs = 30;

    // [descent]
    int steps = 10;
    double clip_infer = 0.1;
    std::string scheme = "iterative";  // iterative|sequential

    // [eval]
    int chamfer_samples = 2000;
    std::string view_counts = "1";

    // ------------------------------------------------------------------

    struct Field {
        const char* section;
        const char* key;
        std::function<std::string(const ExperimentConfig&)> get;
        std::function<void(ExperimentConfig&, const std::string&)> set;
    };

    static const std::vector<Field>& fields();

    void set(const std::string& dotted_key, const std::string& value) {
        for (const Field& f : fields())
            if (dotted_key == std::string(f.section) + "." + f.key) {
                f.set(*this, value);
                return;
            }
        throw UsageError(cat("unknown config key '", dotted_key, "'"));
    }

    // Canonical text form: every field, grouped by section, in registry
    // order. Parsing this string reproduces the config exactly.
    std::string to_text() const {
        std::string out;
        const char* current = "";
        for (const Field& f : fields()) {
            if (std::string(current) != f.section) {
                if (!out.empty()) out += '\n';
                out += cat("[", f.section, "]\n");
                current = f.section;
            }
            out += cat(f.key, " = ", f.get(*this), "\n");
        }
        return out;
    }

    // Fingerprint over the architecture-defining fields only, so checkpoints
    // remain loadable when non-structural settings (noise, dropout, epochs)
    // differ between training and inference.
    std::string fingerprint() const {
        const std::string arch =
            cat("channels=", channels, ";stacks=", stacks, ";groups=", groups,
                ";gk_hidden=", gk_hidden, ";gv_hidden=", gv_hidden,
                ";sdf_hidden=", sdf_hidden, ";heatmap_channels=", heatmap_channels,
                ";attention_hidden=", attention_hidden,
                ";include_vertex_pos=", include_vertex_pos ? 1 : 0,
                ";use_heatmaps=", use_heatmaps ? 1 : 0,
                ";global_attention=", global_attention ? 1 : 0,
                ";encoding=", encoding, ";keypoint_count=", keypoint_count,
                ";template_grid=", template_grid);
        return hex64(fnv1a(arch));
    }

    std::vector<double> yaw_list() const { return parse_double_list(yaw_angles); }
    std::vector<int> view_count_list() const {
        std::vector<int> out;
        for (double d : parse_double_list(view_counts))
            out.push_back(static_cast<int>(d));
        return out;
    }

    void validate() const {
        GLVD_CHECK(train_identities >= 1 && val_identities >= 1 &&
                       test_identities >= 1,
                   "config: every split needs at least one identity");
        GLVD_CHECK(identity_dim >= 1, "config: identity_dim must be positive");
        GLVD_CHECK(image_size >= 8 && image_size % 4 == 0,
                   "config: image_size must be a multiple of 4 and at least 8");
        GLVD_CHECK(orbit_radius > 1.0, "config: orbit_radius must clear the head");
        GLVD_CHECK(keypoint_count >= 1, "config: keypoint_count must be positive");
        GLVD_CHECK(template_grid >= 2, "config: template_grid too small");
        GLVD_CHECK(channels >= 1 && stacks >= 1, "config: bad model size");
        GLVD_CHECK(channels % groups == 0,
                   "config: channels must be divisible by groups");
        GLVD_CHECK(encoding == "relative" || encoding == "concat" ||
                       encoding == "norm" || encoding == "attention" ||
                       encoding == "none",
                   "config: encoding must be one of relative|concat|norm|"
                   "attention|none, got '", encoding, "'");
        GLVD_CHECK(reference_space == "camera" || reference_space == "canonical",
                   "config: reference_space must be camera|canonical");
        GLVD_CHECK(loss == "cosmag" || loss == "l2",
                   "config: loss must be cosmag|l2, got '", loss, "'");
        GLVD_CHECK(scheme == "iterative" || scheme == "sequential",
                   "config: scheme must be iterative|sequential");
        GLVD_CHECK(steps >= 1, "config: steps must be at least 1");
        GLVD_CHECK(clip_infer >= 0.05 && clip_infer <= 0.5,
                   "config: clip_infer must lie in [0.05, 0.5]");
        GLVD_CHECK(clip_train > 0, "config: clip_train must be positive");
        GLVD_CHECK(lambda_dir >= 0 && lambda_mag >= 0,
                   "config: loss weights must be non-negative");
        GLVD_CHECK(feature_dropout >= 0 && feature_dropout < 1,
                   "config: feature_dropout must lie in [0,1)");
        GLVD_CHECK(surface_fraction >= 0 && surface_fraction <= 1,
                   "config: surface_fraction must lie in [0,1]");
        GLVD_CHECK(keypoint_noise_std >= 0, "config: negative keypoint noise");
        GLVD_CHECK(queries_per_scene >= 1 && batch_scenes >= 1,
                   "config: bad training batch shape");
        GLVD_CHECK(chamfer_samples >= 1, "config: chamfer_samples too small");
        GLVD_CHECK(!yaw_list().empty(), "config: yaw_angles must not be empty");
        for (int v : view_count_list())
            GLVD_CHECK(v >= 1 && v <= static_cast<int>(yaw_list().size()),
                       "config: view count ", v, " exceeds available views");
    }

    static std::vector<double> parse_double_list(const std::string& s) {
        std::vector<double> out;
        std::istringstream in(s);
        std::string tok;
        while (std::getline(in, tok, ','))
            if (!tok.empty()) out.push_back(parse_double(tok));
        return out;
    }

    static double parse_double(const std::string& s) {
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            throw UsageError(cat("bad numeric value '", s, "'"));
        }
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos])))
            ++pos;
        if (pos != s.size()) throw UsageError(cat("bad numeric value '", s, "'"));
        return v;
    }

    static int parse_int(const std::string& s) {
        const double v = parse_double(s);
        const int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw UsageError(cat("expected an integer, got '", s, "'"));
        return i;
    }

    static bool parse_bool(const std::string& s) {
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
        throw UsageError(cat("expected true/false, got '", s, "'"));
    }

    static std::string fmt(double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return buf;
    }
};

namespace detail {
inline std::string strip(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        return s.substr(1, s.size() - 2);
    return s;
}
}  // namespace detail

inline const std::vector<ExperimentConfig::Field>& ExperimentConfig::fields() {
    using C = ExperimentConfig;
    auto I = [](const char* sec, const char* key, int C::* p) {
        return Field{sec, key,
                     [p](const C& c) { return std::to_string(c.*p); },
                     [p](C& c, const std::string& v) { c.*p = parse_int(v); }};
    };
    auto D = [](const char* sec, const char* key, double C::* p) {
        return Field{sec, key, [p](const C& c) { return fmt(c.*p); },
                     [p](C& c, const std::string& v) { c.*p = parse_double(v); }};
    };
    auto B = [](const char* sec, const char* key, bool C::* p) {
        return Field{sec, key,
                     [p](const C& c) { return std::string(c.*p ? "true" : "false"); },
                     [p](C& c, const std::string& v) { c.*p = parse_bool(v); }};
    };
    auto S = [](const char* sec, const char* key, std::string C::* p) {
        return Field{sec, key, [p](const C& c) { return c.*p; },
                     [p](C& c, const std::string& v) { c.*p = detail::unquote(v); }};
    };
    static const std::vector<Field> reg = {
        I("corpus", "train_identities", &C::train_identities),
        I("corpus", "val_identities", &C::val_identities),
        I("corpus", "test_identities", &C::test_identities),
        I("corpus", "identity_dim", &C::identity_dim),
        D("corpus", "identity_scale", &C::identity_scale),
        S("corpus", "yaw_angles", &C::yaw_angles),
        I("corpus", "image_size", &C::image_size),
        D("corpus", "orbit_radius", &C::orbit_radius),
        D("corpus", "focal_scale", &C::focal_scale),
        D("corpus", "mm_per_unit", &C::mm_per_unit),
        I("corpus", "keypoint_count", &C::keypoint_count),
        I("corpus", "template_grid", &C::template_grid),
        B("corpus", "augment", &C::augment),
        D("corpus", "blur_sigma_max", &C::blur_sigma_max),
        D("corpus", "crop_zoom_min", &C::crop_zoom_min),
        D("corpus", "symmetrize_prob", &C::symmetrize_prob),
        I("model", "channels", &C::channels),
        I("model", "stacks", &C::stacks),
        I("model", "groups", &C::groups),
        I("model", "gk_hidden", &C::gk_hidden),
        I("model", "gv_hidden", &C::gv_hidden),
        I("model", "sdf_hidden", &C::sdf_hidden),
        I("model", "heatmap_channels", &C::heatmap_channels),
        I("model", "attention_hidden", &C::attention_hidden),
        B("model", "include_vertex_pos", &C::include_vertex_pos),
        B("model", "use_heatmaps", &C::use_heatmaps),
        B("model", "global_attention", &C::global_attention),
        S("model", "encoding", &C::encoding),
        S("model", "reference_space", &C::reference_space),
        S("train", "loss", &C::loss),
        I("train", "batch_scenes", &C::batch_scenes),
        D("train", "lr", &C::lr),
        I("train", "epochs_warm", &C::epochs_warm),
        I("train", "epochs_decay", &C::epochs_decay),
        I("train", "queries_per_scene", &C::queries_per_scene),
        D("train", "clip_train", &C::clip_train),
        D("train", "lambda_dir", &C::lambda_dir),
        D("train", "lambda_mag", &C::lambda_mag),
        D("train", "cos_eps", &C::cos_eps),
        D("train", "keypoint_noise_std", &C::keypoint_noise_std),
        D("train", "feature_dropout", &C::feature_dropout),
        D("train", "query_jitter_std", &C::query_jitter_std),
        D("train", "surface_fraction", &C::surface_fraction),
        I("sdf", "n_surface", &C::sdf_n_surface),
        I("sdf", "n_volume", &C::sdf_n_volume),
        D("sdf", "eikonal_weight", &C::eikonal_weight),
        I("sdf", "epochs_warm", &C::sdf_epochs_warm),
        I("sdf", "epochs_decay", &C::sdf_epochs_decay),
        D("heatmap", "sigma_px", &C::heatmap_sigma_px),
        I("heatmap", "epochs", &C::heatmap_epochs),
        I("descent", "steps", &C::steps),
        D("descent", "clip_infer", &C::clip_infer),
        S("descent", "scheme", &C::scheme),
        I("eval", "chamfer_samples", &C::chamfer_samples),
        S("eval", "view_counts", &C::view_counts),
    };
    return reg;
}

// Parses `key = value` lines under [section] headers. '#' starts a comment.
// Unknown sections or keys are hard errors that name the offending key.
inline ExperimentConfig parse_config_text(const std::string& text,
                                          ExperimentConfig base = {}) {
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::strip(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            GLVD_CHECK(line.back() == ']', "config line ", lineno,
                       ": malformed section header");
            section = detail::strip(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(cat("config line ", lineno, ": expected key = value"));
        const std::string key = detail::strip(line.substr(0, eq));
        const std::string value = detail::strip(line.substr(eq + 1));
        GLVD_CHECK(!section.empty(), "config line ", lineno,
                   ": key '", key, "' outside any [section]");
        base.set(section + "." + key, detail::unquote(value));
    }
    return base;
}

inline ExperimentConfig load_config_file(const std::string& path,
                                         ExperimentConfig base = {}) {
    std::ifstream f(path);
    GLVD_CHECK(f.good(), "cannot open config file: ", path);
    std::string text((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    return parse_config_text(text, base);
}

}  // namespace glvd
