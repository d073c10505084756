#pragma once

#include <algorithm>
#include <vector>

#include "glvd/geometry/scene.hpp"
#include "glvd/synth/head_template.hpp"
#include "glvd/tensor/rng.hpp"

namespace glvd {

// Identity coefficients: one weight per deformation field, bounded to [-3, 3].
struct IdentityParams {
    std::vector<double> coeffs;

    void validate(int expected_dim) const {
        GLVD_CHECK(static_cast<int>(coeffs.size()) == expected_dim,
                   "identity has ", coeffs.size(), " coeffs, expected ",
                   expected_dim);
        for (double c : coeffs)
            GLVD_CHECK(c >= -3.0 && c <= 3.0, "identity coeff ", c,
                       " outside [-3, 3]");
    }
};

// One Gaussian radial-basis displacement bump: pushes nearby points along
// `dir`, with influence falling off over `width`.
struct BasisBump {
    Vec3 center;
    Vec3 dir;  // unit
    double width = 0.3;
    double amp = 1.0;
};

// Fixed bank of smooth deformation fields. Field d evaluated at point p is
// the sum of its bumps: sum_b amp_b * exp(-|p - c_b|^2 / (2 w_b^2)) * dir_b.
//
// Mirror structure (about the x = 0 plane, mirror M(x,y,z) = (-x,y,z)):
//   - symmetric fields satisfy  B(Mp) =  M B(p): single on-plane bumps with
//     dir.x = 0, or pairs {(c, d), (Mc, Md)};
//   - antisymmetric fields satisfy B(Mp) = -M B(p): on-plane bumps with dir
//     along x, or pairs {(c, d), (Mc, -Md)}.
// Negating the antisymmetric coefficients of an identity therefore mirrors
// the generated mesh exactly; with them at zero the mesh is itself symmetric.
struct IdentityBasis {
    std::vector<std::vector<BasisBump>> fields;  // [dim][bumps]
    std::vector<bool> antisymmetric;             // per field

    int dim() const { return static_cast<int>(fields.size()); }

    Vec3 eval(int d, const Vec3& p) const {
        Vec3 out;
        for (const BasisBump& b : fields[static_cast<std::size_t>(d)]) {
            const double q = norm2(p - b.center);
            const double s = b.amp * std::exp(-q / (2.0 * b.width * b.width));
            out += b.dir * s;
        }
        return out;
    }

    double max_magnitude(int d, const Mesh& tmpl) const {
        double m = 0.0;
        for (const Vec3& v : tmpl.vertices) m = std::max(m, norm(eval(d, v)));
        return m;
    }

    // The standard bank: named face-shape fields for the first 16 dimensions
    // (width, height, depth, nose, jaw, chin, brow, cheeks, forehead, then
    // six asymmetries), further dimensions drawn from a fixed stream. Every
    // field is rescaled so its largest displacement over the template is
    // exactly `unit_amp`, which makes the per-coefficient Lipschitz bound of
    // generate_identity equal to |eps| * unit_amp.
    static IdentityBasis standard(int dim, const Mesh& tmpl,
                                  double unit_amp = 0.05) {
        GLVD_CHECK(dim >= 1, "identity basis needs at least one dimension");
        IdentityBasis basis;
        auto plane = [&](Vec3 c, Vec3 d, double w, bool anti) {
            basis.fields.push_back({BasisBump{c, normalized(d), w, 1.0}});
            basis.antisymmetric.push_back(anti);
        };
        auto pair = [&](Vec3 c, Vec3 d, double w, bool anti) {
            const Vec3 dn = normalized(d);
            const Vec3 md{-dn.x, dn.y, dn.z};
            basis.fields.push_back(
                {BasisBump{c, dn, w, 1.0},
                 BasisBump{{-c.x, c.y, c.z}, anti ? md * -1.0 : md, w, 1.0}});
            basis.antisymmetric.push_back(anti);
        };

        pair({0.55, 0.0, 0.0}, {1, 0, 0}, 0.45, false);            // width
        plane({0.0, 0.70, -0.05}, {0, 1, 0}, 0.50, false);         // height
        plane({0.0, 0.10, -0.60}, {0, 0, -1}, 0.50, false);        // depth
        plane({0.0, -0.10, 0.80}, {0, -0.05, 1}, 0.18, false);     // nose length
        pair({0.10, -0.10, 0.75}, {1, 0, 0}, 0.13, false);         // nose width
        pair({0.45, -0.50, 0.20}, {0.9, -0.2, 0.1}, 0.30, false);  // jaw width
        plane({0.0, -0.72, 0.35}, {0, -0.9, 0.45}, 0.25, false);   // chin
        plane({0.0, 0.25, 0.65}, {0, 0.15, 1}, 0.30, false);       // brow
        pair({0.45, -0.20, 0.45}, {0.7, 0, 0.7}, 0.30, false);     // cheeks
        plane({0.0, 0.50, 0.50}, {0, 0.3, 1}, 0.35, false);        // forehead
        pair({0.45, -0.55, 0.30}, {1, 0, 0}, 0.35, true);          // jaw shift
        pair({0.50, -0.15, 0.50}, {0.7, 0, 0.7}, 0.30, true);      // cheek asym
        pair({0.30, 0.30, 0.60}, {0, 0.5, 0.8}, 0.30, true);       // brow asym
        plane({0.0, -0.10, 0.80}, {1, 0, 0}, 0.15, true);          // nose dev
        pair({0.55, 0.35, 0.10}, {1, 0, 0.2}, 0.30, true);         // temple asym
        pair({0.45, -0.60, 0.25}, {0, 1, 0}, 0.30, true);          // jawline asym

        for (int d = basis.dim(); d < dim; ++d) {
            Rng rng(Rng::derive(0x1d5eed, static_cast<std::uint64_t>(d)));
            const Vec3 c{0.15 + 0.55 * rng.uniform(),
                         rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7)};
            const Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            const double w = rng.uniform(0.2, 0.45);
            pair(c, dir, w, d % 2 == 1);
        }
        basis.fields.resize(static_cast<std::size_t>(dim));
        basis.antisymmetric.resize(static_cast<std::size_t>(dim));

        for (int d = 0; d < dim; ++d) {
            const double m = basis.max_magnitude(d, tmpl);
            GLVD_CHECK(m > 0.0, "identity basis field ", d,
                       " vanishes on the template");
            for (BasisBump& b : basis.fields[static_cast<std::size_t>(d)])
                b.amp = unit_amp / m;
        }
        return basis;
    }
};

// Deforms the template linearly in the coefficients (vertex i moves by
// sum_d coeffs[d] * B_d(T_i), evaluated at template positions) and then
// renormalizes so the result always fits the standard cube. Coefficients of
// zero return the template bitwise, since the template already fits.
inline Mesh generate_identity(const IdentityParams& params, const Mesh& tmpl,
                              const IdentityBasis& basis,
                              NormTransform* applied = nullptr) {
    params.validate(basis.dim());
    Mesh out = tmpl;
    for (std::size_t i = 0; i < out.vertices.size(); ++i) {
        Vec3 v = tmpl.vertices[i];
        for (int d = 0; d < basis.dim(); ++d)
            v += basis.eval(d, tmpl.vertices[i]) *
                 params.coeffs[static_cast<std::size_t>(d)];
        out.vertices[i] = v;
    }
    const NormTransform norm = compute_normalization(out);
    apply_normalization(out, norm);
    if (applied) *applied = norm;
    return out;
}

// Draws a corpus identity: coefficients are clipped unit normals scaled by
// `spread`.
inline IdentityParams sample_identity(Rng& rng, int dim, double spread) {
    IdentityParams p;
    p.coeffs.resize(static_cast<std::size_t>(dim));
    for (double& c : p.coeffs)
        c = std::clamp(rng.normal() * spread, -3.0, 3.0);
    return p;
}

}  // namespace glvd
