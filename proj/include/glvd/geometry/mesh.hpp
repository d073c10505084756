#pragma once

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "glvd/geometry/vec.hpp"

namespace glvd {

// Triangle mesh with a shared, fixed topology across all identities.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_faces() const { return static_cast<int>(faces.size()); }

    void validate() const {
        const int n = n_vertices();
        GLVD_CHECK(n > 0, "mesh has no vertices");
        for (const auto& f : faces) {
            for (int k = 0; k < 3; ++k)
                GLVD_CHECK(f[static_cast<std::size_t>(k)] >= 0 &&
                               f[static_cast<std::size_t>(k)] < n,
                           "face index out of range");
            GLVD_CHECK(f[0] != f[1] && f[1] != f[2] && f[0] != f[2],
                       "degenerate face (repeated vertex index)");
        }
    }

    Vec3 centroid() const {
        Vec3 c;
        for (const Vec3& v : vertices) c += v;
        return c / static_cast<double>(vertices.size());
    }

    void bounds(Vec3& lo, Vec3& hi) const {
        GLVD_CHECK(!vertices.empty(), "bounds of empty mesh");
        lo = hi = vertices[0];
        for (const Vec3& v : vertices)
            for (int i = 0; i < 3; ++i) {
                lo[i] = std::min(lo[i], v[i]);
                hi[i] = std::max(hi[i], v[i]);
            }
    }

    double face_area(int f) const {
        const auto& t = faces[static_cast<std::size_t>(f)];
        const Vec3 e1 = vertices[static_cast<std::size_t>(t[1])] -
                        vertices[static_cast<std::size_t>(t[0])];
        const Vec3 e2 = vertices[static_cast<std::size_t>(t[2])] -
                        vertices[static_cast<std::size_t>(t[0])];
        return 0.5 * norm(cross(e1, e2));
    }

    Vec3 face_normal(int f) const {
        const auto& t = faces[static_cast<std::size_t>(f)];
        return normalized(cross(vertices[static_cast<std::size_t>(t[1])] -
                                    vertices[static_cast<std::size_t>(t[0])],
                                vertices[static_cast<std::size_t>(t[2])] -
                                    vertices[static_cast<std::size_t>(t[0])]));
    }

    // Identifies the connectivity, not the embedding: each face is rotated so
    // its smallest vertex index comes first and read in whichever of the two
    // cyclic orientations is lexicographically smaller. Mirroring a mesh flips
    // the winding of every face but keeps this id; removing or rewiring a
    // face changes it.
    std::uint64_t topology_id() const {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto feed = [&h](std::uint64_t v) {
            for (int i = 0; i < 8; ++i) {
                h ^= (v >> (8 * i)) & 0xff;
                h *= 0x100000001b3ull;
            }
        };
        feed(static_cast<std::uint64_t>(n_vertices()));
        feed(static_cast<std::uint64_t>(n_faces()));
        for (const auto& f : faces) {
            std::array<int, 3> c = f;
            // rotate the minimum index to the front
            while (!(c[0] <= c[1] && c[0] <= c[2])) {
                const int t = c[0];
                c[0] = c[1];
                c[1] = c[2];
                c[2] = t;
            }
            if (c[2] < c[1]) std::swap(c[1], c[2]);  // orientation-insensitive
            for (int k = 0; k < 3; ++k)
                feed(static_cast<std::uint64_t>(c[static_cast<std::size_t>(k)]));
        }
        return h;
    }
};

namespace detail {
inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}
}  // namespace detail

// Wavefront OBJ with 17-significant-digit floats, enough to round-trip
// doubles exactly through text.
inline std::string encode_obj(const Mesh& mesh) {
    std::string out;
    out.reserve(mesh.vertices.size() * 60 + mesh.faces.size() * 20);
    for (const Vec3& v : mesh.vertices) {
        out += "v ";
        out += detail::fmt_double(v.x);
        out += ' ';
        out += detail::fmt_double(v.y);
        out += ' ';
        out += detail::fmt_double(v.z);
        out += '\n';
    }
    for (const auto& f : mesh.faces) {
        out += "f ";
        out += std::to_string(f[0] + 1);
        out += ' ';
        out += std::to_string(f[1] + 1);
        out += ' ';
        out += std::to_string(f[2] + 1);
        out += '\n';
    }
    return out;
}

inline Mesh decode_obj(const std::string& text) {
    Mesh mesh;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind("v ", 0) == 0) {
            std::istringstream ls(line.substr(2));
            Vec3 v;
            ls >> v.x >> v.y >> v.z;
            GLVD_CHECK(!ls.fail(), "bad OBJ vertex line: ", line);
            mesh.vertices.push_back(v);
        } else if (line.rfind("f ", 0) == 0) {
            std::istringstream ls(line.substr(2));
            std::array<int, 3> f{};
            std::string tok;
            for (int k = 0; k < 3; ++k) {
                GLVD_CHECK(static_cast<bool>(ls >> tok), "bad OBJ face line: ", line);
                // tolerate v/vt/vn syntax, use the vertex index only
                f[static_cast<std::size_t>(k)] =
                    std::stoi(tok.substr(0, tok.find('/'))) - 1;
            }
            mesh.faces.push_back(f);
        }
    }
    mesh.validate();
    return mesh;
}

inline void save_obj(const std::string& path, const Mesh& mesh) {
    std::ofstream f(path, std::ios::binary);
    GLVD_CHECK(f.good(), "cannot open for writing: ", path);
    const std::string text = encode_obj(mesh);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    GLVD_CHECK(f.good(), "write failed: ", path);
}

inline Mesh load_obj(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    GLVD_CHECK(f.good(), "cannot open: ", path);
    std::string text((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    return decode_obj(text);
}

// ASCII PLY. Vertices listed first, optionally colored; marker vertices (eg.
// keypoint locations) are appended as isolated red points.
inline std::string encode_ply(const Mesh& mesh,
                              const std::vector<Vec3>& markers = {}) {
    const bool colored = !markers.empty();
    std::string out = "ply\nformat ascii 1.0\n";
    out += "element vertex " +
           std::to_string(mesh.vertices.size() + markers.size()) + "\n";
    out += "property double x\nproperty double y\nproperty double z\n";
    if (colored)
        out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out += "element face " + std::to_string(mesh.faces.size()) + "\n";
    out += "property list uchar int vertex_indices\nend_header\n";
    for (const Vec3& v : mesh.vertices) {
        out += detail::fmt_double(v.x);
        out += ' ';
        out += detail::fmt_double(v.y);
        out += ' ';
        out += detail::fmt_double(v.z);
        if (colored) out += " 200 200 200";
        out += '\n';
    }
    for (const Vec3& v : markers) {
        out += detail::fmt_double(v.x);
        out += ' ';
        out += detail::fmt_double(v.y);
        out += ' ';
        out += detail::fmt_double(v.z);
        out += " 255 0 0\n";
    }
    for (const auto& f : mesh.faces)
        out += "3 " + std::to_string(f[0]) + ' ' + std::to_string(f[1]) + ' ' +
               std::to_string(f[2]) + '\n';
    return out;
}

inline void save_ply(const std::string& path, const Mesh& mesh,
                     const std::vector<Vec3>& markers = {}) {
    std::ofstream f(path, std::ios::binary);
    GLVD_CHECK(f.good(), "cannot open for writing: ", path);
    const std::string text = encode_ply(mesh, markers);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    GLVD_CHECK(f.good(), "write failed: ", path);
}

// Minimal ASCII PLY reader for the files this project writes.
inline Mesh load_ply(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    GLVD_CHECK(f.good(), "cannot open: ", path);
    std::string line;
    std::getline(f, line);
    GLVD_CHECK(line == "ply", "not a PLY file: ", path);
    int n_verts = -1, n_faces = -1;
    bool colored = false;
    while (std::getline(f, line) && line != "end_header") {
        std::istringstream ls(line);
        std::string w;
        ls >> w;
        if (w == "element") {
            std::string what;
            int count;
            ls >> what >> count;
            if (what == "vertex") n_verts = count;
            if (what == "face") n_faces = count;
        } else if (w == "property") {
            std::string type, name;
            ls >> type >> name;
            if (name == "red") colored = true;
        }
    }
    GLVD_CHECK(n_verts >= 0 && n_faces >= 0, "PLY header incomplete: ", path);
    Mesh mesh;
    for (int i = 0; i < n_verts; ++i) {
        std::getline(f, line);
        std::istringstream ls(line);
        Vec3 v;
        ls >> v.x >> v.y >> v.z;
        GLVD_CHECK(!ls.fail(), "bad PLY vertex: ", line);
        mesh.vertices.push_back(v);
        (void)colored;
    }
    for (int i = 0; i < n_faces; ++i) {
        std::getline(f, line);
        std::istringstream ls(line);
        int cnt;
        std::array<int, 3> fc{};
        ls >> cnt >> fc[0] >> fc[1] >> fc[2];
        GLVD_CHECK(!ls.fail() && cnt == 3, "bad PLY face: ", line);
        mesh.faces.push_back(fc);
    }
    return mesh;
}

}  // namespace glvd
