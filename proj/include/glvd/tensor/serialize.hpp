#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "glvd/tensor/tensor.hpp"

namespace glvd {

// Tensor container file: a UTF-8 JSON header (tensor names, shapes, element
// offsets, plus free-form meta and a config fingerprint), a single '\0'
// separator, then all payloads as little-endian IEEE-754 float64. Doubles are
// moved through their bit patterns, so round trips are bit-exact.

namespace detail {
inline void put_f64(std::string& out, double d) {
    const auto u = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

inline double get_f64(const char* p) {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i)
        u |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
    return std::bit_cast<double>(u);
}
}  // namespace detail

struct TensorFile {
    std::string fingerprint;           // config fingerprint recorded at save
    nlohmann::json meta;               // free-form
    std::vector<std::string> order;    // tensor names in file order
    std::map<std::string, Tensor> tensors;

    const Tensor& get(const std::string& name) const {
        auto it = tensors.find(name);
        GLVD_CHECK(it != tensors.end(), "tensor container: missing entry '",
                   name, "'");
        return it->second;
    }
};

inline std::string encode_tensor_file(
    const std::vector<std::pair<std::string, Tensor>>& entries,
    const std::string& fingerprint, const nlohmann::json& meta) {
    nlohmann::json header;
    header["format"] = "glvd.tensors.v1";
    header["fingerprint"] = fingerprint;
    header["meta"] = meta;
    auto& list = header["tensors"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, t] : entries) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["offset"] = offset;
        offset += t.numel();
        list.push_back(std::move(e));
    }
    std::string out = header.dump();
    out.push_back('\0');
    out.reserve(out.size() + offset * 8);
    for (const auto& [name, t] : entries)
        for (std::size_t i = 0; i < t.numel(); ++i)
            detail::put_f64(out, t.data()[i]);
    return out;
}

inline TensorFile decode_tensor_file(const std::string& bytes) {
    const std::size_t sep = bytes.find('\0');
    GLVD_CHECK(sep != std::string::npos, "tensor container: missing separator");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(0, sep));
    } catch (const std::exception& e) {
        fail("tensor container: bad header: ", e.what());
    }
    GLVD_CHECK(header.value("format", "") == "glvd.tensors.v1",
               "tensor container: unknown format");
    TensorFile tf;
    tf.fingerprint = header.value("fingerprint", "");
    tf.meta = header.value("meta", nlohmann::json::object());
    const char* payload = bytes.data() + sep + 1;
    const std::size_t avail = (bytes.size() - sep - 1) / 8;
    for (const auto& e : header.at("tensors")) {
        const std::string name = e.at("name").get<std::string>();
        Shape shape = e.at("shape").get<Shape>();
        const std::size_t offset = e.at("offset").get<std::size_t>();
        const std::size_t count = shape_numel(shape);
        GLVD_CHECK(offset + count <= avail,
                   "tensor container: truncated payload for '", name, "'");
        std::vector<double> vals(count);
        for (std::size_t i = 0; i < count; ++i)
            vals[i] = detail::get_f64(payload + (offset + i) * 8);
        tf.order.push_back(name);
        tf.tensors.emplace(name, Tensor::from(std::move(shape), std::move(vals)));
    }
    return tf;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    GLVD_CHECK(f.good(), "cannot open for writing: ", path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    GLVD_CHECK(f.good(), "write failed: ", path);
}

inline std::string read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    GLVD_CHECK(f.good(), "cannot open: ", path);
    std::string bytes((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
    return bytes;
}

inline void save_tensor_file(
    const std::string& path,
    const std::vector<std::pair<std::string, Tensor>>& entries,
    const std::string& fingerprint, const nlohmann::json& meta = {}) {
    write_file_bytes(path, encode_tensor_file(entries, fingerprint, meta));
}

inline TensorFile load_tensor_file(const std::string& path) {
    return decode_tensor_file(read_file_bytes(path));
}

// Fingerprint of an on-disk artifact (checkpoints, corpus files) for
// provenance columns in reports.
inline std::string file_fingerprint(const std::string& path) {
    return hex64(fnv1a(read_file_bytes(path)));
}

}  // namespace glvd
