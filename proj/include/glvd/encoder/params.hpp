#pragma once

#include <string>
#include <utility>
#include <vector>

#include "glvd/tensor/optim.hpp"
#include "glvd/tensor/serialize.hpp"

namespace glvd {

// Every network exposes `collect(std::vector<Parameter*>&)` to enumerate its
// named parameters; these helpers turn that list into checkpoint entries and
// back. Names are stable, so a checkpoint written by one process restores the
// exact same tensors in another.

inline std::vector<std::pair<std::string, Tensor>> checkpoint_entries(
    const std::vector<Parameter*>& params) {
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(params.size());
    for (const Parameter* p : params) out.emplace_back(p->name, p->value);
    return out;
}

// Overwrites parameter values from a container, matched by name and shape.
// Optimizer moments reset: a restored net starts from a clean Adam state.
inline void load_parameters(const std::vector<Parameter*>& params,
                            const TensorFile& tf) {
    for (Parameter* p : params) {
        const Tensor& src = tf.get(p->name);
        GLVD_CHECK(src.shape() == p->value.shape(),
                   "checkpoint: shape mismatch for '", p->name, "': file has ",
                   shape_str(src.shape()), ", model expects ",
                   shape_str(p->value.shape()));
        p->value.vals() = src.vals();
        p->m.clear();
        p->v.clear();
    }
}

inline void save_params_file(const std::string& path,
                             const std::vector<Parameter*>& params,
                             const std::string& fingerprint,
                             const nlohmann::json& meta = {}) {
    save_tensor_file(path, checkpoint_entries(params), fingerprint, meta);
}

// Loads a checkpoint and insists it was produced under the same architecture
// fingerprint; a mismatch would silently misassign tensors, so it is fatal.
inline TensorFile load_params_file(const std::string& path,
                                   const std::string& expected_fingerprint) {
    TensorFile tf = load_tensor_file(path);
    GLVD_CHECK(tf.fingerprint == expected_fingerprint, "checkpoint ", path,
               ": architecture fingerprint ", tf.fingerprint,
               " does not match the configured ", expected_fingerprint);
    return tf;
}

}  // namespace glvd
