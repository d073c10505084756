#pragma once

#include <map>
#include <string>
#include <vector>

#include "glvd/tensor/tensor.hpp"

namespace glvd {

// A named trainable tensor plus its Adam state.
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<double> m, v;

    Parameter() = default;
    Parameter(std::string n, Tensor t) : name(std::move(n)), value(std::move(t)) {
        value.set_requires_grad(true);
    }
};

// Adam with bias correction. One instance per training run; `t` counts steps.
struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;

    void step(const std::vector<Parameter*>& params, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (Parameter* p : params) {
            auto& g = p->value.grad();
            auto& val = p->value.vals();
            if (p->m.size() != val.size()) p->m.assign(val.size(), 0.0);
            if (p->v.size() != val.size()) p->v.assign(val.size(), 0.0);
            for (std::size_t i = 0; i < val.size(); ++i) {
                p->m[i] = beta1 * p->m[i] + (1.0 - beta1) * g[i];
                p->v[i] = beta2 * p->v[i] + (1.0 - beta2) * g[i] * g[i];
                const double mh = p->m[i] / bc1;
                const double vh = p->v[i] / bc2;
                val[i] -= lr * mh / (std::sqrt(vh) + eps);
            }
        }
    }

    static void zero_grads(const std::vector<Parameter*>& params) {
        for (Parameter* p : params) p->value.zero_grad();
    }
};

// Learning-rate schedule: constant for the warm epochs, then linear decay to
// zero across the decay epochs. `epoch` is zero-based.
inline double lr_at_epoch(double base_lr, int epoch, int warm_epochs,
                          int decay_epochs) {
    if (epoch < warm_epochs) return base_lr;
    if (decay_epochs <= 0) return base_lr;
    const int k = epoch - warm_epochs;
    if (k >= decay_epochs) return 0.0;
    return base_lr * (1.0 - static_cast<double>(k) / decay_epochs);
}

}  // namespace glvd
