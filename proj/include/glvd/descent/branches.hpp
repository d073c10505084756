#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "glvd/tensor/layers.hpp"
#include "glvd/tensor/optim.hpp"

namespace glvd {

// Fully connected layer, optionally weight-normalized. In the normalized
// form the stored direction matrix and per-row gain reparameterize the
// effective weight as g * v/|v| per output row; `weight()` materializes that
// matrix once so that every consumer (full head, per-query diagonal head)
// dots the exact same values.
struct DenseLayer {
    bool normed = false;
    Parameter v, g, b;

    DenseLayer() = default;
    DenseLayer(const std::string& name, int in, int out, bool weight_normed,
               Rng& rng)
        : normed(weight_normed),
          v(name + (weight_normed ? ".v" : ".w"),
            init_uniform({out, in}, in, rng)),
          b(name + ".b", init_zeros({out})) {
        if (normed) {
            // Gain starts at the direction rows' norms (computed with the
            // same kernel the forward pass uses) so the initial effective
            // weight is bitwise the raw initialization.
            Tensor gi = init_zeros({out});
            for (int o = 0; o < out; ++o) {
                const double* row =
                    v.value.data() + static_cast<std::size_t>(o) * in;
                gi.data()[o] = std::sqrt(dot_k(row, row, in));
            }
            g = Parameter(name + ".g", gi);
        }
    }

    Tensor weight() const {
        return normed ? weight_norm_effective(v.value, g.value) : v.value;
    }

    Tensor operator()(const Tensor& x) const {
        return linear(x, weight(), b.value);
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&v);
        if (normed) out.push_back(&g);
        out.push_back(&b);
    }
};

// Mean of same-shape activations accumulated in a canonical order (inputs
// sorted by their values, lexicographically), so the result is bitwise
// independent of the order the views arrived in.
inline Tensor mean_canonical(const std::vector<Tensor>& xs) {
    GLVD_CHECK(!xs.empty(), "mean_canonical: no inputs");
    if (xs.size() == 1) return xs[0];
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                         return std::lexicographical_compare(
                             xs[a].vals().begin(), xs[a].vals().end(),
                             xs[b].vals().begin(), xs[b].vals().end());
                     });
    Tensor acc = xs[order[0]];
    for (std::size_t i = 1; i < order.size(); ++i)
        acc = add(acc, xs[order[i]]);
    return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

// Rows 3q..3q+2 of a per-query linear head: for query q only the three
// output units belonging to target q are evaluated, using the same
// ascending-index dot product as the full head, so the result is bitwise
// equal to slicing the full [Q, 3T] output on its diagonal blocks.
inline Tensor linear_rows3(const Tensor& x, const Tensor& w, const Tensor& b) {
    GLVD_CHECK(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(1),
               "linear_rows3: ", shape_str(x.shape()), " x ",
               shape_str(w.shape()));
    const int Q = x.dim(0), K = x.dim(1);
    GLVD_CHECK(w.dim(0) == 3 * Q,
               "linear_rows3: head has ", w.dim(0) / 3,
               " targets but got ", Q, " queries");
    GLVD_CHECK(b.rank() == 1 && b.dim(0) == w.dim(0),
               "linear_rows3: bad bias shape");
    std::vector<double> v(static_cast<std::size_t>(Q) * 3);
    for (int q = 0; q < Q; ++q)
        for (int c = 0; c < 3; ++c) {
            const int row = 3 * q + c;
            v[static_cast<std::size_t>(q) * 3 + c] =
                b.data()[row] +
                dot_k(x.data() + static_cast<std::size_t>(q) * K,
                      w.data() + static_cast<std::size_t>(row) * K, K);
        }
    auto xn = x.node(), wn = w.node(), bn = b.node();
    return make_op({Q, 3}, std::move(v), {x, w, b},
                   [xn, wn, bn, Q, K](TensorNode& o) {
        for (int q = 0; q < Q; ++q)
            for (int c = 0; c < 3; ++c) {
                const double gr = o.grad[static_cast<std::size_t>(q) * 3 + c];
                const std::size_t row = static_cast<std::size_t>(3 * q + c);
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    for (int k = 0; k < K; ++k)
                        xn->grad[static_cast<std::size_t>(q) * K + k] +=
                            gr * wn->val[row * K + k];
                }
                if (wn->requires_grad) {
                    wn->ensure_grad();
                    for (int k = 0; k < K; ++k)
                        wn->grad[row * K + k] +=
                            gr * xn->val[static_cast<std::size_t>(q) * K + k];
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    bn->grad[row] += gr;
                }
            }
    });
}

// Rescales any row longer than max_norm back onto the max_norm sphere,
// keeping its direction. Pure data (inference-time post-processing).
inline Tensor clip_rows(const Tensor& d, double max_norm) {
    GLVD_CHECK(d.rank() == 2 && d.dim(1) == 3, "clip_rows: expected [Q,3]");
    GLVD_CHECK(max_norm > 0, "clip_rows: max_norm must be positive");
    std::vector<double> v(d.vals());
    const int Q = d.dim(0);
    for (int q = 0; q < Q; ++q) {
        double* r = v.data() + static_cast<std::size_t>(q) * 3;
        const double n = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
        if (n > max_norm) {
            const double s = max_norm / n;
            r[0] *= s;
            r[1] *= s;
            r[2] *= s;
        }
    }
    return Tensor::from({Q, 3}, std::move(v));
}

// Three-layer displacement regressor. Layer-2 activations are averaged over
// views; the head emits displacements toward all T targets per query
// ([Q, 3T]) for training, while inference reads only each query's own
// target block via linear_rows3 (bitwise equal to slicing the full output).
struct DisplacementBranch {
    int targets = 0;
    DenseLayer l1, l2, l3;

    DisplacementBranch() = default;
    DisplacementBranch(const std::string& name, int in, int hidden,
                       int targets_, bool weight_normed, Rng& rng)
        : targets(targets_),
          l1(name + ".l1", in, hidden, weight_normed, rng),
          l2(name + ".l2", hidden, hidden, weight_normed, rng),
          l3(name + ".l3", hidden, 3 * targets_, weight_normed, rng) {}

    // Per-view two-layer trunks, mean-aggregated.
    Tensor trunk(const std::vector<Tensor>& view_inputs) const {
        GLVD_CHECK(!view_inputs.empty(),
                   "displacement branch: no views to aggregate");
        std::vector<Tensor> hs;
        hs.reserve(view_inputs.size());
        for (const Tensor& x : view_inputs)
            hs.push_back(relu(l2(relu(l1(x)))));
        return mean_canonical(hs);
    }

    // [Q, 3T]: displacement toward every target, for training supervision.
    Tensor full(const Tensor& trunk_out) const { return l3(trunk_out); }

    // [Q, 3]: query q keeps the block belonging to target q.
    Tensor diagonal(const Tensor& trunk_out) const {
        return linear_rows3(trunk_out, l3.weight(), l3.b.value);
    }

    void collect(std::vector<Parameter*>& out) {
        l1.collect(out);
        l2.collect(out);
        l3.collect(out);
    }
};

// One self-attention block over all queries of the aggregated trunk,
// residual form: h + (softmax(QK^T / sqrt(a)) V) Wo. Optional refinement of
// the vertex branch; known to be noisy, off by default.
struct GlobalAttention {
    Parameter wq, wk, wv, wo;
    int att = 0;

    GlobalAttention() = default;
    GlobalAttention(const std::string& name, int hidden, int att_, Rng& rng)
        : wq(name + ".wq", init_uniform({att_, hidden}, hidden, rng)),
          wk(name + ".wk", init_uniform({att_, hidden}, hidden, rng)),
          wv(name + ".wv", init_uniform({att_, hidden}, hidden, rng)),
          wo(name + ".wo", init_uniform({hidden, att_}, att_, rng)),
          att(att_) {}

    Tensor operator()(const Tensor& h) const {
        const Tensor q = linear(h, wq.value), k = linear(h, wk.value),
                     v = linear(h, wv.value);
        const Tensor scores =
            softmax_rows(scale(matmul_nt(q, k),
                               1.0 / std::sqrt(static_cast<double>(att))));
        return add(h, linear(matmul(scores, v), wo.value));
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&wq);
        out.push_back(&wk);
        out.push_back(&wv);
        out.push_back(&wo);
    }
};

}  // namespace glvd
