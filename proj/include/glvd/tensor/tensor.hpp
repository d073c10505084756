#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "glvd/common.hpp"

namespace glvd {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        GLVD_CHECK(d >= 0, "negative dimension in shape");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i)
        r += (i ? "," : "") + std::to_string(s[i]);
    return r + "]";
}

// ---------------------------------------------------------------------------
// Deterministic scalar kernels. Everything that multiplies matrices in this
// codebase funnels through these three loops; the fixed accumulation order is
// what makes "optimized path == full path, bitwise" provable by construction.
// ---------------------------------------------------------------------------

// Dot product with four independent accumulator chains. Any two call sites
// that dot the same vectors get bit-identical results.
inline double dot_k(const double* a, const double* b, int n) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; k < n; ++k) s += a[k] * b[k];
    return s;
}

// C[M,N] += A[M,K] * B[K,N]
inline void gemm_nn(int M, int N, int K, const double* A, const double* B, double* C) {
    for (int i = 0; i < M; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * K;
        double* c = C + static_cast<std::size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const double av = a[k];
            const double* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T   (rows of both operands are contiguous)
inline void gemm_nt(int M, int N, int K, const double* A, const double* B, double* C) {
    for (int i = 0; i < M; ++i) {
        const double* a = A + static_cast<std::size_t>(i) * K;
        double* c = C + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j)
            c[j] += dot_k(a, B + static_cast<std::size_t>(j) * K, K);
    }
}

// C[M,N] += A[K,M]^T * B[K,N]
inline void gemm_tn(int M, int N, int K, const double* A, const double* B, double* C) {
    for (int k = 0; k < K; ++k) {
        const double* a = A + static_cast<std::size_t>(k) * M;
        const double* b = B + static_cast<std::size_t>(k) * N;
        for (int i = 0; i < M; ++i) {
            const double av = a[i];
            double* c = C + static_cast<std::size_t>(i) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Reverse-mode autodiff over dense 64-bit tensors.
// ---------------------------------------------------------------------------

struct TensorNode {
    Shape shape;
    std::vector<double> val;
    std::vector<double> grad;  // allocated lazily, same size as val
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this node's grad and accumulates into the parents' grads. Takes
    // the node by reference so the closure never owns its own node.
    std::function<void(TensorNode&)> backprop;

    void ensure_grad() {
        if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
    }
};

// Thread-local switch: when off, ops record no graph (inference mode).
inline bool& grad_mode() {
    thread_local bool on = true;
    return on;
}

struct NoGrad {
    bool prev;
    NoGrad() : prev(grad_mode()) { grad_mode() = false; }
    ~NoGrad() { grad_mode() = prev; }
    NoGrad(const NoGrad&) = delete;
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
        : n_(std::make_shared<TensorNode>()) {
        n_->shape = std::move(shape);
        n_->val.assign(shape_numel(n_->shape), fill);
        n_->requires_grad = requires_grad;
    }

    static Tensor from(Shape shape, std::vector<double> vals, bool requires_grad = false) {
        Tensor t;
        t.n_ = std::make_shared<TensorNode>();
        GLVD_CHECK(shape_numel(shape) == vals.size(), "Tensor::from: ",
                   shape_str(shape), " does not hold ", vals.size(), " values");
        t.n_->shape = std::move(shape);
        t.n_->val = std::move(vals);
        t.n_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    int rank() const { return static_cast<int>(n_->shape.size()); }
    int dim(int i) const { return n_->shape[static_cast<std::size_t>(i)]; }
    std::size_t numel() const { return n_->val.size(); }

    double* data() { return n_->val.data(); }
    const double* data() const { return n_->val.data(); }
    std::vector<double>& vals() { return n_->val; }
    const std::vector<double>& vals() const { return n_->val; }

    double& operator()(int i) { return n_->val[static_cast<std::size_t>(i)]; }
    double operator()(int i) const { return n_->val[static_cast<std::size_t>(i)]; }
    double& operator()(int i, int j) {
        return n_->val[static_cast<std::size_t>(i) * dim(1) + j];
    }
    double operator()(int i, int j) const {
        return n_->val[static_cast<std::size_t>(i) * dim(1) + j];
    }
    double& operator()(int i, int j, int k) {
        return n_->val[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    double operator()(int i, int j, int k) const {
        return n_->val[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    double value() const {
        GLVD_CHECK(numel() == 1, "value(): tensor is not scalar, shape ",
                   shape_str(shape()));
        return n_->val[0];
    }

    bool requires_grad() const { return n_->requires_grad; }
    Tensor& set_requires_grad(bool rg) {
        n_->requires_grad = rg;
        return *this;
    }

    std::vector<double>& grad() {
        n_->ensure_grad();
        return n_->grad;
    }
    void zero_grad() {
        if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
    }

    Tensor detach() const {
        Tensor t;
        t.n_ = std::make_shared<TensorNode>();
        t.n_->shape = n_->shape;
        t.n_->val = n_->val;
        return t;
    }

    const std::shared_ptr<TensorNode>& node() const { return n_; }

    // Reverse pass from a scalar. Populates grad on every requires_grad
    // tensor reachable from this node; accumulation is additive.
    void backward() {
        GLVD_CHECK(numel() == 1, "backward() needs a scalar, got ",
                   shape_str(shape()));
        GLVD_CHECK(n_->requires_grad,
                   "backward() on a tensor that does not require grad");
        std::vector<TensorNode*> order;
        topo_order(order);
        n_->ensure_grad();
        n_->grad[0] += 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backprop) (*it)->backprop(**it);
    }

  private:
    void topo_order(std::vector<TensorNode*>& order) const {
        std::unordered_set<TensorNode*> seen;
        std::vector<std::pair<TensorNode*, std::size_t>> stack;
        stack.emplace_back(n_.get(), 0);
        seen.insert(n_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                TensorNode* p = node->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second)
                    stack.emplace_back(p, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<TensorNode> n_;
};

// Builds an op result: values are supplied by the caller, the graph edge is
// recorded only when grad mode is on and some input participates.
inline Tensor make_op(Shape shape, std::vector<double> vals,
                      std::initializer_list<Tensor> inputs,
                      std::function<void(TensorNode&)> backprop) {
    Tensor out = Tensor::from(std::move(shape), std::move(vals));
#ifndef NDEBUG
    for (double v : out.vals())
        GLVD_CHECK(std::isfinite(v), "non-finite value produced by an op");
#endif
    bool need = false;
    if (grad_mode())
        for (const Tensor& t : inputs)
            if (t.defined() && t.requires_grad()) need = true;
    if (need) {
        out.set_requires_grad(true);
        auto& node = *out.node();
        for (const Tensor& t : inputs)
            if (t.defined()) node.parents.push_back(t.node());
        node.backprop = std::move(backprop);
    }
    return out;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    GLVD_CHECK(a.shape() == b.shape(), op, ": shape mismatch ",
               shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

// --------------------------- elementwise ops ------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + b.data()[i];
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] += o.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] - b.data()[i];
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * b.data()[i];
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                an->grad[i] += o.grad[i] * bn->val[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                bn->grad[i] += o.grad[i] * an->val[i];
        }
    });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] / b.data()[i];
    auto an = a.node(), bn = b.node();
    return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                an->grad[i] += o.grad[i] / bn->val[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i)
                bn->grad[i] -= o.grad[i] * an->val[i] / (bn->val[i] * bn->val[i]);
        }
    });
}

inline Tensor scale(const Tensor& a, double s) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * s;
    auto an = a.node();
    return make_op(a.shape(), std::move(v), {a}, [an, s](TensorNode& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * s;
    });
}

inline Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] + s;
    auto an = a.node();
    return make_op(a.shape(), std::move(v), {a}, [an](TensorNode& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    auto an = a.node();
    return make_op(a.shape(), std::move(v), {a}, [an](TensorNode& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            if (an->val[i] > 0.0) an->grad[i] += o.grad[i];
    });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = 1.0 / (1.0 + std::exp(-a.data()[i]));
    auto an = a.node();
    return make_op(a.shape(), std::move(v), {a}, [an](TensorNode& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            an->grad[i] += o.grad[i] * o.val[i] * (1.0 - o.val[i]);
    });
}

inline Tensor square(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.data()[i] * a.data()[i];
    auto an = a.node();
    return make_op(a.shape(), std::move(v), {a}, [an](TensorNode& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i)
            an->grad[i] += o.grad[i] * 2.0 * an->val[i];
    });
}

inline Tensor abs_t(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::fabs(a.data()[i]);
    auto an = a.node();
    return make_op(a.shape(), std::move(v), {a}, [an](TensorNode& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) {
            if (an->val[i] > 0.0)
                an->grad[i] += o.grad[i];
            else if (an->val[i] < 0.0)
                an->grad[i] -= o.grad[i];
        }
    });
}

// --------------------------- reductions -----------------------------------

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
    auto an = a.node();
    return make_op({1}, {s}, {a}, [an](TensorNode& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += o.grad[0];
    });
}

inline Tensor mean(const Tensor& a) {
    GLVD_CHECK(a.numel() > 0, "mean of empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
    const double inv = 1.0 / static_cast<double>(a.numel());
    auto an = a.node();
    return make_op({1}, {s * inv}, {a}, [an, inv](TensorNode& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i)
            an->grad[i] += o.grad[0] * inv;
    });
}

// Euclidean norm of each row of a [M,N] matrix -> [M].
inline Tensor row_norms(const Tensor& a) {
    GLVD_CHECK(a.rank() == 2, "row_norms expects [M,N]");
    const int M = a.dim(0), N = a.dim(1);
    std::vector<double> v(static_cast<std::size_t>(M));
    for (int i = 0; i < M; ++i) {
        const double* r = a.data() + static_cast<std::size_t>(i) * N;
        v[static_cast<std::size_t>(i)] = std::sqrt(dot_k(r, r, N));
    }
    auto an = a.node();
    return make_op({M}, std::move(v), {a}, [an, M, N](TensorNode& o) {
        an->ensure_grad();
        for (int i = 0; i < M; ++i) {
            const double n = o.val[static_cast<std::size_t>(i)];
            if (n <= 0.0) continue;  // subgradient 0 at the origin
            const double g = o.grad[static_cast<std::size_t>(i)] / n;
            for (int j = 0; j < N; ++j) {
                const std::size_t k = static_cast<std::size_t>(i) * N + j;
                an->grad[k] += g * an->val[k];
            }
        }
    });
}

// --------------------------- structure ops --------------------------------

// Horizontal concatenation of [M,Ki] blocks -> [M, sum Ki].
inline Tensor hstack(const std::vector<Tensor>& xs) {
    GLVD_CHECK(!xs.empty(), "hstack of nothing");
    const int M = xs[0].dim(0);
    int Ntot = 0;
    for (const Tensor& t : xs) {
        GLVD_CHECK(t.rank() == 2 && t.dim(0) == M, "hstack: rows mismatch");
        Ntot += t.dim(1);
    }
    std::vector<double> v(static_cast<std::size_t>(M) * Ntot);
    int c0 = 0;
    for (const Tensor& t : xs) {
        const int N = t.dim(1);
        for (int i = 0; i < M; ++i)
            std::memcpy(&v[static_cast<std::size_t>(i) * Ntot + c0],
                        t.data() + static_cast<std::size_t>(i) * N,
                        static_cast<std::size_t>(N) * sizeof(double));
        c0 += N;
    }
    Tensor out = Tensor::from({M, Ntot}, std::move(v));
#ifndef NDEBUG
    for (double x : out.vals()) GLVD_CHECK(std::isfinite(x), "non-finite in hstack");
#endif
    bool need = false;
    if (grad_mode())
        for (const Tensor& t : xs)
            if (t.requires_grad()) need = true;
    if (need) {
        out.set_requires_grad(true);
        auto& node = *out.node();
        std::vector<std::shared_ptr<TensorNode>> ps;
        for (const Tensor& t : xs) {
            node.parents.push_back(t.node());
            ps.push_back(t.node());
        }
        node.backprop = [ps, M, Ntot](TensorNode& o) {
            int c0 = 0;
            for (const auto& p : ps) {
                const int N = p->shape[1];
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (int i = 0; i < M; ++i)
                        for (int j = 0; j < N; ++j)
                            p->grad[static_cast<std::size_t>(i) * N + j] +=
                                o.grad[static_cast<std::size_t>(i) * Ntot + c0 + j];
                }
                c0 += N;
            }
        };
    }
    return out;
}

inline Tensor slice_cols(const Tensor& a, int c0, int n) {
    GLVD_CHECK(a.rank() == 2, "slice_cols expects [M,N]");
    const int M = a.dim(0), N = a.dim(1);
    GLVD_CHECK(c0 >= 0 && c0 + n <= N, "slice_cols out of range");
    std::vector<double> v(static_cast<std::size_t>(M) * n);
    for (int i = 0; i < M; ++i)
        std::memcpy(&v[static_cast<std::size_t>(i) * n],
                    a.data() + static_cast<std::size_t>(i) * N + c0,
                    static_cast<std::size_t>(n) * sizeof(double));
    auto an = a.node();
    return make_op({M, n}, std::move(v), {a}, [an, c0, n, M, N](TensorNode& o) {
        an->ensure_grad();
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < n; ++j)
                an->grad[static_cast<std::size_t>(i) * N + c0 + j] +=
                    o.grad[static_cast<std::size_t>(i) * n + j];
    });
}

// Scales row i of x by s[i].
inline Tensor row_scale(const Tensor& x, const Tensor& s) {
    GLVD_CHECK(x.rank() == 2 && s.rank() == 1 && s.dim(0) == x.dim(0),
               "row_scale: want [M,N] and [M]");
    const int M = x.dim(0), N = x.dim(1);
    std::vector<double> v(x.numel());
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j)
            v[static_cast<std::size_t>(i) * N + j] =
                x(i, j) * s.data()[static_cast<std::size_t>(i)];
    auto xn = x.node(), sn = s.node();
    return make_op({M, N}, std::move(v), {x, s}, [xn, sn, M, N](TensorNode& o) {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < N; ++j)
                    xn->grad[static_cast<std::size_t>(i) * N + j] +=
                        o.grad[static_cast<std::size_t>(i) * N + j] *
                        sn->val[static_cast<std::size_t>(i)];
        }
        if (sn->requires_grad) {
            sn->ensure_grad();
            for (int i = 0; i < M; ++i) {
                double g = 0.0;
                for (int j = 0; j < N; ++j)
                    g += o.grad[static_cast<std::size_t>(i) * N + j] *
                         xn->val[static_cast<std::size_t>(i) * N + j];
                sn->grad[static_cast<std::size_t>(i)] += g;
            }
        }
    });
}

// --------------------------- matrix products ------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    GLVD_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
               "matmul: ", shape_str(a.shape()), " x ", shape_str(b.shape()));
    const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
    std::vector<double> v(static_cast<std::size_t>(M) * N, 0.0);
    gemm_nn(M, N, K, a.data(), b.data(), v.data());
    auto an = a.node(), bn = b.node();
    return make_op({M, N}, std::move(v), {a, b}, [an, bn, M, N, K](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();  // dA = dC * B^T
            gemm_nt(M, K, N, o.grad.data(), bn->val.data(), an->grad.data());
        }
        if (bn->requires_grad) {
            bn->ensure_grad();  // dB = A^T * dC
            gemm_tn(K, N, M, an->val.data(), o.grad.data(), bn->grad.data());
        }
    });
}

// A[M,K] * B[N,K]^T -> [M,N]
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    GLVD_CHECK(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
               "matmul_nt: ", shape_str(a.shape()), " x ", shape_str(b.shape()), "^T");
    const int M = a.dim(0), K = a.dim(1), N = b.dim(0);
    std::vector<double> v(static_cast<std::size_t>(M) * N, 0.0);
    gemm_nt(M, N, K, a.data(), b.data(), v.data());
    auto an = a.node(), bn = b.node();
    return make_op({M, N}, std::move(v), {a, b}, [an, bn, M, N, K](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();  // dA = dC * B
            gemm_nn(M, K, N, o.grad.data(), bn->val.data(), an->grad.data());
        }
        if (bn->requires_grad) {
            bn->ensure_grad();  // dB = dC^T * A
            gemm_tn(N, K, M, o.grad.data(), an->val.data(), bn->grad.data());
        }
    });
}

inline Tensor softmax_rows(const Tensor& a) {
    GLVD_CHECK(a.rank() == 2, "softmax_rows expects [M,N]");
    const int M = a.dim(0), N = a.dim(1);
    std::vector<double> v(a.numel());
    for (int i = 0; i < M; ++i) {
        const double* r = a.data() + static_cast<std::size_t>(i) * N;
        double mx = r[0];
        for (int j = 1; j < N; ++j) mx = std::max(mx, r[j]);
        double z = 0.0;
        for (int j = 0; j < N; ++j) {
            const double e = std::exp(r[j] - mx);
            v[static_cast<std::size_t>(i) * N + j] = e;
            z += e;
        }
        for (int j = 0; j < N; ++j) v[static_cast<std::size_t>(i) * N + j] /= z;
    }
    auto an = a.node();
    return make_op({M, N}, std::move(v), {a}, [an, M, N](TensorNode& o) {
        an->ensure_grad();
        for (int i = 0; i < M; ++i) {
            const double* y = o.val.data() + static_cast<std::size_t>(i) * N;
            const double* gy = o.grad.data() + static_cast<std::size_t>(i) * N;
            double dot = 0.0;
            for (int j = 0; j < N; ++j) dot += y[j] * gy[j];
            for (int j = 0; j < N; ++j)
                an->grad[static_cast<std::size_t>(i) * N + j] +=
                    y[j] * (gy[j] - dot);
        }
    });
}

}  // namespace glvd
