#pragma once

#include "uareg/common.hpp"
#include "uareg/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

// Dense reverse-mode differentiation. Tensors are row-major and owned; there
// are no views, so a backward rule never has to reason about aliasing. Every
// forward op validates finiteness of its output, trading a linear scan per op
// for fail-fast diagnostics.
namespace uareg::ad {

std::string shape_str(const std::vector<std::int64_t>& shape);

template <typename T>
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<T> values;

    Tensor() = default;
    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
        values.assign(static_cast<std::size_t>(numel_of(shape)), T(0));
    }
    Tensor(std::vector<std::int64_t> s, std::vector<T> v) : shape(std::move(s)), values(std::move(v)) {
        if (numel_of(shape) != static_cast<std::int64_t>(values.size()))
            throw Error("tensor shape " + shape_str(shape) + " does not match value count " +
                        std::to_string(values.size()));
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
        std::int64_t n = 1;
        for (std::int64_t d : s) {
            if (d <= 0) throw Error("tensor dims must be positive, got " + shape_str(s));
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
    std::int64_t dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }

    static Tensor full(std::vector<std::int64_t> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.values.begin(), t.values.end(), v);
        return t;
    }
};

template <typename T>
class Node;
template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
class Node {
public:
    Tensor<T> value;
    Tensor<T> grad; // allocated on demand during backward
    bool requires_grad = false;
    bool backward_ran = false;
    const char* op = "leaf";
    std::string name;
    std::vector<NodePtr<T>> inputs;
    std::function<void(Node<T>&)> backward_fn;

    void ensure_grad() {
        if (grad.values.empty()) grad = Tensor<T>(value.shape);
    }
    void zero_grad() {
        if (!grad.values.empty()) std::fill(grad.values.begin(), grad.values.end(), T(0));
    }
};

template <typename T>
NodePtr<T> leaf(Tensor<T> value, bool requires_grad = false, std::string name = "") {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return n;
}

namespace detail {

template <typename T>
void check_finite(const char* op, const Tensor<T>& t) {
    for (T v : t.values)
        if (!std::isfinite(static_cast<double>(v)))
            throw Error(std::string("non-finite values after op '") + op + "'");
}

template <typename T>
NodePtr<T> make_op(const char* op, Tensor<T> value, std::vector<NodePtr<T>> inputs,
                   std::function<void(Node<T>&)> backward_fn) {
    check_finite(op, value);
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->op = op;
    n->inputs = std::move(inputs);
    for (const auto& in : n->inputs)
        if (in->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return n;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw Error(msg);
}

template <typename T>
void same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape == b.shape, std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
}

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::int64_t m, std::int64_t k, std::int64_t n, const T* a, const T* b, T* c) {
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            T* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
}

// C[M,N] += A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::int64_t m, std::int64_t k, std::int64_t n, const T* a, const T* b, T* c) {
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            const T* arow = a + i * k;
            const T* brow = b + j * k;
            T acc = c[i * n + j];
            for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] = acc;
        }
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::int64_t m, std::int64_t k, std::int64_t n, const T* a, const T* b, T* c) {
    for (std::int64_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

struct AxisSplit {
    std::int64_t outer = 1, n = 1, inner = 1;
};

inline AxisSplit split_axis(const std::vector<std::int64_t>& shape, std::size_t axis) {
    require(axis < shape.size(), "axis out of range for shape " + shape_str(shape));
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

} // namespace detail

// ---- elementwise ----

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) {
    detail::same_shape("add", a->value, b->value);
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += b->value.values[i];
    return detail::make_op<T>("add", std::move(out), {a, b}, [a, b](Node<T>& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.values.size(); ++i)
                a->grad.values[i] += self.grad.values[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < self.grad.values.size(); ++i)
                b->grad.values[i] += self.grad.values[i];
        }
    });
}

template <typename T>
NodePtr<T> sub(const NodePtr<T>& a, const NodePtr<T>& b) {
    detail::same_shape("sub", a->value, b->value);
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b->value.values[i];
    return detail::make_op<T>("sub", std::move(out), {a, b}, [a, b](Node<T>& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.values.size(); ++i)
                a->grad.values[i] += self.grad.values[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < self.grad.values.size(); ++i)
                b->grad.values[i] -= self.grad.values[i];
        }
    });
}

template <typename T>
NodePtr<T> mul(const NodePtr<T>& a, const NodePtr<T>& b) {
    detail::same_shape("mul", a->value, b->value);
    Tensor<T> out = a->value;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] *= b->value.values[i];
    return detail::make_op<T>("mul", std::move(out), {a, b}, [a, b](Node<T>& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (std::size_t i = 0; i < self.grad.values.size(); ++i)
                a->grad.values[i] += self.grad.values[i] * b->value.values[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::size_t i = 0; i < self.grad.values.size(); ++i)
                b->grad.values[i] += self.grad.values[i] * a->value.values[i];
        }
    });
}

template <typename T>
NodePtr<T> scale(const NodePtr<T>& a, double c) {
    Tensor<T> out = a->value;
    for (T& v : out.values) v = static_cast<T>(v * c);
    return detail::make_op<T>("scale", std::move(out), {a}, [a, c](Node<T>& self) {
        a->ensure_grad();
        for (std::size_t i = 0; i < self.grad.values.size(); ++i)
            a->grad.values[i] += static_cast<T>(self.grad.values[i] * c);
    });
}

template <typename T>
NodePtr<T> relu(const NodePtr<T>& a) {
    Tensor<T> out = a->value;
    for (T& v : out.values) v = v > T(0) ? v : T(0);
    return detail::make_op<T>("relu", std::move(out), {a}, [a](Node<T>& self) {
        a->ensure_grad();
        for (std::size_t i = 0; i < self.grad.values.size(); ++i)
            if (a->value.values[i] > T(0)) a->grad.values[i] += self.grad.values[i];
    });
}

template <typename T>
NodePtr<T> log_op(const NodePtr<T>& a) {
    Tensor<T> out = a->value;
    for (T& v : out.values) v = static_cast<T>(std::log(static_cast<double>(v)));
    return detail::make_op<T>("log", std::move(out), {a}, [a](Node<T>& self) {
        a->ensure_grad();
        for (std::size_t i = 0; i < self.grad.values.size(); ++i)
            a->grad.values[i] += self.grad.values[i] / a->value.values[i];
    });
}

// ---- shape ops ----

template <typename T>
NodePtr<T> reshape(const NodePtr<T>& a, std::vector<std::int64_t> shape) {
    detail::require(Tensor<T>::numel_of(shape) == a->value.numel(),
                    "reshape to " + shape_str(shape) + " changes element count from " +
                        shape_str(a->value.shape));
    Tensor<T> out(std::move(shape), a->value.values);
    return detail::make_op<T>("reshape", std::move(out), {a}, [a](Node<T>& self) {
        a->ensure_grad();
        for (std::size_t i = 0; i < self.grad.values.size(); ++i)
            a->grad.values[i] += self.grad.values[i];
    });
}

template <typename T>
NodePtr<T> flatten(const NodePtr<T>& a, std::size_t start_dim = 1) {
    detail::require(start_dim < a->value.rank(), "flatten start_dim out of range");
    std::vector<std::int64_t> shape(a->value.shape.begin(),
                                    a->value.shape.begin() + static_cast<std::ptrdiff_t>(start_dim));
    std::int64_t rest = 1;
    for (std::size_t i = start_dim; i < a->value.rank(); ++i) rest *= a->value.shape[i];
    shape.push_back(rest);
    return reshape(a, std::move(shape));
}

template <typename T>
NodePtr<T> permute(const NodePtr<T>& a, const std::vector<std::size_t>& perm) {
    const auto& s = a->value.shape;
    detail::require(perm.size() == s.size(), "permute rank mismatch");
    std::vector<std::int64_t> out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = s.at(perm[i]);

    const std::size_t rank = s.size();
    std::vector<std::int64_t> in_strides(rank, 1), out_strides(rank, 1);
    for (std::size_t i = rank - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * s[i];
    for (std::size_t i = rank - 1; i > 0; --i) out_strides[i - 1] = out_strides[i] * out_shape[i];

    // For each output linear index, the source index under the permutation.
    // Everything is captured by value; the closure outlives this frame.
    const std::int64_t n = a->value.numel();
    auto src_index = [rank, out_strides, out_shape, in_strides, perm](std::int64_t out_idx) {
        std::int64_t src = 0;
        for (std::size_t d = 0; d < rank; ++d) {
            const std::int64_t coord = (out_idx / out_strides[d]) % out_shape[d];
            src += coord * in_strides[perm[d]];
        }
        return src;
    };

    Tensor<T> out(out_shape);
    for (std::int64_t i = 0; i < n; ++i) out.values[static_cast<std::size_t>(i)] =
        a->value.values[static_cast<std::size_t>(src_index(i))];
    return detail::make_op<T>("permute", std::move(out), {a}, [a, src_index, n](Node<T>& self) {
        a->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i)
            a->grad.values[static_cast<std::size_t>(src_index(i))] +=
                self.grad.values[static_cast<std::size_t>(i)];
    });
}

template <typename T>
NodePtr<T> concat(const std::vector<NodePtr<T>>& parts, std::size_t axis) {
    detail::require(!parts.empty(), "concat of zero tensors");
    const auto& first = parts[0]->value.shape;
    std::int64_t axis_total = 0;
    for (const auto& p : parts) {
        detail::require(p->value.rank() == first.size(), "concat rank mismatch");
        for (std::size_t d = 0; d < first.size(); ++d)
            detail::require(d == axis || p->value.shape[d] == first[d],
                            "concat shape mismatch off-axis");
        axis_total += p->value.shape[axis];
    }
    std::vector<std::int64_t> out_shape = first;
    out_shape[axis] = axis_total;

    const auto split = detail::split_axis(out_shape, axis);
    Tensor<T> out(out_shape);
    std::int64_t offset = 0;
    for (const auto& p : parts) {
        const std::int64_t pn = p->value.shape[axis];
        for (std::int64_t o = 0; o < split.outer; ++o)
            std::copy_n(p->value.values.begin() + o * pn * split.inner, pn * split.inner,
                        out.values.begin() + (o * split.n + offset) * split.inner);
        offset += pn;
    }
    std::vector<NodePtr<T>> inputs = parts;
    return detail::make_op<T>("concat", std::move(out), std::move(inputs),
                              [parts, split, axis](Node<T>& self) {
        std::int64_t off = 0;
        for (const auto& p : parts) {
            const std::int64_t pn = p->value.shape[axis];
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::int64_t o = 0; o < split.outer; ++o) {
                    const T* src = self.grad.values.data() + (o * split.n + off) * split.inner;
                    T* dst = p->grad.values.data() + o * pn * split.inner;
                    for (std::int64_t i = 0; i < pn * split.inner; ++i) dst[i] += src[i];
                }
            }
            off += pn;
        }
    });
}

// Tiles a tensor n times along a new leading axis; backward sums over it.
template <typename T>
NodePtr<T> expand_batch(const NodePtr<T>& a, std::int64_t n) {
    detail::require(n >= 1, "expand_batch needs n >= 1");
    std::vector<std::int64_t> out_shape;
    out_shape.push_back(n);
    out_shape.insert(out_shape.end(), a->value.shape.begin(), a->value.shape.end());
    const std::int64_t block = a->value.numel();
    Tensor<T> out(out_shape);
    for (std::int64_t i = 0; i < n; ++i)
        std::copy_n(a->value.values.begin(), block, out.values.begin() + i * block);
    return detail::make_op<T>("expand_batch", std::move(out), {a}, [a, n, block](Node<T>& self) {
        a->ensure_grad();
        for (std::int64_t i = 0; i < n; ++i) {
            const T* src = self.grad.values.data() + i * block;
            for (std::int64_t j = 0; j < block; ++j) a->grad.values[static_cast<std::size_t>(j)] += src[j];
        }
    });
}

// ---- reductions ----

template <typename T>
NodePtr<T> sum(const NodePtr<T>& a) {
    double acc = 0.0;
    for (T v : a->value.values) acc += static_cast<double>(v);
    Tensor<T> out({1});
    out.values[0] = static_cast<T>(acc);
    return detail::make_op<T>("sum", std::move(out), {a}, [a](Node<T>& self) {
        a->ensure_grad();
        const T g = self.grad.values[0];
        for (T& v : a->grad.values) v += g;
    });
}

template <typename T>
NodePtr<T> mean(const NodePtr<T>& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a->value.numel()));
}

// ---- linear algebra ----

template <typename T>
NodePtr<T> matmul(const NodePtr<T>& a, const NodePtr<T>& b) {
    detail::require(a->value.rank() == 2 && b->value.rank() == 2, "matmul expects rank-2 inputs");
    const std::int64_t m = a->value.dim(0), k = a->value.dim(1);
    detail::require(b->value.dim(0) == k, "matmul inner dims differ: " + shape_str(a->value.shape) +
                                              " x " + shape_str(b->value.shape));
    const std::int64_t n = b->value.dim(1);
    Tensor<T> out({m, n});
    detail::gemm_nn(m, k, n, a->value.values.data(), b->value.values.data(), out.values.data());
    return detail::make_op<T>("matmul", std::move(out), {a, b}, [a, b, m, k, n](Node<T>& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            detail::gemm_nt(m, n, k, self.grad.values.data(), b->value.values.data(),
                            a->grad.values.data());
        }
        if (b->requires_grad) {
            b->ensure_grad();
            detail::gemm_tn(k, m, n, a->value.values.data(), self.grad.values.data(),
                            b->grad.values.data());
        }
    });
}

template <typename T>
NodePtr<T> bmm(const NodePtr<T>& a, const NodePtr<T>& b) {
    detail::require(a->value.rank() == 3 && b->value.rank() == 3, "bmm expects rank-3 inputs");
    const std::int64_t bs = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2);
    detail::require(b->value.dim(0) == bs && b->value.dim(1) == k,
                    "bmm shape mismatch: " + shape_str(a->value.shape) + " x " +
                        shape_str(b->value.shape));
    const std::int64_t n = b->value.dim(2);
    Tensor<T> out({bs, m, n});
    for (std::int64_t i = 0; i < bs; ++i)
        detail::gemm_nn(m, k, n, a->value.values.data() + i * m * k,
                        b->value.values.data() + i * k * n, out.values.data() + i * m * n);
    return detail::make_op<T>("bmm", std::move(out), {a, b}, [a, b, bs, m, k, n](Node<T>& self) {
        for (std::int64_t i = 0; i < bs; ++i) {
            const T* g = self.grad.values.data() + i * m * n;
            if (a->requires_grad) {
                a->ensure_grad();
                detail::gemm_nt(m, n, k, g, b->value.values.data() + i * k * n,
                                a->grad.values.data() + i * m * k);
            }
            if (b->requires_grad) {
                b->ensure_grad();
                detail::gemm_tn(k, m, n, a->value.values.data() + i * m * k, g,
                                b->grad.values.data() + i * k * n);
            }
        }
    });
}

// x [N,D] * w [D,O] + b [O]
template <typename T>
NodePtr<T> linear(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b) {
    auto y = matmul(x, w);
    if (!b) return y;
    detail::require(b->value.rank() == 1 && b->value.dim(0) == y->value.dim(1),
                    "linear bias shape mismatch");
    const std::int64_t n = y->value.dim(0), o = y->value.dim(1);
    Tensor<T> out = y->value;
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < o; ++j) out.values[i * o + j] += b->value.values[j];
    return detail::make_op<T>("linear_bias", std::move(out), {y, b}, [y, b, n, o](Node<T>& self) {
        if (y->requires_grad) {
            y->ensure_grad();
            for (std::size_t i = 0; i < self.grad.values.size(); ++i)
                y->grad.values[i] += self.grad.values[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < o; ++j)
                    b->grad.values[static_cast<std::size_t>(j)] += self.grad.values[i * o + j];
        }
    });
}

// ---- softmax family ----

template <typename T>
NodePtr<T> softmax(const NodePtr<T>& a, std::size_t axis) {
    const auto split = detail::split_axis(a->value.shape, axis);
    Tensor<T> out(a->value.shape);
    for (std::int64_t o = 0; o < split.outer; ++o)
        for (std::int64_t i = 0; i < split.inner; ++i) {
            const auto at = [&](std::int64_t j) {
                return static_cast<std::size_t>((o * split.n + j) * split.inner + i);
            };
            double mx = -1e300;
            for (std::int64_t j = 0; j < split.n; ++j)
                mx = std::max(mx, static_cast<double>(a->value.values[at(j)]));
            double denom = 0.0;
            for (std::int64_t j = 0; j < split.n; ++j)
                denom += std::exp(static_cast<double>(a->value.values[at(j)]) - mx);
            for (std::int64_t j = 0; j < split.n; ++j)
                out.values[at(j)] = static_cast<T>(
                    std::exp(static_cast<double>(a->value.values[at(j)]) - mx) / denom);
        }
    return detail::make_op<T>("softmax", std::move(out), {a}, [a, split](Node<T>& self) {
        a->ensure_grad();
        for (std::int64_t o = 0; o < split.outer; ++o)
            for (std::int64_t i = 0; i < split.inner; ++i) {
                const auto at = [&](std::int64_t j) {
                    return static_cast<std::size_t>((o * split.n + j) * split.inner + i);
                };
                double dot = 0.0;
                for (std::int64_t j = 0; j < split.n; ++j)
                    dot += static_cast<double>(self.grad.values[at(j)]) * self.value.values[at(j)];
                for (std::int64_t j = 0; j < split.n; ++j)
                    a->grad.values[at(j)] += static_cast<T>(
                        static_cast<double>(self.value.values[at(j)]) *
                        (static_cast<double>(self.grad.values[at(j)]) - dot));
            }
    });
}

template <typename T>
NodePtr<T> log_softmax(const NodePtr<T>& a, std::size_t axis) {
    const auto split = detail::split_axis(a->value.shape, axis);
    Tensor<T> out(a->value.shape);
    for (std::int64_t o = 0; o < split.outer; ++o)
        for (std::int64_t i = 0; i < split.inner; ++i) {
            const auto at = [&](std::int64_t j) {
                return static_cast<std::size_t>((o * split.n + j) * split.inner + i);
            };
            double mx = -1e300;
            for (std::int64_t j = 0; j < split.n; ++j)
                mx = std::max(mx, static_cast<double>(a->value.values[at(j)]));
            double denom = 0.0;
            for (std::int64_t j = 0; j < split.n; ++j)
                denom += std::exp(static_cast<double>(a->value.values[at(j)]) - mx);
            const double lse = mx + std::log(denom);
            for (std::int64_t j = 0; j < split.n; ++j)
                out.values[at(j)] = static_cast<T>(static_cast<double>(a->value.values[at(j)]) - lse);
        }
    return detail::make_op<T>("log_softmax", std::move(out), {a}, [a, split](Node<T>& self) {
        a->ensure_grad();
        for (std::int64_t o = 0; o < split.outer; ++o)
            for (std::int64_t i = 0; i < split.inner; ++i) {
                const auto at = [&](std::int64_t j) {
                    return static_cast<std::size_t>((o * split.n + j) * split.inner + i);
                };
                double gsum = 0.0;
                for (std::int64_t j = 0; j < split.n; ++j)
                    gsum += static_cast<double>(self.grad.values[at(j)]);
                for (std::int64_t j = 0; j < split.n; ++j)
                    a->grad.values[at(j)] += static_cast<T>(
                        static_cast<double>(self.grad.values[at(j)]) -
                        std::exp(static_cast<double>(self.value.values[at(j)])) * gsum);
            }
    });
}

// Mean over the batch of -log softmax(logits)[label], in the log-sum-exp form.
template <typename T>
NodePtr<T> cross_entropy(const NodePtr<T>& logits, const std::vector<std::int64_t>& labels) {
    detail::require(logits->value.rank() == 2, "cross_entropy expects [batch, classes] logits");
    const std::int64_t n = logits->value.dim(0), k = logits->value.dim(1);
    detail::require(static_cast<std::int64_t>(labels.size()) == n,
                    "cross_entropy label count mismatch");
    for (std::int64_t y : labels)
        detail::require(y >= 0 && y < k, "label " + std::to_string(y) + " outside [0, " +
                                             std::to_string(k) + ")");
    double loss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const T* row = logits->value.values.data() + i * k;
        double mx = -1e300;
        for (std::int64_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double denom = 0.0;
        for (std::int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        loss += mx + std::log(denom) - static_cast<double>(row[labels[static_cast<std::size_t>(i)]]);
    }
    Tensor<T> out({1});
    out.values[0] = static_cast<T>(loss / static_cast<double>(n));
    return detail::make_op<T>("cross_entropy", std::move(out), {logits},
                              [logits, labels, n, k](Node<T>& self) {
        logits->ensure_grad();
        const double g = static_cast<double>(self.grad.values[0]) / static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i) {
            const T* row = logits->value.values.data() + i * k;
            T* grow = logits->grad.values.data() + i * k;
            double mx = -1e300;
            for (std::int64_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
            double denom = 0.0;
            for (std::int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
            for (std::int64_t j = 0; j < k; ++j) {
                const double p = std::exp(static_cast<double>(row[j]) - mx) / denom;
                const double onehot = j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
                grow[j] += static_cast<T>(g * (p - onehot));
            }
        }
    });
}

// Like cross_entropy, but each sample's term is scaled by weights[i] before the
// batch mean. With all weights 1 this equals cross_entropy bit for bit.
template <typename T>
NodePtr<T> cross_entropy_weighted(const NodePtr<T>& logits, const std::vector<std::int64_t>& labels,
                                  const std::vector<double>& weights) {
    detail::require(logits->value.rank() == 2, "cross_entropy expects [batch, classes] logits");
    const std::int64_t n = logits->value.dim(0), k = logits->value.dim(1);
    detail::require(static_cast<std::int64_t>(labels.size()) == n,
                    "cross_entropy label count mismatch");
    detail::require(static_cast<std::int64_t>(weights.size()) == n,
                    "cross_entropy weight count mismatch");
    for (double w : weights)
        detail::require(std::isfinite(w), "cross_entropy weights must be finite");
    for (std::int64_t y : labels)
        detail::require(y >= 0 && y < k, "label " + std::to_string(y) + " outside [0, " +
                                             std::to_string(k) + ")");
    double loss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const T* row = logits->value.values.data() + i * k;
        double mx = -1e300;
        for (std::int64_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double denom = 0.0;
        for (std::int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
        loss += weights[static_cast<std::size_t>(i)] *
                (mx + std::log(denom) - static_cast<double>(row[labels[static_cast<std::size_t>(i)]]));
    }
    Tensor<T> out({1});
    out.values[0] = static_cast<T>(loss / static_cast<double>(n));
    return detail::make_op<T>("cross_entropy_weighted", std::move(out), {logits},
                              [logits, labels, weights, n, k](Node<T>& self) {
        logits->ensure_grad();
        const double g = static_cast<double>(self.grad.values[0]) / static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i) {
            const T* row = logits->value.values.data() + i * k;
            T* grow = logits->grad.values.data() + i * k;
            const double gw = g * weights[static_cast<std::size_t>(i)];
            double mx = -1e300;
            for (std::int64_t j = 0; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
            double denom = 0.0;
            for (std::int64_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
            for (std::int64_t j = 0; j < k; ++j) {
                const double p = std::exp(static_cast<double>(row[j]) - mx) / denom;
                const double onehot = j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
                grow[j] += static_cast<T>(gw * (p - onehot));
            }
        }
    });
}

// ---- convolution and pooling ----

namespace detail {

inline std::int64_t conv_out_dim(std::int64_t in, std::int64_t k, std::int64_t stride,
                                 std::int64_t pad) {
    const std::int64_t out = (in + 2 * pad - k) / stride + 1;
    require(out >= 1, "conv/pool window does not fit input");
    return out;
}

// x [C,H,W] -> col [C*kh*kw, Ho*Wo]
template <typename T>
void im2col(const T* x, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t kh,
            std::int64_t kw, std::int64_t sh, std::int64_t sw, std::int64_t pad, std::int64_t ho,
            std::int64_t wo, T* col) {
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t ki = 0; ki < kh; ++ki)
            for (std::int64_t kj = 0; kj < kw; ++kj) {
                T* dst = col + ((ch * kh + ki) * kw + kj) * ho * wo;
                for (std::int64_t oi = 0; oi < ho; ++oi) {
                    const std::int64_t ii = oi * sh + ki - pad;
                    for (std::int64_t oj = 0; oj < wo; ++oj) {
                        const std::int64_t jj = oj * sw + kj - pad;
                        dst[oi * wo + oj] = (ii >= 0 && ii < h && jj >= 0 && jj < w)
                                                ? x[(ch * h + ii) * w + jj]
                                                : T(0);
                    }
                }
            }
}

template <typename T>
void col2im_add(const T* col, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t kh,
                std::int64_t kw, std::int64_t sh, std::int64_t sw, std::int64_t pad,
                std::int64_t ho, std::int64_t wo, T* x) {
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t ki = 0; ki < kh; ++ki)
            for (std::int64_t kj = 0; kj < kw; ++kj) {
                const T* src = col + ((ch * kh + ki) * kw + kj) * ho * wo;
                for (std::int64_t oi = 0; oi < ho; ++oi) {
                    const std::int64_t ii = oi * sh + ki - pad;
                    if (ii < 0 || ii >= h) continue;
                    for (std::int64_t oj = 0; oj < wo; ++oj) {
                        const std::int64_t jj = oj * sw + kj - pad;
                        if (jj >= 0 && jj < w) x[(ch * h + ii) * w + jj] += src[oi * wo + oj];
                    }
                }
            }
}

} // namespace detail

// x [N,C,H,W], w [O,C,kh,kw], optional b [O]; separate strides let the stem
// downsample frequency harder than time.
template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b,
                  std::int64_t stride_h, std::int64_t stride_w, std::int64_t pad) {
    detail::require(x->value.rank() == 4 && w->value.rank() == 4, "conv2d expects 4-d x and w");
    const std::int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2),
                       wd = x->value.dim(3);
    const std::int64_t o = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    detail::require(w->value.dim(1) == c, "conv2d channel mismatch: x " + shape_str(x->value.shape) +
                                              ", w " + shape_str(w->value.shape));
    detail::require(stride_h >= 1 && stride_w >= 1 && pad >= 0, "conv2d bad stride/pad");
    const std::int64_t ho = detail::conv_out_dim(h, kh, stride_h, pad);
    const std::int64_t wo = detail::conv_out_dim(wd, kw, stride_w, pad);
    if (b) detail::require(b->value.rank() == 1 && b->value.dim(0) == o, "conv2d bias shape");

    const std::int64_t ckk = c * kh * kw;
    Tensor<T> out({n, o, ho, wo});
    std::vector<T> col(static_cast<std::size_t>(ckk * ho * wo));
    for (std::int64_t i = 0; i < n; ++i) {
        detail::im2col(x->value.values.data() + i * c * h * wd, c, h, wd, kh, kw, stride_h,
                       stride_w, pad, ho, wo, col.data());
        detail::gemm_nn(o, ckk, ho * wo, w->value.values.data(), col.data(),
                        out.values.data() + i * o * ho * wo);
        if (b)
            for (std::int64_t oc = 0; oc < o; ++oc) {
                T* dst = out.values.data() + (i * o + oc) * ho * wo;
                const T bias = b->value.values[static_cast<std::size_t>(oc)];
                for (std::int64_t j = 0; j < ho * wo; ++j) dst[j] += bias;
            }
    }

    std::vector<NodePtr<T>> inputs = b ? std::vector<NodePtr<T>>{x, w, b}
                                       : std::vector<NodePtr<T>>{x, w};
    return detail::make_op<T>("conv2d", std::move(out), std::move(inputs),
                              [x, w, b, n, c, h, wd, o, kh, kw, stride_h, stride_w, pad, ho, wo,
                               ckk](Node<T>& self) {
        std::vector<T> col(static_cast<std::size_t>(ckk * ho * wo));
        std::vector<T> dcol(static_cast<std::size_t>(ckk * ho * wo));
        for (std::int64_t i = 0; i < n; ++i) {
            const T* g = self.grad.values.data() + i * o * ho * wo;
            const bool need_col = w->requires_grad;
            if (need_col)
                detail::im2col(x->value.values.data() + i * c * h * wd, c, h, wd, kh, kw, stride_h,
                               stride_w, pad, ho, wo, col.data());
            if (w->requires_grad) {
                w->ensure_grad();
                detail::gemm_nt(o, ho * wo, ckk, g, col.data(), w->grad.values.data());
            }
            if (x->requires_grad) {
                x->ensure_grad();
                std::fill(dcol.begin(), dcol.end(), T(0));
                detail::gemm_tn(ckk, o, ho * wo, w->value.values.data(), g, dcol.data());
                detail::col2im_add(dcol.data(), c, h, wd, kh, kw, stride_h, stride_w, pad, ho, wo,
                                   x->grad.values.data() + i * c * h * wd);
            }
            if (b && b->requires_grad) {
                b->ensure_grad();
                for (std::int64_t oc = 0; oc < o; ++oc) {
                    double acc = 0.0;
                    const T* grow = g + oc * ho * wo;
                    for (std::int64_t j = 0; j < ho * wo; ++j) acc += static_cast<double>(grow[j]);
                    b->grad.values[static_cast<std::size_t>(oc)] += static_cast<T>(acc);
                }
            }
        }
    });
}

template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b,
                  std::int64_t stride, std::int64_t pad) {
    return conv2d(x, w, b, stride, stride, pad);
}

template <typename T>
NodePtr<T> max_pool2d(const NodePtr<T>& x, std::int64_t k, std::int64_t stride) {
    detail::require(x->value.rank() == 4, "max_pool2d expects 4-d input");
    const std::int64_t n = x->value.dim(0), c = x->value.dim(1), h = x->value.dim(2),
                       w = x->value.dim(3);
    detail::require(k >= 1 && stride >= 1, "max_pool2d bad window");
    detail::require(k <= h && k <= w, "pooling window larger than input");
    const std::int64_t ho = (h - k) / stride + 1;
    const std::int64_t wo = (w - k) / stride + 1;

    Tensor<T> out({n, c, ho, wo});
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out.values.size());
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const T* plane = x->value.values.data() + (i * c + ch) * h * w;
            for (std::int64_t oi = 0; oi < ho; ++oi)
                for (std::int64_t oj = 0; oj < wo; ++oj) {
                    std::int64_t best = (oi * stride) * w + oj * stride;
                    T best_v = plane[best];
                    for (std::int64_t ki = 0; ki < k; ++ki)
                        for (std::int64_t kj = 0; kj < k; ++kj) {
                            const std::int64_t idx = (oi * stride + ki) * w + (oj * stride + kj);
                            if (plane[idx] > best_v) { // first max wins on ties
                                best_v = plane[idx];
                                best = idx;
                            }
                        }
                    const std::size_t out_idx =
                        static_cast<std::size_t>(((i * c + ch) * ho + oi) * wo + oj);
                    out.values[out_idx] = best_v;
                    (*argmax)[out_idx] = (i * c + ch) * h * w + best;
                }
        }
    return detail::make_op<T>("max_pool2d", std::move(out), {x}, [x, argmax](Node<T>& self) {
        x->ensure_grad();
        for (std::size_t i = 0; i < self.grad.values.size(); ++i)
            x->grad.values[static_cast<std::size_t>((*argmax)[i])] += self.grad.values[i];
    });
}

// [N,C,H,W] -> [N,C]
template <typename T>
NodePtr<T> avg_pool(const NodePtr<T>& x) {
    detail::require(x->value.rank() == 4, "avg_pool expects 4-d input");
    const std::int64_t n = x->value.dim(0), c = x->value.dim(1),
                       hw = x->value.dim(2) * x->value.dim(3);
    Tensor<T> out({n, c});
    for (std::int64_t i = 0; i < n * c; ++i) {
        double acc = 0.0;
        const T* src = x->value.values.data() + i * hw;
        for (std::int64_t j = 0; j < hw; ++j) acc += static_cast<double>(src[j]);
        out.values[static_cast<std::size_t>(i)] = static_cast<T>(acc / static_cast<double>(hw));
    }
    return detail::make_op<T>("avg_pool", std::move(out), {x}, [x, n, c, hw](Node<T>& self) {
        x->ensure_grad();
        for (std::int64_t i = 0; i < n * c; ++i) {
            const T g = static_cast<T>(self.grad.values[static_cast<std::size_t>(i)] /
                                       static_cast<T>(hw));
            T* dst = x->grad.values.data() + i * hw;
            for (std::int64_t j = 0; j < hw; ++j) dst[j] += g;
        }
    });
}

// ---- batch norm ----

// Running statistics live outside the graph; training mode updates them as a
// side effect of the forward pass (biased variance normalizes, unbiased feeds
// the running average).
template <typename T>
struct BnStats {
    Tensor<T> running_mean;
    Tensor<T> running_var;

    explicit BnStats(std::int64_t channels = 1)
        : running_mean({channels}), running_var(Tensor<T>::full({channels}, T(1))) {}
};

template <typename T>
NodePtr<T> batch_norm2d(const NodePtr<T>& x, const NodePtr<T>& gamma, const NodePtr<T>& beta,
                        BnStats<T>& stats, bool training, double momentum = 0.1,
                        double eps = 1e-5) {
    detail::require(x->value.rank() == 4, "batch_norm2d expects 4-d input");
    const std::int64_t n = x->value.dim(0), c = x->value.dim(1),
                       hw = x->value.dim(2) * x->value.dim(3);
    detail::require(gamma->value.numel() == c && beta->value.numel() == c &&
                        stats.running_mean.numel() == c,
                    "batch_norm2d channel mismatch");

    auto mean_v = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
    auto invstd_v = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
    const double count = static_cast<double>(n * hw);

    for (std::int64_t ch = 0; ch < c; ++ch) {
        double mu, var;
        if (training) {
            double s = 0.0, s2 = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const T* src = x->value.values.data() + (i * c + ch) * hw;
                for (std::int64_t j = 0; j < hw; ++j) {
                    const double v = static_cast<double>(src[j]);
                    s += v;
                    s2 += v * v;
                }
            }
            mu = s / count;
            var = std::max(0.0, s2 / count - mu * mu);
            const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
            stats.running_mean.values[static_cast<std::size_t>(ch)] = static_cast<T>(
                (1.0 - momentum) * stats.running_mean.values[static_cast<std::size_t>(ch)] +
                momentum * mu);
            stats.running_var.values[static_cast<std::size_t>(ch)] = static_cast<T>(
                (1.0 - momentum) * stats.running_var.values[static_cast<std::size_t>(ch)] +
                momentum * unbiased);
        } else {
            mu = static_cast<double>(stats.running_mean.values[static_cast<std::size_t>(ch)]);
            var = static_cast<double>(stats.running_var.values[static_cast<std::size_t>(ch)]);
        }
        (*mean_v)[static_cast<std::size_t>(ch)] = mu;
        (*invstd_v)[static_cast<std::size_t>(ch)] = 1.0 / std::sqrt(var + eps);
    }

    Tensor<T> out(x->value.shape);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const T* src = x->value.values.data() + (i * c + ch) * hw;
            T* dst = out.values.data() + (i * c + ch) * hw;
            const double mu = (*mean_v)[static_cast<std::size_t>(ch)];
            const double is = (*invstd_v)[static_cast<std::size_t>(ch)];
            const double g = static_cast<double>(gamma->value.values[static_cast<std::size_t>(ch)]);
            const double bt = static_cast<double>(beta->value.values[static_cast<std::size_t>(ch)]);
            for (std::int64_t j = 0; j < hw; ++j)
                dst[j] = static_cast<T>((static_cast<double>(src[j]) - mu) * is * g + bt);
        }

    return detail::make_op<T>(
        "batch_norm2d", std::move(out), {x, gamma, beta},
        [x, gamma, beta, mean_v, invstd_v, training, n, c, hw, count](Node<T>& self) {
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const double mu = (*mean_v)[static_cast<std::size_t>(ch)];
                const double is = (*invstd_v)[static_cast<std::size_t>(ch)];
                const double g = static_cast<double>(gamma->value.values[static_cast<std::size_t>(ch)]);
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::int64_t i = 0; i < n; ++i) {
                    const T* gy = self.grad.values.data() + (i * c + ch) * hw;
                    const T* xv = x->value.values.data() + (i * c + ch) * hw;
                    for (std::int64_t j = 0; j < hw; ++j) {
                        const double dy = static_cast<double>(gy[j]);
                        sum_dy += dy;
                        sum_dy_xhat += dy * (static_cast<double>(xv[j]) - mu) * is;
                    }
                }
                if (gamma->requires_grad) {
                    gamma->ensure_grad();
                    gamma->grad.values[static_cast<std::size_t>(ch)] += static_cast<T>(sum_dy_xhat);
                }
                if (beta->requires_grad) {
                    beta->ensure_grad();
                    beta->grad.values[static_cast<std::size_t>(ch)] += static_cast<T>(sum_dy);
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    for (std::int64_t i = 0; i < n; ++i) {
                        const T* gy = self.grad.values.data() + (i * c + ch) * hw;
                        const T* xv = x->value.values.data() + (i * c + ch) * hw;
                        T* gx = x->grad.values.data() + (i * c + ch) * hw;
                        for (std::int64_t j = 0; j < hw; ++j) {
                            const double dy = static_cast<double>(gy[j]);
                            const double xhat = (static_cast<double>(xv[j]) - mu) * is;
                            const double dx =
                                training
                                    ? g * is * (dy - sum_dy / count - xhat * sum_dy_xhat / count)
                                    : g * is * dy;
                            gx[j] += static_cast<T>(dx);
                        }
                    }
                }
            }
        });
}

// ---- attention ----

// softmax(Q K^T / sqrt(d_head)) V with heads split from the channel dim.
// q [N,Lq,C], k [N,Lk,C], v [N,Lk,C] -> [N,Lq,C]; attn_out (optional)
// receives the [N*heads, Lq, Lk] attention weights node.
template <typename T>
NodePtr<T> scaled_dot_product_attention(const NodePtr<T>& q, const NodePtr<T>& k,
                                        const NodePtr<T>& v, std::int64_t heads,
                                        NodePtr<T>* attn_out = nullptr) {
    detail::require(q->value.rank() == 3 && k->value.rank() == 3 && v->value.rank() == 3,
                    "attention expects rank-3 q/k/v");
    const std::int64_t n = q->value.dim(0), lq = q->value.dim(1), ch = q->value.dim(2);
    const std::int64_t lk = k->value.dim(1);
    detail::require(k->value.dim(0) == n && v->value.dim(0) == n, "attention batch mismatch");
    detail::require(k->value.dim(2) == ch && v->value.dim(2) == ch, "attention channel mismatch");
    detail::require(v->value.dim(1) == lk, "attention key/value length mismatch");
    detail::require(heads >= 1 && ch % heads == 0, "channels must divide by heads");
    const std::int64_t dh = ch / heads;

    // [N,L,C] -> [N*heads, L, dh]
    const auto split_heads = [&](const NodePtr<T>& t, std::int64_t l) {
        auto r = reshape(t, {n, l, heads, dh});
        auto p = permute(r, {0, 2, 1, 3}); // [N, heads, L, dh]
        return reshape(p, {n * heads, l, dh});
    };
    auto qh = split_heads(q, lq);
    auto kh = split_heads(k, lk);
    auto vh = split_heads(v, lk);

    auto scores = scale(bmm(qh, permute(kh, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
    auto attn = softmax(scores, 2); // [N*heads, Lq, Lk]
    if (attn_out) *attn_out = attn;
    auto ctx = bmm(attn, vh); // [N*heads, Lq, dh]
    auto merged = permute(reshape(ctx, {n, heads, lq, dh}), {0, 2, 1, 3}); // [N, Lq, heads, dh]
    return reshape(merged, {n, lq, ch});
}

// ---- backward and verification ----

template <typename T>
void backward(const NodePtr<T>& root) {
    detail::require(root->value.numel() == 1,
                    "backward requires a scalar loss, got " + shape_str(root->value.shape));
    detail::require(root->requires_grad, "backward on a graph with no tracked tensors");
    detail::require(!root->backward_ran, "backward already ran on this graph; rebuild it");
    root->backward_ran = true;

    // Iterative post-order DFS; reverse order is the backward schedule.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node<T>* n : order) {
        n->ensure_grad();
        n->zero_grad();
    }
    root->grad.values[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// Central-difference comparison on sampled coordinates. f must rebuild the
// graph from the current parameter values on every call.
template <typename T>
double grad_check(const std::function<NodePtr<T>()>& f, const std::vector<NodePtr<T>>& params,
                  double eps = 1e-3, std::int64_t max_coords_per_param = -1, Rng* rng = nullptr) {
    auto root = f();
    backward(root);
    std::vector<Tensor<T>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) {
        detail::require(p->requires_grad, "grad_check parameter does not track gradients");
        p->ensure_grad();
        grads.push_back(p->grad);
    }

    const auto eval = [&]() { return static_cast<double>(f()->value.values[0]); };
    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi]->value.values;
        std::vector<std::int64_t> coords;
        const auto numel = static_cast<std::int64_t>(vals.size());
        if (max_coords_per_param < 0 || numel <= max_coords_per_param) {
            coords.resize(static_cast<std::size_t>(numel));
            for (std::int64_t i = 0; i < numel; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            detail::require(rng != nullptr, "grad_check sampling needs an rng");
            for (std::int64_t i = 0; i < max_coords_per_param; ++i)
                coords.push_back(rng->uniform_int(0, numel - 1));
        }
        for (std::int64_t ci : coords) {
            const T saved = vals[static_cast<std::size_t>(ci)];
            vals[static_cast<std::size_t>(ci)] = static_cast<T>(saved + eps);
            const double up = eval();
            vals[static_cast<std::size_t>(ci)] = static_cast<T>(saved - eps);
            const double down = eval();
            vals[static_cast<std::size_t>(ci)] = saved;
            const double fd = (up - down) / (2.0 * eps);
            const double ad = static_cast<double>(grads[pi].values[static_cast<std::size_t>(ci)]);
            const double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace uareg::ad
