// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A BasicTensor is a cheap handle onto a shared node. Every differentiable op
// records its inputs and a backward closure on the result node; backward()
// orders the reachable nodes topologically and runs the closures in reverse,
// summing contributions into each input once per use.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "climgan/common.hpp"

namespace climgan {

template <class T>
class BasicTensor;

namespace detail {

template <class T>
struct Node {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    const char* op = "leaf";

    bool is_leaf() const { return !backward; }
    std::vector<T>& grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), T{});
        return grad;
    }
};

inline bool& grad_mode() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

/// Disables recording for its lifetime. Results produced inside carry no tape.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
    ~NoGradGuard() { detail::grad_mode() = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

template <class T>
class BasicTensor {
public:
    using value_type = T;
    using NodePtr = std::shared_ptr<detail::Node<T>>;

    BasicTensor() = default;

    BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false)
        : node_(std::make_shared<detail::Node<T>>()) {
        if (shape.numel() != data.size())
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + shape.str());
        node_->shape = std::move(shape);
        node_->data = std::move(data);
        node_->requires_grad = requires_grad;
    }

    static BasicTensor zeros(const Shape& shape, bool requires_grad = false) {
        return BasicTensor(shape, std::vector<T>(shape.numel(), T{}), requires_grad);
    }
    static BasicTensor full(const Shape& shape, T value, bool requires_grad = false) {
        return BasicTensor(shape, std::vector<T>(shape.numel(), value), requires_grad);
    }
    static BasicTensor scalar(T value, bool requires_grad = false) {
        return BasicTensor(Shape{1}, {value}, requires_grad);
    }
    static BasicTensor randn(const Shape& shape, Rng& rng, double stddev = 1.0,
                             bool requires_grad = false) {
        std::vector<T> v(shape.numel());
        for (auto& x : v) x = static_cast<T>(rng.normal() * stddev);
        return BasicTensor(shape, std::move(v), requires_grad);
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node().shape; }
    std::size_t numel() const { return node().data.size(); }
    std::size_t dim(std::size_t axis) const { return node().shape[axis]; }

    std::span<const T> data() const { return node().data; }
    const std::vector<T>& values() const { return node().data; }
    T item() const {
        if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
        return node().data[0];
    }

    /// Writable view of a leaf's values (initialization, optimizer updates).
    std::span<T> mutable_data() {
        if (!node().is_leaf()) throw std::logic_error("mutable_data() on a recorded op result");
        return node_->data;
    }

    bool requires_grad() const { return node().requires_grad; }
    void set_requires_grad(bool on) {
        if (!node().is_leaf()) throw std::logic_error("set_requires_grad() on a non-leaf tensor");
        node_->requires_grad = on;
    }
    bool has_grad() const { return !node().grad.empty(); }
    std::span<const T> grad() const { return node().grad; }
    std::span<T> mutable_grad() { return node_->grad_buffer(); }
    void zero_grad() { node_->grad.clear(); }

    bool is_leaf() const { return node().is_leaf(); }
    const char* op_name() const { return node().op; }

    /// New leaf holding a copy of the values, outside any tape.
    BasicTensor detach() const { return BasicTensor(shape(), node().data, false); }

    /// Reverse pass from a single-element tensor. Leaf gradients accumulate
    /// across calls until zero_grad().
    void backward() const {
        if (numel() != 1)
            throw ShapeError("backward() requires a scalar loss, got shape " + shape().str());
        if (!requires_grad()) throw std::logic_error("backward() on a tensor that does not require grad");

        std::vector<detail::Node<T>*> order;
        std::unordered_set<detail::Node<T>*> seen;
        std::vector<std::pair<detail::Node<T>*, std::size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, next] = stack.back();
            if (next < n->parents.size()) {
                detail::Node<T>* p = n->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }

        for (auto* n : order)
            if (!n->is_leaf()) n->grad.assign(n->data.size(), T{});
        node_->grad_buffer()[0] += T{1};
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            if (!(*it)->is_leaf()) (*it)->backward(**it);
        }
        for (auto* n : order)
            if (!n->is_leaf()) {
                n->grad.clear();
                n->grad.shrink_to_fit();
            }
    }

    const NodePtr& node_ptr() const { return node_; }

    /// Records an op result. `backward` receives the result node and must add
    /// into parents' grad_buffer(); it is dropped when no input requires grad.
    static BasicTensor record(Shape shape, std::vector<T> data, std::vector<BasicTensor> inputs,
                              const char* op, std::function<void(detail::Node<T>&)> backward) {
        BasicTensor out(std::move(shape), std::move(data), false);
        bool tracked = false;
        if (detail::grad_mode())
            for (const auto& in : inputs) tracked = tracked || in.requires_grad();
        if (tracked) {
            out.node_->requires_grad = true;
            out.node_->op = op;
            out.node_->backward = std::move(backward);
            for (auto& in : inputs) out.node_->parents.push_back(in.node_);
        }
        return out;
    }

private:
    const detail::Node<T>& node() const {
        if (!node_) throw std::logic_error("use of an undefined tensor");
        return *node_;
    }

    NodePtr node_;
};

using Tensor = BasicTensor<float>;

//------------------------------------------------------------------------------
// Broadcasting
//------------------------------------------------------------------------------

/// Numpy-style right-aligned broadcast of two shapes.
inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.rank(), b.rank());
    std::vector<std::size_t> out(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.rank() ? 1 : a[i - (rank - a.rank())];
        const std::size_t db = i < rank - b.rank() ? 1 : b[i - (rank - b.rank())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("cannot broadcast shapes " + a.str() + " and " + b.str());
        out[i] = std::max(da, db);
    }
    return Shape(std::move(out));
}

namespace detail {

/// Strides of `in` viewed with the extents of `out` (0 on broadcast axes).
inline std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
    std::vector<std::size_t> s(out.rank(), 0);
    const auto in_strides = in.strides();
    const std::size_t offset = out.rank() - in.rank();
    for (std::size_t i = 0; i < in.rank(); ++i)
        s[i + offset] = in[i] == 1 ? 0 : in_strides[i];
    return s;
}

/// fn(out_index, a_index, b_index) over every element of `out`.
template <class Fn>
void for_each_broadcast(const Shape& out, const std::vector<std::size_t>& sa,
                        const std::vector<std::size_t>& sb, Fn&& fn) {
    const std::size_t rank = out.rank();
    const std::size_t n = out.numel();
    if (rank == 0) {
        fn(std::size_t{0}, std::size_t{0}, std::size_t{0});
        return;
    }
    std::vector<std::size_t> idx(rank, 0);
    std::size_t ia = 0, ib = 0;
    const std::size_t inner = out[rank - 1];
    const std::size_t ia_step = sa[rank - 1], ib_step = sb[rank - 1];
    for (std::size_t o = 0; o < n; o += inner) {
        std::size_t a = ia, b = ib;
        for (std::size_t j = 0; j < inner; ++j, a += ia_step, b += ib_step) fn(o + j, a, b);
        for (std::size_t ax = rank - 1; ax-- > 0;) {
            ia += sa[ax];
            ib += sb[ax];
            if (++idx[ax] < out[ax]) break;
            ia -= sa[ax] * out[ax];
            ib -= sb[ax] * out[ax];
            idx[ax] = 0;
        }
    }
}

}  // namespace detail

/// Materializes `a` expanded to `shape`. Backward sums over expanded axes.
template <class T>
BasicTensor<T> broadcast_to(const BasicTensor<T>& a, const Shape& shape) {
    if (broadcast_shapes(a.shape(), shape) != shape)
        throw ShapeError("cannot broadcast " + a.shape().str() + " to " + shape.str());
    if (a.shape() == shape) return a;
    const auto sa = detail::broadcast_strides(a.shape(), shape);
    const std::vector<std::size_t> zero(shape.rank(), 0);
    std::vector<T> out(shape.numel());
    const auto& av = a.values();
    detail::for_each_broadcast(shape, sa, zero, [&](std::size_t o, std::size_t i, std::size_t) { out[o] = av[i]; });
    return BasicTensor<T>::record(shape, std::move(out), {a}, "broadcast_to",
                                  [sa, zero](detail::Node<T>& self) {
                                      auto& ga = self.parents[0]->grad_buffer();
                                      detail::for_each_broadcast(
                                          self.shape, sa, zero,
                                          [&](std::size_t o, std::size_t i, std::size_t) { ga[i] += self.grad[o]; });
                                  });
}

//------------------------------------------------------------------------------
// Elementwise maps
//------------------------------------------------------------------------------

/// y = f(x) elementwise, with dy/dx = df(x, y).
template <class T, class F, class DF>
BasicTensor<T> map_unary(const BasicTensor<T>& a, F f, DF df, const char* op) {
    const auto& av = a.values();
    std::vector<T> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    return BasicTensor<T>::record(a.shape(), std::move(out), {a}, op, [df](detail::Node<T>& self) {
        auto& parent = *self.parents[0];
        auto& ga = parent.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * df(parent.data[i], self.data[i]);
    });
}

/// z = f(x, y) with broadcasting; dfa/dfb give dz/dx and dz/dy.
template <class T, class F, class DA, class DB>
BasicTensor<T> map_binary(const BasicTensor<T>& a, const BasicTensor<T>& b, F f, DA dfa, DB dfb,
                          const char* op) {
    Shape shape;
    try {
        shape = broadcast_shapes(a.shape(), b.shape());
    } catch (const ShapeError&) {
        throw ShapeError(std::string(op) + ": shapes " + a.shape().str() + " and " + b.shape().str() +
                         " are not broadcast-compatible");
    }
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<T> out(shape.numel());
    const bool same = a.shape() == shape && b.shape() == shape;
    auto sa = detail::broadcast_strides(a.shape(), shape);
    auto sb = detail::broadcast_strides(b.shape(), shape);
    if (same) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
    } else {
        detail::for_each_broadcast(shape, sa, sb,
                                   [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = f(av[i], bv[j]); });
    }
    return BasicTensor<T>::record(
        shape, std::move(out), {a, b}, op, [dfa, dfb, same, sa, sb](detail::Node<T>& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            std::vector<T>* ga = pa.requires_grad ? &pa.grad_buffer() : nullptr;
            std::vector<T>* gb = pb.requires_grad ? &pb.grad_buffer() : nullptr;
            auto step = [&](std::size_t o, std::size_t i, std::size_t j) {
                const T x = pa.data[i], y = pb.data[j], g = self.grad[o];
                if (ga) (*ga)[i] += g * dfa(x, y, self.data[o]);
                if (gb) (*gb)[j] += g * dfb(x, y, self.data[o]);
            };
            if (same)
                for (std::size_t i = 0; i < self.grad.size(); ++i) step(i, i, i);
            else
                detail::for_each_broadcast(self.shape, sa, sb, step);
        });
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return map_binary(
        a, b, [](T x, T y) { return x + y; }, [](T, T, T) { return T{1}; }, [](T, T, T) { return T{1}; }, "add");
}
template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return map_binary(
        a, b, [](T x, T y) { return x - y; }, [](T, T, T) { return T{1}; }, [](T, T, T) { return T{-1}; }, "sub");
}
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return map_binary(
        a, b, [](T x, T y) { return x * y; }, [](T, T y, T) { return y; }, [](T x, T, T) { return x; }, "mul");
}
template <class T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return map_binary(
        a, b, [](T x, T y) { return x / y; }, [](T, T y, T) { return T{1} / y; },
        [](T x, T y, T) { return -x / (y * y); }, "div");
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, T s) {
    return map_unary(a, [s](T x) { return x + s; }, [](T, T) { return T{1}; }, "add_scalar");
}
template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, T s) {
    return map_unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; }, "mul_scalar");
}
template <class T>
BasicTensor<T> neg(const BasicTensor<T>& a) {
    return mul(a, T{-1});
}
template <class T>
BasicTensor<T> exp(const BasicTensor<T>& a) {
    return map_unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; }, "exp");
}
template <class T>
BasicTensor<T> log(const BasicTensor<T>& a) {
    return map_unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; }, "log");
}
template <class T>
BasicTensor<T> log1p(const BasicTensor<T>& a) {
    return map_unary(a, [](T x) { return std::log1p(x); }, [](T x, T) { return T{1} / (T{1} + x); }, "log1p");
}
template <class T>
BasicTensor<T> sqrt(const BasicTensor<T>& a) {
    return map_unary(a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T{0.5} / y; }, "sqrt");
}
template <class T>
BasicTensor<T> square(const BasicTensor<T>& a) {
    return map_unary(a, [](T x) { return x * x; }, [](T x, T) { return T{2} * x; }, "square");
}

template <class T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) { return add(a, b); }
template <class T>
BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) { return sub(a, b); }
template <class T>
BasicTensor<T> operator*(const BasicTensor<T>& a, const BasicTensor<T>& b) { return mul(a, b); }
template <class T>
BasicTensor<T> operator/(const BasicTensor<T>& a, const BasicTensor<T>& b) { return div(a, b); }
template <class T>
BasicTensor<T> operator+(const BasicTensor<T>& a, T s) { return add(a, s); }
template <class T>
BasicTensor<T> operator-(const BasicTensor<T>& a, T s) { return add(a, -s); }
template <class T>
BasicTensor<T> operator*(const BasicTensor<T>& a, T s) { return mul(a, s); }
template <class T>
BasicTensor<T> operator*(T s, const BasicTensor<T>& a) { return mul(a, s); }
template <class T>
BasicTensor<T> operator/(const BasicTensor<T>& a, T s) { return mul(a, T{1} / s); }
template <class T>
BasicTensor<T> operator-(const BasicTensor<T>& a) { return neg(a); }

//------------------------------------------------------------------------------
// Reductions
//------------------------------------------------------------------------------

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
    double acc = 0.0;
    for (T x : a.values()) acc += x;
    return BasicTensor<T>::record(Shape{1}, {static_cast<T>(acc)}, {a}, "sum", [](detail::Node<T>& self) {
        auto& ga = self.parents[0]->grad_buffer();
        const T g = self.grad[0];
        for (auto& x : ga) x += g;
    });
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
    return mul(sum(a), static_cast<T>(1.0 / static_cast<double>(a.numel())));
}

/// Sum over `axes`, keeping them as extent-1 axes.
template <class T>
BasicTensor<T> sum_axes(const BasicTensor<T>& a, const std::vector<std::size_t>& axes) {
    std::vector<std::size_t> dims = a.shape().dims();
    for (auto ax : axes) {
        if (ax >= dims.size()) throw ShapeError("sum_axes: axis out of range for " + a.shape().str());
        dims[ax] = 1;
    }
    const Shape out_shape(dims);
    const auto so = detail::broadcast_strides(out_shape, a.shape());
    const std::vector<std::size_t> zero(a.shape().rank(), 0);
    std::vector<double> acc(out_shape.numel(), 0.0);
    const auto& av = a.values();
    detail::for_each_broadcast(a.shape(), so, zero, [&](std::size_t i, std::size_t o, std::size_t) { acc[o] += av[i]; });
    std::vector<T> out(acc.begin(), acc.end());
    return BasicTensor<T>::record(out_shape, std::move(out), {a}, "sum_axes", [so, zero](detail::Node<T>& self) {
        auto& parent = *self.parents[0];
        auto& ga = parent.grad_buffer();
        detail::for_each_broadcast(parent.shape, so, zero,
                                   [&](std::size_t i, std::size_t o, std::size_t) { ga[i] += self.grad[o]; });
    });
}

template <class T>
BasicTensor<T> mean_axes(const BasicTensor<T>& a, const std::vector<std::size_t>& axes) {
    std::size_t count = 1;
    for (auto ax : axes) count *= a.dim(ax);
    return mul(sum_axes(a, axes), static_cast<T>(1.0 / static_cast<double>(count)));
}

//------------------------------------------------------------------------------
// Linear algebra and layout
//------------------------------------------------------------------------------

template <class T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.shape().rank() != 2 || b.shape().rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner extents differ for " + a.shape().str() + " x " + b.shape().str());
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<T> out(m * n, T{});
    parallel_for(m, [&](std::size_t i) {
        T* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const T s = av[i * k + p];
            const T* brow = bv.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
        }
    });
    return BasicTensor<T>::record(Shape{m, n}, std::move(out), {a, b}, "matmul", [m, k, n](detail::Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T* g = self.grad.data();
        if (pa.requires_grad) {
            auto& ga = pa.grad_buffer();
            parallel_for(m, [&](std::size_t i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const T* brow = pb.data.data() + p * n;
                    T acc{};
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * brow[j];
                    ga[i * k + p] += acc;
                }
            });
        }
        if (pb.requires_grad) {
            auto& gb = pb.grad_buffer();
            parallel_for(k, [&](std::size_t p) {
                T* grow = gb.data() + p * n;
                for (std::size_t i = 0; i < m; ++i) {
                    const T s = pa.data[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) grow[j] += s * g[i * n + j];
                }
            });
        }
    });
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& a, const Shape& shape) {
    if (shape.numel() != a.numel())
        throw ShapeError("reshape: cannot view " + a.shape().str() + " as " + shape.str());
    return BasicTensor<T>::record(shape, a.values(), {a}, "reshape", [](detail::Node<T>& self) {
        auto& ga = self.parents[0]->grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    });
}

/// Elements [start, start + length) along `axis`.
template <class T>
BasicTensor<T> slice(const BasicTensor<T>& a, std::size_t axis, std::size_t start, std::size_t length) {
    if (axis >= a.shape().rank() || length == 0 || start + length > a.dim(axis))
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") invalid on axis " + std::to_string(axis) + " of " + a.shape().str());
    std::vector<std::size_t> dims = a.shape().dims();
    const std::size_t extent = dims[axis];
    dims[axis] = length;
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= dims[i];
    for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
    const auto& av = a.values();
    std::vector<T> out(outer * length * inner);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>((o * extent + start) * inner), length * inner,
                    out.begin() + static_cast<std::ptrdiff_t>(o * length * inner));
    return BasicTensor<T>::record(Shape(dims), std::move(out), {a}, "slice",
                                  [outer, extent, start, length, inner](detail::Node<T>& self) {
                                      auto& ga = self.parents[0]->grad_buffer();
                                      for (std::size_t o = 0; o < outer; ++o)
                                          for (std::size_t j = 0; j < length * inner; ++j)
                                              ga[(o * extent + start) * inner + j] += self.grad[o * length * inner + j];
                                  });
}

/// Joins tensors along `axis`; all other extents must agree.
template <class T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& first = parts[0].shape();
    if (axis >= first.rank()) throw ShapeError("concat: axis out of range for " + first.str());
    std::vector<std::size_t> dims = first.dims();
    std::vector<std::size_t> extents;
    dims[axis] = 0;
    for (const auto& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.rank() == first.rank();
        for (std::size_t i = 0; ok && i < s.rank(); ++i) ok = i == axis || s[i] == first[i];
        if (!ok) throw ShapeError("concat: shape " + s.str() + " incompatible with " + first.str());
        extents.push_back(s[axis]);
        dims[axis] += s[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= dims[i];
    for (std::size_t i = axis + 1; i < dims.size(); ++i) inner *= dims[i];
    const std::size_t total = dims[axis];
    std::vector<T> out(outer * total * inner);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& pv = parts[k].values();
        const std::size_t len = extents[k] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * len), len,
                        out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
        offset += extents[k];
    }
    return BasicTensor<T>::record(Shape(dims), std::move(out), parts, "concat",
                                  [outer, inner, total, extents](detail::Node<T>& self) {
                                      std::size_t off = 0;
                                      for (std::size_t k = 0; k < extents.size(); ++k) {
                                          auto& parent = *self.parents[k];
                                          const std::size_t len = extents[k] * inner;
                                          if (parent.requires_grad) {
                                              auto& ga = parent.grad_buffer();
                                              for (std::size_t o = 0; o < outer; ++o)
                                                  for (std::size_t j = 0; j < len; ++j)
                                                      ga[o * len + j] += self.grad[(o * total + off) * inner + j];
                                          }
                                          off += extents[k];
                                      }
                                  });
}

/// Converts between scalar instantiations; the copy is untracked.
template <class To, class From>
BasicTensor<To> cast(const BasicTensor<From>& a, bool requires_grad = false) {
    std::vector<To> v(a.values().begin(), a.values().end());
    return BasicTensor<To>(a.shape(), std::move(v), requires_grad);
}

}  // namespace climgan
