#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cloudclass/core/error.hpp"

namespace cloudclass::ad {

/// Dense row-major n-d array with an optional gradient buffer. Tensor is a
/// cheap handle (shared storage), so backward closures can capture operands
/// by value. Scalar type S is float in training and double on the
/// gradient-check path.
template <typename S>
class Tensor {
    struct Storage {
        std::vector<std::size_t> shape;
        std::vector<S> v;
        std::vector<S> g; // same length as v when requires_grad
        bool requires_grad = false;
    };

public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape) {
        Tensor t;
        t.s_ = std::make_shared<Storage>();
        t.s_->shape = std::move(shape);
        t.s_->v.assign(numel_of(t.s_->shape), S(0));
        return t;
    }

    static Tensor from(std::vector<std::size_t> shape, std::vector<S> values) {
        Tensor t;
        t.s_ = std::make_shared<Storage>();
        if (numel_of(shape) != values.size())
            throw ValidationError("tensor shape does not match value count");
        t.s_->shape = std::move(shape);
        t.s_->v = std::move(values);
        return t;
    }

    static Tensor scalar(S v) { return from({1}, {v}); }

    bool defined() const { return s_ != nullptr; }

    const std::vector<std::size_t>& shape() const { return s_->shape; }
    std::size_t rank() const { return s_->shape.size(); }
    std::size_t dim(std::size_t i) const { return s_->shape[i]; }
    std::size_t numel() const { return s_->v.size(); }

    std::vector<S>& values() { return s_->v; }
    const std::vector<S>& values() const { return s_->v; }

    bool requires_grad() const { return s_ && s_->requires_grad; }

    void set_requires_grad(bool on) {
        s_->requires_grad = on;
        if (on)
            s_->g.assign(s_->v.size(), S(0));
        else
            s_->g.clear();
    }

    std::vector<S>& grad() { return s_->g; }
    const std::vector<S>& grad() const { return s_->g; }

    void zero_grad() {
        if (requires_grad()) std::fill(s_->g.begin(), s_->g.end(), S(0));
    }

    S item() const {
        if (numel() != 1) throw ValidationError("item() requires a 1-element tensor");
        return s_->v[0];
    }

    /// Identity check (same storage), not element equality.
    bool same_storage(const Tensor& o) const { return s_ == o.s_; }

private:
    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw ValidationError("zero tensor dimension");
            n *= d;
        }
        return n;
    }

    std::shared_ptr<Storage> s_;
};

template <typename S>
inline void check_finite(const std::vector<S>& v, const char* op) {
    for (S x : v)
        if (!std::isfinite(static_cast<double>(x)))
            throw NumericError(std::string(op) + " produced a non-finite value");
}

/// Reverse-mode tape. Ops append one node per recorded output; backward
/// seeds the root gradient with 1 and runs the closures in reverse creation
/// order. Nodes whose output gradient is identically zero are skipped, so a
/// branch weighted by zero contributes nothing at all to upstream buffers.
/// A tape is confined to one logical execution context.
template <typename S>
class Tape {
public:
    void record(const char* op, const Tensor<S>& out, std::function<void()> backward) {
        nodes_.push_back(Node{op, out, std::move(backward)});
    }

    void backward(Tensor<S>& root) {
        if (!root.requires_grad())
            throw ValidationError("backward root does not require gradients");
        if (root.numel() != 1) throw ValidationError("backward root must be scalar");
        root.grad()[0] = S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
            const auto& g = it->out.grad();
            const bool dead = std::all_of(g.begin(), g.end(), [](S x) { return x == S(0); });
            if (!dead) it->fn();
        }
    }

    std::size_t node_count() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    struct Node {
        const char* op;
        Tensor<S> out;
        std::function<void()> fn;
    };

    std::vector<Node> nodes_;
};

} // namespace cloudclass::ad
