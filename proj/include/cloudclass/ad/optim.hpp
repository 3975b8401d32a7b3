#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cloudclass/ad/tensor.hpp"

namespace cloudclass::ad {

/// A named, trainable tensor plus its Adam moment buffers. Names must be
/// unique within a model; they key the SOBW checkpoint entries.
template <typename S>
struct Parameter {
    std::string name;
    Tensor<S> value;
    std::vector<S> m1, m2; // first/second moments, sized on the first step

    Parameter() = default;
    Parameter(std::string n, Tensor<S> v) : name(std::move(n)), value(std::move(v)) {
        value.set_requires_grad(true);
    }
};

/// Adam with bias correction. One shared step counter; deterministic.
template <typename S>
class Adam {
public:
    explicit Adam(S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::span<Parameter<S>* const> params) {
        ++t_;
        const double bc1 = 1.0 - std::pow(static_cast<double>(beta1_), static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(static_cast<double>(beta2_), static_cast<double>(t_));
        for (Parameter<S>* p : params) {
            if (!p->value.requires_grad() || p->value.grad().size() != p->value.numel())
                throw ValidationError("adam: parameter '" + p->name + "' has no gradient");
            if (p->m1.empty()) {
                p->m1.assign(p->value.numel(), S(0));
                p->m2.assign(p->value.numel(), S(0));
            }
            auto& v = p->value.values();
            const auto& g = p->value.grad();
            for (std::size_t i = 0; i < v.size(); ++i) {
                if (!std::isfinite(static_cast<double>(g[i])))
                    throw NumericError("adam: non-finite gradient in '" + p->name + "'");
                p->m1[i] = beta1_ * p->m1[i] + (S(1) - beta1_) * g[i];
                p->m2[i] = beta2_ * p->m2[i] + (S(1) - beta2_) * g[i] * g[i];
                const double mhat = p->m1[i] / bc1;
                const double vhat = p->m2[i] / bc2;
                v[i] -= static_cast<S>(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    void set_lr(S lr) { lr_ = lr; }
    S lr() const { return lr_; }
    std::uint64_t step_count() const { return t_; }

private:
    S lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
};

} // namespace cloudclass::ad
