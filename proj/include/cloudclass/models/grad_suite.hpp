#pragma once

#include <map>
#include <string>
#include <vector>

#include "cloudclass/ad/grad_check.hpp"
#include "cloudclass/ad/ops.hpp"
#include "cloudclass/models/network.hpp"

// The standard gradient-fidelity sweep: every differentiable primitive plus
// the reduced-config BGA forward passes, checked against central differences
// in double precision. Shared by the `cloudclass gradcheck` command and the
// acceptance suite.
namespace cloudclass::models {

struct GradSuiteEntry {
    std::string name;
    ad::GradCheckReport report;
};

namespace detail {

inline ad::Tensor<double> rand_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                                      double lo = -1, double hi = 1) {
    Rng rng(seed);
    auto t = ad::Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

/// Linear projection to a scalar with seeded weights; adds no kinks of its
/// own.
inline ad::Tensor<double> project(ad::Tape<double>* tape, const ad::Tensor<double>& x,
                                  std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> w(x.numel());
    for (auto& v : w) v = rng.uniform(-1, 1);
    const auto flat = ad::reshape(tape, x, {1, x.numel()});
    const auto proj = ad::Tensor<double>::from({x.numel(), 1}, std::move(w));
    return ad::reshape(tape, ad::matmul(tape, flat, proj), {1});
}

} // namespace detail

inline std::vector<GradSuiteEntry> primitive_grad_checks() {
    using ad::Tape;
    using ad::Tensor;
    namespace d = detail;
    std::vector<GradSuiteEntry> out;
    const auto add = [&](const std::string& name, auto&& fn) { out.push_back({name, fn()}); };

    add("matmul", [] {
        auto a = d::rand_tensor({3, 4}, 10);
        auto b = d::rand_tensor({4, 2}, 11);
        a.set_requires_grad(true);
        b.set_requires_grad(true);
        return ad::grad_check(
            [&](Tape<double>* t) { return d::project(t, ad::matmul(t, a, b), 1); },
            {{"a", a}, {"b", b}});
    });
    add("bias_add", [] {
        auto x = d::rand_tensor({3, 4}, 12);
        auto b = d::rand_tensor({4}, 13);
        x.set_requires_grad(true);
        b.set_requires_grad(true);
        return ad::grad_check(
            [&](Tape<double>* t) { return d::project(t, ad::bias_add(t, x, b), 2); },
            {{"x", x}, {"b", b}});
    });
    add("relu", [] {
        auto x = d::rand_tensor({24}, 14);
        for (auto& v : x.values()) v += v >= 0 ? 0.5 : -0.5; // clear the kink at 0
        x.set_requires_grad(true);
        return ad::grad_check([&](Tape<double>* t) { return d::project(t, ad::relu(t, x), 3); },
                              {{"x", x}});
    });
    add("concat", [] {
        auto a = d::rand_tensor({2, 2, 3}, 15);
        auto b = d::rand_tensor({2, 2, 2}, 16);
        a.set_requires_grad(true);
        b.set_requires_grad(true);
        return ad::grad_check(
            [&](Tape<double>* t) { return d::project(t, ad::concat(t, a, b, 2), 4); },
            {{"a", a}, {"b", b}});
    });
    add("dropout", [] {
        auto x = d::rand_tensor({40}, 17);
        x.set_requires_grad(true);
        return ad::grad_check(
            [&](Tape<double>* t) {
                return d::project(t, ad::dropout(t, x, 0.4, 7, true), 5);
            },
            {{"x", x}});
    });
    add("batch_norm_train", [] {
        auto x = d::rand_tensor({6, 3}, 18);
        auto gamma = d::rand_tensor({3}, 19, 0.5, 1.5);
        auto beta = d::rand_tensor({3}, 20);
        x.set_requires_grad(true);
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
        return ad::grad_check(
            [&](Tape<double>* t) {
                std::vector<double> rm(3, 0), rv(3, 1);
                return d::project(t, ad::batch_norm(t, x, gamma, beta, rm, rv, 0.9, true, false),
                                  6);
            },
            {{"x", x}, {"gamma", gamma}, {"beta", beta}});
    });
    add("batch_norm_eval", [] {
        auto x = d::rand_tensor({4, 3}, 21);
        auto gamma = d::rand_tensor({3}, 22, 0.5, 1.5);
        auto beta = d::rand_tensor({3}, 23);
        x.set_requires_grad(true);
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
        return ad::grad_check(
            [&](Tape<double>* t) {
                std::vector<double> rm{0.1, -0.2, 0.3}, rv{1.1, 0.7, 1.4};
                return d::project(t, ad::batch_norm(t, x, gamma, beta, rm, rv, 0.9, false), 7);
            },
            {{"x", x}, {"gamma", gamma}, {"beta", beta}});
    });
    add("max_reduce_set", [] {
        auto x = d::rand_tensor({2, 5, 3}, 24);
        x.set_requires_grad(true);
        return ad::grad_check(
            [&](Tape<double>* t) { return d::project(t, ad::max_reduce_set(t, x).values, 8); },
            {{"x", x}});
    });
    add("softmax_cross_entropy", [] {
        auto logits = d::rand_tensor({4, 6}, 25);
        logits.set_requires_grad(true);
        return ad::grad_check(
            [&](Tape<double>* t) {
                return ad::softmax_cross_entropy(t, logits, {0, 5, 2, 2});
            },
            {{"logits", logits}});
    });
    add("gather_set", [] {
        auto x = d::rand_tensor({2, 4, 3}, 26);
        x.set_requires_grad(true);
        const std::vector<std::uint32_t> idx{0, 2, 2, 1, 3, 3};
        return ad::grad_check(
            [&](Tape<double>* t) { return d::project(t, ad::gather_set(t, x, idx, 3), 9); },
            {{"x", x}});
    });
    add("interpolate", [] {
        auto sparse = d::rand_tensor({1, 4, 2}, 27);
        sparse.set_requires_grad(true);
        const std::vector<std::uint32_t> idx{0, 1, 2, 1, 2, 3};
        const std::vector<double> w{0.5, 0.3, 0.2, 0.1, 0.6, 0.3};
        return ad::grad_check(
            [&](Tape<double>* t) {
                return d::project(t, ad::interpolate(t, sparse, idx, w, 2), 10);
            },
            {{"sparse", sparse}});
    });
    add("repeat_set", [] {
        auto x = d::rand_tensor({2, 3}, 28);
        x.set_requires_grad(true);
        return ad::grad_check(
            [&](Tape<double>* t) { return d::project(t, ad::repeat_set(t, x, 4), 11); },
            {{"x", x}});
    });
    add("reshape_add_sub_scale", [] {
        auto a = d::rand_tensor({5}, 29);
        auto b = d::rand_tensor({5}, 30);
        a.set_requires_grad(true);
        b.set_requires_grad(true);
        return ad::grad_check(
            [&](Tape<double>* t) {
                auto s = ad::add(t, ad::scale(t, a, 2.5), ad::sub(t, b, a));
                return d::project(t, ad::reshape(t, s, {5, 1}), 12);
            },
            {{"a", a}, {"b", b}});
    });
    return out;
}

/// Gradient check of a reduced-config BGA forward pass. The fixture freezes
/// data-dependent selections (kNN graphs, pool argmax, relu active sets) at
/// the reference point so the finite differences probe the same smooth piece
/// the reverse pass differentiates; the seeds below were chosen to keep
/// batch statistics away from near-zero variances.
inline GradSuiteEntry model_grad_check(ModelVariant variant) {
    const std::uint64_t net_seed = variant == ModelVariant::kBgaPnpp ? 1 : 5;
    const std::uint64_t data_seed = 101;

    Network<double> net(mini_config(variant, 4), net_seed);
    Rng rng(data_seed);
    auto points = ad::Tensor<double>::zeros({2, 64, 3});
    for (auto& v : points.values()) v = rng.uniform(-1, 1);
    const std::vector<std::uint32_t> labels{static_cast<std::uint32_t>(rng.below(4)),
                                            static_cast<std::uint32_t>(rng.below(4))};
    std::vector<std::uint32_t> masks(2 * 64);
    for (auto& m : masks) m = rng.uniform() < 0.5 ? 1 : 0;

    std::vector<std::pair<std::string, ad::Tensor<double>>> inputs;
    for (auto* p : net.parameters()) inputs.emplace_back(p->name, p->value);

    std::map<std::string, std::vector<std::uint32_t>> selections;
    const auto loss_fn = [&](ad::Tape<double>* tape) {
        ForwardContext<double> ctx;
        ctx.training = true;
        ctx.dropout_seed = 5;
        ctx.update_running_stats = false;
        ctx.selection_cache = &selections;
        auto out = net.forward(tape, points, ctx);
        return joint_loss(tape, out.class_logits, labels, out.mask_logits, masks, 0.5).total;
    };
    ad::GradCheckOptions opt;
    opt.max_samples_per_tensor = 4;
    return {std::string(model_variant_name(variant)) + "_forward",
            ad::grad_check(loss_fn, inputs, opt)};
}

inline std::vector<GradSuiteEntry> full_grad_suite() {
    auto out = primitive_grad_checks();
    out.push_back(model_grad_check(ModelVariant::kBgaPnpp));
    out.push_back(model_grad_check(ModelVariant::kBgaDgcnn));
    return out;
}

} // namespace cloudclass::models
