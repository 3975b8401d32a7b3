#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cloudclass/ad/ops.hpp"
#include "cloudclass/ad/optim.hpp"
#include "cloudclass/core/rng.hpp"
#include "cloudclass/geom/kernels.hpp"
#include "cloudclass/models/config.hpp"

namespace cloudclass::models {

/// Per-forward state. Dropout masks derive from (dropout_seed, layer name),
/// so two variants sharing a layer draw the same mask regardless of how many
/// other dropout layers run. update_running_stats = false makes the forward
/// a pure function (used by the gradient checker).
///
/// selection_cache, when set, freezes every data-dependent discrete choice
/// across calls: edge-conv kNN tables and max-pool argmax patterns are
/// stored under their layer keys on the first forward and reused afterward.
/// Reverse mode treats those selections as constants (it differentiates the
/// locally smooth piece), so finite-difference probes must stay on the same
/// piece for the comparison to be meaningful.
template <typename S>
struct ForwardContext {
    bool training = false;
    std::uint64_t dropout_seed = 0;
    bool update_running_stats = true;
    const ad::Tensor<S>* penultimate_override = nullptr; // wiring-test hook
    std::map<std::string, std::vector<std::uint32_t>>* selection_cache = nullptr;
};

namespace detail {

inline std::uint64_t layer_seed(std::uint64_t base, std::string_view name) {
    Hash64 h;
    h.absorb(base).absorb(name);
    return h.digest();
}

/// Fan-in uniform init, one independent stream per parameter name: building
/// the same config twice (or two variants sharing a prefix) yields identical
/// weights.
template <typename S>
ad::Tensor<S> init_weight(std::vector<std::size_t> shape, std::size_t fan_in,
                          std::uint64_t init_seed, const std::string& name) {
    Rng rng(layer_seed(init_seed, name));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    auto t = ad::Tensor<S>::zeros(std::move(shape));
    for (auto& v : t.values()) v = static_cast<S>(rng.uniform(-bound, bound));
    return t;
}

} // namespace detail

/// Max over the set axis, honoring a frozen selection pattern when the
/// context carries one.
template <typename S>
ad::Tensor<S> pooled_max(ad::Tape<S>* tape, const ad::Tensor<S>& x, const ForwardContext<S>& ctx,
                         const std::string& key) {
    if (ctx.selection_cache) {
        const auto it = ctx.selection_cache->find(key);
        if (it != ctx.selection_cache->end())
            return ad::max_reduce_set_fixed(tape, x, it->second);
        auto out = ad::max_reduce_set(tape, x);
        (*ctx.selection_cache)[key] = out.argmax;
        return out.values;
    }
    return ad::max_reduce_set(tape, x).values;
}

/// relu honoring a frozen active set when the context carries one.
template <typename S>
ad::Tensor<S> gated_relu(ad::Tape<S>* tape, const ad::Tensor<S>& x, const ForwardContext<S>& ctx,
                         const std::string& key) {
    if (ctx.selection_cache) {
        const auto it = ctx.selection_cache->find(key);
        if (it != ctx.selection_cache->end()) return ad::relu_fixed(tape, x, it->second);
        std::vector<std::uint32_t> active(x.numel());
        for (std::size_t i = 0; i < x.numel(); ++i) active[i] = x.values()[i] > S(0) ? 1 : 0;
        (*ctx.selection_cache)[key] = std::move(active);
    }
    return ad::relu(tape, x);
}

/// Registry of everything a checkpoint stores: trainable parameters plus
/// named non-trainable buffers (batch-norm running stats).
template <typename S>
struct ParamRegistry {
    std::vector<ad::Parameter<S>*> params;
    std::vector<std::pair<std::string, std::vector<S>*>> buffers;
};

template <typename S>
struct Linear {
    ad::Parameter<S> weight; // [in, out]
    ad::Parameter<S> bias;   // [out]

    Linear() = default;
    Linear(const std::string& name, std::size_t in, std::size_t out, std::uint64_t init_seed)
        : weight(name + ".weight", detail::init_weight<S>({in, out}, in, init_seed, name + ".weight")),
          bias(name + ".bias", ad::Tensor<S>::zeros({out})) {}

    ad::Tensor<S> forward(ad::Tape<S>* tape, const ad::Tensor<S>& x) const {
        return ad::bias_add(tape, ad::matmul(tape, x, weight.value), bias.value);
    }

    void collect(ParamRegistry<S>& reg) {
        reg.params.push_back(&weight);
        reg.params.push_back(&bias);
    }
};

template <typename S>
struct BatchNorm {
    std::string name;
    ad::Parameter<S> gamma, beta;
    std::vector<S> running_mean, running_var;
    S momentum = S(0.9);

    BatchNorm() = default;
    BatchNorm(const std::string& n, std::size_t f)
        : name(n), gamma(n + ".gamma", ad::Tensor<S>::from({f}, std::vector<S>(f, S(1)))),
          beta(n + ".beta", ad::Tensor<S>::zeros({f})), running_mean(f, S(0)),
          running_var(f, S(1)) {}

    ad::Tensor<S> forward(ad::Tape<S>* tape, const ad::Tensor<S>& x,
                          const ForwardContext<S>& ctx) {
        return ad::batch_norm(tape, x, gamma.value, beta.value, running_mean, running_var,
                              momentum, ctx.training, ctx.update_running_stats);
    }

    void collect(ParamRegistry<S>& reg) {
        reg.params.push_back(&gamma);
        reg.params.push_back(&beta);
        reg.buffers.emplace_back(name + ".running_mean", &running_mean);
        reg.buffers.emplace_back(name + ".running_var", &running_var);
    }
};

/// linear + batch_norm + relu per width, applied row-wise to [R, F] input.
/// With last_plain the final layer skips the norm and activation (logits).
template <typename S>
struct SharedMlp {
    std::vector<Linear<S>> linears;
    std::vector<BatchNorm<S>> bns;
    std::vector<std::string> stage_names;
    bool last_plain = false;

    SharedMlp() = default;
    SharedMlp(const std::string& name, std::size_t in, const std::vector<std::size_t>& widths,
              std::uint64_t init_seed, bool last_plain_ = false)
        : last_plain(last_plain_) {
        std::size_t prev = in;
        for (std::size_t i = 0; i < widths.size(); ++i) {
            const std::string stage = name + ".mlp" + std::to_string(i);
            stage_names.push_back(stage);
            linears.emplace_back(stage, prev, widths[i], init_seed);
            const bool plain = last_plain && i + 1 == widths.size();
            if (!plain) bns.emplace_back(stage + ".bn", widths[i]);
            prev = widths[i];
        }
    }

    std::size_t out_width() const { return linears.back().bias.value.numel(); }

    ad::Tensor<S> forward(ad::Tape<S>* tape, ad::Tensor<S> x, const ForwardContext<S>& ctx) {
        for (std::size_t i = 0; i < linears.size(); ++i) {
            x = linears[i].forward(tape, x);
            if (last_plain && i + 1 == linears.size()) break;
            x = bns[i].forward(tape, x, ctx);
            x = gated_relu(tape, x, ctx, stage_names[i] + ".relu");
        }
        return x;
    }

    void collect(ParamRegistry<S>& reg) {
        for (std::size_t i = 0; i < linears.size(); ++i) {
            linears[i].collect(reg);
            if (i < bns.size()) bns[i].collect(reg);
        }
    }
};

namespace detail {

template <typename S>
std::vector<Vec3<S>> batch_coords(const ad::Tensor<S>& pts, std::size_t b) {
    const std::size_t n = pts.dim(1);
    std::vector<Vec3<S>> out(n);
    const S* v = pts.values().data() + b * n * 3;
    for (std::size_t i = 0; i < n; ++i) out[i] = {v[i * 3], v[i * 3 + 1], v[i * 3 + 2]};
    return out;
}

} // namespace detail

/// One PointNet++ set-abstraction level. Points are data (never carry
/// gradients); features flow through the differentiable gather.
template <typename S>
struct SetAbstraction {
    std::string name;
    SALevelConfig cfg;
    SharedMlp<S> mlp;

    SetAbstraction() = default;
    SetAbstraction(const std::string& name_, const SALevelConfig& level, std::size_t feat_in,
                   std::uint64_t init_seed)
        : name(name_), cfg(level), mlp(name_, 3 + feat_in, level.mlp, init_seed) {}

    struct Out {
        ad::Tensor<S> points;   // [B, M, 3]
        ad::Tensor<S> features; // [B, M, F']
    };

    Out forward(ad::Tape<S>* tape, const ad::Tensor<S>& points, const ad::Tensor<S>& features,
                const ForwardContext<S>& ctx) {
        const std::size_t bsz = points.dim(0), n = points.dim(1);
        const bool global = cfg.num_centroids == 1;
        const std::size_t m = global ? 1 : cfg.num_centroids;
        const std::size_t k = global ? n : cfg.k;

        ad::Tensor<S> centers;
        ad::Tensor<S> grouped_rel; // [B, M, K, 3], constant
        std::vector<std::uint32_t> group_idx;
        group_idx.reserve(bsz * m * k);

        if (global) {
            centers = ad::Tensor<S>::zeros({bsz, 1, 3});
            grouped_rel = ad::reshape<S>(nullptr, points, {bsz, 1, n, 3});
            for (std::size_t b = 0; b < bsz; ++b)
                for (std::size_t i = 0; i < n; ++i)
                    group_idx.push_back(static_cast<std::uint32_t>(i));
        } else {
            centers = ad::Tensor<S>::zeros({bsz, m, 3});
            grouped_rel = ad::Tensor<S>::zeros({bsz, m, k, 3});
            for (std::size_t b = 0; b < bsz; ++b) {
                const auto coords = detail::batch_coords(points, b);
                const auto fps_idx = geom::fps<S>(coords, m);
                std::vector<Vec3<S>> center_pts(m);
                for (std::size_t i = 0; i < m; ++i) {
                    center_pts[i] = coords[fps_idx[i]];
                    centers.values()[(b * m + i) * 3] = center_pts[i].x;
                    centers.values()[(b * m + i) * 3 + 1] = center_pts[i].y;
                    centers.values()[(b * m + i) * 3 + 2] = center_pts[i].z;
                }
                const auto table = geom::ball_query<S>(coords, center_pts,
                                                       static_cast<S>(cfg.radius), k);
                group_idx.insert(group_idx.end(), table.indices.begin(), table.indices.end());
                const auto rel = geom::gather_group<S>(
                    std::span<const S>(points.values().data() + b * n * 3, n * 3), n, 3, table,
                    center_pts, true);
                std::copy(rel.begin(), rel.end(), grouped_rel.values().begin() + b * m * k * 3);
            }
        }

        ad::Tensor<S> block = grouped_rel;
        if (features.defined()) {
            auto gathered = ad::gather_set(tape, features, group_idx, m * k);
            gathered = ad::reshape(tape, gathered, {bsz, m, k, features.dim(2)});
            block = ad::concat(tape, grouped_rel, gathered, 3);
        }

        const std::size_t in_f = block.dim(3);
        auto flat = ad::reshape(tape, block, {bsz * m * k, in_f});
        flat = mlp.forward(tape, flat, ctx);
        const std::size_t out_f = mlp.out_width();
        auto pooled = pooled_max(tape, ad::reshape(tape, flat, {bsz * m, k, out_f}), ctx,
                                 name + ".pool");
        return {centers, ad::reshape(tape, pooled, {bsz, m, out_f})};
    }

    void collect(ParamRegistry<S>& reg) { mlp.collect(reg); }
};

/// PointNet feature propagation: inverse-distance-squared interpolation of
/// sparse features onto dense points, concatenated with the dense skip
/// features, then a shared MLP.
template <typename S>
struct FeaturePropagation {
    SharedMlp<S> mlp;

    FeaturePropagation() = default;
    FeaturePropagation(const std::string& name, std::size_t in,
                       const std::vector<std::size_t>& widths, std::uint64_t init_seed,
                       bool last_plain = false)
        : mlp(name, in, widths, init_seed, last_plain) {}

    ad::Tensor<S> forward(ad::Tape<S>* tape, const ad::Tensor<S>& dense_pts,
                          const ad::Tensor<S>& sparse_pts, const ad::Tensor<S>& dense_feats,
                          const ad::Tensor<S>& sparse_feats, const ForwardContext<S>& ctx) {
        const std::size_t bsz = dense_pts.dim(0), d = dense_pts.dim(1);

        std::vector<std::uint32_t> idx;
        std::vector<S> weights;
        idx.reserve(bsz * d * 3);
        weights.reserve(bsz * d * 3);
        for (std::size_t b = 0; b < bsz; ++b) {
            const auto dense = detail::batch_coords(dense_pts, b);
            const auto sparse = detail::batch_coords(sparse_pts, b);
            const auto [table, w] = geom::three_nn_weights<S>(sparse, dense);
            idx.insert(idx.end(), table.indices.begin(), table.indices.end());
            for (double wi : w) weights.push_back(static_cast<S>(wi));
        }

        auto x = ad::interpolate(tape, sparse_feats, idx, weights, d);
        if (dense_feats.defined()) x = ad::concat(tape, x, dense_feats, 2);
        const std::size_t in_f = x.dim(2);
        auto flat = mlp.forward(tape, ad::reshape(tape, x, {bsz * d, in_f}), ctx);
        return ad::reshape(tape, flat, {bsz, d, mlp.out_width()});
    }

    void collect(ParamRegistry<S>& reg) { mlp.collect(reg); }
};

/// One EdgeConv layer: kNN graph in the current feature space (self
/// excluded, recomputed every layer), edge features concat(x_i, x_j - x_i),
/// shared MLP, max over the k neighbors.
template <typename S>
struct EdgeConv {
    std::string name;
    std::size_t k = 0;
    SharedMlp<S> mlp;

    EdgeConv() = default;
    EdgeConv(const std::string& name_, std::size_t k_, std::size_t feat_in,
             const std::vector<std::size_t>& widths, std::uint64_t init_seed)
        : name(name_), k(k_), mlp(name_, 2 * feat_in, widths, init_seed) {}

    ad::Tensor<S> forward(ad::Tape<S>* tape, const ad::Tensor<S>& feats,
                          const ForwardContext<S>& ctx) {
        const std::size_t bsz = feats.dim(0), n = feats.dim(1), f = feats.dim(2);
        if (k >= n) throw ValidationError("edgeconv: k must be below the point count");

        std::vector<std::uint32_t> idx;
        if (ctx.selection_cache && ctx.selection_cache->contains(name + ".knn")) {
            idx = ctx.selection_cache->at(name + ".knn");
            if (idx.size() != bsz * n * k)
                throw ValidationError("edgeconv: cached graph does not match this input");
        } else {
            idx.reserve(bsz * n * k);
            for (std::size_t b = 0; b < bsz; ++b) {
                const std::span<const S> rows(feats.values().data() + b * n * f, n * f);
                const auto table = geom::knn<S>(rows, n, f, rows, n, k, /*exclude_self=*/true);
                idx.insert(idx.end(), table.indices.begin(), table.indices.end());
            }
            if (ctx.selection_cache) (*ctx.selection_cache)[name + ".knn"] = idx;
        }

        auto xj = ad::reshape(tape, ad::gather_set(tape, feats, idx, n * k), {bsz, n, k, f});
        auto xi = ad::repeat_set(tape, ad::reshape(tape, feats, {bsz * n, f}), k);
        xi = ad::reshape(tape, xi, {bsz, n, k, f});
        auto edge = ad::concat(tape, xi, ad::sub(tape, xj, xi), 3);

        auto flat = mlp.forward(tape, ad::reshape(tape, edge, {bsz * n * k, 2 * f}), ctx);
        const std::size_t out_f = mlp.out_width();
        auto pooled = pooled_max(tape, ad::reshape(tape, flat, {bsz * n, k, out_f}), ctx,
                                 name + ".pool");
        return ad::reshape(tape, pooled, {bsz, n, out_f});
    }

    void collect(ParamRegistry<S>& reg) { mlp.collect(reg); }
};

} // namespace cloudclass::models
