#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "cloudclass/core/checkpoint.hpp"
#include "cloudclass/models/layers.hpp"

namespace cloudclass::models {

template <typename S>
struct ForwardOut {
    ad::Tensor<S> class_logits;   // [B, C]
    ad::Tensor<S> mask_logits;    // [B, N, 2]; undefined for vanilla variants
    ad::Tensor<S> global_feature; // [B, G]
    ad::Tensor<S> penultimate;    // [B, head[1]]
};

/// The classification networks and their background-aware extensions. One
/// class covers all five variants so the encoder and head are literally the
/// same code (and the same parameter names) with or without the segmentation
/// branch.
template <typename S>
class Network {
public:
    Network(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        std::size_t global_width = 0;

        if (uses_pnpp_encoder(cfg_.variant)) {
            std::size_t feat_in = 0;
            for (std::size_t i = 0; i < cfg_.encoder.size(); ++i) {
                sa_.emplace_back("sa" + std::to_string(i + 1), cfg_.encoder[i], feat_in,
                                 init_seed);
                feat_in = cfg_.encoder[i].mlp.back();
            }
            global_width = feat_in;
        } else if (uses_dgcnn_encoder(cfg_.variant)) {
            std::size_t feat_in = 3, cat_width = 0;
            for (std::size_t i = 0; i < cfg_.edge.layers.size(); ++i) {
                edges_.emplace_back("edge" + std::to_string(i + 1), cfg_.edge.k, feat_in,
                                    std::vector<std::size_t>{cfg_.edge.layers[i]}, init_seed);
                feat_in = cfg_.edge.layers[i];
                cat_width += feat_in;
            }
            emb_ = std::make_unique<Linear<S>>("emb", cat_width, cfg_.edge.emb, init_seed);
            emb_bn_ = std::make_unique<BatchNorm<S>>("emb.bn", cfg_.edge.emb);
            edge_cat_width_ = cat_width;
            global_width = cfg_.edge.emb;
        } else {
            pointwise_ = std::make_unique<SharedMlp<S>>("pointnet", 3, cfg_.pointnet, init_seed);
            global_width = cfg_.pointnet.back();
        }

        fc1_ = std::make_unique<Linear<S>>("head.fc1", global_width, cfg_.head[0], init_seed);
        bn1_ = std::make_unique<BatchNorm<S>>("head.fc1.bn", cfg_.head[0]);
        fc2_ = std::make_unique<Linear<S>>("head.fc2", cfg_.head[0], cfg_.head[1], init_seed);
        bn2_ = std::make_unique<BatchNorm<S>>("head.fc2.bn", cfg_.head[1]);
        fc3_ = std::make_unique<Linear<S>>("head.fc3", cfg_.head[1], cfg_.head[2], init_seed);

        if (cfg_.variant == ModelVariant::kBgaPnpp) {
            const std::size_t f2 = cfg_.encoder[1].mlp.back();
            const std::size_t f1 = cfg_.encoder[0].mlp.back();
            fp_.emplace_back("fp1", cfg_.head[1] + f2, cfg_.seg.stages[0], init_seed, false);
            fp_.emplace_back("fp2", cfg_.seg.stages[0].back() + f1, cfg_.seg.stages[1], init_seed,
                             false);
            fp_.emplace_back("fp3", cfg_.seg.stages[1].back(), cfg_.seg.stages[2], init_seed,
                             true);
        } else if (cfg_.variant == ModelVariant::kBgaDgcnn) {
            std::vector<std::size_t> widths;
            for (const auto& stage : cfg_.seg.stages)
                widths.insert(widths.end(), stage.begin(), stage.end());
            seg_mlp_ = std::make_unique<SharedMlp<S>>("seg", edge_cat_width_ + cfg_.head[1],
                                                      widths, init_seed, true);
        }

        for (auto& sa : sa_) sa.collect(registry_);
        for (auto& e : edges_) e.collect(registry_);
        if (emb_) {
            emb_->collect(registry_);
            emb_bn_->collect(registry_);
        }
        if (pointwise_) pointwise_->collect(registry_);
        fc1_->collect(registry_);
        bn1_->collect(registry_);
        fc2_->collect(registry_);
        bn2_->collect(registry_);
        fc3_->collect(registry_);
        for (auto& fp : fp_) fp.collect(registry_);
        if (seg_mlp_) seg_mlp_->collect(registry_);
    }

    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    const ModelConfig& config() const { return cfg_; }

    ForwardOut<S> forward(ad::Tape<S>* tape, const ad::Tensor<S>& points,
                          const ForwardContext<S>& ctx) {
        if (points.rank() != 3 || points.dim(1) != cfg_.num_points || points.dim(2) != 3)
            throw ValidationError("forward: expected [B," + std::to_string(cfg_.num_points) +
                                  ",3] points");
        const std::size_t bsz = points.dim(0);

        ForwardOut<S> out;
        std::vector<typename SetAbstraction<S>::Out> levels; // pn++ skip connections
        ad::Tensor<S> edge_cat;                              // dgcnn per-point features

        if (uses_pnpp_encoder(cfg_.variant)) {
            ad::Tensor<S> pts = points, feats;
            for (auto& sa : sa_) {
                auto level = sa.forward(tape, pts, feats, ctx);
                pts = level.points;
                feats = level.features;
                levels.push_back(level);
            }
            out.global_feature =
                ad::reshape(tape, levels.back().features, {bsz, sa_.back().mlp.out_width()});
        } else if (uses_dgcnn_encoder(cfg_.variant)) {
            ad::Tensor<S> feats = points;
            std::vector<ad::Tensor<S>> outs;
            for (auto& e : edges_) {
                feats = e.forward(tape, feats, ctx);
                outs.push_back(feats);
            }
            edge_cat = outs[0];
            for (std::size_t i = 1; i < outs.size(); ++i)
                edge_cat = ad::concat(tape, edge_cat, outs[i], 2);
            auto emb = emb_->forward(
                tape, ad::reshape(tape, edge_cat, {bsz * cfg_.num_points, edge_cat_width_}));
            emb = gated_relu(tape, emb_bn_->forward(tape, emb, ctx), ctx, "emb.relu");
            auto per_point = ad::reshape(tape, emb, {bsz, cfg_.num_points, cfg_.edge.emb});
            out.global_feature = pooled_max(tape, per_point, ctx, "emb.pool");
        } else {
            auto flat = pointwise_->forward(
                tape, ad::reshape(tape, points, {bsz * cfg_.num_points, 3}), ctx);
            auto per_point =
                ad::reshape(tape, flat, {bsz, cfg_.num_points, pointwise_->out_width()});
            out.global_feature = pooled_max(tape, per_point, ctx, "pointnet.pool");
        }

        auto x = fc1_->forward(tape, out.global_feature);
        x = gated_relu(tape, bn1_->forward(tape, x, ctx), ctx, "head.fc1.relu");
        x = ad::dropout(tape, x, cfg_.dropout_p, detail::layer_seed(ctx.dropout_seed, "head.drop1"),
                        ctx.training);
        x = fc2_->forward(tape, x);
        x = gated_relu(tape, bn2_->forward(tape, x, ctx), ctx, "head.fc2.relu");
        x = ad::dropout(tape, x, cfg_.dropout_p, detail::layer_seed(ctx.dropout_seed, "head.drop2"),
                        ctx.training);
        out.penultimate = x;
        if (ctx.penultimate_override) {
            if (ctx.penultimate_override->shape() != x.shape())
                throw ValidationError("penultimate override shape mismatch");
            out.penultimate = *ctx.penultimate_override;
        }
        out.class_logits = fc3_->forward(tape, out.penultimate);

        if (cfg_.variant == ModelVariant::kBgaPnpp) {
            auto coarse = ad::reshape(tape, out.penultimate, {bsz, 1, cfg_.head[1]});
            auto s2 = fp_[0].forward(tape, levels[1].points, levels[2].points,
                                     levels[1].features, coarse, ctx);
            auto s1 = fp_[1].forward(tape, levels[0].points, levels[1].points,
                                     levels[0].features, s2, ctx);
            out.mask_logits =
                fp_[2].forward(tape, points, levels[0].points, ad::Tensor<S>{}, s1, ctx);
        } else if (cfg_.variant == ModelVariant::kBgaDgcnn) {
            auto broadcast = ad::repeat_set(tape, out.penultimate, cfg_.num_points);
            auto seg_in = ad::concat(tape, edge_cat, broadcast, 2);
            auto flat = seg_mlp_->forward(
                tape,
                ad::reshape(tape, seg_in, {bsz * cfg_.num_points, edge_cat_width_ + cfg_.head[1]}),
                ctx);
            out.mask_logits = ad::reshape(tape, flat, {bsz, cfg_.num_points, 2});
        }
        return out;
    }

    std::vector<ad::Parameter<S>*>& parameters() { return registry_.params; }
    const std::vector<std::pair<std::string, std::vector<S>*>>& buffers() const {
        return registry_.buffers;
    }

    void zero_grad() {
        for (auto* p : registry_.params) p->value.zero_grad();
    }

    std::size_t parameter_count() const {
        std::size_t total = 0;
        for (const auto* p : registry_.params) total += p->value.numel();
        return total;
    }

    /// Checkpoint = SOBW tensor file + config JSON sidecar (same stem).
    void save(const std::filesystem::path& path) const {
        std::vector<NamedArray> arrays;
        for (const auto* p : registry_.params) {
            NamedArray a;
            a.name = p->name;
            for (std::size_t d : p->value.shape()) a.shape.push_back(static_cast<std::uint32_t>(d));
            a.values.reserve(p->value.numel());
            for (S v : p->value.values()) a.values.push_back(static_cast<float>(v));
            arrays.push_back(std::move(a));
        }
        for (const auto& [name, buf] : registry_.buffers) {
            NamedArray a;
            a.name = name;
            a.shape = {static_cast<std::uint32_t>(buf->size())};
            a.values.reserve(buf->size());
            for (S v : *buf) a.values.push_back(static_cast<float>(v));
            arrays.push_back(std::move(a));
        }
        write_checkpoint(arrays, path);
        save_config(cfg_, sidecar_path(path));
    }

    void load_weights(const std::filesystem::path& path) {
        const auto arrays = read_checkpoint(path);
        std::map<std::string, const NamedArray*> by_name;
        for (const auto& a : arrays) by_name[a.name] = &a;
        std::size_t consumed = 0;

        const auto fetch = [&](const std::string& name, std::size_t numel) {
            const auto it = by_name.find(name);
            if (it == by_name.end())
                throw ValidationError("checkpoint is missing parameter '" + name + "'");
            if (it->second->values.size() != numel)
                throw ValidationError("checkpoint parameter '" + name + "' has wrong size");
            ++consumed;
            return it->second;
        };
        for (auto* p : registry_.params) {
            const auto* a = fetch(p->name, p->value.numel());
            for (std::size_t i = 0; i < a->values.size(); ++i)
                p->value.values()[i] = static_cast<S>(a->values[i]);
        }
        for (auto& [name, buf] : registry_.buffers) {
            const auto* a = fetch(name, buf->size());
            for (std::size_t i = 0; i < a->values.size(); ++i)
                (*buf)[i] = static_cast<S>(a->values[i]);
        }
        if (consumed != arrays.size())
            throw ValidationError("checkpoint has " + std::to_string(arrays.size() - consumed) +
                                  " arrays not used by this model configuration");
    }

    static std::filesystem::path sidecar_path(std::filesystem::path ckpt) {
        ckpt.replace_extension(".json");
        return ckpt;
    }

    static std::unique_ptr<Network> load(const std::filesystem::path& path) {
        auto net = std::make_unique<Network>(load_config(sidecar_path(path)), 0);
        net->load_weights(path);
        return net;
    }

private:
    ModelConfig cfg_;
    std::vector<SetAbstraction<S>> sa_;
    std::vector<EdgeConv<S>> edges_;
    std::unique_ptr<Linear<S>> emb_;
    std::unique_ptr<BatchNorm<S>> emb_bn_;
    std::size_t edge_cat_width_ = 0;
    std::unique_ptr<SharedMlp<S>> pointwise_;
    std::unique_ptr<Linear<S>> fc1_, fc2_, fc3_;
    std::unique_ptr<BatchNorm<S>> bn1_, bn2_;
    std::vector<FeaturePropagation<S>> fp_;
    std::unique_ptr<SharedMlp<S>> seg_mlp_;
    ParamRegistry<S> registry_;
};

template <typename S>
struct JointLoss {
    ad::Tensor<S> total, classification, segmentation;
};

/// L_total = L_class + lambda * L_seg, both mean cross entropies. masks are
/// the flattened per-point foreground labels (B*N entries of 0/1).
template <typename S>
JointLoss<S> joint_loss(ad::Tape<S>* tape, const ad::Tensor<S>& class_logits,
                        const std::vector<std::uint32_t>& labels,
                        const ad::Tensor<S>& mask_logits,
                        const std::vector<std::uint32_t>& masks, S lambda) {
    if (lambda < S(0)) throw ValidationError("joint_loss: lambda must be >= 0");
    if (!mask_logits.defined() || mask_logits.rank() != 3 || mask_logits.dim(2) != 2)
        throw ValidationError("joint_loss: mask logits must be [B,N,2]");

    JointLoss<S> loss;
    loss.classification = ad::softmax_cross_entropy(tape, class_logits, labels);
    const std::size_t bsz = mask_logits.dim(0), n = mask_logits.dim(1);
    auto flat = ad::reshape(tape, mask_logits, {bsz * n, 2});
    loss.segmentation = ad::softmax_cross_entropy(tape, flat, masks);
    loss.total = ad::add(tape, loss.classification, ad::scale(tape, loss.segmentation, lambda));
    return loss;
}

} // namespace cloudclass::models
