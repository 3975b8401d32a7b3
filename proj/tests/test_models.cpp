#include <catch_amalgamated.hpp>

#include <cmath>

#include "cloudclass/ad/grad_check.hpp"
#include "cloudclass/models/network.hpp"

#include "helpers.hpp"

using namespace cloudclass;
using namespace cloudclass::models;
using ad::Tensor;

namespace {

template <typename S>
Tensor<S> random_batch(std::size_t bsz, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    auto t = Tensor<S>::zeros({bsz, n, 3});
    for (auto& v : t.values()) v = static_cast<S>(rng.uniform(-1, 1));
    return t;
}

std::vector<std::uint32_t> random_labels(std::size_t bsz, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint32_t> out(bsz);
    for (auto& v : out) v = static_cast<std::uint32_t>(rng.below(c));
    return out;
}

std::vector<std::uint32_t> random_masks(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::uint32_t> out(count);
    for (auto& v : out) v = rng.uniform() < 0.5 ? 1 : 0;
    return out;
}

} // namespace

TEST_CASE("config JSON round trip preserves every field") {
    for (auto variant : {ModelVariant::kBgaPnpp, ModelVariant::kBgaDgcnn,
                         ModelVariant::kPnppVanilla, ModelVariant::kPointNetVanilla,
                         ModelVariant::kDgcnnVanilla}) {
        const auto cfg = desk_config(variant, 7);
        CHECK(config_from_json(to_json(cfg)) == cfg);
    }
}

TEST_CASE("config validation rejects malformed architectures") {
    auto cfg = desk_config(ModelVariant::kBgaPnpp, 4);
    cfg.head = {128, 64};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    cfg = desk_config(ModelVariant::kBgaPnpp, 4);
    cfg.encoder[2].num_centroids = 4; // final level must be global
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    cfg = desk_config(ModelVariant::kBgaPnpp, 4);
    cfg.seg.stages[2] = {32, 3}; // mask logits must have 2 channels
    CHECK_THROWS_AS(cfg.validate(), ValidationError);

    cfg = desk_config(ModelVariant::kBgaPnpp, 4);
    cfg.encoder[1].num_centroids = 64; // not decreasing
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("bga forward meets the shape contract") {
    const auto cfg = mini_config(ModelVariant::kBgaPnpp, 15);
    Network<float> net(cfg, 1);
    const auto points = random_batch<float>(2, cfg.num_points, 3);
    ForwardContext<float> ctx;
    const auto out = net.forward(nullptr, points, ctx);
    CHECK(out.class_logits.shape() == std::vector<std::size_t>{2, 15});
    CHECK(out.mask_logits.shape() == std::vector<std::size_t>{2, cfg.num_points, 2});
    CHECK(out.penultimate.shape() == std::vector<std::size_t>{2, cfg.head[1]});
    CHECK(out.global_feature.shape() ==
          std::vector<std::size_t>{2, cfg.encoder.back().mlp.back()});
}

TEST_CASE("every variant produces class logits; only BGA produces masks") {
    const auto points = random_batch<float>(2, 64, 4);
    for (auto variant : {ModelVariant::kBgaPnpp, ModelVariant::kBgaDgcnn,
                         ModelVariant::kPnppVanilla, ModelVariant::kPointNetVanilla,
                         ModelVariant::kDgcnnVanilla}) {
        Network<float> net(mini_config(variant, 5), 9);
        ForwardContext<float> ctx;
        const auto out = net.forward(nullptr, points, ctx);
        CHECK(out.class_logits.shape() == std::vector<std::size_t>{2, 5});
        CHECK(out.mask_logits.defined() == is_bga(variant));
    }
}

TEST_CASE("evaluation-mode forward is bit-identical across calls") {
    Network<float> net(mini_config(ModelVariant::kBgaPnpp, 4), 5);
    const auto points = random_batch<float>(2, 64, 8);
    ForwardContext<float> ctx; // eval: dropout off, running stats untouched
    const auto a = net.forward(nullptr, points, ctx);
    const auto b = net.forward(nullptr, points, ctx);
    CHECK(a.class_logits.values() == b.class_logits.values());
    CHECK(a.mask_logits.values() == b.mask_logits.values());
}

TEST_CASE("two builds from one seed are identical; different seeds differ") {
    const auto cfg = mini_config(ModelVariant::kBgaDgcnn, 4);
    Network<float> a(cfg, 42), b(cfg, 42), c(cfg, 43);
    REQUIRE(a.parameters().size() == b.parameters().size());
    bool any_diff = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        CHECK(a.parameters()[i]->value.values() == b.parameters()[i]->value.values());
        any_diff |= a.parameters()[i]->value.values() != c.parameters()[i]->value.values();
    }
    CHECK(any_diff);
}

TEST_CASE("checkpoints from one seed are byte-identical") {
    testutil::TempDir dir("ckpt_det");
    const auto cfg = mini_config(ModelVariant::kBgaPnpp, 4);
    Network<float> a(cfg, 7), b(cfg, 7);
    a.save(dir.path() / "a.sobw");
    b.save(dir.path() / "b.sobw");
    CHECK(testutil::read_bytes(dir.path() / "a.sobw") ==
          testutil::read_bytes(dir.path() / "b.sobw"));
}

TEST_CASE("checkpoint round trip restores forward outputs exactly") {
    testutil::TempDir dir("ckpt_rt");
    const auto cfg = mini_config(ModelVariant::kBgaDgcnn, 4);
    Network<float> net(cfg, 11);
    const auto points = random_batch<float>(2, cfg.num_points, 12);
    ForwardContext<float> ctx;
    const auto before = net.forward(nullptr, points, ctx);

    net.save(dir.path() / "model.sobw");
    const auto loaded = Network<float>::load(dir.path() / "model.sobw");
    CHECK(loaded->config() == cfg);
    const auto after = loaded->forward(nullptr, points, ctx);
    CHECK(before.class_logits.values() == after.class_logits.values());
    CHECK(before.mask_logits.values() == after.mask_logits.values());
}

TEST_CASE("loading a checkpoint into the wrong architecture fails") {
    testutil::TempDir dir("ckpt_bad");
    Network<float> net(mini_config(ModelVariant::kPnppVanilla, 4), 3);
    net.save(dir.path() / "m.sobw");

    Network<float> other(mini_config(ModelVariant::kPnppVanilla, 5), 3);
    CHECK_THROWS_AS(other.load_weights(dir.path() / "m.sobw"), ValidationError);

    Network<float> bga(mini_config(ModelVariant::kBgaPnpp, 4), 3);
    CHECK_THROWS_AS(bga.load_weights(dir.path() / "m.sobw"), ValidationError);
}

TEST_CASE("vanilla encoder has no feature-propagation parameters") {
    Network<float> vanilla(mini_config(ModelVariant::kPnppVanilla, 4), 1);
    for (const auto* p : vanilla.parameters()) {
        CHECK(p->name.find("fp") == std::string::npos);
        CHECK(p->name.find("seg") == std::string::npos);
    }
}

TEST_CASE("default BGA-PN++ parameter count is frozen") {
    Network<float> net(default_config(ModelVariant::kBgaPnpp, 15), 1);
    // counted once at first build, asserted as a regression value
    CHECK(net.parameter_count() == 1833425);
}

TEST_CASE("joint loss adds the lambda-weighted segmentation term") {
    // L_class = ln 4 (uniform over 4), L_seg = ln 2 (uniform over 2)
    auto class_logits = Tensor<float>::zeros({2, 4});
    auto mask_logits = Tensor<float>::zeros({2, 3, 2});
    const auto loss = joint_loss<float>(nullptr, class_logits, {0, 1}, mask_logits,
                                        {0, 1, 0, 1, 0, 1}, 0.5f);
    CHECK_THAT(loss.classification.item(), Catch::Matchers::WithinAbs(std::log(4.0), 1e-6));
    CHECK_THAT(loss.segmentation.item(), Catch::Matchers::WithinAbs(std::log(2.0), 1e-6));
    CHECK_THAT(loss.total.item(),
               Catch::Matchers::WithinAbs(std::log(4.0) + 0.5 * std::log(2.0), 1e-6));
}

TEST_CASE("joint loss at lambda 0 is the classification loss alone") {
    Rng rng(31);
    auto class_logits = Tensor<float>::zeros({3, 4});
    auto mask_logits = Tensor<float>::zeros({3, 5, 2});
    for (auto& v : class_logits.values()) v = static_cast<float>(rng.uniform(-2, 2));
    for (auto& v : mask_logits.values()) v = static_cast<float>(rng.uniform(-2, 2));
    const auto loss = joint_loss<float>(nullptr, class_logits, {0, 3, 2}, mask_logits,
                                        random_masks(15, 4), 0.0f);
    CHECK(loss.total.item() == loss.classification.item());
}

TEST_CASE("near-perfect predictions drive the joint loss to zero") {
    auto class_logits = Tensor<float>::zeros({2, 4});
    auto mask_logits = Tensor<float>::zeros({2, 3, 2});
    const std::vector<std::uint32_t> labels{2, 1};
    const std::vector<std::uint32_t> masks{1, 0, 1, 0, 1, 1};
    for (std::size_t b = 0; b < 2; ++b) class_logits.values()[b * 4 + labels[b]] = 30.0f;
    for (std::size_t i = 0; i < masks.size(); ++i) mask_logits.values()[i * 2 + masks[i]] = 30.0f;
    const auto loss = joint_loss<float>(nullptr, class_logits, labels, mask_logits, masks, 0.5f);
    CHECK(loss.total.item() < 1e-3);
}

TEST_CASE("lambda linearity: the loss is affine in lambda with slope L_seg") {
    Rng rng(77);
    auto class_logits = Tensor<double>::zeros({2, 4});
    auto mask_logits = Tensor<double>::zeros({2, 6, 2});
    for (auto& v : class_logits.values()) v = rng.uniform(-1, 1);
    for (auto& v : mask_logits.values()) v = rng.uniform(-1, 1);
    const auto labels = random_labels(2, 4, 5);
    const auto masks = random_masks(12, 6);

    const auto at = [&](double lam) {
        return joint_loss<double>(nullptr, class_logits, labels, mask_logits, masks, lam);
    };
    const auto l0 = at(0.0), l1 = at(1.0), lhalf = at(0.5);
    CHECK_THAT(l1.total.item() - l0.total.item(),
               Catch::Matchers::WithinAbs(l1.segmentation.item(), 1e-12));
    CHECK_THAT(lhalf.total.item(),
               Catch::Matchers::WithinAbs(l0.total.item() + 0.5 * lhalf.segmentation.item(),
                                          1e-12));
}

TEST_CASE("with lambda 0, encoder gradients equal the vanilla classifier's bit for bit") {
    auto bga_cfg = mini_config(ModelVariant::kBgaPnpp, 4);
    bga_cfg.lambda = 0.0;
    const auto van_cfg = mini_config(ModelVariant::kPnppVanilla, 4);

    Network<float> bga(bga_cfg, 21);
    Network<float> vanilla(van_cfg, 21);

    const auto points = random_batch<float>(2, 64, 31);
    const auto labels = random_labels(2, 4, 32);
    const auto masks = random_masks(2 * 64, 33);

    ForwardContext<float> ctx;
    ctx.training = true;
    ctx.dropout_seed = 99;

    bga.zero_grad();
    {
        ad::Tape<float> tape;
        auto out = bga.forward(&tape, points, ctx);
        auto loss = joint_loss(&tape, out.class_logits, labels, out.mask_logits, masks, 0.0f);
        tape.backward(loss.total);
    }
    vanilla.zero_grad();
    {
        ad::Tape<float> tape;
        auto out = vanilla.forward(&tape, points, ctx);
        auto loss = ad::softmax_cross_entropy(&tape, out.class_logits, labels);
        tape.backward(loss);
    }

    std::map<std::string, ad::Parameter<float>*> bga_params;
    for (auto* p : bga.parameters()) bga_params[p->name] = p;
    std::size_t compared = 0;
    for (auto* vp : vanilla.parameters()) {
        auto* bp = bga_params.at(vp->name);
        REQUIRE(bp->value.values() == vp->value.values()); // same init by name
        CHECK(bp->value.grad() == vp->value.grad());
        ++compared;
    }
    CHECK(compared > 10);
}

TEST_CASE("mask logits react to the penultimate feature (wiring test)") {
    for (auto variant : {ModelVariant::kBgaPnpp, ModelVariant::kBgaDgcnn}) {
        Network<float> net(mini_config(variant, 4), 13);
        const auto points = random_batch<float>(2, 64, 14);
        ForwardContext<float> ctx;
        const auto base = net.forward(nullptr, points, ctx);

        auto injected = Tensor<float>::from(base.penultimate.shape(), base.penultimate.values());
        for (auto& v : injected.values()) v += 0.25f;
        ForwardContext<float> ctx2;
        ctx2.penultimate_override = &injected;
        const auto nudged = net.forward(nullptr, points, ctx2);

        CHECK(nudged.mask_logits.values() != base.mask_logits.values());
        CHECK(nudged.global_feature.values() == base.global_feature.values());
    }
}

TEST_CASE("set abstraction pooling ignores the order of points within groups") {
    // permutation fixing index 0: fps picks the same geometric centroids in
    // the same sequence, each ball group sees the same point set in a
    // different order, and the per-group max must not care
    SALevelConfig level{4, 100.0, 16, {8, 8}};
    SetAbstraction<float> sa("sa_test", level, 0, 3);
    ForwardContext<float> ctx;

    auto points = random_batch<float>(1, 16, 40);
    const auto out_a = sa.forward(nullptr, points, Tensor<float>{}, ctx);

    auto permuted = Tensor<float>::zeros({1, 16, 3});
    std::vector<std::size_t> perm{0, 5, 3, 7, 1, 2, 6, 4, 15, 9, 11, 13, 8, 10, 14, 12};
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t d = 0; d < 3; ++d)
            permuted.values()[i * 3 + d] = points.values()[perm[i] * 3 + d];
    const auto out_b = sa.forward(nullptr, permuted, Tensor<float>{}, ctx);

    CHECK(out_a.points.values() == out_b.points.values());
    CHECK(out_a.features.values() == out_b.features.values());
}

TEST_CASE("feature propagation from coincident points is an MLP of the features") {
    // sparse == dense: interpolation weights collapse onto each point itself
    SharedMlp<float> ref("fp_test", 4, {6}, 77); // same seeded weights as the FP below
    FeaturePropagation<float> fp("fp_test", 4, {6}, 77);
    ForwardContext<float> ctx;

    auto pts = random_batch<float>(1, 8, 50);
    Rng rng(51);
    auto feats = Tensor<float>::zeros({1, 8, 4});
    for (auto& v : feats.values()) v = static_cast<float>(rng.uniform(-1, 1));

    const auto out = fp.forward(nullptr, pts, pts, Tensor<float>{}, feats, ctx);
    const auto expect = ref.forward(nullptr, ad::reshape<float>(nullptr, feats, {8, 4}), ctx);
    for (std::size_t i = 0; i < out.numel(); ++i)
        CHECK_THAT(out.values()[i], Catch::Matchers::WithinAbs(expect.values()[i], 1e-5));
}

TEST_CASE("feature propagation of a constant field stays constant") {
    FeaturePropagation<float> fp("fp_const", 3, {5}, 78);
    ForwardContext<float> ctx;
    auto dense = random_batch<float>(1, 12, 52);
    auto sparse = random_batch<float>(1, 4, 53);
    auto feats = Tensor<float>::from({1, 4, 3}, std::vector<float>(12, 0.0f));
    for (std::size_t i = 0; i < 4; ++i) {
        feats.values()[i * 3] = 1.0f;
        feats.values()[i * 3 + 1] = -2.0f;
        feats.values()[i * 3 + 2] = 0.5f;
    }
    const auto out = fp.forward(nullptr, dense, sparse, Tensor<float>{}, feats, ctx);
    // weights sum to 1, so the interpolated input is the same constant at
    // every dense point; the MLP output must be constant across points too
    for (std::size_t i = 1; i < 12; ++i)
        for (std::size_t f = 0; f < 5; ++f)
            CHECK_THAT(out.values()[i * 5 + f],
                       Catch::Matchers::WithinAbs(out.values()[f], 1e-5));
}

TEST_CASE("edgeconv difference channels vanish on constant input") {
    EdgeConv<float> layer("edge_const", 3, 4, {6}, 80);
    ForwardContext<float> ctx;
    auto feats = Tensor<float>::zeros({1, 10, 4});
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t f = 0; f < 4; ++f) feats.values()[i * 4 + f] = 0.3f * (f + 1);
    const auto out = layer.forward(nullptr, feats, ctx);
    // all points identical: every output row must be identical as well
    for (std::size_t i = 1; i < 10; ++i)
        for (std::size_t f = 0; f < 6; ++f)
            CHECK_THAT(out.values()[i * 6 + f],
                       Catch::Matchers::WithinAbs(out.values()[f], 1e-6));
}

TEST_CASE("edgeconv excludes self from the neighbor graph") {
    EdgeConv<float> layer("edge_k1", 1, 3, {4}, 81);
    ForwardContext<float> ctx;
    auto feats = Tensor<float>::from({1, 4, 3}, {0, 0, 0, 0.1f, 0, 0, 5, 5, 5, 5.1f, 5, 5});
    CHECK_NOTHROW(layer.forward(nullptr, feats, ctx));
    CHECK_THROWS_AS([&] {
        auto few = Tensor<float>::zeros({1, 1, 3});
        EdgeConv<float> l("edge_bad", 1, 3, {4}, 82);
        ForwardContext<float> c2;
        l.forward(nullptr, few, c2);
    }(), ValidationError);
}

TEST_CASE("edgeconv matches a per-edge brute-force oracle on 16 points") {
    const std::size_t n = 16, f_in = 3, f_out = 5, k = 4;
    EdgeConv<float> layer("edge_oracle", k, f_in, {f_out}, 83);
    ForwardContext<float> ctx; // eval mode: bn uses running stats (mean 0, var 1)
    auto feats = random_batch<float>(1, n, 60);

    const auto out = layer.forward(nullptr, feats, ctx);

    const auto& w = layer.mlp.linears[0].weight.value.values(); // [2F, f_out]
    const auto& bias = layer.mlp.linears[0].bias.value.values();
    const auto& gamma = layer.mlp.bns[0].gamma.value.values();
    const auto& beta = layer.mlp.bns[0].beta.value.values();
    const float eps = 1e-5f;

    for (std::size_t i = 0; i < n; ++i) {
        // brute-force kNN excluding self, ties by index
        std::vector<std::pair<float, std::size_t>> cand;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            float d2 = 0;
            for (std::size_t d = 0; d < f_in; ++d) {
                const float diff = feats.values()[i * f_in + d] - feats.values()[j * f_in + d];
                d2 += diff * diff;
            }
            cand.emplace_back(d2, j);
        }
        std::sort(cand.begin(), cand.end());
        for (std::size_t c = 0; c < f_out; ++c) {
            float best = -std::numeric_limits<float>::max();
            for (std::size_t e = 0; e < k; ++e) {
                const std::size_t j = cand[e].second;
                float acc = bias[c];
                for (std::size_t d = 0; d < f_in; ++d) {
                    const float xi = feats.values()[i * f_in + d];
                    const float xj = feats.values()[j * f_in + d];
                    acc += xi * w[d * f_out + c] + (xj - xi) * w[(f_in + d) * f_out + c];
                }
                // eval-mode batch norm with fresh running stats, then relu
                float v = gamma[c] * (acc / std::sqrt(1.0f + eps)) + beta[c];
                v = v > 0 ? v : 0;
                best = std::max(best, v);
            }
            CHECK_THAT(out.values()[i * f_out + c], Catch::Matchers::WithinAbs(best, 1e-4));
        }
    }
}

TEST_CASE("reduced-config BGA forward passes the gradient check") {
    // Central differences at delta 1e-3 are compared against the function
    // reverse mode actually differentiates: discrete selections (kNN graphs,
    // pool argmax, relu active sets) are frozen at the reference point via
    // the selection cache, and the fixture seeds keep batch statistics away
    // from the near-zero-variance regime where the third derivative blows
    // up the delta^2 truncation term.
    const std::vector<std::tuple<ModelVariant, std::uint64_t, std::uint64_t>> fixtures{
        {ModelVariant::kBgaPnpp, 1, 101},
        {ModelVariant::kBgaDgcnn, 5, 101},
    };
    for (const auto& [variant, net_seed, data_seed] : fixtures) {
        Network<double> net(mini_config(variant, 4), net_seed);
        Rng rng(data_seed);
        auto points = Tensor<double>::zeros({2, 64, 3});
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
            ctx.update_running_stats = false; // keep f pure across probes
            ctx.selection_cache = &selections;
            auto out = net.forward(tape, points, ctx);
            return joint_loss(tape, out.class_logits, labels, out.mask_logits, masks, 0.5)
                .total;
        };
        ad::GradCheckOptions opt;
        opt.max_samples_per_tensor = 4;
        const auto report = ad::grad_check(loss_fn, inputs, opt);
        INFO(std::string(model_variant_name(variant)) << " max_rel_err=" << report.max_rel_err);
        CHECK(report.max_rel_err < 1e-4);
    }
}
