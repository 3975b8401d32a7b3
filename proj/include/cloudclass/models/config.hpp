#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cloudclass/core/error.hpp"

namespace cloudclass::models {

/// One set-abstraction level: fps to num_centroids, ball-query grouping,
/// shared MLP, max pool per group. num_centroids == 1 marks the final global
/// pool, which groups every point and ignores radius/k.
struct SALevelConfig {
    std::size_t num_centroids = 1;
    double radius = 0.2;
    std::size_t k = 32;
    std::vector<std::size_t> mlp;

    friend bool operator==(const SALevelConfig&, const SALevelConfig&) = default;
};

/// Widths of the three feature-propagation stages; the last stage ends with
/// the 2 foreground/background channels.
struct FPConfig {
    std::array<std::vector<std::size_t>, 3> stages;

    friend bool operator==(const FPConfig&, const FPConfig&) = default;
};

struct EdgeConvConfig {
    std::size_t k = 20;
    std::vector<std::size_t> layers = {64, 64, 128, 256};
    std::size_t emb = 1024; // per-point embedding width before the global max

    friend bool operator==(const EdgeConvConfig&, const EdgeConvConfig&) = default;
};

enum class ModelVariant : std::uint8_t {
    kBgaPnpp,
    kBgaDgcnn,
    kPnppVanilla,
    kPointNetVanilla,
    kDgcnnVanilla,
};

inline constexpr std::array<std::pair<ModelVariant, std::string_view>, 5> kModelVariantNames = {{
    {ModelVariant::kBgaPnpp, "bga-pnpp"},
    {ModelVariant::kBgaDgcnn, "bga-dgcnn"},
    {ModelVariant::kPnppVanilla, "pnpp"},
    {ModelVariant::kPointNetVanilla, "pointnet"},
    {ModelVariant::kDgcnnVanilla, "dgcnn"},
}};

inline std::string_view model_variant_name(ModelVariant v) {
    for (const auto& [m, n] : kModelVariantNames)
        if (m == v) return n;
    throw ValidationError("invalid model variant");
}

inline ModelVariant parse_model_variant(std::string_view name) {
    for (const auto& [m, n] : kModelVariantNames)
        if (n == name) return m;
    throw ValidationError("unknown model '" + std::string(name) + "'");
}

inline bool is_bga(ModelVariant v) {
    return v == ModelVariant::kBgaPnpp || v == ModelVariant::kBgaDgcnn;
}

inline bool uses_pnpp_encoder(ModelVariant v) {
    return v == ModelVariant::kBgaPnpp || v == ModelVariant::kPnppVanilla;
}

inline bool uses_dgcnn_encoder(ModelVariant v) {
    return v == ModelVariant::kBgaDgcnn || v == ModelVariant::kDgcnnVanilla;
}

struct ModelConfig {
    ModelVariant variant = ModelVariant::kBgaPnpp;
    std::size_t num_points = 1024;
    std::vector<SALevelConfig> encoder; // 3 levels, last global
    std::vector<std::size_t> head;      // 3 FC widths, last = number of classes
    FPConfig seg;
    EdgeConvConfig edge;
    std::vector<std::size_t> pointnet = {64, 64, 64, 128, 1024};
    double lambda = 0.5;
    double dropout_p = 0.5;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

    std::size_t num_classes() const { return head.back(); }

    void validate() const {
        if (head.size() != 3) throw ValidationError("config: head must have exactly 3 FC layers");
        if (lambda < 0) throw ValidationError("config: lambda must be >= 0");
        if (dropout_p < 0 || dropout_p >= 1)
            throw ValidationError("config: dropout_p must be in [0,1)");
        if (num_points < 8) throw ValidationError("config: too few points");
        if (uses_pnpp_encoder(variant)) {
            if (encoder.size() != 3)
                throw ValidationError("config: encoder needs 3 set-abstraction levels");
            for (std::size_t i = 0; i < encoder.size(); ++i) {
                if (encoder[i].mlp.empty())
                    throw ValidationError("config: empty set-abstraction MLP");
                if (i + 1 < encoder.size() &&
                    encoder[i + 1].num_centroids >= encoder[i].num_centroids)
                    throw ValidationError("config: centroid counts must decrease across levels");
            }
            if (encoder.back().num_centroids != 1)
                throw ValidationError("config: final set-abstraction level must be global");
            if (encoder.front().num_centroids > num_points)
                throw ValidationError("config: more centroids than points");
        }
        if (uses_dgcnn_encoder(variant)) {
            if (edge.layers.empty()) throw ValidationError("config: no edge-conv layers");
            if (edge.k + 1 > num_points)
                throw ValidationError("config: edge-conv k must be below the point count");
        }
        if (variant == ModelVariant::kPointNetVanilla && pointnet.empty())
            throw ValidationError("config: empty point-wise MLP");
        if (is_bga(variant)) {
            for (const auto& stage : seg.stages)
                if (stage.empty()) throw ValidationError("config: empty feature-propagation stage");
            if (seg.stages.back().back() != 2)
                throw ValidationError("config: segmentation output must have 2 channels");
        }
    }
};

// JSON field names follow the config fields; model files ship this document
// next to each checkpoint.
inline nlohmann::json to_json(const ModelConfig& cfg) {
    nlohmann::json j;
    j["variant"] = std::string(model_variant_name(cfg.variant));
    j["num_points"] = cfg.num_points;
    j["encoder"] = nlohmann::json::array();
    for (const auto& sa : cfg.encoder)
        j["encoder"].push_back({{"num_centroids", sa.num_centroids},
                                {"radius", sa.radius},
                                {"k", sa.k},
                                {"mlp", sa.mlp}});
    j["head"] = cfg.head;
    j["seg"] = {{"stages", {cfg.seg.stages[0], cfg.seg.stages[1], cfg.seg.stages[2]}}};
    j["edge"] = {{"k", cfg.edge.k}, {"layers", cfg.edge.layers}, {"emb", cfg.edge.emb}};
    j["pointnet"] = cfg.pointnet;
    j["lambda"] = cfg.lambda;
    j["dropout_p"] = cfg.dropout_p;
    return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.variant = parse_model_variant(j.at("variant").get<std::string>());
    cfg.num_points = j.at("num_points").get<std::size_t>();
    cfg.encoder.clear();
    for (const auto& sa : j.at("encoder")) {
        SALevelConfig level;
        level.num_centroids = sa.at("num_centroids").get<std::size_t>();
        level.radius = sa.at("radius").get<double>();
        level.k = sa.at("k").get<std::size_t>();
        level.mlp = sa.at("mlp").get<std::vector<std::size_t>>();
        cfg.encoder.push_back(level);
    }
    cfg.head = j.at("head").get<std::vector<std::size_t>>();
    for (std::size_t s = 0; s < 3; ++s)
        cfg.seg.stages[s] = j.at("seg").at("stages").at(s).get<std::vector<std::size_t>>();
    cfg.edge.k = j.at("edge").at("k").get<std::size_t>();
    cfg.edge.layers = j.at("edge").at("layers").get<std::vector<std::size_t>>();
    cfg.edge.emb = j.at("edge").at("emb").get<std::size_t>();
    cfg.pointnet = j.at("pointnet").get<std::vector<std::size_t>>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.dropout_p = j.at("dropout_p").get<double>();
    cfg.validate();
    return cfg;
}

inline void save_config(const ModelConfig& cfg, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << to_json(cfg).dump(2) << '\n';
}

inline ModelConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    return config_from_json(nlohmann::json::parse(f));
}

/// Full-scale configuration: 1024 points, the usual single-scale-grouping
/// widths, head 512-256-C with dropout 0.5; radii in normalized units.
inline ModelConfig default_config(ModelVariant variant, std::size_t num_classes = 15) {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.num_points = 1024;
    cfg.encoder = {{512, 0.2, 32, {64, 64, 128}},
                   {128, 0.4, 64, {128, 128, 256}},
                   {1, 0.0, 1, {256, 512, 1024}}};
    cfg.head = {512, 256, num_classes};
    cfg.seg.stages = {{{256, 256}, {256, 128}, {128, 128, 2}}};
    cfg.edge = {20, {64, 64, 128, 256}, 1024};
    cfg.pointnet = {64, 64, 64, 128, 1024};
    cfg.validate();
    return cfg;
}

/// Desk-scale configuration: 256 points, widths divided by 4. Fast enough
/// for CPU training loops while keeping the full architecture.
inline ModelConfig desk_config(ModelVariant variant, std::size_t num_classes,
                               std::size_t num_points = 256) {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.num_points = num_points;
    cfg.encoder = {{64, 0.2, 16, {16, 16, 32}},
                   {16, 0.4, 16, {32, 32, 64}},
                   {1, 0.0, 1, {64, 128, 256}}};
    cfg.head = {128, 64, num_classes};
    cfg.seg.stages = {{{64, 64}, {64, 32}, {32, 32, 2}}};
    cfg.edge = {10, {16, 16, 32, 64}, 256};
    cfg.pointnet = {16, 16, 16, 32, 256};
    cfg.validate();
    return cfg;
}

/// Gradient-check configuration: 64 points, widths capped at 16 so central
/// differences over every parameter tensor stay cheap.
inline ModelConfig mini_config(ModelVariant variant, std::size_t num_classes = 4) {
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.num_points = 64;
    cfg.encoder = {{16, 0.3, 8, {8, 16}}, {8, 0.6, 8, {16, 16}}, {1, 0.0, 1, {16, 16}}};
    cfg.head = {16, 16, num_classes};
    cfg.seg.stages = {{{16}, {16}, {16, 2}}};
    cfg.edge = {4, {8, 8, 16, 16}, 16};
    cfg.pointnet = {8, 8, 16};
    cfg.validate();
    return cfg;
}

} // namespace cloudclass::models
