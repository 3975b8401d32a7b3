#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cloudclass/bench/dataset.hpp"
#include "cloudclass/bench/metrics.hpp"
#include "cloudclass/bench/train.hpp"
#include "cloudclass/models/network.hpp"

namespace cloudclass::bench {

struct EvalOutput {
    Metrics metrics;
    // Predicted per-point masks on the sampled, normalized inputs (BGA
    // variants only), for the masks/ export.
    std::vector<ObjectInstance> predicted_masks;
    std::vector<std::string> predicted_mask_names;
};

namespace detail {

inline std::vector<std::uint32_t> argmax_rows(const std::vector<float>& v, std::size_t rows,
                                              std::size_t cols) {
    std::vector<std::uint32_t> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < cols; ++c)
            if (v[r * cols + c] > v[r * cols + arg]) arg = c;
        out[r] = static_cast<std::uint32_t>(arg);
    }
    return out;
}

} // namespace detail

/// Deterministic evaluation: no dropout, no augmentation, running-stat batch
/// norm, fixed resampling seeds. A pure function of (weights, data, seed).
inline EvalOutput evaluate(models::Network<float>& net, const Dataset& data,
                           std::size_t batch_size = 16, std::uint64_t eval_seed = 0,
                           bool collect_masks = true) {
    if (data.size() == 0) throw ValidationError("evaluate: empty split");
    const auto& mcfg = net.config();
    if (mcfg.num_classes() != data.table.size())
        throw ValidationError("evaluate: model predicts " + std::to_string(mcfg.num_classes()) +
                              " classes but the dataset defines " +
                              std::to_string(data.table.size()));
    const bool bga = models::is_bga(mcfg.variant);
    const SeedSpec seeds{eval_seed};

    std::vector<std::uint32_t> labels, preds;
    std::uint64_t mask_correct = 0, mask_total = 0;
    EvalOutput out;

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, order.size() - start);
        auto batch = assemble_batch<float>(data, {order.data() + start, len}, mcfg.num_points, 0,
                                           seeds, false, pipeline::AugmentSpec{});
        models::ForwardContext<float> ctx; // eval mode
        auto fwd = net.forward(nullptr, batch.points, ctx);

        const auto batch_preds =
            detail::argmax_rows(fwd.class_logits.values(), len, mcfg.num_classes());
        for (std::size_t b = 0; b < len; ++b) {
            labels.push_back(batch.labels[b]);
            preds.push_back(batch_preds[b]);
        }

        if (bga) {
            const std::size_t n = mcfg.num_points;
            const auto point_preds = detail::argmax_rows(fwd.mask_logits.values(), len * n, 2);
            for (std::size_t i = 0; i < len * n; ++i)
                mask_correct += point_preds[i] == batch.masks[i];
            mask_total += len * n;

            if (collect_masks) {
                for (std::size_t b = 0; b < len; ++b) {
                    const auto& entry = data.entries[batch.dataset_indices[b]];
                    ObjectInstance pred;
                    pred.scene_id = entry.scene_id;
                    pred.class_id = entry.class_id;
                    pred.variant = entry.variant;
                    pred.sample_index = entry.sample_index;
                    pred.cloud.points.resize(n);
                    pred.mask.resize(n);
                    const float* src = batch.points.values().data() + b * n * 3;
                    for (std::size_t i = 0; i < n; ++i) {
                        pred.cloud.points[i] = {src[i * 3], src[i * 3 + 1], src[i * 3 + 2]};
                        pred.mask[i] = static_cast<std::uint8_t>(point_preds[b * n + i]);
                    }
                    out.predicted_masks.push_back(std::move(pred));
                    out.predicted_mask_names.push_back(
                        std::filesystem::path(entry.path).stem().string() + "_pred.sobn");
                }
            }
        }
    }

    out.metrics = compute_metrics(
        data.table.names(), labels, preds,
        bga ? std::optional(std::pair{mask_correct, mask_total}) : std::nullopt);
    return out;
}

/// Evaluation across datasets with different class tables. class_map sends
/// evaluation-class ids to model-class ids; unmapped objects are excluded
/// and counted. Metrics are computed in the model's class space.
inline EvalOutput cross_evaluate(models::Network<float>& net, const Dataset& data,
                                 const std::map<std::uint32_t, std::uint32_t>& class_map,
                                 std::size_t batch_size = 16, std::uint64_t eval_seed = 0) {
    for (const auto& [from, to] : class_map) {
        if (from >= data.table.size())
            throw ValidationError("cross_evaluate: map source outside the dataset classes");
        if (to >= net.config().num_classes())
            throw ValidationError("cross_evaluate: map target outside the model classes");
    }
    std::set<std::uint32_t> targets;
    for (const auto& [from, to] : class_map)
        if (!targets.insert(to).second)
            throw ValidationError("cross_evaluate: class map must be injective");

    // Model-space class names: each mapped target borrows the evaluation
    // dataset's name; targets nothing maps to stay as placeholders.
    std::vector<std::string> names(net.config().num_classes());
    for (std::size_t i = 0; i < names.size(); ++i) names[i] = "class_" + std::to_string(i);
    for (const auto& [from, to] : class_map) names[to] = data.table.name_of(from);

    Dataset mapped;
    mapped.table = ClassTable(std::move(names));
    std::uint64_t excluded = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto it = class_map.find(data.entries[i].class_id);
        if (it == class_map.end()) {
            ++excluded;
            continue;
        }
        ManifestEntry e = data.entries[i];
        e.class_id = it->second;
        mapped.entries.push_back(std::move(e));
        mapped.objects.push_back(data.objects[i]);
    }
    if (mapped.entries.empty())
        throw ValidationError("cross_evaluate: no objects fall in the mapped classes");

    auto out = evaluate(net, mapped, batch_size, eval_seed, /*collect_masks=*/false);
    out.metrics.excluded_count = excluded;
    return out;
}

/// Writes metrics.json, confusion.csv, the masks/ directory of predicted
/// masks, and train_log.csv when logs are given. Validates before touching
/// the filesystem so failures leave no partial report.
inline void export_report(const EvalOutput& eval, const std::vector<EpochLog>& logs,
                          const std::filesystem::path& out_dir) {
    if (eval.metrics.object_count == 0)
        throw ValidationError("export_report: no evaluated objects");
    if (eval.metrics.class_names.empty()) throw ValidationError("export_report: no classes");

    std::filesystem::create_directories(out_dir);
    {
        std::ofstream f(out_dir / "metrics.json", std::ios::binary);
        if (!f) throw IoError("cannot write metrics.json");
        f << to_json(eval.metrics).dump(2) << '\n';
    }
    write_confusion_csv(eval.metrics, out_dir / "confusion.csv");
    if (!eval.predicted_masks.empty()) {
        std::filesystem::create_directories(out_dir / "masks");
        for (std::size_t i = 0; i < eval.predicted_masks.size(); ++i)
            write_object(eval.predicted_masks[i], out_dir / "masks" / eval.predicted_mask_names[i],
                         /*check_invariants=*/false);
    }
    if (!logs.empty()) write_train_log(logs, out_dir / "train_log.csv");
}

} // namespace cloudclass::bench
