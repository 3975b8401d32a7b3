#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cloudclass/ad/tensor.hpp"
#include "cloudclass/core/manifest.hpp"
#include "cloudclass/core/object_io.hpp"
#include "cloudclass/pipeline/prep.hpp"
#include "cloudclass/pipeline/scene.hpp"

namespace cloudclass::bench {

/// In-memory dataset slice: raw objects from one split of a manifest,
/// resolved against the manifest's directory. Objects stay at extraction
/// resolution; sampling/normalization happen per batch.
struct Dataset {
    ClassTable table;
    std::vector<ManifestEntry> entries;
    std::vector<ObjectInstance> objects; // aligned with entries

    std::size_t size() const { return entries.size(); }

    static Dataset load(const std::filesystem::path& manifest_path, Split split,
                        std::optional<VariantTag> variant_filter = std::nullopt) {
        const auto dir = manifest_path.parent_path();
        const Manifest manifest = load_manifest(manifest_path);

        Dataset ds;
        std::ifstream probe(dir / "classes.json");
        if (probe.good())
            ds.table = pipeline::read_class_table(dir);
        // else: the default 15-category table

        for (const auto& e : manifest.entries) {
            if (e.split != split) continue;
            if (variant_filter && e.variant != *variant_filter) continue;
            ds.entries.push_back(e);
            ds.objects.push_back(read_object(dir / e.path, e.scene_id, e.variant));
            if (e.class_id >= ds.table.size())
                throw ValidationError("manifest class id " + std::to_string(e.class_id) +
                                      " outside the class table");
        }
        return ds;
    }
};

/// One network input batch in scalar type S.
template <typename S>
struct Batch {
    ad::Tensor<S> points;               // [B, N, 3]
    std::vector<std::uint32_t> labels;  // B
    std::vector<std::uint32_t> masks;   // B*N, flattened per-point fg(1)/bg(0)
    std::vector<std::size_t> dataset_indices;
};

/// Builds a batch: per object, seeded resample to n_points, normalize, and
/// (in training) augment. All seeds derive from (object path, epoch), so the
/// batch is a pure function of its inputs.
template <typename S>
Batch<S> assemble_batch(const Dataset& ds, std::span<const std::size_t> indices,
                        std::size_t n_points, std::uint64_t epoch, const SeedSpec& seeds,
                        bool training, const pipeline::AugmentSpec& aug) {
    const std::size_t bsz = indices.size();
    if (bsz == 0) throw ValidationError("assemble_batch: empty batch");

    Batch<S> batch;
    batch.points = ad::Tensor<S>::zeros({bsz, n_points, 3});
    batch.labels.reserve(bsz);
    batch.masks.reserve(bsz * n_points);
    batch.dataset_indices.assign(indices.begin(), indices.end());

    for (std::size_t b = 0; b < bsz; ++b) {
        const auto& entry = ds.entries[indices[b]];
        const auto sampled = pipeline::sample_to_n(
            ds.objects[indices[b]], n_points, seeds.derive(entry.path, epoch, 0, "sample"));
        auto pts = pipeline::normalize_unit(sampled.cloud.points);
        if (training) pts = pipeline::augment(pts, aug, seeds.derive(entry.path, epoch, 0, "augment"));

        S* dst = batch.points.values().data() + b * n_points * 3;
        for (std::size_t i = 0; i < n_points; ++i) {
            dst[i * 3] = static_cast<S>(pts[i].x);
            dst[i * 3 + 1] = static_cast<S>(pts[i].y);
            dst[i * 3 + 2] = static_cast<S>(pts[i].z);
        }
        batch.labels.push_back(entry.class_id);
        for (std::size_t i = 0; i < n_points; ++i) batch.masks.push_back(sampled.mask[i]);
    }
    return batch;
}

} // namespace cloudclass::bench
