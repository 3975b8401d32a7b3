#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cloudclass/core/manifest.hpp"
#include "cloudclass/core/object_io.hpp"
#include "cloudclass/core/rng.hpp"
#include "cloudclass/pipeline/perturb.hpp"
#include "cloudclass/pipeline/scene.hpp"
#include "cloudclass/pipeline/split.hpp"

namespace cloudclass::pipeline {

struct GenerateResult {
    Manifest manifest;
    std::size_t discarded = 0; // PB_* samples failing the retention rule
};

inline std::string object_file_name(const std::string& scene_id, std::uint32_t instance_id,
                                    VariantTag variant, std::uint32_t sample_index) {
    return scene_id + "_" + std::to_string(instance_id) + "_" +
           std::string(variant_name(variant)) + "_" + std::to_string(sample_index) + ".sobn";
}

/// Builds one dataset variant from labeled scenes. OBJ_ONLY / OBJ_BG emit
/// one object per instance; PB_* emit up to samples_per_object samples per
/// instance, discarding (never resampling) retention failures. Every sample
/// draws its own seed from (scene, instance, sample), so the output tree is
/// a pure function of (scenes, spec, global_seed) no matter how the loop is
/// ordered or parallelized.
inline GenerateResult generate_variant(const std::vector<SceneRecord>& scenes, VariantTag variant,
                                       const PerturbSpec& spec, std::uint64_t global_seed,
                                       const std::filesystem::path& out_dir,
                                       const ClassTable& table, double train_frac = 0.8,
                                       std::uint64_t split_id = 0) {
    spec.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (!std::filesystem::is_directory(out_dir))
        throw IoError("cannot create output directory '" + out_dir.string() + "'");

    const SeedSpec seeds{global_seed};
    GenerateResult result;

    for (const auto& scene : scenes) {
        scene.validate();
        for (const auto& info : scene.instances) {
            const BoxFrame gt_frame = BoxFrame::axis_aligned(info.box);

            if (!is_perturbed(variant)) {
                ObjectInstance obj = extract_in_box(scene, info.instance_id, gt_frame, variant, 0);
                if (variant == VariantTag::kObjOnly) obj = strip_background(obj);
                const auto name = object_file_name(scene.scene_id, info.instance_id, variant, 0);
                write_object(obj, out_dir / name);
                result.manifest.entries.push_back(
                    {name, scene.scene_id, info.class_id, variant, 0, Split::kTrain});
                continue;
            }

            const ObjectInstance original =
                strip_background(extract_in_box(scene, info.instance_id, gt_frame, variant, 0));
            for (std::uint32_t k = 0; k < spec.samples_per_object; ++k) {
                const auto seed = seeds.derive(scene.scene_id, info.instance_id, k, "perturb");
                const BoxFrame frame = perturb_box(info.box, spec, seed);
                if (!retention_ok(original, frame, spec.retention_min)) {
                    ++result.discarded;
                    continue;
                }
                const ObjectInstance obj =
                    extract_in_box(scene, info.instance_id, frame, variant, k);
                const auto name = object_file_name(scene.scene_id, info.instance_id, variant, k);
                write_object(obj, out_dir / name);
                result.manifest.entries.push_back(
                    {name, scene.scene_id, info.class_id, variant, k, Split::kTrain});
            }
        }
    }

    if (result.manifest.scene_ids().size() >= 2)
        result.manifest =
            split_by_scene(result.manifest, train_frac, seeds.derive("split", split_id));
    save_manifest(result.manifest, out_dir / "manifest.tsv");
    write_class_table(table, out_dir);
    return result;
}

/// Derives a background-free copy of a generated dataset: same manifest,
/// same file names, every object stripped to its foreground points.
inline void strip_dataset(const std::filesystem::path& in_dir,
                          const std::filesystem::path& out_dir) {
    const Manifest manifest = load_manifest(in_dir / "manifest.tsv");
    std::filesystem::create_directories(out_dir);
    for (const auto& e : manifest.entries) {
        const auto obj = read_object(in_dir / e.path, e.scene_id, e.variant);
        write_object(strip_background(obj), out_dir / e.path);
    }
    save_manifest(manifest, out_dir / "manifest.tsv");
    if (std::filesystem::exists(in_dir / "classes.json"))
        std::filesystem::copy_file(in_dir / "classes.json", out_dir / "classes.json",
                                   std::filesystem::copy_options::overwrite_existing);
}

} // namespace cloudclass::pipeline
