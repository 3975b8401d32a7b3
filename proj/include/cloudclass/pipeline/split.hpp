#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cloudclass/core/manifest.hpp"
#include "cloudclass/core/rng.hpp"

namespace cloudclass::pipeline {

/// Partitions scenes (never objects) into train/test. Scenes are shuffled by
/// the seed, then the cut closest to the requested object-level train
/// fraction is chosen, so similar objects from one room never straddle the
/// split.
inline Manifest split_by_scene(const Manifest& manifest, double train_frac, std::uint64_t seed) {
    if (train_frac <= 0.0 || train_frac >= 1.0)
        throw ValidationError("split_by_scene: train_frac must be in (0,1)");

    std::map<std::string, std::size_t> scene_counts;
    for (const auto& e : manifest.entries) ++scene_counts[e.scene_id];
    if (scene_counts.size() < 2)
        throw ValidationError("split_by_scene: impossible with fewer than 2 scenes");

    std::vector<std::string> scenes;
    for (const auto& [id, n] : scene_counts) scenes.push_back(id);
    Rng rng(seed);
    for (std::size_t i = scenes.size() - 1; i > 0; --i)
        std::swap(scenes[i], scenes[rng.below(i + 1)]);

    const auto total = static_cast<double>(manifest.entries.size());
    std::size_t best_k = 1;
    double best_err = std::numeric_limits<double>::max();
    std::size_t running = 0;
    for (std::size_t k = 1; k < scenes.size(); ++k) {
        running += scene_counts[scenes[k - 1]];
        const double err = std::abs(static_cast<double>(running) / total - train_frac);
        if (err < best_err) {
            best_err = err;
            best_k = k;
        }
    }

    std::set<std::string> train_scenes(scenes.begin(), scenes.begin() + best_k);
    Manifest out = manifest;
    for (auto& e : out.entries)
        e.split = train_scenes.count(e.scene_id) ? Split::kTrain : Split::kTest;
    out.validate();
    return out;
}

} // namespace cloudclass::pipeline
