#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "cloudclass/core/rng.hpp"
#include "cloudclass/core/types.hpp"

namespace cloudclass::pipeline {

/// Resamples an object to exactly n points, carrying the mask with each
/// point: uniform without replacement when count >= n, all points plus
/// uniform-with-replacement fill otherwise. The result is a network input
/// view, so it may legitimately end up with zero foreground points and is
/// not revalidated.
inline ObjectInstance sample_to_n(const ObjectInstance& obj, std::size_t n, std::uint64_t seed) {
    const std::size_t count = obj.cloud.count();
    if (count == 0) throw ValidationError("sample_to_n: empty cloud");
    if (n == 0) throw ValidationError("sample_to_n: n must be positive");

    Rng rng(seed);
    std::vector<std::uint32_t> picks;
    picks.reserve(n);
    if (count >= n) {
        std::vector<std::uint32_t> idx(count);
        std::iota(idx.begin(), idx.end(), 0u);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(count - i));
            std::swap(idx[i], idx[j]);
            picks.push_back(idx[i]);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) picks.push_back(static_cast<std::uint32_t>(i));
        for (std::size_t i = count; i < n; ++i)
            picks.push_back(static_cast<std::uint32_t>(rng.below(count)));
    }

    ObjectInstance out;
    out.class_id = obj.class_id;
    out.scene_id = obj.scene_id;
    out.variant = obj.variant;
    out.sample_index = obj.sample_index;
    out.cloud.points.reserve(n);
    out.mask.reserve(n);
    for (std::uint32_t i : picks) {
        out.cloud.points.push_back(obj.cloud.points[i]);
        out.mask.push_back(obj.mask[i]);
    }
    return out;
}

/// Centers the cloud at zero and scales by the maximum distance from the
/// centroid, so coordinates land in [-1, 1]. Degenerate clouds (max distance
/// below 1e-12) only get centered.
inline std::vector<Vec3f> normalize_unit(const std::vector<Vec3f>& points) {
    if (points.empty()) throw ValidationError("normalize_unit: empty cloud");
    Vec3d centroid{};
    for (const auto& p : points) centroid = centroid + p.cast<double>();
    centroid = centroid * (1.0 / static_cast<double>(points.size()));

    double max_dist = 0.0;
    for (const auto& p : points)
        max_dist = std::max(max_dist, (p.cast<double>() - centroid).norm());
    const double scale = max_dist < 1e-12 ? 1.0 : max_dist;

    std::vector<Vec3f> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
        out[i] = ((points[i].cast<double>() - centroid) * (1.0 / scale)).cast<float>();
    return out;
}

inline ObjectInstance normalize_unit(const ObjectInstance& obj) {
    ObjectInstance out = obj;
    out.cloud.points = normalize_unit(obj.cloud.points);
    return out;
}

/// Training-time augmentation on normalized clouds.
struct AugmentSpec {
    bool rotate_gravity = true;
    double jitter_sigma = 0.01; // normalized units
    double jitter_clip = 0.05;

    void validate() const {
        if (jitter_sigma < 0 || jitter_sigma > jitter_clip)
            throw ValidationError("augment: need 0 <= jitter_sigma <= jitter_clip");
    }
};

/// Rotation by theta ~ U[0, 2pi) about +z, then per-point Gaussian jitter
/// clamped to +-jitter_clip. Draw order: theta, then 3 normals per point.
inline std::vector<Vec3f> augment(const std::vector<Vec3f>& points, const AugmentSpec& spec,
                                  std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    std::vector<Vec3f> out = points;

    if (spec.rotate_gravity) {
        const double theta = rng.uniform(0.0, 6.283185307179586476925286766559);
        const double c = std::cos(theta), s = std::sin(theta);
        for (auto& p : out) {
            const double x = p.x, y = p.y;
            p.x = static_cast<float>(c * x - s * y);
            p.y = static_cast<float>(s * x + c * y);
        }
    }
    if (spec.jitter_sigma > 0) {
        const double clip = spec.jitter_clip;
        auto draw = [&]() {
            return std::clamp(rng.normal(0.0, spec.jitter_sigma), -clip, clip);
        };
        for (auto& p : out) {
            p.x = static_cast<float>(p.x + draw());
            p.y = static_cast<float>(p.y + draw());
            p.z = static_cast<float>(p.z + draw());
        }
    }
    return out;
}

} // namespace cloudclass::pipeline
