#pragma once

#include <cmath>
#include <cstdint>

#include "cloudclass/core/rng.hpp"
#include "cloudclass/core/types.hpp"
#include "cloudclass/pipeline/scene.hpp"

namespace cloudclass::pipeline {

class ExtractionEmptyError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Box perturbation parameters for one PB_* variant.
struct PerturbSpec {
    double translate_frac = 0.0; // 0, 0.25 or 0.50 of the extent per axis
    bool rotate = false;
    bool scale = false;
    std::uint32_t samples_per_object = 5;
    double retention_min = 0.5;

    void validate() const {
        if (translate_frac < 0) throw ValidationError("translate_frac must be >= 0");
        if (retention_min <= 0 || retention_min > 1)
            throw ValidationError("retention_min must be in (0,1]");
    }

    static PerturbSpec for_variant(VariantTag tag) {
        PerturbSpec spec;
        switch (tag) {
        case VariantTag::kObjOnly:
        case VariantTag::kObjBg:
            break;
        case VariantTag::kPbT25:
            spec.translate_frac = 0.25;
            break;
        case VariantTag::kPbT25R:
            spec.translate_frac = 0.25;
            spec.rotate = true;
            break;
        case VariantTag::kPbT50R:
            spec.translate_frac = 0.50;
            spec.rotate = true;
            break;
        case VariantTag::kPbT50Rs:
            spec.translate_frac = 0.50;
            spec.rotate = true;
            spec.scale = true;
            break;
        }
        return spec;
    }
};

/// An extraction region: an axis-aligned box in a frame rotated by yaw about
/// the gravity (+z) axis through pivot. yaw = 0 degenerates to the plain
/// world-frame box. Geometry is gathered in the rotated frame.
struct BoxFrame {
    Aabb box;
    double yaw = 0.0;
    Vec3d pivot{};

    /// World point expressed in the rotated frame.
    Vec3d to_frame(const Vec3d& p) const {
        if (yaw == 0.0) return p;
        const double c = std::cos(-yaw), s = std::sin(-yaw);
        const double dx = p.x - pivot.x, dy = p.y - pivot.y;
        return {pivot.x + c * dx - s * dy, pivot.y + s * dx + c * dy, p.z};
    }

    bool contains(const Vec3d& p) const { return box.contains(to_frame(p)); }

    static BoxFrame axis_aligned(const Aabb& box) { return {box, 0.0, box.center()}; }
};

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

/// Perturbs a ground-truth box: per-axis translation uniform in
/// [-t*extent, +t*extent], then optional rotation theta ~ U[0, 2pi) about +z
/// through the translated centroid, then optional extent scaling by a single
/// s ~ U[0.75, 1.25]. The draw order is fixed (dx, dy, dz, theta, s) so the
/// result is a pure function of (box, spec, seed).
inline BoxFrame perturb_box(const Aabb& box, const PerturbSpec& spec, std::uint64_t seed) {
    if (!box.valid()) throw ValidationError("perturb_box: invalid box");
    spec.validate();
    Rng rng(seed);

    const Vec3d ext = box.extent();
    const double t = spec.translate_frac;
    const Vec3d shift{rng.uniform(-t * ext.x, t * ext.x), rng.uniform(-t * ext.y, t * ext.y),
                      rng.uniform(-t * ext.z, t * ext.z)};

    BoxFrame frame;
    frame.box = {box.min + shift, box.max + shift};
    frame.pivot = frame.box.center();
    frame.yaw = spec.rotate ? rng.uniform(0.0, kTwoPi) : 0.0;
    if (spec.scale) {
        const double s = rng.uniform(0.75, 1.25);
        frame.box.min = frame.pivot + (frame.box.min - frame.pivot) * s;
        frame.box.max = frame.pivot + (frame.box.max - frame.pivot) * s;
    }
    return frame;
}

/// All scene points inside the frame (closed box); mask = 1 exactly where
/// the point's instance id equals the target.
inline ObjectInstance extract_in_box(const SceneRecord& scene, std::uint32_t instance_id,
                                     const BoxFrame& frame,
                                     VariantTag variant = VariantTag::kObjBg,
                                     std::uint32_t sample_index = 0) {
    const InstanceInfo& info = scene.instance(instance_id);
    if (!frame.box.valid()) throw ValidationError("extract_in_box: invalid box");

    ObjectInstance obj;
    obj.scene_id = scene.scene_id;
    obj.class_id = info.class_id;
    obj.variant = variant;
    obj.sample_index = sample_index;
    std::size_t foreground = 0;
    for (std::size_t i = 0; i < scene.points.size(); ++i) {
        if (!frame.contains(scene.points[i].cast<double>())) continue;
        obj.cloud.points.push_back(scene.points[i]);
        const bool fg = scene.instance_ids[i] == instance_id;
        obj.mask.push_back(fg ? 1 : 0);
        foreground += fg;
    }
    if (foreground == 0)
        throw ExtractionEmptyError("no foreground points of instance " +
                                   std::to_string(instance_id) + " inside the box");
    return obj;
}

inline ObjectInstance extract_in_box(const SceneRecord& scene, std::uint32_t instance_id,
                                     const Aabb& box, VariantTag variant = VariantTag::kObjBg,
                                     std::uint32_t sample_index = 0) {
    return extract_in_box(scene, instance_id, BoxFrame::axis_aligned(box), variant, sample_index);
}

/// Drops background points; the result is all-foreground. Idempotent.
inline ObjectInstance strip_background(const ObjectInstance& obj) {
    obj.validate();
    ObjectInstance out;
    out.class_id = obj.class_id;
    out.scene_id = obj.scene_id;
    out.variant = obj.variant;
    out.sample_index = obj.sample_index;
    for (std::size_t i = 0; i < obj.cloud.count(); ++i) {
        if (!obj.mask[i]) continue;
        out.cloud.points.push_back(obj.cloud.points[i]);
        out.mask.push_back(1);
    }
    return out;
}

/// True when at least retention_min of the original object's foreground
/// points fall inside the candidate frame.
inline bool retention_ok(const ObjectInstance& original, const BoxFrame& frame,
                         double retention_min = 0.5) {
    const std::size_t total = original.foreground_count();
    if (total == 0) throw ValidationError("retention_ok: original has no foreground points");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < original.cloud.count(); ++i)
        if (original.mask[i] && frame.contains(original.cloud.points[i].cast<double>())) ++inside;
    return static_cast<double>(inside) / static_cast<double>(total) >= retention_min;
}

} // namespace cloudclass::pipeline
