#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "cloudclass/core/rng.hpp"
#include "cloudclass/core/types.hpp"
#include "cloudclass/pipeline/scene.hpp"

// Procedural desk-scale scene generator: labeled shape instances resting on
// a noisy floor plane, optionally backed by two walls, standing in for real
// scanned-room input. Object classes are the generated shape families.
namespace cloudclass::pipeline {

struct SynthConfig {
    std::vector<std::string> classes = {"box", "cylinder", "sphere-cap", "l-bracket"};
    std::size_t objects_per_scene = 5;
    double room_size = 4.0;           // square floor [0, room]^2, meters
    bool walls = true;                // wall planes at x = 0 and y = 0
    double wall_height = 1.2;
    std::size_t points_per_object = 600;
    double background_density = 600.0; // floor/wall points per square meter
    double noise_sigma = 0.005;        // isotropic surface noise, meters
    // annotation boxes are rarely tight in scan data; pad the ground-truth
    // box by this fraction of its extent per side
    double box_padding = 0.05;

    void validate() const {
        static const std::set<std::string> known{"box", "cylinder", "sphere-cap", "l-bracket"};
        if (classes.size() < 2)
            throw ValidationError("synth: config must name at least 2 shape classes");
        std::set<std::string> seen;
        for (const auto& c : classes) {
            if (!known.count(c)) throw ValidationError("synth: unknown shape class '" + c + "'");
            if (!seen.insert(c).second)
                throw ValidationError("synth: duplicate shape class '" + c + "'");
        }
        if (objects_per_scene < 1) throw ValidationError("synth: need at least 1 object");
        if (room_size <= 0 || points_per_object < 8 || background_density < 0 ||
            noise_sigma < 0 || box_padding < 0)
            throw ValidationError("synth: invalid geometry settings");
    }

    ClassTable class_table() const { return ClassTable(classes); }
};

namespace detail {

inline Vec3f jitter_point(double x, double y, double z, double sigma, Rng& rng) {
    return {static_cast<float>(x + rng.normal(0.0, sigma)),
            static_cast<float>(y + rng.normal(0.0, sigma)),
            static_cast<float>(z + rng.normal(0.0, sigma))};
}

inline Vec3f yaw_about(const Vec3f& p, double cx, double cy, double yaw) {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = p.x - cx, dy = p.y - cy;
    return {static_cast<float>(cx + c * dx - s * dy), static_cast<float>(cy + s * dx + c * dy),
            p.z};
}

/// Cuboid surface sample, bottom face excluded (scanners never see it).
inline void sample_cuboid(std::vector<Vec3f>& out, std::size_t n, double cx, double cy, double z0,
                          double w, double d, double h, double sigma, Rng& rng) {
    const std::array<double, 5> areas{w * d, d * h, d * h, w * h, w * h}; // top, x-, x+, y-, y+
    double total = 0;
    for (double a : areas) total += a;
    for (std::size_t i = 0; i < n; ++i) {
        double pick = rng.uniform() * total;
        std::size_t face = 0;
        while (face + 1 < areas.size() && pick > areas[face]) {
            pick -= areas[face];
            ++face;
        }
        const double u = rng.uniform(), v = rng.uniform();
        double x = 0, y = 0, z = 0;
        switch (face) {
        case 0: x = (u - 0.5) * w; y = (v - 0.5) * d; z = h; break;
        case 1: x = -w / 2; y = (u - 0.5) * d; z = v * h; break;
        case 2: x = w / 2; y = (u - 0.5) * d; z = v * h; break;
        case 3: x = (u - 0.5) * w; y = -d / 2; z = v * h; break;
        default: x = (u - 0.5) * w; y = d / 2; z = v * h; break;
        }
        out.push_back(jitter_point(cx + x, cy + y, z0 + z, sigma, rng));
    }
}

inline void sample_cylinder(std::vector<Vec3f>& out, std::size_t n, double cx, double cy,
                            double r, double h, double sigma, Rng& rng) {
    const double lateral = 6.283185307179586 * r * h;
    const double top = 3.141592653589793 * r * r;
    for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform() * (lateral + top) < lateral) {
            const double a = rng.uniform(0.0, 6.283185307179586);
            out.push_back(jitter_point(cx + r * std::cos(a), cy + r * std::sin(a),
                                       rng.uniform(0.0, h), sigma, rng));
        } else {
            const double a = rng.uniform(0.0, 6.283185307179586);
            const double rr = r * std::sqrt(rng.uniform());
            out.push_back(jitter_point(cx + rr * std::cos(a), cy + rr * std::sin(a), h, sigma, rng));
        }
    }
}

inline void sample_sphere_cap(std::vector<Vec3f>& out, std::size_t n, double cx, double cy,
                              double r, double sigma, Rng& rng) {
    for (std::size_t i = 0; i < n; ++i) {
        const double z = rng.uniform();           // uniform area on the upper hemisphere
        const double a = rng.uniform(0.0, 6.283185307179586);
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
        out.push_back(jitter_point(cx + r * rho * std::cos(a), cy + r * rho * std::sin(a), r * z,
                                   sigma, rng));
    }
}

/// Horizontal seat slab plus a vertical back slab along one edge.
inline void sample_l_bracket(std::vector<Vec3f>& out, std::size_t n, double cx, double cy,
                             double w, double d, double h, double sigma, Rng& rng) {
    const double seat_t = 0.12 * h + 0.05;
    const double back_t = 0.15 * d;
    const std::size_t n_seat = n / 2;
    sample_cuboid(out, n_seat, cx, cy, 0.0, w, d, seat_t, sigma, rng);
    // back rises along the y- edge of the seat
    sample_cuboid(out, n - n_seat, cx, cy - d / 2 + back_t / 2, 0.0, w, back_t, h, sigma, rng);
}

} // namespace detail

/// Builds one scene: instance ids 1..N for objects, 0 for floor/wall
/// background. Ground-truth boxes are the exact bounds of each instance's
/// points. Deterministic for a given (config, scene_id, seed).
inline SceneRecord synth_scene(const SynthConfig& cfg, const std::string& scene_id,
                               std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);

    SceneRecord scene;
    scene.scene_id = scene_id;
    const double margin = 0.55;
    const double lo = margin, hi = cfg.room_size - margin;

    for (std::size_t i = 0; i < cfg.objects_per_scene; ++i) {
        const std::uint32_t instance_id = static_cast<std::uint32_t>(i + 1);
        const std::uint32_t class_id = static_cast<std::uint32_t>(i % cfg.classes.size());
        const std::string& shape = cfg.classes[class_id];
        const double cx = rng.uniform(lo, hi), cy = rng.uniform(lo, hi);
        const double yaw = rng.uniform(0.0, 6.283185307179586);

        std::vector<Vec3f> pts;
        pts.reserve(cfg.points_per_object);
        if (shape == "box") {
            detail::sample_cuboid(pts, cfg.points_per_object, cx, cy, 0.0,
                                  rng.uniform(0.35, 0.8), rng.uniform(0.35, 0.8),
                                  rng.uniform(0.25, 0.7), cfg.noise_sigma, rng);
        } else if (shape == "cylinder") {
            detail::sample_cylinder(pts, cfg.points_per_object, cx, cy, rng.uniform(0.15, 0.35),
                                    rng.uniform(0.35, 0.9), cfg.noise_sigma, rng);
        } else if (shape == "sphere-cap") {
            detail::sample_sphere_cap(pts, cfg.points_per_object, cx, cy, rng.uniform(0.2, 0.45),
                                      cfg.noise_sigma, rng);
        } else { // l-bracket
            detail::sample_l_bracket(pts, cfg.points_per_object, cx, cy, rng.uniform(0.35, 0.7),
                                     rng.uniform(0.4, 0.7), rng.uniform(0.45, 0.9),
                                     cfg.noise_sigma, rng);
        }
        for (auto& p : pts) p = detail::yaw_about(p, cx, cy, yaw);

        InstanceInfo info;
        info.instance_id = instance_id;
        info.class_id = class_id;
        info.box = Aabb::of_points(pts);
        const Vec3d pad = info.box.extent() * cfg.box_padding;
        info.box.min = info.box.min - pad;
        info.box.max = info.box.max + pad;
        scene.instances.push_back(info);
        for (const auto& p : pts) {
            scene.points.push_back(p);
            scene.instance_ids.push_back(instance_id);
        }
    }

    const auto add_background = [&](std::size_t n, auto&& make_point) {
        for (std::size_t i = 0; i < n; ++i) {
            scene.points.push_back(make_point());
            scene.instance_ids.push_back(0);
        }
    };
    const auto floor_n =
        static_cast<std::size_t>(cfg.background_density * cfg.room_size * cfg.room_size);
    add_background(floor_n, [&] {
        return detail::jitter_point(rng.uniform(0.0, cfg.room_size),
                                    rng.uniform(0.0, cfg.room_size), 0.0, cfg.noise_sigma, rng);
    });
    if (cfg.walls) {
        const auto wall_n =
            static_cast<std::size_t>(cfg.background_density * cfg.room_size * cfg.wall_height);
        add_background(wall_n, [&] {
            return detail::jitter_point(0.0, rng.uniform(0.0, cfg.room_size),
                                        rng.uniform(0.0, cfg.wall_height), cfg.noise_sigma, rng);
        });
        add_background(wall_n, [&] {
            return detail::jitter_point(rng.uniform(0.0, cfg.room_size), 0.0,
                                        rng.uniform(0.0, cfg.wall_height), cfg.noise_sigma, rng);
        });
    }

    scene.validate();
    return scene;
}

/// A batch of scenes with ids synth_0000, synth_0001, ... and per-scene
/// derived seeds.
inline std::vector<SceneRecord> synth_scenes(const SynthConfig& cfg, std::size_t count,
                                             std::uint64_t global_seed) {
    const SeedSpec seeds{global_seed};
    std::vector<SceneRecord> scenes;
    scenes.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "synth_%04zu", i);
        scenes.push_back(synth_scene(cfg, name, seeds.derive("synth-scene", i)));
    }
    return scenes;
}

} // namespace cloudclass::pipeline
