#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cloudclass/core/binary_io.hpp"
#include "cloudclass/core/types.hpp"

namespace cloudclass::pipeline {

struct InstanceInfo {
    std::uint32_t instance_id = 0;
    std::uint32_t class_id = 0;
    Aabb box;

    friend bool operator==(const InstanceInfo&, const InstanceInfo&) = default;
};

/// A labeled scene: world-frame points, a per-point instance channel
/// (0 = background), and per-instance class + ground-truth box. Scenes are
/// ingested z-up; the gravity axis is +z throughout.
struct SceneRecord {
    std::string scene_id;
    std::vector<Vec3f> points;
    std::vector<std::uint32_t> instance_ids;
    std::vector<InstanceInfo> instances; // ascending instance_id

    friend bool operator==(const SceneRecord&, const SceneRecord&) = default;

    const InstanceInfo& instance(std::uint32_t id) const {
        for (const auto& info : instances)
            if (info.instance_id == id) return info;
        throw ValidationError("scene '" + scene_id + "' has no instance " + std::to_string(id));
    }

    std::size_t instance_point_count(std::uint32_t id) const {
        return static_cast<std::size_t>(std::count(instance_ids.begin(), instance_ids.end(), id));
    }

    void validate() const {
        if (instance_ids.size() != points.size())
            throw ValidationError("scene '" + scene_id + "': instance channel length mismatch");
        for (const auto& p : points)
            if (!p.finite()) throw ValidationError("scene '" + scene_id + "': non-finite point");
        for (const auto& info : instances) {
            if (info.instance_id == 0)
                throw ValidationError("instance id 0 is reserved for background");
            if (!info.box.valid())
                throw ValidationError("scene '" + scene_id + "': invalid instance box");
            std::size_t count = 0;
            for (std::size_t i = 0; i < points.size(); ++i) {
                if (instance_ids[i] != info.instance_id) continue;
                ++count;
                if (!info.box.contains(points[i].cast<double>()))
                    throw ValidationError("scene '" + scene_id + "': instance " +
                                          std::to_string(info.instance_id) +
                                          " has points outside its box");
            }
            if (count == 0)
                throw ValidationError("scene '" + scene_id + "': instance " +
                                      std::to_string(info.instance_id) + " has no points");
        }
        for (std::size_t i = 1; i < instances.size(); ++i)
            if (instances[i - 1].instance_id >= instances[i].instance_id)
                throw ValidationError("instance table must be sorted by ascending id");
    }
};

// Scene files extend the SOBN layout with an instance-id channel:
//   <scene_id>.sobs            magic "SOBS" | version u32 = 1 | point_count u32
//                              | flags u32 (bit0: instance channel)
//                              | xyz float32 interleaved | instance ids u32
//   <scene_id>.instances.jsonl one JSON object per instance:
//                              {"instance_id": N, "class": NAME,
//                               "box_min": [x,y,z], "box_max": [x,y,z]}
// classes.json in the scene directory fixes the class table:
//   {"classes": [NAME, ...]}
inline constexpr std::uint32_t kSobsVersion = 1;
inline constexpr std::uint32_t kSobsFlagInstances = 1u << 0;

inline void write_scene(const SceneRecord& scene, const ClassTable& table,
                        const std::filesystem::path& dir) {
    scene.validate();
    ByteWriter w;
    w.bytes("SOBS", 4);
    w.u32(kSobsVersion);
    w.u32(static_cast<std::uint32_t>(scene.points.size()));
    w.u32(kSobsFlagInstances);
    for (const auto& p : scene.points) {
        w.f32(p.x);
        w.f32(p.y);
        w.f32(p.z);
    }
    for (std::uint32_t id : scene.instance_ids) w.u32(id);
    w.save(dir / (scene.scene_id + ".sobs"));

    std::ofstream jf(dir / (scene.scene_id + ".instances.jsonl"), std::ios::binary);
    if (!jf) throw IoError("cannot write instance table for scene '" + scene.scene_id + "'");
    for (const auto& info : scene.instances) {
        nlohmann::json j;
        j["instance_id"] = info.instance_id;
        j["class"] = table.name_of(info.class_id);
        j["box_min"] = {info.box.min.x, info.box.min.y, info.box.min.z};
        j["box_max"] = {info.box.max.x, info.box.max.y, info.box.max.z};
        jf << j.dump() << '\n';
    }
}

inline SceneRecord read_scene(const std::filesystem::path& sobs_path, const ClassTable& table) {
    SceneRecord scene;
    scene.scene_id = sobs_path.stem().string();

    ByteReader r = ByteReader::from_file(sobs_path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string_view(magic, 4) != "SOBS") throw FormatError("bad SOBS magic", 0);
    if (const auto version = r.u32(); version != kSobsVersion)
        throw FormatError("unsupported SOBS version " + std::to_string(version), 4);
    const std::uint32_t count = r.u32();
    const std::uint32_t flags = r.u32();
    scene.points.resize(count);
    for (auto& p : scene.points) {
        p.x = r.f32();
        p.y = r.f32();
        p.z = r.f32();
    }
    if (flags & kSobsFlagInstances) {
        scene.instance_ids.resize(count);
        for (auto& id : scene.instance_ids) id = r.u32();
    } else {
        scene.instance_ids.assign(count, 0);
    }
    r.expect_end("SOBS payload");

    const auto jsonl = sobs_path.parent_path() / (scene.scene_id + ".instances.jsonl");
    std::ifstream jf(jsonl, std::ios::binary);
    if (!jf) throw IoError("missing instance table '" + jsonl.string() + "'");
    std::string line;
    while (std::getline(jf, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        InstanceInfo info;
        info.instance_id = j.at("instance_id").get<std::uint32_t>();
        info.class_id = table.id_of(j.at("class").get<std::string>());
        const auto& bmin = j.at("box_min");
        const auto& bmax = j.at("box_max");
        info.box.min = {bmin[0].get<double>(), bmin[1].get<double>(), bmin[2].get<double>()};
        info.box.max = {bmax[0].get<double>(), bmax[1].get<double>(), bmax[2].get<double>()};
        scene.instances.push_back(info);
    }
    std::sort(scene.instances.begin(), scene.instances.end(),
              [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
    scene.validate();
    return scene;
}

inline void write_class_table(const ClassTable& table, const std::filesystem::path& dir) {
    nlohmann::json j;
    j["classes"] = table.names();
    std::ofstream f(dir / "classes.json", std::ios::binary);
    if (!f) throw IoError("cannot write classes.json");
    f << j.dump(2) << '\n';
}

inline ClassTable read_class_table(const std::filesystem::path& dir) {
    std::ifstream f(dir / "classes.json", std::ios::binary);
    if (!f) throw IoError("missing '" + (dir / "classes.json").string() + "'");
    const auto j = nlohmann::json::parse(f);
    return ClassTable(j.at("classes").get<std::vector<std::string>>());
}

/// Loads every *.sobs scene in a directory, sorted by scene id.
inline std::vector<SceneRecord> read_scene_dir(const std::filesystem::path& dir,
                                               const ClassTable& table) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.path().extension() == ".sobs") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::vector<SceneRecord> scenes;
    for (const auto& f : files) scenes.push_back(read_scene(f, table));
    if (scenes.empty()) throw ValidationError("no .sobs scenes in '" + dir.string() + "'");
    return scenes;
}

} // namespace cloudclass::pipeline
