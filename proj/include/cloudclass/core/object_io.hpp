#pragma once

#include <filesystem>

#include "cloudclass/core/binary_io.hpp"
#include "cloudclass/core/types.hpp"

namespace cloudclass {

// SOBN object file, little-endian:
//   magic "SOBN" | version u32 = 1 | class_id u32 | point_count u32
//   | flags u32 (bit0: mask present) | sample_index u32
//   | point_count * 3 float32 (x,y,z interleaved)
//   | point_count mask bytes when flags bit0 is set
inline constexpr std::uint32_t kSobnVersion = 1;
inline constexpr std::uint32_t kSobnFlagMask = 1u << 0;

/// check_invariants = false relaxes the foreground-present rule; used when
/// exporting predicted masks, which may legitimately be all background.
inline void write_object(const ObjectInstance& obj, const std::filesystem::path& path,
                         bool check_invariants = true) {
    if (check_invariants) obj.validate();
    if (obj.mask.size() != obj.cloud.count())
        throw ValidationError("mask length does not match point count");
    ByteWriter w;
    w.bytes("SOBN", 4);
    w.u32(kSobnVersion);
    w.u32(obj.class_id);
    w.u32(static_cast<std::uint32_t>(obj.cloud.count()));
    w.u32(kSobnFlagMask);
    w.u32(obj.sample_index);
    for (const auto& p : obj.cloud.points) {
        w.f32(p.x);
        w.f32(p.y);
        w.f32(p.z);
    }
    for (std::uint8_t m : obj.mask) w.u8(m);
    w.save(path);
}

/// Scene id and variant live in the manifest, not in the file; pass them in
/// when reading under a manifest so the round trip reproduces the object.
inline ObjectInstance read_object(const std::filesystem::path& path, std::string scene_id = {},
                                  VariantTag variant = VariantTag::kObjOnly,
                                  bool check_invariants = true) {
    ByteReader r = ByteReader::from_file(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string_view(magic, 4) != "SOBN") throw FormatError("bad SOBN magic", 0);
    const std::uint32_t version = r.u32();
    if (version != kSobnVersion)
        throw FormatError("unsupported SOBN version " + std::to_string(version), 4);

    ObjectInstance obj;
    obj.scene_id = std::move(scene_id);
    obj.variant = variant;
    obj.class_id = r.u32();
    const std::uint32_t count = r.u32();
    const std::uint32_t flags = r.u32();
    obj.sample_index = r.u32();
    obj.cloud.points.resize(count);
    for (auto& p : obj.cloud.points) {
        p.x = r.f32();
        p.y = r.f32();
        p.z = r.f32();
    }
    if (flags & kSobnFlagMask) {
        obj.mask.resize(count);
        r.bytes(obj.mask.data(), count);
    } else {
        obj.mask.assign(count, std::uint8_t{1});
    }
    r.expect_end("SOBN payload");
    if (check_invariants) obj.validate();
    return obj;
}

} // namespace cloudclass
