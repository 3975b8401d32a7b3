#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "cloudclass/core/binary_io.hpp"
#include "cloudclass/core/error.hpp"

namespace cloudclass {

// SOBW checkpoint, little-endian:
//   magic "SOBW" | version u32 = 1 | parameter count u32
//   per parameter: name (u32 length + UTF-8 bytes) | rank u32 | dims u32 each
//                  | row-major float32 values
inline constexpr std::uint32_t kSobwVersion = 1;

struct NamedArray {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::vector<float> values;

    friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

inline void write_checkpoint(const std::vector<NamedArray>& params,
                             const std::filesystem::path& path) {
    std::set<std::string_view> names;
    ByteWriter w;
    w.bytes("SOBW", 4);
    w.u32(kSobwVersion);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        if (!names.insert(p.name).second)
            throw ValidationError("duplicate parameter name '" + p.name + "'");
        std::size_t numel = 1;
        for (std::uint32_t d : p.shape) numel *= d;
        if (numel != p.values.size())
            throw ValidationError("parameter '" + p.name + "' shape does not match value count");
        w.str(p.name);
        w.u32(static_cast<std::uint32_t>(p.shape.size()));
        for (std::uint32_t d : p.shape) w.u32(d);
        for (float v : p.values) w.f32(v);
    }
    w.save(path);
}

inline std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
    ByteReader r = ByteReader::from_file(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string_view(magic, 4) != "SOBW") throw FormatError("bad SOBW magic", 0);
    const std::uint32_t version = r.u32();
    if (version != kSobwVersion)
        throw FormatError("unsupported SOBW version " + std::to_string(version), 4);
    const std::uint32_t count = r.u32();
    std::vector<NamedArray> params(count);
    for (auto& p : params) {
        p.name = r.str();
        const std::uint32_t rank = r.u32();
        p.shape.resize(rank);
        std::size_t numel = 1;
        for (auto& d : p.shape) {
            d = r.u32();
            numel *= d;
        }
        p.values.resize(numel);
        for (auto& v : p.values) v = r.f32();
    }
    r.expect_end("SOBW payload");
    return params;
}

} // namespace cloudclass
