#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cloudclass/core/rng.hpp"
#include "cloudclass/core/types.hpp"

namespace testutil {

/// Unique temp directory, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("cloudclass_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }

    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

inline cloudclass::ObjectInstance random_object(std::uint64_t seed, std::size_t count,
                                                std::uint32_t num_classes = 15) {
    cloudclass::Rng rng(seed);
    cloudclass::ObjectInstance obj;
    obj.scene_id = "scene_" + std::to_string(seed % 7);
    obj.class_id = static_cast<std::uint32_t>(rng.below(num_classes));
    obj.cloud.points.resize(count);
    obj.mask.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        obj.cloud.points[i] = {static_cast<float>(rng.uniform(-2, 2)),
                               static_cast<float>(rng.uniform(-2, 2)),
                               static_cast<float>(rng.uniform(-2, 2))};
        obj.mask[i] = rng.uniform() < 0.7 ? 1 : 0;
    }
    obj.mask[0] = 1; // keep at least one foreground point
    return obj;
}

inline std::vector<cloudclass::Vec3f> random_points(std::uint64_t seed, std::size_t count,
                                                    double lo = -1.0, double hi = 1.0) {
    cloudclass::Rng rng(seed);
    std::vector<cloudclass::Vec3f> pts(count);
    for (auto& p : pts)
        p = {static_cast<float>(rng.uniform(lo, hi)), static_cast<float>(rng.uniform(lo, hi)),
             static_cast<float>(rng.uniform(lo, hi))};
    return pts;
}

} // namespace testutil
