#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "cloudclass/core/error.hpp"

namespace cloudclass {

template <typename T>
struct Vec3 {
    T x{}, y{}, z{};

    friend bool operator==(const Vec3&, const Vec3&) = default;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }

    T dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    T norm2() const { return dot(*this); }
    T norm() const { return std::sqrt(norm2()); }

    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

    template <typename U>
    Vec3<U> cast() const {
        return {static_cast<U>(x), static_cast<U>(y), static_cast<U>(z)};
    }
};

using Vec3f = Vec3<float>;
using Vec3d = Vec3<double>;

/// Stored point type. Scanner precision is far coarser than float32 epsilon,
/// and the on-disk format is float32, so clouds keep float coordinates;
/// geometry math promotes to double where it matters.
using Point3 = Vec3f;

struct PointCloud {
    std::vector<Point3> points;

    std::size_t count() const { return points.size(); }
    bool empty() const { return points.empty(); }

    friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

/// Axis-aligned box, closed on both faces: min <= p <= max componentwise.
struct Aabb {
    Vec3d min{};
    Vec3d max{};

    friend bool operator==(const Aabb&, const Aabb&) = default;

    bool valid() const {
        return min.finite() && max.finite() && min.x <= max.x && min.y <= max.y && min.z <= max.z;
    }

    bool contains(const Vec3d& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y && p.z >= min.z &&
               p.z <= max.z;
    }

    Vec3d center() const { return (min + max) * 0.5; }
    Vec3d extent() const { return max - min; }

    void expand(const Vec3d& p) {
        min.x = std::min(min.x, p.x);
        min.y = std::min(min.y, p.y);
        min.z = std::min(min.z, p.z);
        max.x = std::max(max.x, p.x);
        max.y = std::max(max.y, p.y);
        max.z = std::max(max.z, p.z);
    }

    static Aabb empty_box() {
        const double inf = std::numeric_limits<double>::infinity();
        return {{inf, inf, inf}, {-inf, -inf, -inf}};
    }

    template <typename T>
    static Aabb of_points(const std::vector<Vec3<T>>& pts) {
        Aabb b = empty_box();
        for (const auto& p : pts) b.expand(p.template cast<double>());
        return b;
    }
};

/// The 15 scan categories, in their canonical id order.
inline constexpr std::array<std::string_view, 15> kScanCategories = {
    "bag",  "bed",    "bin",  "box",    "cabinet", "chair", "desk", "display",
    "door", "pillow", "shelf", "sink",  "sofa",    "table", "toilet"};

/// Fixed name<->id bijection for one dataset. Defaults to the 15 scan
/// categories; synthetic datasets install their own C-way table.
class ClassTable {
public:
    ClassTable() : names_(kScanCategories.begin(), kScanCategories.end()) {}

    explicit ClassTable(std::vector<std::string> names) : names_(std::move(names)) {
        if (names_.empty()) throw ValidationError("class table must not be empty");
        for (std::size_t i = 0; i < names_.size(); ++i)
            for (std::size_t j = i + 1; j < names_.size(); ++j)
                if (names_[i] == names_[j])
                    throw ValidationError("duplicate class name '" + names_[i] + "'");
    }

    std::uint32_t size() const { return static_cast<std::uint32_t>(names_.size()); }

    const std::string& name_of(std::uint32_t id) const {
        if (id >= names_.size())
            throw ValidationError("class id " + std::to_string(id) + " out of range");
        return names_[id];
    }

    std::uint32_t id_of(std::string_view name) const {
        for (std::size_t i = 0; i < names_.size(); ++i)
            if (names_[i] == name) return static_cast<std::uint32_t>(i);
        throw ValidationError("unknown class name '" + std::string(name) + "'");
    }

    const std::vector<std::string>& names() const { return names_; }

private:
    std::vector<std::string> names_;
};

enum class VariantTag : std::uint8_t {
    kObjOnly,
    kObjBg,
    kPbT25,
    kPbT25R,
    kPbT50R,
    kPbT50Rs,
};

inline constexpr std::array<std::pair<VariantTag, std::string_view>, 6> kVariantNames = {{
    {VariantTag::kObjOnly, "OBJ_ONLY"},
    {VariantTag::kObjBg, "OBJ_BG"},
    {VariantTag::kPbT25, "PB_T25"},
    {VariantTag::kPbT25R, "PB_T25_R"},
    {VariantTag::kPbT50R, "PB_T50_R"},
    {VariantTag::kPbT50Rs, "PB_T50_RS"},
}};

inline std::string_view variant_name(VariantTag tag) {
    for (const auto& [t, n] : kVariantNames)
        if (t == tag) return n;
    throw ValidationError("invalid variant tag");
}

inline VariantTag parse_variant(std::string_view name) {
    for (const auto& [t, n] : kVariantNames)
        if (n == name) return t;
    throw ValidationError("unknown variant '" + std::string(name) + "'");
}

inline bool is_perturbed(VariantTag tag) {
    return tag != VariantTag::kObjOnly && tag != VariantTag::kObjBg;
}

/// One labeled object: points, per-point foreground mask, provenance.
/// Immutable by convention once constructed; safe to share across workers.
struct ObjectInstance {
    PointCloud cloud;
    std::vector<std::uint8_t> mask; // 1 = foreground object, 0 = background
    std::uint32_t class_id = 0;
    std::string scene_id;
    VariantTag variant = VariantTag::kObjOnly;
    std::uint32_t sample_index = 0;

    friend bool operator==(const ObjectInstance&, const ObjectInstance&) = default;

    std::size_t foreground_count() const {
        return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
    }

    void validate() const {
        if (mask.size() != cloud.count())
            throw ValidationError("mask length " + std::to_string(mask.size()) +
                                  " != point count " + std::to_string(cloud.count()));
        for (const auto& p : cloud.points)
            if (!p.finite()) throw ValidationError("non-finite point coordinate");
        for (std::uint8_t m : mask)
            if (m > 1) throw ValidationError("mask values must be 0 or 1");
        if (foreground_count() == 0) throw ValidationError("object has no foreground points");
        if (sample_index >= 5) throw ValidationError("sample_index must be in [0,5)");
        if (!is_perturbed(variant) && sample_index != 0)
            throw ValidationError("unperturbed variants use sample_index 0");
    }
};

} // namespace cloudclass
