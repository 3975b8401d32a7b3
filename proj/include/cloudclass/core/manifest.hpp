#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cloudclass/core/error.hpp"
#include "cloudclass/core/types.hpp"

namespace cloudclass {

enum class Split : std::uint8_t { kTrain, kTest };

inline std::string_view split_name(Split s) { return s == Split::kTrain ? "train" : "test"; }

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::kTrain;
    if (s == "test") return Split::kTest;
    throw ValidationError("unknown split '" + std::string(s) + "'");
}

struct ManifestEntry {
    std::string path; // relative to the manifest's directory
    std::string scene_id;
    std::uint32_t class_id = 0;
    VariantTag variant = VariantTag::kObjOnly;
    std::uint32_t sample_index = 0;
    Split split = Split::kTrain;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    friend bool operator==(const Manifest&, const Manifest&) = default;

    /// Paths unique; no scene id may appear in both splits.
    void validate() const {
        std::set<std::string_view> paths;
        std::set<std::string_view> train_scenes, test_scenes;
        for (const auto& e : entries) {
            if (!paths.insert(e.path).second)
                throw ValidationError("duplicate manifest path '" + e.path + "'");
            (e.split == Split::kTrain ? train_scenes : test_scenes).insert(e.scene_id);
        }
        for (auto scene : train_scenes)
            if (test_scenes.count(scene))
                throw ValidationError("scene '" + std::string(scene) +
                                      "' appears in both train and test splits");
    }

    std::vector<ManifestEntry> split_entries(Split s) const {
        std::vector<ManifestEntry> out;
        for (const auto& e : entries)
            if (e.split == s) out.push_back(e);
        return out;
    }

    std::set<std::string> scene_ids() const {
        std::set<std::string> ids;
        for (const auto& e : entries) ids.insert(e.scene_id);
        return ids;
    }
};

// Manifest text format, UTF-8, one entry per line:
//   path<TAB>scene_id<TAB>class_id<TAB>variant<TAB>sample_index<TAB>split
inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    m.validate();
    std::ostringstream out;
    for (const auto& e : m.entries) {
        out << e.path << '\t' << e.scene_id << '\t' << e.class_id << '\t'
            << variant_name(e.variant) << '\t' << e.sample_index << '\t' << split_name(e.split)
            << '\n';
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f << out.str();
    if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    Manifest m;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (std::size_t i = 0; i <= line.size(); ++i) {
            if (i == line.size() || line[i] == '\t') {
                fields.push_back(line.substr(start, i - start));
                start = i + 1;
            }
        }
        if (fields.size() != 6)
            throw ValidationError("manifest line " + std::to_string(lineno) + ": expected 6 fields, got " +
                                  std::to_string(fields.size()));
        ManifestEntry e;
        e.path = fields[0];
        e.scene_id = fields[1];
        try {
            e.class_id = static_cast<std::uint32_t>(std::stoul(fields[2]));
            e.sample_index = static_cast<std::uint32_t>(std::stoul(fields[4]));
        } catch (const std::exception&) {
            throw ValidationError("manifest line " + std::to_string(lineno) + ": bad integer field");
        }
        e.variant = parse_variant(fields[3]);
        e.split = parse_split(fields[5]);
        m.entries.push_back(std::move(e));
    }
    m.validate();
    return m;
}

} // namespace cloudclass
