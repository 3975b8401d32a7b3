#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cloudclass/core/error.hpp"

namespace cloudclass::bench {

/// Confusion matrix (rows = ground truth, cols = predicted) with the derived
/// accuracies, all in percent. mask_accuracy is absent for models without a
/// segmentation branch.
struct Metrics {
    std::vector<std::string> class_names;
    std::vector<std::uint64_t> confusion; // C*C row-major
    double overall_accuracy = 0.0;
    double mean_class_accuracy = 0.0;
    std::optional<double> mask_accuracy;
    std::uint64_t object_count = 0;
    std::uint64_t excluded_count = 0; // cross-evaluation: objects without a class mapping
    std::vector<std::string> absent_classes;

    friend bool operator==(const Metrics&, const Metrics&) = default;

    std::size_t num_classes() const { return class_names.size(); }

    std::uint64_t at(std::size_t gt, std::size_t pred) const {
        return confusion[gt * num_classes() + pred];
    }
};

/// OA = correct / total; mAcc = unweighted mean recall over classes with at
/// least one ground-truth sample (absent classes are listed, not averaged).
inline Metrics compute_metrics(const std::vector<std::string>& class_names,
                               std::span<const std::uint32_t> labels,
                               std::span<const std::uint32_t> predictions,
                               std::optional<std::pair<std::uint64_t, std::uint64_t>>
                                   mask_correct_total = std::nullopt,
                               std::uint64_t excluded = 0) {
    if (labels.size() != predictions.size())
        throw ValidationError("metrics: one prediction per label required");
    if (labels.empty()) throw ValidationError("metrics: empty evaluation set");
    const std::size_t c = class_names.size();

    Metrics m;
    m.class_names = class_names;
    m.confusion.assign(c * c, 0);
    m.object_count = labels.size();
    m.excluded_count = excluded;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= c)
            throw ValidationError("metrics: label " + std::to_string(labels[i]) +
                                  " outside the class table");
        if (predictions[i] >= c)
            throw ValidationError("metrics: prediction outside the class table");
        ++m.confusion[labels[i] * c + predictions[i]];
    }

    std::uint64_t correct = 0;
    double recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t g = 0; g < c; ++g) {
        std::uint64_t row = 0;
        for (std::size_t p = 0; p < c; ++p) row += m.confusion[g * c + p];
        correct += m.confusion[g * c + g];
        if (row == 0) {
            m.absent_classes.push_back(class_names[g]);
            continue;
        }
        recall_sum += static_cast<double>(m.confusion[g * c + g]) / static_cast<double>(row);
        ++present;
    }
    m.overall_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
    m.mean_class_accuracy = present ? 100.0 * recall_sum / static_cast<double>(present) : 0.0;
    if (mask_correct_total) {
        if (mask_correct_total->second == 0)
            throw ValidationError("metrics: mask accuracy over zero points");
        m.mask_accuracy = 100.0 * static_cast<double>(mask_correct_total->first) /
                          static_cast<double>(mask_correct_total->second);
    }
    return m;
}

inline nlohmann::json to_json(const Metrics& m) {
    nlohmann::json j;
    j["class_names"] = m.class_names;
    j["overall_accuracy"] = m.overall_accuracy;
    j["mean_class_accuracy"] = m.mean_class_accuracy;
    j["mask_accuracy"] = m.mask_accuracy ? nlohmann::json(*m.mask_accuracy) : nlohmann::json();
    j["object_count"] = m.object_count;
    j["excluded_count"] = m.excluded_count;
    j["absent_classes"] = m.absent_classes;
    const std::size_t c = m.num_classes();
    auto rows = nlohmann::json::array();
    for (std::size_t g = 0; g < c; ++g) {
        auto row = nlohmann::json::array();
        for (std::size_t p = 0; p < c; ++p) row.push_back(m.confusion[g * c + p]);
        rows.push_back(row);
    }
    j["confusion"] = rows;
    return j;
}

inline Metrics metrics_from_json(const nlohmann::json& j) {
    Metrics m;
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.overall_accuracy = j.at("overall_accuracy").get<double>();
    m.mean_class_accuracy = j.at("mean_class_accuracy").get<double>();
    if (!j.at("mask_accuracy").is_null()) m.mask_accuracy = j.at("mask_accuracy").get<double>();
    m.object_count = j.at("object_count").get<std::uint64_t>();
    m.excluded_count = j.at("excluded_count").get<std::uint64_t>();
    m.absent_classes = j.at("absent_classes").get<std::vector<std::string>>();
    const std::size_t c = m.class_names.size();
    m.confusion.assign(c * c, 0);
    for (std::size_t g = 0; g < c; ++g)
        for (std::size_t p = 0; p < c; ++p)
            m.confusion[g * c + p] = j.at("confusion").at(g).at(p).get<std::uint64_t>();
    return m;
}

/// confusion.csv: header row/column carry class names; rows are ground
/// truth, columns predictions.
inline void write_confusion_csv(const Metrics& m, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << "gt\\pred";
    for (const auto& name : m.class_names) f << ',' << name;
    f << '\n';
    const std::size_t c = m.num_classes();
    for (std::size_t g = 0; g < c; ++g) {
        f << m.class_names[g];
        for (std::size_t p = 0; p < c; ++p) f << ',' << m.confusion[g * c + p];
        f << '\n';
    }
}

} // namespace cloudclass::bench
