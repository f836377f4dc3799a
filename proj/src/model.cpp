#include "panoptic/model.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace panoptic {

bool Taxonomy::valid() const {
    if (class_names.empty() || stuff_mask.size() != class_names.size()) return false;
    if (ignore_label && *ignore_label >= 0 && static_cast<std::size_t>(*ignore_label) < num_classes()) return false;
    return true;
}

std::pair<std::vector<int>, int> canonicalize_ids(std::vector<int> ids) {
    std::unordered_map<int, int> remap;
    remap.reserve(ids.size());
    int next = 0;
    for (int& id : ids) {
        if (id == kNoInstance) continue;
        auto [it, inserted] = remap.try_emplace(id, next);
        if (inserted) ++next;
        id = it->second;
    }
    return {std::move(ids), next};
}

std::pair<PointCloud, int> canonicalize_instances(PointCloud cloud) {
    if (!cloud.instance) throw std::invalid_argument("canonicalize_instances: cloud has no instance array");
    auto [ids, count] = canonicalize_ids(std::move(*cloud.instance));
    cloud.instance = std::move(ids);
    return {std::move(cloud), count};
}

namespace {

void check_length(ValidationReport& report, std::size_t got, std::size_t expected, const char* what) {
    if (got != expected) {
        report.push_back({Violation::Kind::length_mismatch, Violation::npos,
                          std::string(what) + " length " + std::to_string(got) + " != point count " +
                              std::to_string(expected)});
    }
}

} // namespace

ValidationReport validate(const PointCloud& cloud, const Taxonomy& taxonomy) {
    ValidationReport report;
    const std::size_t n = cloud.size();

    if (cloud.colors) check_length(report, cloud.colors->size(), n, "colors");
    if (cloud.semantic) check_length(report, cloud.semantic->size(), n, "semantic");
    if (cloud.instance) check_length(report, cloud.instance->size(), n, "instance");

    for (std::size_t i = 0; i < n; ++i) {
        if (!cloud.positions[i].finite())
            report.push_back(
                {Violation::Kind::non_finite_position, i, "non-finite position at point " + std::to_string(i)});
    }

    if (cloud.semantic && cloud.semantic->size() == n) {
        const int c = static_cast<int>(taxonomy.num_classes());
        for (std::size_t i = 0; i < n; ++i) {
            const int label = (*cloud.semantic)[i];
            if (taxonomy.is_ignored(label)) continue;
            if (label < 0 || label >= c)
                report.push_back({Violation::Kind::label_out_of_range, i,
                                  "semantic label " + std::to_string(label) + " out of range at point " +
                                      std::to_string(i)});
        }
    }

    if (cloud.instance && cloud.instance->size() == n) {
        for (std::size_t i = 0; i < n; ++i) {
            if ((*cloud.instance)[i] < kNoInstance)
                report.push_back({Violation::Kind::bad_instance_id, i,
                                  "instance id " + std::to_string((*cloud.instance)[i]) + " at point " +
                                      std::to_string(i)});
        }
    }

    return report;
}

ValidationReport validate(const PredictionSet& preds, std::size_t expected_points) {
    ValidationReport report;
    if (!preds.has_probs() && !preds.has_embeddings() && !preds.has_offsets()) {
        report.push_back({Violation::Kind::empty_prediction, Violation::npos, "prediction set has no arrays"});
        return report;
    }

    const std::size_t n = preds.size();
    if (expected_points != 0 && n != expected_points) {
        report.push_back({Violation::Kind::length_mismatch, Violation::npos,
                          "prediction point count " + std::to_string(n) + " != cloud point count " +
                              std::to_string(expected_points)});
    }
    if (preds.class_probs && preds.class_probs->rows() != n)
        check_length(report, preds.class_probs->rows(), n, "class_probs");
    if (preds.embeddings && preds.embeddings->rows() != n) check_length(report, preds.embeddings->rows(), n, "embeddings");
    if (preds.offsets && preds.offsets->size() != n) check_length(report, preds.offsets->size(), n, "offsets");

    if (preds.class_probs && preds.class_probs->rows() == n) {
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            bool in_range = true;
            for (double p : preds.class_probs->row(i)) {
                sum += p;
                in_range = in_range && p >= 0.0 && p <= 1.0;
            }
            if (!in_range || std::abs(sum - 1.0) > 1e-4)
                report.push_back({Violation::Kind::bad_probability_row, i,
                                  "probability row " + std::to_string(i) + " sums to " + std::to_string(sum)});
        }
    }
    return report;
}

} // namespace panoptic
