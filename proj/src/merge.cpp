#include "panoptic/merge.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace panoptic::merge {

void accumulate_probs(FusionAccumulator& acc, std::span<const std::uint32_t> sphere_indices,
                      const Matrix& sphere_probs) {
    if (sphere_probs.rows() != sphere_indices.size())
        throw std::invalid_argument("accumulate_probs: row count != index count");
    if (sphere_probs.cols() != acc.num_classes())
        throw std::invalid_argument("accumulate_probs: class count mismatch");

    for (std::size_t r = 0; r < sphere_indices.size(); ++r) {
        const std::uint32_t idx = sphere_indices[r];
        if (idx >= acc.num_points()) throw std::out_of_range("accumulate_probs: point index " + std::to_string(idx));
        auto dst = acc.prob_sum.row(idx);
        const auto src = sphere_probs.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        ++acc.count[idx];
    }
}

std::vector<int> finalize_semantics(const FusionAccumulator& acc) {
    const std::size_t n = acc.num_points();
    std::vector<int> semantic(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (acc.count[i] == 0)
            throw std::invalid_argument("finalize_semantics: point " + std::to_string(i) + " was never visited");
        const auto row = acc.prob_sum.row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c)
            if (row[c] > row[best]) best = c; // ties keep the lowest class
        semantic[i] = static_cast<int>(best);
    }
    return semantic;
}

void block_merge(FusionAccumulator& acc, std::span<const std::uint32_t> sphere_indices,
                 std::span<const int> local_instances, double th_bm) {
    if (sphere_indices.size() != local_instances.size())
        throw std::invalid_argument("block_merge: index/label length mismatch");

    // Bucket sphere rows per local instance, ascending id (std::map order).
    std::map<int, std::vector<std::uint32_t>> locals;
    for (std::size_t r = 0; r < sphere_indices.size(); ++r) {
        const int local = local_instances[r];
        if (local == kNoInstance) continue;
        const std::uint32_t idx = sphere_indices[r];
        if (idx >= acc.num_points()) throw std::out_of_range("block_merge: point index " + std::to_string(idx));
        locals[local].push_back(idx);
    }

    for (const auto& [local_id, points] : locals) {
        // IoU against each global instance present on the already-labeled
        // part of this local instance; |S(G)| counts points labeled so far.
        std::map<int, std::size_t> overlap;
        for (std::uint32_t idx : points) {
            const int g = acc.global_instance[idx];
            if (g != kNoInstance) ++overlap[acc.find_root(g)];
        }

        int best_global = kNoInstance;
        double best_iou = -1.0;
        std::vector<std::pair<int, double>> candidates;
        for (const auto& [g, inter] : overlap) {
            const std::size_t uni = acc.global_size[static_cast<std::size_t>(g)] + points.size() - inter;
            const double iou = static_cast<double>(inter) / static_cast<double>(uni);
            candidates.emplace_back(g, iou);
            if (iou > best_iou) { // std::map gives ascending g, ties keep the lower id
                best_iou = iou;
                best_global = g;
            }
        }

        int target;
        if (best_global != kNoInstance && best_iou >= th_bm) {
            target = best_global;
            // This local instance witnesses that every global it overlaps
            // beyond the threshold is the same object: unite them.
            for (const auto& [g, iou] : candidates) {
                if (g == target || iou < th_bm) continue;
                acc.id_parent[static_cast<std::size_t>(g)] = target;
                acc.global_size[static_cast<std::size_t>(target)] += acc.global_size[static_cast<std::size_t>(g)];
            }
        } else {
            target = acc.next_global_id++;
            acc.global_size.push_back(0);
            acc.id_parent.push_back(target);
        }
        for (std::uint32_t idx : points) {
            if (acc.global_instance[idx] == kNoInstance) { // first write wins
                acc.global_instance[idx] = target;
                ++acc.global_size[static_cast<std::size_t>(target)];
            }
        }
    }

    // Canonicalize stored ids so readers never see a merged-away alias.
    for (auto& g : acc.global_instance)
        if (g != kNoInstance) g = acc.find_root(g);
}

} // namespace panoptic::merge
