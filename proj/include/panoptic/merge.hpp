#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "panoptic/core/matrix.hpp"
#include "panoptic/model.hpp"

namespace panoptic::merge {

/// Running fusion state across overlapping spheres: per-point probability
/// sums with visit counts, and the growing global instance labeling.
/// Instance ids carry a union-find so block merging can reconcile two
/// existing globals once a later sphere proves they are one instance;
/// global_instance holds canonical ids after every block_merge call.
struct FusionAccumulator {
    Matrix prob_sum;                 // N x C
    std::vector<std::uint32_t> count; // visits per point
    std::vector<int> global_instance; // -1 until first labeled
    int next_global_id = 0;
    std::vector<std::size_t> global_size; // points currently carrying each root id
    std::vector<int> id_parent;           // union-find over allocated ids

    FusionAccumulator(std::size_t n_points, std::size_t n_classes)
        : prob_sum(n_points, n_classes), count(n_points, 0), global_instance(n_points, kNoInstance) {}

    std::size_t num_points() const { return count.size(); }
    std::size_t num_classes() const { return prob_sum.cols(); }

    int find_root(int id) {
        while (id_parent[static_cast<std::size_t>(id)] != id) {
            id_parent[static_cast<std::size_t>(id)] =
                id_parent[static_cast<std::size_t>(id_parent[static_cast<std::size_t>(id)])];
            id = id_parent[static_cast<std::size_t>(id)];
        }
        return id;
    }
};

/// Adds one sphere's class probabilities: prob_sum[idx] += probs row,
/// count[idx] += 1. Throws std::out_of_range on a bad index.
void accumulate_probs(FusionAccumulator& acc, std::span<const std::uint32_t> sphere_indices,
                      const Matrix& sphere_probs);

/// Per-point argmax over the averaged probabilities; ties go to the lowest
/// class index. Throws std::invalid_argument naming the first unvisited point.
std::vector<int> finalize_semantics(const FusionAccumulator& acc);

/// Reconciles one sphere's local instance ids into the global labeling.
/// Local instances are processed in ascending id order; each is merged into
/// the already-labeled global instance with the highest IoU when that IoU
/// reaches th_bm (ties to the lower global id), otherwise it founds a new
/// global id. Every other global whose IoU with the local instance also
/// reaches th_bm is united with the chosen one: the local instance is the
/// witness that both fragments belong to the same object. Points labeled by
/// an earlier sphere keep their (canonical) id; local -1 points are left
/// alone.
void block_merge(FusionAccumulator& acc, std::span<const std::uint32_t> sphere_indices,
                 std::span<const int> local_instances, double th_bm);

} // namespace panoptic::merge
