#include "panoptic/bench.hpp"

#include <chrono>
#include <cmath>
#include <vector>

#include "panoptic/cluster.hpp"
#include "panoptic/core/rng.hpp"
#include "panoptic/merge.hpp"
#include "panoptic/model.hpp"
#include "panoptic/sampling.hpp"

namespace panoptic::bench {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

Result run(std::size_t n_points, std::uint64_t seed, unsigned threads) {
    constexpr std::size_t kEmbDim = 5;
    constexpr double kBandwidth = 0.6;
    constexpr double kEmbSep = 2.4;
    constexpr double kThD = 0.18;
    constexpr std::size_t kThN = 10;
    constexpr int kClasses = 5;

    Result result;
    result.points = n_points;
    const std::size_t n_instances = std::max<std::size_t>(8, n_points / 500);
    const std::size_t per_instance = std::max<std::size_t>(1, n_points / n_instances);
    n_points = n_instances * per_instance;
    result.points = n_points;

    // Blob-per-instance workload: positions around grid centers, embeddings
    // around lattice codes, offsets pointing at the centers, all lightly
    // noised so grid cells hold realistic point counts.
    Rng rng(seed);
    const auto side = static_cast<std::size_t>(std::ceil(std::cbrt(static_cast<double>(n_instances))));
    std::vector<Vec3> positions(n_points);
    std::vector<Vec3> shifted(n_points);
    std::vector<int> semantic(n_points);
    std::vector<int> gt_instance(n_points);
    Matrix embeddings(n_points, kEmbDim);

    std::size_t base = 2;
    while (std::pow(static_cast<double>(base), static_cast<double>(kEmbDim)) < static_cast<double>(n_instances))
        ++base;
    std::size_t p = 0;
    for (std::size_t inst = 0; inst < n_instances; ++inst) {
        const Vec3 center{4.0 * static_cast<double>(inst % side), 4.0 * static_cast<double>((inst / side) % side),
                          4.0 * static_cast<double>(inst / (side * side))};
        const int cls = static_cast<int>(inst % kClasses);
        for (std::size_t j = 0; j < per_instance; ++j, ++p) {
            positions[p] = center + Vec3{rng.normal(0.0, 0.5), rng.normal(0.0, 0.5), rng.normal(0.0, 0.3)};
            shifted[p] = center + Vec3{rng.normal(0.0, 0.02), rng.normal(0.0, 0.02), rng.normal(0.0, 0.02)};
            semantic[p] = cls;
            gt_instance[p] = static_cast<int>(inst);
            auto row = embeddings.row(p);
            std::size_t v = inst;
            for (std::size_t d = 0; d < kEmbDim; ++d) {
                row[d] = static_cast<double>(v % base) * kEmbSep + rng.normal(0.0, 0.05);
                v /= base;
            }
        }
    }

    {
        const auto start = std::chrono::steady_clock::now();
        // Per-class mean-shift, as the pipeline runs it.
        for (int cls = 0; cls < kClasses; ++cls) {
            std::vector<std::size_t> rows;
            for (std::size_t i = 0; i < n_points; ++i)
                if (semantic[i] == cls) rows.push_back(i);
            Matrix emb(rows.size(), kEmbDim);
            for (std::size_t r = 0; r < rows.size(); ++r) {
                const auto src = embeddings.row(rows[r]);
                std::copy(src.begin(), src.end(), emb.row(r).begin());
            }
            volatile int sink = cluster::mean_shift(emb, kBandwidth, 300, 1e-3, seed, threads).back();
            (void)sink;
        }
        result.embed_seconds = seconds_since(start);
    }

    {
        const auto start = std::chrono::steady_clock::now();
        volatile int sink = cluster::connected_components(shifted, semantic, kThD, kThN).back();
        (void)sink;
        result.offset_seconds = seconds_since(start);
    }

    {
        PointCloud cloud;
        cloud.positions = positions;
        const auto spheres = sampling::tile_spheres(cloud, 8.0, 8.0, 3, threads);
        std::vector<std::vector<int>> locals(spheres.size());
        for (std::size_t s = 0; s < spheres.size(); ++s) {
            locals[s].reserve(spheres[s].point_indices.size());
            for (std::uint32_t idx : spheres[s].point_indices) locals[s].push_back(gt_instance[idx]);
        }
        merge::FusionAccumulator acc(n_points, 1);
        const auto start = std::chrono::steady_clock::now();
        for (std::size_t s = 0; s < spheres.size(); ++s)
            merge::block_merge(acc, spheres[s].point_indices, locals[s], 0.01);
        result.merge_seconds = seconds_since(start);
    }

    return result;
}

} // namespace panoptic::bench
