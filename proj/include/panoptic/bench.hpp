#pragma once

#include <cstddef>
#include <cstdint>

namespace panoptic::bench {

/// Stage timings on a synthetic things-only workload of `n_points` points
/// spread over ~n_points/500 instances, lightly noised. Clustering runs
/// single-threaded unless threads says otherwise; seconds are normalized per
/// million points.
struct Result {
    std::size_t points = 0;
    double embed_seconds = 0.0;
    double offset_seconds = 0.0;
    double merge_seconds = 0.0;

    double embed_sec_per_million() const { return embed_seconds * 1e6 / static_cast<double>(points); }
    double offset_sec_per_million() const { return offset_seconds * 1e6 / static_cast<double>(points); }
    double merge_sec_per_million() const { return merge_seconds * 1e6 / static_cast<double>(points); }
};

Result run(std::size_t n_points, std::uint64_t seed, unsigned threads = 1);

} // namespace panoptic::bench
