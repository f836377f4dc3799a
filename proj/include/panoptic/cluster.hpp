#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "panoptic/core/matrix.hpp"
#include "panoptic/model.hpp"

namespace panoptic::cluster {

struct ClusterParams {
    double bandwidth = 0.6;   // mean-shift flat-kernel radius (embedding units)
    double th_d = 0.18;       // connected-components distance threshold (m)
    std::size_t th_n = 10;    // minimum instance size (strictly greater survives)
    std::size_t max_iter = 300;
    double tol = 1e-3;        // stop when the shift drops below tol * bandwidth
};

/// Flat-kernel mean-shift with bin seeding: one seed per occupied
/// bandwidth-cell, started at the cell's point mean. Converged modes closer
/// than the bandwidth are merged (higher support wins, ties to the lower
/// seed index) and every point joins its nearest surviving mode. Labels are
/// dense starting at 0. The algorithm is deterministic; `seed` is accepted
/// for interface stability and unused.
std::vector<int> mean_shift(const Matrix& points, double bandwidth, std::size_t max_iter, double tol,
                            std::uint64_t seed, unsigned threads = 0);

/// Connected components over the graph linking same-semantic points whose
/// shifted coordinates are closer than th_d. Components with th_n or fewer
/// points get -1; the rest are labeled densely in order of their smallest
/// member index.
std::vector<int> connected_components(std::span<const Vec3> shifted, std::span<const int> semantic, double th_d,
                                      std::size_t th_n);

/// Elementwise positions + offsets.
std::vector<Vec3> shift_coordinates(std::span<const Vec3> positions, std::span<const Vec3> offsets);

} // namespace panoptic::cluster
