#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "panoptic/core/matrix.hpp"
#include "panoptic/model.hpp"

namespace panoptic::sampling {

/// One spherical neighborhood: its center, the member indices into the
/// source cloud, and the per-point K-dimensional input features (relative
/// coordinates first, then optional absolute z and RGB).
struct SphereBatch {
    Vec3 center;
    std::vector<std::uint32_t> point_indices;
    Matrix features;
};

struct AugmentConfig {
    double scale_amplitude = 0.1; // uniform scale in [1-a, 1+a]
    double jitter_sigma = 0.01;   // isotropic Gaussian noise (m)
    bool rotate = true;           // rotation about +Z, angle uniform in [0, 2pi)
};

/// Feature rows for `indices` relative to `center`. feature_dim selects the
/// layout: 3 = relative xyz, 4 = +absolute z, 6 = +rgb, 7 = +absolute z +rgb.
/// RGB layouts require the cloud to carry colors.
Matrix make_features(const PointCloud& cloud, std::span<const std::uint32_t> indices, const Vec3& center,
                     int feature_dim);

/// Keeps one uniformly chosen point per d^3 voxel. The grid is anchored at
/// the lattice-aligned bounding-box minimum, so running the operation twice
/// at the same d is a no-op. Returns the thinned cloud (labels carried
/// along) and the kept indices in ascending order.
std::pair<PointCloud, std::vector<std::uint32_t>> voxel_downsample(const PointCloud& cloud, double d,
                                                                   std::uint64_t seed);

/// Covers the cloud with radius-R spheres centered on a stride-s grid
/// anchored at the bounding-box minimum; empty spheres are dropped. Output
/// order is lexicographic by center. With s <= 2R/sqrt(3) every point lands
/// in at least one sphere.
std::vector<SphereBatch> tile_spheres(const PointCloud& cloud, double radius, double stride, int feature_dim = 3,
                                      unsigned threads = 0);

/// Training-style sphere: center drawn uniformly from the cloud's points.
SphereBatch sample_training_sphere(const PointCloud& cloud, double radius, std::uint64_t seed, int feature_dim = 3);

/// Random scale, rotation about +Z, Gaussian jitter; deterministic given
/// seed. Derived feature columns (absolute z) are refreshed, RGB is kept.
SphereBatch augment(SphereBatch batch, const AugmentConfig& config, std::uint64_t seed);

/// Exactly k rows: a uniform subset when the batch is larger, the batch plus
/// uniform duplicates when smaller.
SphereBatch resample_fixed_count(SphereBatch batch, std::size_t k, std::uint64_t seed);

/// Transfers labels from a subsampled cloud back to the full cloud by
/// nearest neighbor (ties to the lower sub index). Points whose nearest
/// neighbor carries no instance are rescued from the nearest labeled
/// same-class sub point within rescue_radius, if any.
SegmentationResult upsample_labels(const PointCloud& full_cloud, const PointCloud& sub_cloud,
                                   const SegmentationResult& sub_result, double rescue_radius, unsigned threads = 0);

} // namespace panoptic::sampling
