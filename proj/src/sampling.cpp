#include "panoptic/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "panoptic/core/rng.hpp"
#include "panoptic/core/spatial.hpp"
#include "panoptic/core/threading.hpp"

namespace panoptic::sampling {

namespace {

PointCloud subset(const PointCloud& cloud, std::span<const std::uint32_t> indices) {
    PointCloud out;
    out.positions.reserve(indices.size());
    for (std::uint32_t i : indices) out.positions.push_back(cloud.positions[i]);
    if (cloud.colors) {
        out.colors.emplace();
        out.colors->reserve(indices.size());
        for (std::uint32_t i : indices) out.colors->push_back((*cloud.colors)[i]);
    }
    if (cloud.semantic) {
        out.semantic.emplace();
        out.semantic->reserve(indices.size());
        for (std::uint32_t i : indices) out.semantic->push_back((*cloud.semantic)[i]);
    }
    if (cloud.instance) {
        out.instance.emplace();
        out.instance->reserve(indices.size());
        for (std::uint32_t i : indices) out.instance->push_back((*cloud.instance)[i]);
    }
    return out;
}

} // namespace

Matrix make_features(const PointCloud& cloud, std::span<const std::uint32_t> indices, const Vec3& center,
                     int feature_dim) {
    const bool wants_abs_z = feature_dim == 4 || feature_dim == 7;
    const bool wants_rgb = feature_dim == 6 || feature_dim == 7;
    if (feature_dim != 3 && !wants_abs_z && !wants_rgb)
        throw std::invalid_argument("make_features: feature_dim must be 3, 4, 6 or 7");
    if (wants_rgb && !cloud.colors) throw std::invalid_argument("make_features: RGB features require colors");

    Matrix f(indices.size(), static_cast<std::size_t>(feature_dim));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const Vec3 rel = cloud.positions[indices[r]] - center;
        f(r, 0) = rel.x;
        f(r, 1) = rel.y;
        f(r, 2) = rel.z;
        std::size_t col = 3;
        if (wants_abs_z) f(r, col++) = cloud.positions[indices[r]].z;
        if (wants_rgb) {
            const Color& c = (*cloud.colors)[indices[r]];
            f(r, col++) = c[0];
            f(r, col++) = c[1];
            f(r, col++) = c[2];
        }
    }
    return f;
}

std::pair<PointCloud, std::vector<std::uint32_t>> voxel_downsample(const PointCloud& cloud, double d,
                                                                   std::uint64_t seed) {
    if (d <= 0.0) throw std::invalid_argument("voxel_downsample: d must be > 0");
    if (cloud.size() == 0) return {PointCloud{}, {}};

    const Aabb box = Aabb::of(cloud.positions);
    // Lattice-aligned anchor: keys are a pure function of the cloud and a
    // second pass at the same d reproduces the same partition.
    const Vec3 anchor{d * std::floor(box.min.x / d), d * std::floor(box.min.y / d), d * std::floor(box.min.z / d)};

    struct Slot {
        std::uint32_t chosen;
        std::uint32_t count;
    };
    struct Key {
        long long x, y, z;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const {
            std::uint64_t h = 0;
            h = detail::hash_mix(h, static_cast<std::uint64_t>(k.x));
            h = detail::hash_mix(h, static_cast<std::uint64_t>(k.y));
            h = detail::hash_mix(h, static_cast<std::uint64_t>(k.z));
            return static_cast<std::size_t>(h);
        }
    };

    Rng rng(seed);
    std::unordered_map<Key, Slot, KeyHash> voxels;
    voxels.reserve(cloud.size());
    for (std::uint32_t i = 0; i < cloud.size(); ++i) {
        const Vec3& p = cloud.positions[i];
        const Key key{static_cast<long long>(std::floor((p.x - anchor.x) / d)),
                      static_cast<long long>(std::floor((p.y - anchor.y) / d)),
                      static_cast<long long>(std::floor((p.z - anchor.z) / d))};
        auto [it, inserted] = voxels.try_emplace(key, Slot{i, 1});
        if (!inserted) {
            // Reservoir step keeps the selection uniform within the voxel.
            ++it->second.count;
            if (rng.below(it->second.count) == 0) it->second.chosen = i;
        }
    }

    std::vector<std::uint32_t> kept;
    kept.reserve(voxels.size());
    for (const auto& [key, slot] : voxels) kept.push_back(slot.chosen);
    std::sort(kept.begin(), kept.end());
    return {subset(cloud, kept), std::move(kept)};
}

std::vector<SphereBatch> tile_spheres(const PointCloud& cloud, double radius, double stride, int feature_dim,
                                      unsigned threads) {
    if (radius <= 0.0 || stride <= 0.0) throw std::invalid_argument("tile_spheres: radius and stride must be > 0");
    if (cloud.size() == 0) return {};

    const Aabb box = Aabb::of(cloud.positions);
    const auto steps = [&](double lo, double hi) {
        return static_cast<long long>(std::floor((hi - lo) / stride)) + 1;
    };
    const long long nx = steps(box.min.x, box.max.x);
    const long long ny = steps(box.min.y, box.max.y);
    const long long nz = steps(box.min.z, box.max.z);

    std::vector<Vec3> centers;
    centers.reserve(static_cast<std::size_t>(nx * ny * nz));
    for (long long ix = 0; ix <= nx; ++ix)
        for (long long iy = 0; iy <= ny; ++iy)
            for (long long iz = 0; iz <= nz; ++iz)
                centers.push_back({box.min.x + static_cast<double>(ix) * stride,
                                   box.min.y + static_cast<double>(iy) * stride,
                                   box.min.z + static_cast<double>(iz) * stride});

    const Grid3 grid(cloud.positions, radius);
    std::vector<std::vector<std::uint32_t>> members(centers.size());
    parallel_for(centers.size(), threads, [&](std::size_t c) {
        grid.for_each_in_radius(centers[c], radius, [&](std::uint32_t idx, double) { members[c].push_back(idx); });
        std::sort(members[c].begin(), members[c].end());
    });

    std::vector<SphereBatch> spheres;
    for (std::size_t c = 0; c < centers.size(); ++c) {
        if (members[c].empty()) continue;
        SphereBatch batch;
        batch.center = centers[c];
        batch.point_indices = std::move(members[c]);
        batch.features = make_features(cloud, batch.point_indices, batch.center, feature_dim);
        spheres.push_back(std::move(batch));
    }
    return spheres;
}

SphereBatch sample_training_sphere(const PointCloud& cloud, double radius, std::uint64_t seed, int feature_dim) {
    if (cloud.size() == 0) throw std::invalid_argument("sample_training_sphere: empty cloud");
    Rng rng(seed);
    const auto center_idx = static_cast<std::uint32_t>(rng.below(cloud.size()));

    SphereBatch batch;
    batch.center = cloud.positions[center_idx];
    const double r2 = radius * radius;
    for (std::uint32_t i = 0; i < cloud.size(); ++i)
        if (squared_distance(cloud.positions[i], batch.center) <= r2) batch.point_indices.push_back(i);
    batch.features = make_features(cloud, batch.point_indices, batch.center, feature_dim);
    return batch;
}

SphereBatch augment(SphereBatch batch, const AugmentConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    const double scale = rng.uniform(1.0 - config.scale_amplitude, 1.0 + config.scale_amplitude);
    const double angle = config.rotate ? rng.uniform(0.0, 2.0 * std::numbers::pi) : 0.0;
    const double c = std::cos(angle), s = std::sin(angle);

    const std::size_t dim = batch.features.cols();
    const bool has_abs_z = dim == 4 || dim == 7;
    for (std::size_t r = 0; r < batch.features.rows(); ++r) {
        auto row = batch.features.row(r);
        const double x = scale * row[0], y = scale * row[1], z = scale * row[2];
        row[0] = c * x - s * y + rng.normal(0.0, config.jitter_sigma);
        row[1] = s * x + c * y + rng.normal(0.0, config.jitter_sigma);
        row[2] = z + rng.normal(0.0, config.jitter_sigma);
        if (has_abs_z) row[3] = batch.center.z + row[2];
    }
    return batch;
}

SphereBatch resample_fixed_count(SphereBatch batch, std::size_t k, std::uint64_t seed) {
    const std::size_t n = batch.point_indices.size();
    if (n == 0) throw std::invalid_argument("resample_fixed_count: empty batch");
    if (k == 0) throw std::invalid_argument("resample_fixed_count: k must be >= 1");
    if (n == k) return batch;

    Rng rng(seed);
    std::vector<std::uint32_t> rows;
    if (n > k) {
        // Partial Fisher-Yates, then original order.
        std::vector<std::uint32_t> pool(n);
        for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
        for (std::size_t i = 0; i < k; ++i)
            std::swap(pool[i], pool[i + static_cast<std::size_t>(rng.below(n - i))]);
        rows.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
        std::sort(rows.begin(), rows.end());
    } else {
        rows.resize(n);
        for (std::uint32_t i = 0; i < n; ++i) rows[i] = i;
        for (std::size_t i = n; i < k; ++i) rows.push_back(static_cast<std::uint32_t>(rng.below(n)));
    }

    SphereBatch out;
    out.center = batch.center;
    out.point_indices.reserve(k);
    out.features = Matrix(k, batch.features.cols());
    for (std::size_t r = 0; r < k; ++r) {
        out.point_indices.push_back(batch.point_indices[rows[r]]);
        const auto src = batch.features.row(rows[r]);
        std::copy(src.begin(), src.end(), out.features.row(r).begin());
    }
    return out;
}

SegmentationResult upsample_labels(const PointCloud& full_cloud, const PointCloud& sub_cloud,
                                   const SegmentationResult& sub_result, double rescue_radius, unsigned threads) {
    if (sub_cloud.size() == 0) throw std::invalid_argument("upsample_labels: empty sub cloud");
    if (sub_result.semantic.size() != sub_cloud.size() || sub_result.instance.size() != sub_cloud.size())
        throw std::invalid_argument("upsample_labels: result length != sub cloud size");

    const KdTree3 tree(sub_cloud.positions);

    // Labeled sub points, gridded for the small-cluster rescue lookup.
    std::vector<Vec3> labeled_pos;
    std::vector<std::uint32_t> labeled_idx;
    for (std::uint32_t i = 0; i < sub_cloud.size(); ++i) {
        if (sub_result.instance[i] != kNoInstance) {
            labeled_pos.push_back(sub_cloud.positions[i]);
            labeled_idx.push_back(i);
        }
    }
    std::optional<Grid3> labeled_grid;
    if (!labeled_pos.empty() && rescue_radius > 0.0) labeled_grid.emplace(labeled_pos, rescue_radius);

    SegmentationResult out;
    out.semantic.resize(full_cloud.size());
    out.instance.resize(full_cloud.size());

    parallel_for(full_cloud.size(), threads, [&](std::size_t i) {
        const Vec3& p = full_cloud.positions[i];
        const auto hit = tree.nearest(p);
        const std::size_t j = hit.index;
        const int sem = sub_result.semantic[j];
        out.semantic[i] = sem;
        int ins = sub_result.instance[j];
        if (ins == kNoInstance && labeled_grid) {
            // Deferred-label rescue: nearest labeled point of the same class.
            double best_d2 = rescue_radius * rescue_radius;
            std::uint32_t best = 0;
            bool found = false;
            labeled_grid->for_each_in_radius(p, rescue_radius, [&](std::uint32_t li, double d2) {
                const std::uint32_t orig = labeled_idx[li];
                if (sub_result.semantic[orig] != sem) return;
                if (d2 < best_d2 || (d2 == best_d2 && (!found || orig < best))) {
                    best_d2 = d2;
                    best = orig;
                    found = true;
                }
            });
            if (found) ins = sub_result.instance[best];
        }
        out.instance[i] = ins;
    });
    return out;
}

} // namespace panoptic::sampling
