#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "helpers.hpp"
#include "panoptic/core/rng.hpp"
#include "panoptic/sampling.hpp"

using namespace panoptic;
using test_helpers::random_cloud;

namespace {

PointCloud cube_corners(double side) {
    PointCloud c;
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y)
            for (int z = 0; z < 2; ++z) c.positions.push_back({x * side, y * side, z * side});
    return c;
}

// Independent voxel-key histogram: lattice-aligned bbox-min anchor, same
// definition as the contract, counted through a plain ordered set.
std::size_t voxel_key_count(const PointCloud& cloud, double d) {
    Aabb box = Aabb::of(cloud.positions);
    const double ax = d * std::floor(box.min.x / d);
    const double ay = d * std::floor(box.min.y / d);
    const double az = d * std::floor(box.min.z / d);
    std::set<std::tuple<long long, long long, long long>> keys;
    for (const auto& p : cloud.positions)
        keys.insert({static_cast<long long>(std::floor((p.x - ax) / d)),
                     static_cast<long long>(std::floor((p.y - ay) / d)),
                     static_cast<long long>(std::floor((p.z - az) / d))});
    return keys.size();
}

} // namespace

TEST_SUITE("sampling") {

TEST_CASE("voxel downsample collapses a cube into one voxel at huge d") {
    const auto [out, kept] = sampling::voxel_downsample(cube_corners(1.0), 10.0, 1);
    CHECK(out.size() == 1);
    CHECK(kept.size() == 1);
}

TEST_CASE("voxel downsample keeps one point per voxel at small d") {
    const auto [out, kept] = sampling::voxel_downsample(cube_corners(1.0), 0.5, 1);
    CHECK(out.size() == 8);
}

TEST_CASE("voxel downsample count equals the independent key histogram") {
    const PointCloud cloud = random_cloud(1000000, 100.0, 99);
    const auto [out, kept] = sampling::voxel_downsample(cloud, 0.12, 7);
    CHECK(out.size() == voxel_key_count(cloud, 0.12));
    // Every output point is an input point, indices ascending.
    for (std::size_t i = 1; i < kept.size(); ++i) CHECK(kept[i - 1] < kept[i]);
    CHECK(out.positions[0] == cloud.positions[kept[0]]);
}

TEST_CASE("voxel downsample is idempotent at the same d") {
    const PointCloud cloud = random_cloud(20000, 5.0, 3); // dense: many multi-point voxels
    const auto [once, kept1] = sampling::voxel_downsample(cloud, 0.3, 5);
    const auto [twice, kept2] = sampling::voxel_downsample(once, 0.3, 17);
    REQUIRE(twice.size() == once.size());
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(once.positions[i] == twice.positions[i]);
}

TEST_CASE("voxel downsample carries labels and is deterministic") {
    PointCloud cloud = random_cloud(5000, 4.0, 21);
    cloud.semantic.emplace();
    cloud.instance.emplace();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        cloud.semantic->push_back(static_cast<int>(i % 5));
        cloud.instance->push_back(static_cast<int>(i % 7) - 1);
    }
    const auto [a, ka] = sampling::voxel_downsample(cloud, 0.25, 42);
    const auto [b, kb] = sampling::voxel_downsample(cloud, 0.25, 42);
    CHECK(ka == kb);
    for (std::size_t i = 0; i < ka.size(); ++i) {
        CHECK((*a.semantic)[i] == (*cloud.semantic)[ka[i]]);
        CHECK((*a.instance)[i] == (*cloud.instance)[ka[i]]);
    }
    const auto [c, kc] = sampling::voxel_downsample(cloud, 0.25, 43);
    CHECK(kc != ka); // different seed picks different representatives
}

TEST_CASE("within-voxel selection is uniform over seeds") {
    // 5 points in one voxel; chi-square over 5000 seeds, 4 dof, 13.28 is the
    // 99th percentile.
    PointCloud cloud;
    for (int i = 0; i < 5; ++i) cloud.positions.push_back({0.01 * i, 0, 0});
    std::vector<std::size_t> picks(5, 0);
    const std::size_t draws = 5000;
    for (std::size_t seed = 0; seed < draws; ++seed) {
        const auto [out, kept] = sampling::voxel_downsample(cloud, 1.0, seed);
        REQUIRE(kept.size() == 1);
        ++picks[kept[0]];
    }
    const double expected = static_cast<double>(draws) / 5.0;
    double chi2 = 0.0;
    for (auto c : picks) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 13.28);
}

TEST_CASE("empty cloud downsamples to empty") {
    const auto [out, kept] = sampling::voxel_downsample(PointCloud{}, 0.1, 0);
    CHECK(out.size() == 0);
    CHECK(kept.empty());
}

TEST_CASE("parameter preconditions are enforced") {
    const PointCloud cloud = random_cloud(10, 1.0, 0);
    CHECK_THROWS_AS(sampling::voxel_downsample(cloud, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(sampling::tile_spheres(cloud, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(sampling::tile_spheres(cloud, 1.0, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(sampling::sample_training_sphere(PointCloud{}, 1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(sampling::make_features(cloud, {}, Vec3{}, 5), std::invalid_argument);
    CHECK_THROWS_AS(sampling::make_features(cloud, {}, Vec3{}, 6), std::invalid_argument); // no colors
}

TEST_CASE("tile spheres: single point lands in one sphere") {
    PointCloud c;
    c.positions.push_back({0, 0, 0});
    const auto spheres = sampling::tile_spheres(c, 2.0, 1.0);
    REQUIRE(spheres.size() >= 1);
    std::size_t hits = 0;
    for (const auto& s : spheres) hits += s.point_indices.size();
    CHECK(hits >= 1);
    CHECK(spheres[0].point_indices[0] == 0);
    CHECK(spheres[0].features.rows() == 1);
}

TEST_CASE("tile spheres cover every point when the stride bound holds") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const PointCloud cloud = random_cloud(2000, 20.0, seed);
        const auto spheres = sampling::tile_spheres(cloud, 8.0, 8.0); // 8 <= 2*8/sqrt(3)
        std::vector<int> covered(cloud.size(), 0);
        for (const auto& s : spheres)
            for (auto idx : s.point_indices) ++covered[idx];
        for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(covered[i] >= 1);
    }
}

TEST_CASE("tile spheres multiplicity matches the brute-force membership oracle") {
    const PointCloud cloud = random_cloud(800, 20.0, 31);
    const double r = 8.0, s = 8.0;
    const auto spheres = sampling::tile_spheres(cloud, r, s);

    std::vector<std::size_t> mult(cloud.size(), 0);
    for (const auto& sp : spheres)
        for (auto idx : sp.point_indices) ++mult[idx];

    // O(N * spheres) oracle over the returned centers.
    std::vector<std::size_t> oracle(cloud.size(), 0);
    for (const auto& sp : spheres)
        for (std::size_t i = 0; i < cloud.size(); ++i)
            if (squared_distance(cloud.positions[i], sp.center) <= r * r) ++oracle[i];
    for (std::size_t i = 0; i < cloud.size(); ++i) CHECK(mult[i] == oracle[i]);

    // Members really lie inside, and centers sit on the stride lattice.
    Aabb box = Aabb::of(cloud.positions);
    for (const auto& sp : spheres) {
        for (auto idx : sp.point_indices) CHECK(distance(cloud.positions[idx], sp.center) <= r + 1e-12);
        const double fx = (sp.center.x - box.min.x) / s;
        CHECK(std::abs(fx - std::round(fx)) < 1e-9);
    }

    // Lexicographic center order.
    for (std::size_t i = 1; i < spheres.size(); ++i) {
        const Vec3& a = spheres[i - 1].center;
        const Vec3& b = spheres[i].center;
        CHECK((a.x < b.x || (a.x == b.x && (a.y < b.y || (a.y == b.y && a.z < b.z)))));
    }
}

TEST_CASE("training sphere on a single point") {
    PointCloud c;
    c.positions.push_back({5, 5, 5});
    const auto batch = sampling::sample_training_sphere(c, 3.0, 0);
    REQUIRE(batch.point_indices.size() == 1);
    CHECK(batch.features(0, 0) == 0.0);
    CHECK(batch.features(0, 1) == 0.0);
    CHECK(batch.features(0, 2) == 0.0);
}

TEST_CASE("training sphere members stay within the radius") {
    const PointCloud cloud = random_cloud(500, 10.0, 8);
    const auto batch = sampling::sample_training_sphere(cloud, 2.5, 4);
    for (std::size_t r = 0; r < batch.features.rows(); ++r) {
        const double n2 = batch.features(r, 0) * batch.features(r, 0) + batch.features(r, 1) * batch.features(r, 1) +
                          batch.features(r, 2) * batch.features(r, 2);
        CHECK(n2 <= 2.5 * 2.5 + 1e-12);
    }
}

TEST_CASE("training sphere centers are uniform over points") {
    // Chi-square over 20 points, 10^4 draws, 19 dof; 36.19 is the 99th
    // percentile, so the statistic must stay below it (p > 0.01).
    const std::size_t m = 20;
    PointCloud cloud;
    for (std::size_t i = 0; i < m; ++i) cloud.positions.push_back({static_cast<double>(i) * 100.0, 0, 0});
    std::vector<std::size_t> counts(m, 0);
    const std::size_t draws = 10000;
    for (std::size_t t = 0; t < draws; ++t) {
        const auto batch = sampling::sample_training_sphere(cloud, 1.0, 1000 + t);
        REQUIRE(batch.point_indices.size() == 1);
        ++counts[batch.point_indices[0]];
    }
    const double expected = static_cast<double>(draws) / m;
    double chi2 = 0.0;
    for (auto c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 36.19);
}

TEST_CASE("augment with everything disabled is the identity") {
    const PointCloud cloud = random_cloud(100, 4.0, 12);
    auto batch = sampling::sample_training_sphere(cloud, 10.0, 3);
    const Matrix before = batch.features;
    sampling::AugmentConfig cfg;
    cfg.scale_amplitude = 0.0;
    cfg.jitter_sigma = 0.0;
    cfg.rotate = false;
    const auto after = sampling::augment(std::move(batch), cfg, 77);
    CHECK(after.features == before);
}

TEST_CASE("rotation preserves pairwise distances") {
    const PointCloud cloud = random_cloud(60, 4.0, 13);
    auto batch = sampling::sample_training_sphere(cloud, 10.0, 3);
    const Matrix before = batch.features;
    sampling::AugmentConfig cfg;
    cfg.scale_amplitude = 0.0;
    cfg.jitter_sigma = 0.0;
    cfg.rotate = true;
    const auto after = sampling::augment(std::move(batch), cfg, 5);
    for (std::size_t i = 0; i < before.rows(); ++i)
        for (std::size_t j = i + 1; j < before.rows(); ++j) {
            double d0 = 0, d1 = 0;
            for (std::size_t k = 0; k < 3; ++k) {
                d0 += (before(i, k) - before(j, k)) * (before(i, k) - before(j, k));
                d1 += (after.features(i, k) - after.features(j, k)) * (after.features(i, k) - after.features(j, k));
            }
            CHECK(std::abs(std::sqrt(d0) - std::sqrt(d1)) < 1e-9);
        }
}

TEST_CASE("pure scaling multiplies all pairwise distances by one in-range factor") {
    const PointCloud cloud = random_cloud(40, 4.0, 14);
    auto batch = sampling::sample_training_sphere(cloud, 10.0, 3);
    const Matrix before = batch.features;
    sampling::AugmentConfig cfg;
    cfg.scale_amplitude = 0.1;
    cfg.jitter_sigma = 0.0;
    cfg.rotate = false;
    const auto scaled = sampling::augment(std::move(batch), cfg, 7);

    // Recover the factor from the first pair, then require it everywhere.
    double factor = 0.0;
    for (std::size_t i = 0; i < before.rows(); ++i)
        for (std::size_t j = i + 1; j < before.rows(); ++j) {
            double d0 = 0, d1 = 0;
            for (std::size_t k = 0; k < 3; ++k) {
                d0 += (before(i, k) - before(j, k)) * (before(i, k) - before(j, k));
                d1 += (scaled.features(i, k) - scaled.features(j, k)) * (scaled.features(i, k) - scaled.features(j, k));
            }
            if (d0 == 0.0) continue;
            const double ratio = std::sqrt(d1 / d0);
            if (factor == 0.0) {
                factor = ratio;
                CHECK(factor >= 1.0 - cfg.scale_amplitude - 1e-12);
                CHECK(factor <= 1.0 + cfg.scale_amplitude + 1e-12);
            }
            CHECK(ratio == doctest::Approx(factor).epsilon(1e-9));
        }
    CHECK(factor != 0.0);
}

TEST_CASE("augment respects the membership radius bound") {
    const PointCloud cloud = random_cloud(300, 6.0, 15);
    const double radius = 3.0;
    auto batch = sampling::sample_training_sphere(cloud, radius, 9);
    sampling::AugmentConfig cfg; // defaults a=0.1, sigma=0.01
    const std::size_t count_before = batch.point_indices.size();
    const auto after = sampling::augment(std::move(batch), cfg, 33);
    CHECK(after.point_indices.size() == count_before);
    const double bound = radius * (1.0 + cfg.scale_amplitude) + 3.0 * cfg.jitter_sigma;
    std::size_t outside = 0;
    for (std::size_t r = 0; r < after.features.rows(); ++r) {
        const double n = std::sqrt(after.features(r, 0) * after.features(r, 0) +
                                   after.features(r, 1) * after.features(r, 1) +
                                   after.features(r, 2) * after.features(r, 2));
        if (n > bound) ++outside;
    }
    // 3-sigma jitter bound: allow a tiny tail.
    CHECK(outside <= count_before / 100 + 1);
}

TEST_CASE("resample keeps a same-size batch as a permutation") {
    const PointCloud cloud = random_cloud(50, 4.0, 16);
    auto batch = sampling::sample_training_sphere(cloud, 10.0, 0);
    const auto before = batch.point_indices;
    const auto after = sampling::resample_fixed_count(std::move(batch), before.size(), 2);
    auto sorted_before = before;
    auto sorted_after = after.point_indices;
    std::sort(sorted_before.begin(), sorted_before.end());
    std::sort(sorted_after.begin(), sorted_after.end());
    CHECK(sorted_before == sorted_after);
}

TEST_CASE("resample duplicates up to k") {
    PointCloud c;
    c.positions.push_back({0, 0, 0});
    c.positions.push_back({1, 0, 0});
    auto batch = sampling::sample_training_sphere(c, 10.0, 0);
    REQUIRE(batch.point_indices.size() == 2);
    const auto after = sampling::resample_fixed_count(std::move(batch), 5, 3);
    CHECK(after.point_indices.size() == 5);
    CHECK(after.features.rows() == 5);
    bool has0 = false, has1 = false;
    for (auto idx : after.point_indices) {
        has0 |= idx == 0;
        has1 |= idx == 1;
    }
    CHECK(has0);
    CHECK(has1);
}

TEST_CASE("resample subsets down to k") {
    const PointCloud cloud = random_cloud(200, 4.0, 17);
    auto batch = sampling::sample_training_sphere(cloud, 10.0, 0);
    const auto pool = batch.point_indices;
    const auto after = sampling::resample_fixed_count(std::move(batch), 20, 4);
    CHECK(after.point_indices.size() == 20);
    std::set<std::uint32_t> unique(after.point_indices.begin(), after.point_indices.end());
    CHECK(unique.size() == 20); // subset, no duplicates
}

TEST_CASE("resample rejects an empty batch") {
    sampling::SphereBatch batch;
    CHECK_THROWS_AS(sampling::resample_fixed_count(std::move(batch), 5, 0), std::invalid_argument);
}

TEST_CASE("upsample is the label identity when full == sub") {
    const PointCloud cloud = random_cloud(300, 5.0, 18);
    SegmentationResult sub;
    Rng rng(4);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        sub.semantic.push_back(static_cast<int>(rng.below(4)));
        sub.instance.push_back(rng.uniform() < 0.5 ? -1 : static_cast<int>(rng.below(6)));
    }
    const auto full = sampling::upsample_labels(cloud, cloud, sub, 0.0);
    CHECK(full.semantic == sub.semantic);
    CHECK(full.instance == sub.instance);
}

TEST_CASE("one labeled sub point labels everything") {
    PointCloud sub;
    sub.positions.push_back({0, 0, 0});
    SegmentationResult sub_result{{3}, {7}};
    const PointCloud full = random_cloud(10, 2.0, 19);
    const auto out = sampling::upsample_labels(full, sub, sub_result, 0.0);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(out.semantic[i] == 3);
        CHECK(out.instance[i] == 7);
    }
}

TEST_CASE("nearest assignment with deterministic tie break") {
    PointCloud sub;
    sub.positions.push_back({0, 0, 0}); // A, index 0
    sub.positions.push_back({2, 0, 0}); // B, index 1
    SegmentationResult sr{{1, 2}, {10, 20}};
    PointCloud full;
    full.positions.push_back({0.4, 0, 0}); // nearer A
    full.positions.push_back({1.7, 0, 0}); // nearer B
    full.positions.push_back({1.0, 0, 0}); // equidistant -> lower index A
    const auto out = sampling::upsample_labels(full, sub, sr, 0.0);
    CHECK(out.instance == std::vector<int>{10, 20, 10});
    CHECK(out.semantic == std::vector<int>{1, 2, 1});

    // Exhaustive check against a brute-force nearest neighbor.
    const PointCloud big_sub = random_cloud(40, 3.0, 20);
    SegmentationResult big_sr;
    Rng rng(6);
    for (std::size_t i = 0; i < 40; ++i) {
        big_sr.semantic.push_back(static_cast<int>(rng.below(3)));
        big_sr.instance.push_back(static_cast<int>(rng.below(5)));
    }
    const PointCloud queries = random_cloud(500, 3.0, 21);
    const auto fast = sampling::upsample_labels(queries, big_sub, big_sr, 0.0);
    for (std::size_t q = 0; q < queries.size(); ++q) {
        std::size_t best = 0;
        double best_d = squared_distance(queries.positions[q], big_sub.positions[0]);
        for (std::size_t j = 1; j < big_sub.size(); ++j) {
            const double d = squared_distance(queries.positions[q], big_sub.positions[j]);
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        CHECK(fast.semantic[q] == big_sr.semantic[best]);
    }
}

TEST_CASE("unlabeled nearest neighbor is rescued from the same class within the cap") {
    PointCloud sub;
    sub.positions.push_back({0, 0, 0});   // unlabeled, class 1
    sub.positions.push_back({0.3, 0, 0}); // labeled, class 1
    sub.positions.push_back({0.2, 0, 0}); // labeled, class 2 (wrong class)
    SegmentationResult sr{{1, 1, 2}, {-1, 5, 9}};
    PointCloud full;
    full.positions.push_back({0.01, 0, 0}); // snaps to sub 0
    const auto rescued = sampling::upsample_labels(full, sub, sr, 0.54);
    CHECK(rescued.semantic[0] == 1);
    CHECK(rescued.instance[0] == 5);

    // Beyond the cap: stays -1.
    sub.positions[1] = {0.6, 0, 0};
    const auto dropped = sampling::upsample_labels(full, sub, sr, 0.54);
    CHECK(dropped.instance[0] == -1);
}

TEST_CASE("upsample rejects an empty sub cloud") {
    CHECK_THROWS_AS(sampling::upsample_labels(random_cloud(3, 1.0, 0), PointCloud{}, SegmentationResult{}, 0.1),
                    std::invalid_argument);
}

} // TEST_SUITE
