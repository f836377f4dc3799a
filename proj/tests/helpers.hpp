#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "panoptic/core/rng.hpp"
#include "panoptic/metrics.hpp"
#include "panoptic/model.hpp"

namespace test_helpers {

using namespace panoptic;

inline PointCloud random_cloud(std::size_t n, double extent, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud cloud;
    cloud.positions.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        cloud.positions.push_back({rng.uniform(0.0, extent), rng.uniform(0.0, extent), rng.uniform(0.0, extent)});
    return cloud;
}

/// Random labeled pair for metric fuzzing: up to max_classes classes with a
/// random things/stuff split, up to max_instances instance ids per side
/// (some points left unassigned), labels drawn independently for gt and pred.
struct RandomCase {
    Taxonomy taxonomy;
    SegmentationResult gt;
    SegmentationResult pred;
};

inline RandomCase random_metric_case(std::uint64_t seed, std::size_t max_points = 50, std::size_t max_classes = 5,
                                     std::size_t max_instances = 6) {
    Rng rng(seed);
    RandomCase out;
    const std::size_t c = 1 + rng.below(max_classes);
    for (std::size_t k = 0; k < c; ++k) {
        out.taxonomy.class_names.push_back("cls" + std::to_string(k));
        out.taxonomy.stuff_mask.push_back(rng.uniform() < 0.35);
    }
    if (rng.uniform() < 0.3) out.taxonomy.ignore_label = -100;

    const std::size_t n = 1 + rng.below(max_points);
    auto fill = [&](SegmentationResult& r) {
        r.semantic.resize(n);
        r.instance.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            r.semantic[i] = static_cast<int>(rng.below(c));
            r.instance[i] = rng.uniform() < 0.2 ? kNoInstance : static_cast<int>(rng.below(max_instances));
        }
    };
    fill(out.gt);
    fill(out.pred);
    if (out.taxonomy.ignore_label) {
        for (std::size_t i = 0; i < n; ++i)
            if (rng.uniform() < 0.1) out.gt.semantic[i] = *out.taxonomy.ignore_label;
    }
    return out;
}

inline bool score_close(const metrics::Score& a, const metrics::Score& b, double tol = 1e-12) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    return std::abs(*a - *b) <= tol;
}

/// Field-by-field report comparison at the given tolerance; null-ness must
/// match exactly.
inline bool reports_match(const metrics::MetricsReport& a, const metrics::MetricsReport& b, double tol = 1e-12) {
    if (!score_close(a.semantic.oacc, b.semantic.oacc, tol)) return false;
    if (!score_close(a.semantic.miou, b.semantic.miou, tol)) return false;
    if (a.semantic.per_class_iou.size() != b.semantic.per_class_iou.size()) return false;
    for (std::size_t i = 0; i < a.semantic.per_class_iou.size(); ++i)
        if (!score_close(a.semantic.per_class_iou[i], b.semantic.per_class_iou[i], tol)) return false;
    if (a.semantic.skipped_classes != b.semantic.skipped_classes) return false;

    if (!score_close(a.instance.mcov, b.instance.mcov, tol)) return false;
    if (!score_close(a.instance.mwcov, b.instance.mwcov, tol)) return false;
    if (!score_close(a.instance.mprec, b.instance.mprec, tol)) return false;
    if (!score_close(a.instance.mrec, b.instance.mrec, tol)) return false;
    if (!score_close(a.instance.f1, b.instance.f1, tol)) return false;
    if (a.instance.per_class.size() != b.instance.per_class.size()) return false;
    for (const auto& [cls, sa] : a.instance.per_class) {
        auto it = b.instance.per_class.find(cls);
        if (it == b.instance.per_class.end()) return false;
        if (!score_close(sa.cov, it->second.cov, tol) || !score_close(sa.wcov, it->second.wcov, tol) ||
            !score_close(sa.prec, it->second.prec, tol) || !score_close(sa.rec, it->second.rec, tol))
            return false;
    }

    if (!score_close(a.panoptic.pq, b.panoptic.pq, tol)) return false;
    if (!score_close(a.panoptic.pq_dagger, b.panoptic.pq_dagger, tol)) return false;
    if (!score_close(a.panoptic.rq, b.panoptic.rq, tol)) return false;
    if (!score_close(a.panoptic.sq, b.panoptic.sq, tol)) return false;
    if (!score_close(a.panoptic.things.pq, b.panoptic.things.pq, tol)) return false;
    if (!score_close(a.panoptic.things.rq, b.panoptic.things.rq, tol)) return false;
    if (!score_close(a.panoptic.things.sq, b.panoptic.things.sq, tol)) return false;
    if (!score_close(a.panoptic.stuff.pq, b.panoptic.stuff.pq, tol)) return false;
    if (!score_close(a.panoptic.stuff.rq, b.panoptic.stuff.rq, tol)) return false;
    if (!score_close(a.panoptic.stuff.sq, b.panoptic.stuff.sq, tol)) return false;
    if (a.panoptic.per_class.size() != b.panoptic.per_class.size()) return false;
    for (const auto& [cls, sa] : a.panoptic.per_class) {
        auto it = b.panoptic.per_class.find(cls);
        if (it == b.panoptic.per_class.end()) return false;
        if (!score_close(sa.pq, it->second.pq, tol) || !score_close(sa.pq_dagger, it->second.pq_dagger, tol) ||
            !score_close(sa.rq, it->second.rq, tol) || !score_close(sa.sq, it->second.sq, tol))
            return false;
    }
    return true;
}

/// Labelings describe the same partition of the labeled points.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] == kNoInstance) != (b[i] == kNoInstance)) return false;
        if (a[i] == kNoInstance) continue;
        auto [ia, fresh_a] = ab.try_emplace(a[i], b[i]);
        if (!fresh_a && ia->second != b[i]) return false;
        auto [ib, fresh_b] = ba.try_emplace(b[i], a[i]);
        if (!fresh_b && ib->second != a[i]) return false;
    }
    return true;
}

} // namespace test_helpers
