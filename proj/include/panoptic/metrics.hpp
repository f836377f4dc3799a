#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "panoptic/model.hpp"

namespace panoptic::metrics {

/// Per-point evaluation counts points, never areas; all scores live in [0,1].
/// A std::nullopt score means "undefined for this input" (e.g. a class with
/// neither ground-truth nor predicted points) and is excluded from means.
using Score = std::optional<double>;

struct SemanticSection {
    Score oacc;
    std::vector<Score> per_class_iou; // size C
    Score miou;
    int skipped_classes = 0; // classes with neither GT nor predicted points
};

struct InstanceClassScores {
    Score cov, wcov, prec, rec;
};

struct InstanceSection {
    Score mcov, mwcov, mprec, mrec, f1;
    std::map<int, InstanceClassScores> per_class; // things classes only
};

struct PanopticClassScores {
    Score pq, pq_dagger, rq, sq;
};

struct PanopticAggregate {
    Score pq, rq, sq;
};

struct PanopticSection {
    Score pq, pq_dagger, rq, sq;
    PanopticAggregate things;
    PanopticAggregate stuff;
    std::map<int, PanopticClassScores> per_class; // all classes
};

struct MetricsReport {
    Taxonomy taxonomy;
    SemanticSection semantic;
    InstanceSection instance;
    PanopticSection panoptic;
};

/// Instances of one class, as ascending point-index lists. Instances are
/// ordered by their smallest member index.
using InstanceSet = std::vector<std::vector<std::uint32_t>>;

/// Instance sets per class, after majority-vote class assignment; stuff
/// classes hold at most one instance covering every point of that class.
struct ClassInstances {
    std::vector<InstanceSet> per_class;
};

/// Best-IoU matching between the ground-truth and predicted instances of one
/// class. `matches` is the greedy one-to-one assignment over all overlapping
/// pairs, ordered by (IoU desc, gt index asc, pred index asc); validity
/// thresholds are applied downstream so the same matching serves every metric.
struct MatchResult {
    std::vector<double> gt_max_iou;
    std::vector<double> pred_max_iou;
    std::vector<int> gt_argmax;   // index of best pred, -1 if none overlap
    std::vector<int> pred_argmax; // index of best gt, -1 if none overlap
    std::vector<std::size_t> gt_sizes;
    std::vector<std::size_t> pred_sizes;

    struct Pair {
        double iou;
        int gt;
        int pred;
    };
    std::vector<Pair> matches;

    std::size_t n_gt() const { return gt_max_iou.size(); }
    std::size_t n_pred() const { return pred_max_iou.size(); }
    std::size_t n_valid(double threshold) const;
};

using Matching = std::vector<MatchResult>; // size C

/// Overall accuracy and per-class/mean IoU. Points whose GT label is the
/// taxonomy's ignore label are skipped before any counting.
SemanticSection semantic_metrics(std::span<const int> gt_sem, std::span<const int> pred_sem, const Taxonomy& taxonomy);

/// Groups points into instances: each instance id forms one instance whose
/// class is the majority vote of its points' semantic labels (ties to the
/// lowest class id), assigned to all its points; every stuff class then
/// becomes a single instance of all points carrying it. `keep`, when
/// non-empty, masks points out of the construction entirely.
ClassInstances build_instances(const SegmentationResult& result, const Taxonomy& taxonomy,
                               const std::vector<bool>& keep = {});

MatchResult match_max_iou(const InstanceSet& gt, const InstanceSet& pred);

/// Coverage / precision / recall family over things classes.
InstanceSection instance_metrics(const Matching& matching, const Taxonomy& taxonomy, double validity_threshold = 0.5);

/// PQ / SQ / RQ / PQ-dagger over all classes, with things/stuff breakdowns.
PanopticSection panoptic_metrics(const Matching& matching, const Taxonomy& taxonomy, double validity_threshold = 0.5);

/// Full suite: semantic + instance + panoptic on a GT/prediction pair of
/// equal length. Throws std::invalid_argument on length mismatch.
MetricsReport evaluate(const SegmentationResult& gt, const SegmentationResult& pred, const Taxonomy& taxonomy);

} // namespace panoptic::metrics
