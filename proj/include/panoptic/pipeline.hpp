#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "panoptic/metrics.hpp"
#include "panoptic/model.hpp"

namespace panoptic::pipeline {

enum class Mode { embed, offset };

struct Options {
    PipelineConfig config;
    Mode mode = Mode::embed;
    bool predictions_on_full_cloud = false; // prediction rows align with the raw cloud
    unsigned threads = 0;
};

/// Instance segmentation of one (already downsampled) cloud with aligned
/// per-point predictions: sphere tiling, probability averaging, per-sphere
/// clustering of the things points (mean-shift on embeddings or connected
/// components on shifted coordinates), and cross-sphere id reconciliation.
/// Instance ids come out dense; stuff points carry -1.
SegmentationResult segment_cloud(const PointCloud& cloud, const PredictionSet& preds, const Taxonomy& taxonomy,
                                 const Options& options);

struct PipelineOutput {
    PointCloud downsampled;
    std::vector<std::uint32_t> kept_indices;
    SegmentationResult sub_result;  // on the downsampled cloud
    SegmentationResult full_result; // on the raw cloud
    std::optional<metrics::MetricsReport> report; // present when the raw cloud carries gt labels
};

/// End-to-end run: downsample, segment, map labels back to the raw cloud,
/// and evaluate against gt labels when the cloud has them. Predictions must
/// align with the downsampled cloud, or with the raw cloud when
/// options.predictions_on_full_cloud is set (they are sliced to the kept
/// points). Throws std::invalid_argument on any misalignment.
PipelineOutput run(const PointCloud& full_cloud, const PredictionSet& preds, const Taxonomy& taxonomy,
                   const Options& options);

} // namespace panoptic::pipeline
