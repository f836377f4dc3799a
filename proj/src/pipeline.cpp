#include "panoptic/pipeline.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "panoptic/cluster.hpp"
#include "panoptic/core/log.hpp"
#include "panoptic/core/threading.hpp"
#include "panoptic/merge.hpp"
#include "panoptic/sampling.hpp"

namespace panoptic::pipeline {

namespace {

Matrix slice_rows(const Matrix& m, std::span<const std::uint32_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto src = m.row(rows[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

PredictionSet slice_predictions(const PredictionSet& preds, std::span<const std::uint32_t> rows) {
    PredictionSet out;
    if (preds.class_probs) out.class_probs = slice_rows(*preds.class_probs, rows);
    if (preds.embeddings) out.embeddings = slice_rows(*preds.embeddings, rows);
    if (preds.offsets) {
        std::vector<Vec3> offsets;
        offsets.reserve(rows.size());
        for (std::uint32_t r : rows) offsets.push_back((*preds.offsets)[r]);
        out.offsets = std::move(offsets);
    }
    return out;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

} // namespace

SegmentationResult segment_cloud(const PointCloud& cloud, const PredictionSet& preds, const Taxonomy& taxonomy,
                                 const Options& options) {
    const PipelineConfig& cfg = options.config;
    require(cfg.valid(), "segment_cloud: invalid pipeline configuration");
    require(taxonomy.valid(), "segment_cloud: invalid taxonomy");
    require(preds.has_probs(), "segment_cloud: predictions lack class probabilities");
    require(preds.size() == cloud.size(), "segment_cloud: prediction count " + std::to_string(preds.size()) +
                                              " != cloud point count " + std::to_string(cloud.size()));
    require(preds.class_probs->cols() == taxonomy.num_classes(),
            "segment_cloud: prediction classes != taxonomy classes");
    if (options.mode == Mode::embed)
        require(preds.has_embeddings(), "segment_cloud: embed mode needs embeddings");
    else
        require(preds.has_offsets(), "segment_cloud: offset mode needs offsets");

    const std::size_t n = cloud.size();
    const std::size_t n_classes = taxonomy.num_classes();

    const auto spheres = sampling::tile_spheres(cloud, cfg.r, cfg.s, 3, options.threads);
    log::info("segment_cloud: " + std::to_string(spheres.size()) + " spheres over " + std::to_string(n) + " points");

    merge::FusionAccumulator acc(n, n_classes);
    for (const auto& sphere : spheres)
        merge::accumulate_probs(acc, sphere.point_indices, slice_rows(*preds.class_probs, sphere.point_indices));
    const std::vector<int> semantic = merge::finalize_semantics(acc);

    // Per-sphere instance clustering of the things points; local labels are
    // produced in parallel, the id reconciliation below is order-dependent
    // and runs sequentially over the fixed lexicographic sphere order.
    struct SphereLabels {
        std::vector<std::uint32_t> indices;
        std::vector<int> local;
    };
    std::vector<SphereLabels> locals(spheres.size());
    parallel_for(spheres.size(), options.threads, [&](std::size_t si) {
        const auto& sphere = spheres[si];
        auto& slot = locals[si];
        for (std::uint32_t idx : sphere.point_indices)
            if (taxonomy.is_thing(static_cast<std::size_t>(semantic[idx]))) slot.indices.push_back(idx);
        if (slot.indices.empty()) return;

        if (options.mode == Mode::offset) {
            std::vector<Vec3> shifted(slot.indices.size());
            std::vector<int> sem(slot.indices.size());
            for (std::size_t i = 0; i < slot.indices.size(); ++i) {
                const std::uint32_t idx = slot.indices[i];
                shifted[i] = cloud.positions[idx] + (*preds.offsets)[idx];
                sem[i] = semantic[idx];
            }
            slot.local = cluster::connected_components(shifted, sem, cfg.th_d, cfg.th_n);
        } else {
            slot.local.assign(slot.indices.size(), kNoInstance);
            int label_base = 0;
            for (std::size_t cls = 0; cls < n_classes; ++cls) {
                if (taxonomy.is_stuff(cls)) continue;
                std::vector<std::size_t> rows;
                for (std::size_t i = 0; i < slot.indices.size(); ++i)
                    if (semantic[slot.indices[i]] == static_cast<int>(cls)) rows.push_back(i);
                if (rows.empty()) continue;
                Matrix emb(rows.size(), preds.embeddings->cols());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    const auto src = preds.embeddings->row(slot.indices[rows[r]]);
                    std::copy(src.begin(), src.end(), emb.row(r).begin());
                }
                // Inner work stays single-threaded; parallelism lives at the
                // sphere level.
                const auto labels = cluster::mean_shift(emb, cfg.bandwidth, cfg.ms_max_iter, cfg.ms_tol, cfg.seed, 1);
                int max_label = -1;
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    slot.local[rows[r]] = label_base + labels[r];
                    max_label = std::max(max_label, labels[r]);
                }
                label_base += max_label + 1;
            }
            // Small clusters are deferred, like condition (iii) of the
            // connected-components rule.
            std::map<int, std::size_t> sizes;
            for (int l : slot.local)
                if (l != kNoInstance) ++sizes[l];
            for (int& l : slot.local)
                if (l != kNoInstance && sizes[l] <= cfg.th_n) l = kNoInstance;
        }
    });

    for (const auto& slot : locals) {
        if (slot.indices.empty()) continue;
        merge::block_merge(acc, slot.indices, slot.local, cfg.th_bm);
    }

    SegmentationResult result;
    result.semantic = semantic;
    auto [ids, count] = canonicalize_ids(std::move(acc.global_instance));
    result.instance = std::move(ids);
    log::info("segment_cloud: " + std::to_string(count) + " instances");
    return result;
}

PipelineOutput run(const PointCloud& full_cloud, const PredictionSet& preds, const Taxonomy& taxonomy,
                   const Options& options) {
    const PipelineConfig& cfg = options.config;
    require(cfg.valid(), "pipeline: invalid configuration");
    require(full_cloud.size() > 0, "pipeline: empty cloud");
    {
        const auto issues = validate(full_cloud, taxonomy);
        require(issues.empty(), "pipeline: invalid cloud: " + (issues.empty() ? "" : issues.front().message));
    }

    PipelineOutput out;
    auto [sub, kept] = sampling::voxel_downsample(full_cloud, cfg.d, cfg.seed);
    out.downsampled = std::move(sub);
    out.kept_indices = std::move(kept);
    log::info("pipeline: downsampled " + std::to_string(full_cloud.size()) + " -> " +
              std::to_string(out.downsampled.size()) + " points");

    PredictionSet aligned;
    const PredictionSet* active = &preds;
    if (options.predictions_on_full_cloud) {
        require(preds.size() == full_cloud.size(),
                "pipeline: prediction count " + std::to_string(preds.size()) + " != raw cloud point count " +
                    std::to_string(full_cloud.size()));
        aligned = slice_predictions(preds, out.kept_indices);
        active = &aligned;
    } else {
        require(preds.size() == out.downsampled.size(),
                "pipeline: prediction count " + std::to_string(preds.size()) + " != downsampled point count " +
                    std::to_string(out.downsampled.size()) + " (same d and seed?)");
    }
    {
        const auto issues = validate(*active, out.downsampled.size());
        require(issues.empty(), "pipeline: invalid predictions: " + (issues.empty() ? "" : issues.front().message));
    }

    out.sub_result = segment_cloud(out.downsampled, *active, taxonomy, options);
    out.full_result =
        sampling::upsample_labels(full_cloud, out.downsampled, out.sub_result, 3.0 * cfg.th_d, options.threads);

    if (full_cloud.has_semantic() && full_cloud.has_instance()) {
        SegmentationResult gt{*full_cloud.semantic, *full_cloud.instance};
        out.report = metrics::evaluate(gt, out.full_result, taxonomy);
    }
    return out;
}

} // namespace panoptic::pipeline
