#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "panoptic/core/geometry.hpp"
#include "panoptic/core/matrix.hpp"

namespace panoptic {

/// Instance id used for "unassigned / ignored" throughout the toolkit,
/// on ground truth and predictions alike.
inline constexpr int kNoInstance = -1;

using Color = std::array<std::uint8_t, 3>;

/// Point cloud payload shared by every stage: positions in meters plus
/// optional per-point color, semantic class id, and instance id arrays.
struct PointCloud {
    std::vector<Vec3> positions;
    std::optional<std::vector<Color>> colors;
    std::optional<std::vector<int>> semantic;
    std::optional<std::vector<int>> instance;

    std::size_t size() const { return positions.size(); }
    bool has_colors() const { return colors.has_value(); }
    bool has_semantic() const { return semantic.has_value(); }
    bool has_instance() const { return instance.has_value(); }
};

/// Semantic class list with the things/stuff partition. Class ids are dense
/// 0..C-1; the ignore label, when set, lives outside that range.
struct Taxonomy {
    std::vector<std::string> class_names;
    std::vector<bool> stuff_mask;
    std::optional<int> ignore_label;

    std::size_t num_classes() const { return class_names.size(); }
    bool is_stuff(std::size_t c) const { return stuff_mask[c]; }
    bool is_thing(std::size_t c) const { return !stuff_mask[c]; }
    bool is_ignored(int label) const { return ignore_label.has_value() && label == *ignore_label; }
    bool valid() const;
};

/// Per-point backbone outputs: class probabilities (N x C), instance
/// embeddings (N x T), offsets to instance centroids (N x 3).
/// At least one array is present; all present arrays share N.
struct PredictionSet {
    std::optional<Matrix> class_probs;
    std::optional<Matrix> embeddings;
    std::optional<std::vector<Vec3>> offsets;

    bool has_probs() const { return class_probs.has_value(); }
    bool has_embeddings() const { return embeddings.has_value(); }
    bool has_offsets() const { return offsets.has_value(); }

    /// Number of points, from the first present array; 0 if none present.
    std::size_t size() const {
        if (class_probs) return class_probs->rows();
        if (embeddings) return embeddings->rows();
        if (offsets) return offsets->size();
        return 0;
    }
};

/// Final per-point labeling: semantic class id plus instance id (-1 = none).
struct SegmentationResult {
    std::vector<int> semantic;
    std::vector<int> instance;

    std::size_t size() const { return semantic.size(); }
};

/// Pipeline parameter set. Defaults are the best-performing mobile-mapping
/// values; th_d tracks the voxel size as 1.5*d unless set explicitly.
struct PipelineConfig {
    double d = 0.12;       // voxel grid size for downsampling (m)
    double r = 8.0;        // input sphere radius (m)
    double s = 8.0;        // sphere stride at inference (m)
    std::size_t k = 17500; // fixed per-sphere point count (fixed-size backbones)
    int feature_dim = 3;   // K: 3 rel xyz, 4 +abs z, 6 +rgb, 7 +abs z +rgb
    double w_e = 1.0;      // embedding loss weight
    double w_o = 0.1;      // offset loss weight
    double w_r = 0.0;      // regularizer weight (report metadata only)
    double th_d = 1.5 * 0.12; // instance clustering distance threshold (m)
    std::size_t th_n = 10;    // minimum point count for a valid instance
    double th_bm = 0.01;      // block merging IoU threshold
    double bandwidth = 0.6;   // mean-shift kernel bandwidth (embedding units)
    std::size_t ms_max_iter = 300;
    double ms_tol = 1e-3;
    std::size_t embedding_dim = 5; // T
    std::uint64_t seed = 0;

    bool valid() const {
        return d > 0.0 && r > 0.0 && s > 0.0 && bandwidth > 0.0 && th_d > 0.0 && th_n >= 1 && th_bm >= 0.0 &&
               th_bm <= 1.0;
    }
};

/// One validation finding; `index` is the offending point/row where that
/// makes sense, npos otherwise.
struct Violation {
    enum class Kind {
        length_mismatch,
        non_finite_position,
        label_out_of_range,
        bad_instance_id,
        bad_probability_row,
        empty_prediction,
    };
    Kind kind;
    std::size_t index;
    std::string message;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

using ValidationReport = std::vector<Violation>;

/// Remaps instance ids to dense 0..M-1 in first-appearance order, preserving
/// the grouping; -1 entries are kept. Returns the cloud and M.
/// Throws std::invalid_argument if the cloud has no instance array.
std::pair<PointCloud, int> canonicalize_instances(PointCloud cloud);

/// Same remapping on a bare id array (used on results and local labels).
std::pair<std::vector<int>, int> canonicalize_ids(std::vector<int> ids);

/// Structural checks for a cloud against a taxonomy: array lengths, finite
/// positions, semantic range, instance id range. Never throws; an empty
/// report means the cloud is well-formed.
ValidationReport validate(const PointCloud& cloud, const Taxonomy& taxonomy);

/// Structural checks for a prediction set: presence, shared N (and the
/// expected N when nonzero), per-row probability normalization within 1e-4.
ValidationReport validate(const PredictionSet& preds, std::size_t expected_points);

} // namespace panoptic
