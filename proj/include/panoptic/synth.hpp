#pragma once

#include <cstdint>

#include "panoptic/metrics.hpp"
#include "panoptic/model.hpp"

namespace panoptic::synth {

/// Class ids of the built-in street-scene taxonomy.
enum ClassId : int {
    kGround = 0,
    kBuilding = 1,
    kBarrier = 2,
    kPole = 3,
    kCar = 4,
    kPedestrian = 5,
    kTree = 6,
    kTrashCan = 7,
};

/// ground / building / barrier as stuff, pole / car / pedestrian / tree /
/// trash_can as things; no ignore label.
Taxonomy default_taxonomy();

/// Synthetic street scene: surfaces sampled at `density` points per square
/// meter of surface (Poisson counts) with Gaussian jitter. Things instances
/// are parameterized primitives kept `clearance` apart from each other and
/// from every stuff surface, so label boundaries stay unambiguous; set
/// allow_contact to let objects touch the ground instead.
struct SceneSpec {
    Vec3 extent{24.0, 24.0, 10.0};
    double density = 150.0;
    int grounds = 1;
    int buildings = 2;
    int barriers = 1;
    int poles = 4;
    int cars = 2;
    int pedestrians = 2;
    int trees = 2;
    int trash_cans = 2;
    double jitter_sigma = 0.01;
    double clearance = 0.5;
    bool allow_contact = false;
    std::uint64_t seed = 0;

    int things_count() const { return poles + cars + pedestrians + trees + trash_cans; }
};

/// Backbone-output simulator: semantic flips at rate sem_confusion, instance
/// codes on an emb_sep-separated lattice blurred by emb_sigma, centroid
/// offsets blurred by off_sigma.
struct NoiseSpec {
    double sem_confusion = 0.0;
    double emb_sigma = 0.0;
    double emb_sep = 2.4; // minimum L1 (and L2) separation of instance codes
    double off_sigma = 0.0;
    std::uint64_t seed = 0;
};

/// Deterministic given spec.seed (per-object sub-seeds, schedule independent).
PointCloud generate_scene(const SceneSpec& spec);

/// Predictions aligned with `cloud`, which must carry gt semantic and
/// instance labels. With zero noise the argmax reproduces the gt semantics,
/// embeddings collapse onto the instance codes, and offsets are exact.
PredictionSet simulate_predictions(const PointCloud& cloud, const NoiseSpec& noise, std::size_t n_classes,
                                   std::size_t emb_dim);

/// Independent quadratic metric suite: all-pairs set intersections, no
/// spatial indexing, no code shared with panoptic::metrics. Intended as the
/// test oracle; guards at 10^4 points.
metrics::MetricsReport oracle_metrics(const SegmentationResult& gt, const SegmentationResult& pred,
                                      const Taxonomy& taxonomy);

} // namespace panoptic::synth
