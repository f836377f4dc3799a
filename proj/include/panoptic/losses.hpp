#pragma once

#include <span>
#include <vector>

#include "panoptic/core/geometry.hpp"
#include "panoptic/core/matrix.hpp"

namespace panoptic::losses {

struct EmbeddingLoss {
    double var = 0.0;
    double dist = 0.0;
    double reg = 0.0;
    double total = 0.0; // var + dist + 0.001 * reg
};

struct OffsetLoss {
    double reg = 0.0;
    double dir = 0.0; // negative mean cosine, in [-1, 1]
    double total = 0.0;
};

struct LossBreakdown {
    double semantic = 0.0;
    EmbeddingLoss embedding;
    OffsetLoss offset;
    double total = 0.0;
};

/// Mean negative log probability of the true class; probabilities are
/// clamped at 1e-12 before the log.
double cross_entropy(const Matrix& probs, std::span<const int> labels);

/// Discriminative embedding loss: an intra-instance pull toward each
/// instance's mean embedding (hinged at delta_v), an inter-instance push
/// separating means (hinged at 2*delta_d, over ordered pairs), and a small
/// L1 regularizer on the means. Distances are L1. Every point must belong
/// to exactly one instance; the push term is 0 with a single instance.
EmbeddingLoss embedding_loss(const Matrix& embeddings, std::span<const int> instances, double delta_v = 0.5,
                             double delta_d = 1.5);

/// Exact subgradient of embedding_loss (kinks resolve to 0).
Matrix embedding_loss_grad(const Matrix& embeddings, std::span<const int> instances, double delta_v = 0.5,
                           double delta_d = 1.5);

/// Offset regression loss: mean L1 error against the centroid offsets plus
/// the negative mean cosine between predicted and true offset directions.
/// Vectors with L2 norm below 1e-9 contribute cosine 0.
OffsetLoss offset_loss(std::span<const Vec3> offsets, std::span<const Vec3> positions, std::span<const int> instances);

std::vector<Vec3> offset_loss_grad(std::span<const Vec3> offsets, std::span<const Vec3> positions,
                                   std::span<const int> instances);

/// L = L_s + W_e*L_e + W_o*L_o (+ W_r*L_r, identically 0 here: no network
/// weights exist in this toolkit).
double total_loss(const LossBreakdown& parts, double w_e, double w_o, double w_r);

} // namespace panoptic::losses
