#include "panoptic/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace panoptic::losses {

namespace {

constexpr double kProbFloor = 1e-12;
constexpr double kNormFloor = 1e-9;
constexpr double kRegWeight = 0.001;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

/// Groups points by instance id; ids must be dense 0..M-1 with no point left out.
std::vector<std::vector<std::uint32_t>> instance_groups(std::span<const int> instances) {
    int max_id = -1;
    for (int id : instances) {
        if (id < 0) throw std::invalid_argument("losses: point without instance");
        max_id = std::max(max_id, id);
    }
    if (max_id < 0) throw std::invalid_argument("losses: no instances");
    std::vector<std::vector<std::uint32_t>> groups(static_cast<std::size_t>(max_id) + 1);
    for (std::size_t i = 0; i < instances.size(); ++i)
        groups[static_cast<std::size_t>(instances[i])].push_back(static_cast<std::uint32_t>(i));
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (groups[g].empty()) throw std::invalid_argument("losses: empty instance " + std::to_string(g));
    return groups;
}

std::vector<std::vector<double>> instance_means(const Matrix& embeddings,
                                                const std::vector<std::vector<std::uint32_t>>& groups) {
    const std::size_t dim = embeddings.cols();
    std::vector<std::vector<double>> means(groups.size(), std::vector<double>(dim, 0.0));
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::uint32_t j : groups[g]) {
            const auto row = embeddings.row(j);
            for (std::size_t d = 0; d < dim; ++d) means[g][d] += row[d];
        }
        for (std::size_t d = 0; d < dim; ++d) means[g][d] /= static_cast<double>(groups[g].size());
    }
    return means;
}

double l1_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += std::abs(x);
    return s;
}

} // namespace

double cross_entropy(const Matrix& probs, std::span<const int> labels) {
    if (probs.rows() != labels.size()) throw std::invalid_argument("cross_entropy: shape mismatch");
    if (probs.rows() == 0) throw std::invalid_argument("cross_entropy: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        const int label = labels[i];
        if (label < 0 || static_cast<std::size_t>(label) >= probs.cols())
            throw std::invalid_argument("cross_entropy: label " + std::to_string(label) + " out of range");
        sum -= std::log(std::max(probs(i, static_cast<std::size_t>(label)), kProbFloor));
    }
    return sum / static_cast<double>(probs.rows());
}

EmbeddingLoss embedding_loss(const Matrix& embeddings, std::span<const int> instances, double delta_v,
                             double delta_d) {
    if (embeddings.rows() != instances.size()) throw std::invalid_argument("embedding_loss: shape mismatch");
    const auto groups = instance_groups(instances);
    const auto means = instance_means(embeddings, groups);
    const auto n_gt = static_cast<double>(groups.size());
    const std::size_t dim = embeddings.cols();

    EmbeddingLoss out;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        double acc = 0.0;
        for (std::uint32_t j : groups[g]) {
            double l1 = 0.0;
            const auto row = embeddings.row(j);
            for (std::size_t d = 0; d < dim; ++d) l1 += std::abs(means[g][d] - row[d]);
            const double hinge = std::max(0.0, l1 - delta_v);
            acc += hinge * hinge;
        }
        out.var += acc / static_cast<double>(groups[g].size());
        out.reg += l1_norm(means[g]);
    }
    out.var /= n_gt;
    out.reg /= n_gt;

    if (groups.size() >= 2) {
        double acc = 0.0;
        for (std::size_t a = 0; a < groups.size(); ++a) {
            for (std::size_t b = a + 1; b < groups.size(); ++b) {
                double l1 = 0.0;
                for (std::size_t d = 0; d < dim; ++d) l1 += std::abs(means[a][d] - means[b][d]);
                const double hinge = std::max(0.0, 2.0 * delta_d - l1);
                acc += 2.0 * hinge * hinge; // both ordered pairs
            }
        }
        out.dist = acc / (n_gt * (n_gt - 1.0));
    }

    out.total = out.var + out.dist + kRegWeight * out.reg;
    return out;
}

Matrix embedding_loss_grad(const Matrix& embeddings, std::span<const int> instances, double delta_v,
                           double delta_d) {
    if (embeddings.rows() != instances.size()) throw std::invalid_argument("embedding_loss_grad: shape mismatch");
    const auto groups = instance_groups(instances);
    const auto means = instance_means(embeddings, groups);
    const auto n_gt = static_cast<double>(groups.size());
    const std::size_t dim = embeddings.cols();

    Matrix grad(embeddings.rows(), dim);

    // Pull term: direct part per member plus the shared through-the-mean part.
    std::vector<double> diff(dim), mean_part(dim);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double inv_size = 1.0 / static_cast<double>(groups[g].size());
        const double pv = inv_size / n_gt;
        std::fill(mean_part.begin(), mean_part.end(), 0.0);
        for (std::uint32_t j : groups[g]) {
            const auto row = embeddings.row(j);
            double l1 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                diff[d] = means[g][d] - row[d];
                l1 += std::abs(diff[d]);
            }
            const double hinge = l1 - delta_v;
            if (hinge <= 0.0) continue;
            auto grow = grad.row(j);
            for (std::size_t d = 0; d < dim; ++d) {
                const double s = 2.0 * hinge * sign(diff[d]);
                grow[d] -= pv * s;
                mean_part[d] += s;
            }
        }
        for (std::uint32_t k : groups[g]) {
            auto grow = grad.row(k);
            for (std::size_t d = 0; d < dim; ++d) grow[d] += pv * inv_size * mean_part[d];
        }
    }

    // Push term gradient lands on the means, then spreads to the members.
    if (groups.size() >= 2) {
        const double scale = 1.0 / (n_gt * (n_gt - 1.0));
        std::vector<std::vector<double>> mean_grad(groups.size(), std::vector<double>(dim, 0.0));
        for (std::size_t a = 0; a < groups.size(); ++a) {
            for (std::size_t b = a + 1; b < groups.size(); ++b) {
                double l1 = 0.0;
                for (std::size_t d = 0; d < dim; ++d) l1 += std::abs(means[a][d] - means[b][d]);
                const double hinge = 2.0 * delta_d - l1;
                if (hinge <= 0.0) continue;
                for (std::size_t d = 0; d < dim; ++d) {
                    // Both ordered pairs contribute; d(hinge^2) = -2*hinge*sign.
                    const double s = -4.0 * scale * hinge * sign(means[a][d] - means[b][d]);
                    mean_grad[a][d] += s;
                    mean_grad[b][d] -= s;
                }
            }
        }
        for (std::size_t g = 0; g < groups.size(); ++g) {
            const double inv_size = 1.0 / static_cast<double>(groups[g].size());
            for (std::uint32_t k : groups[g]) {
                auto grow = grad.row(k);
                for (std::size_t d = 0; d < dim; ++d) grow[d] += inv_size * mean_grad[g][d];
            }
        }
    }

    // Regularizer gradient.
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double f = kRegWeight / (n_gt * static_cast<double>(groups[g].size()));
        for (std::uint32_t k : groups[g]) {
            auto grow = grad.row(k);
            for (std::size_t d = 0; d < dim; ++d) grow[d] += f * sign(means[g][d]);
        }
    }
    return grad;
}

OffsetLoss offset_loss(std::span<const Vec3> offsets, std::span<const Vec3> positions,
                       std::span<const int> instances) {
    if (offsets.size() != positions.size() || offsets.size() != instances.size())
        throw std::invalid_argument("offset_loss: shape mismatch");
    const auto groups = instance_groups(instances);

    std::vector<Vec3> centroids(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        Vec3 c;
        for (std::uint32_t j : groups[g]) c += positions[j];
        centroids[g] = c / static_cast<double>(groups[g].size());
    }

    OffsetLoss out;
    const auto m = static_cast<double>(offsets.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::uint32_t j : groups[g]) {
            const Vec3 target = centroids[g] - positions[j];
            const Vec3 err = offsets[j] - target;
            out.reg += std::abs(err.x) + std::abs(err.y) + std::abs(err.z);
            const double no = offsets[j].norm();
            const double nt = target.norm();
            if (no >= kNormFloor && nt >= kNormFloor) out.dir -= offsets[j].dot(target) / (no * nt);
        }
    }
    out.reg /= m;
    out.dir /= m;
    out.total = out.reg + out.dir;
    return out;
}

std::vector<Vec3> offset_loss_grad(std::span<const Vec3> offsets, std::span<const Vec3> positions,
                                   std::span<const int> instances) {
    if (offsets.size() != positions.size() || offsets.size() != instances.size())
        throw std::invalid_argument("offset_loss_grad: shape mismatch");
    const auto groups = instance_groups(instances);

    std::vector<Vec3> centroids(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        Vec3 c;
        for (std::uint32_t j : groups[g]) c += positions[j];
        centroids[g] = c / static_cast<double>(groups[g].size());
    }

    std::vector<Vec3> grad(offsets.size());
    const double inv_m = 1.0 / static_cast<double>(offsets.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::uint32_t j : groups[g]) {
            const Vec3 target = centroids[g] - positions[j];
            const Vec3 err = offsets[j] - target;
            Vec3 gj{inv_m * sign(err.x), inv_m * sign(err.y), inv_m * sign(err.z)};
            const double no = offsets[j].norm();
            const double nt = target.norm();
            if (no >= kNormFloor && nt >= kNormFloor) {
                const Vec3 u = offsets[j] / no;
                const Vec3 v = target / nt;
                const double cos = u.dot(v);
                // d(u.v)/dO = (v - (u.v) u) / |O|; the loss carries a minus.
                gj -= (v - cos * u) * (inv_m / no);
            }
            grad[j] = gj;
        }
    }
    return grad;
}

double total_loss(const LossBreakdown& parts, double w_e, double w_o, double w_r) {
    // W_r is carried for report metadata; the regularizer needs network
    // weights, which do not exist here, so its contribution is 0.
    (void)w_r;
    return parts.semantic + w_e * parts.embedding.total + w_o * parts.offset.total;
}

} // namespace panoptic::losses
