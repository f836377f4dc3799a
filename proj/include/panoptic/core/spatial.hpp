#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

#include "panoptic/core/geometry.hpp"
#include "panoptic/core/matrix.hpp"

namespace panoptic {

namespace detail {

// FxHash-style integer mix.
inline std::uint64_t hash_mix(std::uint64_t h, std::uint64_t v) {
    constexpr std::uint64_t k = 0x517cc1b727220a95ULL;
    h = ((h << 5) | (h >> 59)) ^ v;
    return h * k;
}

} // namespace detail

/// Uniform hash grid over 3-D points for bounded-radius neighbor queries.
/// Candidates are produced cell-wise; callers get exact squared distances.
class Grid3 {
  public:
    Grid3(std::span<const Vec3> points, double cell) : points_(points), cell_(cell) {
        cells_.reserve(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) cells_[key_of(points[i])].push_back(static_cast<std::uint32_t>(i));
    }

    double cell_size() const { return cell_; }

    /// Visits (index, squared_distance) of every stored point within `radius` of q.
    template <class F>
    void for_each_in_radius(const Vec3& q, double radius, F&& f) const {
        const double r2 = radius * radius;
        const long long reach = static_cast<long long>(std::ceil(radius / cell_));
        const Key base = key_of(q);
        for (long long dx = -reach; dx <= reach; ++dx)
            for (long long dy = -reach; dy <= reach; ++dy)
                for (long long dz = -reach; dz <= reach; ++dz) {
                    auto it = cells_.find(Key{base.x + dx, base.y + dy, base.z + dz});
                    if (it == cells_.end()) continue;
                    for (std::uint32_t idx : it->second) {
                        const double d2 = squared_distance(points_[idx], q);
                        if (d2 <= r2) f(idx, d2);
                    }
                }
    }

    /// Visits candidate indices in the cell neighborhood covering ball(q, radius),
    /// without distance filtering.
    template <class F>
    void for_each_candidate(const Vec3& q, double radius, F&& f) const {
        const long long reach = static_cast<long long>(std::ceil(radius / cell_));
        const Key base = key_of(q);
        for (long long dx = -reach; dx <= reach; ++dx)
            for (long long dy = -reach; dy <= reach; ++dy)
                for (long long dz = -reach; dz <= reach; ++dz) {
                    auto it = cells_.find(Key{base.x + dx, base.y + dy, base.z + dz});
                    if (it == cells_.end()) continue;
                    for (std::uint32_t idx : it->second) f(idx);
                }
    }

  private:
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

    Key key_of(const Vec3& p) const {
        return {static_cast<long long>(std::floor(p.x / cell_)), static_cast<long long>(std::floor(p.y / cell_)),
                static_cast<long long>(std::floor(p.z / cell_))};
    }

    std::span<const Vec3> points_;
    double cell_;
    std::unordered_map<Key, std::vector<std::uint32_t>, KeyHash> cells_;
};

/// Static kd-tree for exact nearest-neighbor lookups.
/// Equidistant candidates resolve to the lowest point index.
class KdTree3 {
  public:
    explicit KdTree3(std::span<const Vec3> points) : points_(points) {
        order_.resize(points.size());
        std::iota(order_.begin(), order_.end(), std::uint32_t{0});
        nodes_.reserve(points.size());
        if (!points.empty()) root_ = build(0, points.size());
    }

    struct Hit {
        std::size_t index = std::numeric_limits<std::size_t>::max();
        double squared_dist = std::numeric_limits<double>::infinity();
    };

    Hit nearest(const Vec3& q) const {
        Hit best;
        if (root_ >= 0) search(root_, q, best);
        return best;
    }

  private:
    struct Node {
        std::uint32_t point;
        int axis;
        int left = -1;
        int right = -1;
    };

    int build(std::size_t begin, std::size_t end) {
        Aabb box;
        for (std::size_t i = begin; i < end; ++i) box.expand(points_[order_[i]]);
        const Vec3 extent = box.max - box.min;
        int axis = 0;
        if (extent.y > extent[axis]) axis = 1;
        if (extent.z > extent[axis]) axis = 2;

        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) {
                             const double pa = points_[a][static_cast<std::size_t>(axis)];
                             const double pb = points_[b][static_cast<std::size_t>(axis)];
                             return pa < pb || (pa == pb && a < b);
                         });
        const int node_id = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{order_[mid], axis});
        if (mid > begin) nodes_[node_id].left = build(begin, mid);
        if (mid + 1 < end) nodes_[node_id].right = build(mid + 1, end);
        return node_id;
    }

    void search(int node_id, const Vec3& q, Hit& best) const {
        const Node& node = nodes_[static_cast<std::size_t>(node_id)];
        const Vec3& p = points_[node.point];
        const double d2 = squared_distance(p, q);
        if (d2 < best.squared_dist || (d2 == best.squared_dist && node.point < best.index)) {
            best.squared_dist = d2;
            best.index = node.point;
        }
        const double delta = q[static_cast<std::size_t>(node.axis)] - p[static_cast<std::size_t>(node.axis)];
        const int near = delta < 0.0 ? node.left : node.right;
        const int far = delta < 0.0 ? node.right : node.left;
        if (near >= 0) search(near, q, best);
        // <= keeps equidistant candidates reachable so the index tie rule stays exact.
        if (far >= 0 && delta * delta <= best.squared_dist) search(far, q, best);
    }

    std::span<const Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

/// Hash grid over rows of an N x D matrix (embedding space). Supports the
/// fixed-window queries of flat-kernel mean-shift and exact nearest-row
/// lookups via expanding cell shells.
class GridND {
  public:
    GridND(const Matrix& points, double cell) : points_(&points), dim_(points.cols()), cell_(cell) {
        cells_.reserve(points.rows());
        std::vector<int> key(dim_);
        for (std::size_t i = 0; i < points.rows(); ++i) {
            key_of(points.row(i), key);
            cells_[key].push_back(static_cast<std::uint32_t>(i));
        }
    }

    std::size_t dim() const { return dim_; }

    /// Visits (index, squared_distance) of rows within L2 radius of q.
    /// radius must be <= cell size (one-cell reach), which is all mean-shift needs.
    template <class F>
    void for_each_in_window(std::span<const double> q, double radius, F&& f) const {
        const double r2 = radius * radius;
        std::vector<int> base(dim_);
        key_of(q, base);
        std::vector<int> key(dim_);
        visit_offsets(0, base, key, [&](const std::vector<int>& k) {
            auto it = cells_.find(k);
            if (it == cells_.end()) return;
            for (std::uint32_t idx : it->second) {
                const double d2 = squared_dist(points_->row(idx), q);
                if (d2 <= r2) f(idx, d2);
            }
        });
    }

    /// Exact nearest stored row; ties resolve to the lowest row index.
    std::size_t nearest(std::span<const double> q) const {
        std::size_t best = std::numeric_limits<std::size_t>::max();
        double best_d2 = std::numeric_limits<double>::infinity();
        std::vector<int> base(dim_);
        key_of(q, base);

        // Shell r covers cells at Chebyshev distance r; any unexplored cell at
        // distance > r is at least (r-1+frac)*cell away, so best <= (r*cell)^2 ends it.
        const int max_shell = 4;
        for (int r = 0; r <= max_shell; ++r) {
            visit_shell(base, r, [&](const std::vector<int>& k) {
                auto it = cells_.find(k);
                if (it == cells_.end()) return;
                for (std::uint32_t idx : it->second) {
                    const double d2 = squared_dist(points_->row(idx), q);
                    if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                        best_d2 = d2;
                        best = idx;
                    }
                }
            });
            const double safe = static_cast<double>(r) * cell_;
            if (best_d2 <= safe * safe) return best;
        }
        // Sparse far query: fall back to a full scan.
        for (std::size_t idx = 0; idx < points_->rows(); ++idx) {
            const double d2 = squared_dist(points_->row(idx), q);
            if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                best_d2 = d2;
                best = idx;
            }
        }
        return best;
    }

  private:
    struct VecHash {
        std::size_t operator()(const std::vector<int>& v) const {
            std::uint64_t h = 0;
            for (int x : v) h = detail::hash_mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(x)));
            return static_cast<std::size_t>(h);
        }
    };

    void key_of(std::span<const double> p, std::vector<int>& out) const {
        for (std::size_t d = 0; d < dim_; ++d) out[d] = static_cast<int>(std::floor(p[d] / cell_));
    }

    static double squared_dist(std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t d = 0; d < a.size(); ++d) {
            const double diff = a[d] - b[d];
            s += diff * diff;
        }
        return s;
    }

    template <class F>
    void visit_offsets(std::size_t d, const std::vector<int>& base, std::vector<int>& key, F&& f) const {
        if (d == dim_) {
            f(key);
            return;
        }
        for (int off = -1; off <= 1; ++off) {
            key[d] = base[d] + off;
            visit_offsets(d + 1, base, key, f);
        }
    }

    template <class F>
    void visit_shell(const std::vector<int>& base, int r, F&& f) const {
        std::vector<int> key(dim_);
        visit_shell_rec(0, false, base, r, key, f);
    }

    template <class F>
    void visit_shell_rec(std::size_t d, bool on_boundary, const std::vector<int>& base, int r, std::vector<int>& key,
                         F&& f) const {
        if (d == dim_) {
            if (on_boundary || r == 0) f(key);
            return;
        }
        for (int off = -r; off <= r; ++off) {
            key[d] = base[d] + off;
            visit_shell_rec(d + 1, on_boundary || std::abs(off) == r, base, r, key, f);
        }
    }

    const Matrix* points_;
    std::size_t dim_;
    double cell_;
    std::unordered_map<std::vector<int>, std::vector<std::uint32_t>, VecHash> cells_;
};

} // namespace panoptic
