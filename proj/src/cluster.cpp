#include "panoptic/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "panoptic/core/spatial.hpp"
#include "panoptic/core/threading.hpp"

namespace panoptic::cluster {

namespace {

struct UnionFind {
    std::vector<std::uint32_t> parent;
    std::vector<std::uint32_t> size;

    explicit UnionFind(std::size_t n) : parent(n), size(n, 1) { std::iota(parent.begin(), parent.end(), 0u); }

    std::uint32_t find(std::uint32_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }

    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (size[a] < size[b]) std::swap(a, b);
        parent[b] = a;
        size[a] += size[b];
    }
};

} // namespace

std::vector<int> mean_shift(const Matrix& points, double bandwidth, std::size_t max_iter, double tol,
                            std::uint64_t /*seed*/, unsigned threads) {
    const std::size_t m = points.rows();
    const std::size_t dim = points.cols();
    if (m == 0) throw std::invalid_argument("mean_shift: empty input");
    if (bandwidth <= 0.0) throw std::invalid_argument("mean_shift: bandwidth must be > 0");

    // Bin seeding: one seed per occupied bandwidth cell, in first-occurrence
    // order; each seed starts at its cell's point mean.
    struct VecHash {
        std::size_t operator()(const std::vector<int>& v) const {
            std::uint64_t h = 0;
            for (int x : v) h = detail::hash_mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(x)));
            return static_cast<std::size_t>(h);
        }
    };
    std::unordered_map<std::vector<int>, std::size_t, VecHash> cell_of;
    std::vector<std::vector<double>> seed_sum;
    std::vector<std::size_t> seed_count;
    std::vector<std::uint32_t> seed_first_point;
    std::vector<int> key(dim);
    for (std::size_t i = 0; i < m; ++i) {
        const auto row = points.row(i);
        for (std::size_t d = 0; d < dim; ++d) key[d] = static_cast<int>(std::floor(row[d] / bandwidth));
        auto [it, inserted] = cell_of.try_emplace(key, seed_sum.size());
        if (inserted) {
            seed_sum.emplace_back(dim, 0.0);
            seed_count.push_back(0);
            seed_first_point.push_back(static_cast<std::uint32_t>(i));
        }
        auto& sum = seed_sum[it->second];
        for (std::size_t d = 0; d < dim; ++d) sum[d] += row[d];
        ++seed_count[it->second];
    }

    const std::size_t n_seeds = seed_sum.size();
    const GridND grid(points, bandwidth);

    Matrix modes(n_seeds, dim);
    std::vector<std::size_t> support(n_seeds, 0);
    parallel_for(n_seeds, threads, [&](std::size_t s) {
        std::vector<double> x(dim);
        for (std::size_t d = 0; d < dim; ++d) x[d] = seed_sum[s][d] / static_cast<double>(seed_count[s]);

        std::vector<double> mean(dim);
        for (std::size_t iter = 0; iter < max_iter; ++iter) {
            std::fill(mean.begin(), mean.end(), 0.0);
            std::size_t found = 0;
            grid.for_each_in_window(x, bandwidth, [&](std::uint32_t idx, double) {
                const auto row = points.row(idx);
                for (std::size_t d = 0; d < dim; ++d) mean[d] += row[d];
                ++found;
            });
            if (found == 0) {
                // A cell's mean can start outside every point's bandwidth ball
                // in high dimensions; restart at the cell's first point.
                const auto row = points.row(seed_first_point[s]);
                std::copy(row.begin(), row.end(), x.begin());
                continue;
            }
            double shift2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                mean[d] /= static_cast<double>(found);
                const double delta = mean[d] - x[d];
                shift2 += delta * delta;
            }
            x = mean;
            if (shift2 < (tol * bandwidth) * (tol * bandwidth)) break;
        }
        std::copy(x.begin(), x.end(), modes.row(s).begin());
        std::size_t final_support = 0;
        grid.for_each_in_window(modes.row(s), bandwidth, [&](std::uint32_t, double) { ++final_support; });
        support[s] = final_support;
    });

    // Merge modes closer than the bandwidth; higher support wins, ties to the
    // lower seed index. Kept order defines the labels.
    std::vector<std::size_t> order(n_seeds);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (support[a] != support[b]) return support[a] > support[b];
        return a < b;
    });

    std::vector<std::size_t> kept;
    const double bw2 = bandwidth * bandwidth;
    for (std::size_t s : order) {
        bool absorbed = false;
        for (std::size_t k : kept) {
            double d2 = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double delta = modes(s, d) - modes(k, d);
                d2 += delta * delta;
            }
            if (d2 < bw2) {
                absorbed = true;
                break;
            }
        }
        if (!absorbed) kept.push_back(s);
    }

    Matrix kept_modes(kept.size(), dim);
    for (std::size_t k = 0; k < kept.size(); ++k) {
        const auto src = modes.row(kept[k]);
        std::copy(src.begin(), src.end(), kept_modes.row(k).begin());
    }

    std::vector<int> labels(m);
    if (kept.size() == 1) {
        std::fill(labels.begin(), labels.end(), 0);
        return labels;
    }
    if (kept.size() <= 64) {
        parallel_for(m, threads, [&](std::size_t i) {
            const auto p = points.row(i);
            std::size_t best = 0;
            double best_d2 = std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < kept.size(); ++k) {
                double d2 = 0.0;
                for (std::size_t d = 0; d < dim; ++d) {
                    const double delta = p[d] - kept_modes(k, d);
                    d2 += delta * delta;
                }
                if (d2 < best_d2) {
                    best_d2 = d2;
                    best = k;
                }
            }
            labels[i] = static_cast<int>(best);
        });
    } else {
        const GridND mode_grid(kept_modes, bandwidth);
        parallel_for(m, threads, [&](std::size_t i) { labels[i] = static_cast<int>(mode_grid.nearest(points.row(i))); });
    }
    // A surviving mode can still win no points; compact so labels stay dense.
    std::vector<int> remap(kept.size(), -1);
    int next = 0;
    for (int l : labels)
        if (remap[static_cast<std::size_t>(l)] == -1) remap[static_cast<std::size_t>(l)] = next++;
    for (int& l : labels) l = remap[static_cast<std::size_t>(l)];
    return labels;
}

std::vector<int> connected_components(std::span<const Vec3> shifted, std::span<const int> semantic, double th_d,
                                      std::size_t th_n) {
    if (shifted.size() != semantic.size()) throw std::invalid_argument("connected_components: length mismatch");
    if (th_d <= 0.0) throw std::invalid_argument("connected_components: th_d must be > 0");
    const std::size_t m = shifted.size();
    std::vector<int> labels(m, kNoInstance);
    if (m == 0) return labels;

    UnionFind uf(m);
    const Grid3 grid(shifted, th_d);
    const double th2 = th_d * th_d;
    for (std::uint32_t i = 0; i < m; ++i) {
        grid.for_each_candidate(shifted[i], th_d, [&](std::uint32_t j) {
            if (j <= i || semantic[j] != semantic[i]) return;
            if (squared_distance(shifted[i], shifted[j]) < th2) uf.unite(i, j);
        });
    }

    std::vector<std::size_t> component_size(m, 0);
    for (std::uint32_t i = 0; i < m; ++i) ++component_size[uf.find(i)];

    // Dense labels in order of smallest member index; size must exceed th_n.
    std::unordered_map<std::uint32_t, int> label_of_root;
    int next = 0;
    for (std::uint32_t i = 0; i < m; ++i) {
        const std::uint32_t root = uf.find(i);
        if (component_size[root] <= th_n) continue;
        auto [it, inserted] = label_of_root.try_emplace(root, next);
        if (inserted) ++next;
        labels[i] = it->second;
    }
    return labels;
}

std::vector<Vec3> shift_coordinates(std::span<const Vec3> positions, std::span<const Vec3> offsets) {
    if (positions.size() != offsets.size()) throw std::invalid_argument("shift_coordinates: shape mismatch");
    std::vector<Vec3> out(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) out[i] = positions[i] + offsets[i];
    return out;
}

} // namespace panoptic::cluster
