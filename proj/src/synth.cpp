#include "panoptic/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

#include "panoptic/core/rng.hpp"

namespace panoptic::synth {

namespace {

constexpr double kSoftmaxLogit = 12.0;

struct SceneBuilder {
    const SceneSpec& spec;
    PointCloud cloud;
    std::uint64_t next_object = 0;

    explicit SceneBuilder(const SceneSpec& s) : spec(s) {
        cloud.semantic.emplace();
        cloud.instance.emplace();
    }

    void add_point(Rng& rng, const Vec3& p, int cls, int instance) {
        cloud.positions.push_back(p + Vec3{rng.normal(0.0, spec.jitter_sigma), rng.normal(0.0, spec.jitter_sigma),
                                           rng.normal(0.0, spec.jitter_sigma)});
        cloud.semantic->push_back(cls);
        cloud.instance->push_back(instance);
    }

    void rect(Rng& rng, const Vec3& origin, const Vec3& u, const Vec3& v, int cls, int instance) {
        const double area = u.norm() * v.norm();
        const auto n = rng.poisson(spec.density * area);
        for (std::uint64_t i = 0; i < n; ++i) add_point(rng, origin + u * rng.uniform() + v * rng.uniform(), cls, instance);
    }

    void cylinder(Rng& rng, const Vec3& base, double radius, double height, int cls, int instance) {
        const auto n = rng.poisson(spec.density * 2.0 * std::numbers::pi * radius * height);
        for (std::uint64_t i = 0; i < n; ++i) {
            const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
            add_point(rng, base + Vec3{radius * std::cos(a), radius * std::sin(a), rng.uniform(0.0, height)}, cls,
                      instance);
        }
    }

    void sphere_shell(Rng& rng, const Vec3& center, double radius, int cls, int instance) {
        const auto n = rng.poisson(spec.density * 4.0 * std::numbers::pi * radius * radius);
        for (std::uint64_t i = 0; i < n; ++i) {
            Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            const double len = dir.norm();
            if (len < 1e-12) {
                dir = {1.0, 0.0, 0.0};
            } else {
                dir = dir / len;
            }
            add_point(rng, center + dir * radius, cls, instance);
        }
    }

    void ellipsoid(Rng& rng, const Vec3& center, const Vec3& half_axes, int cls, int instance) {
        // Thomsen's area approximation is plenty for a point budget.
        const double p = 1.6075;
        const double ap = std::pow(half_axes.x, p), bp = std::pow(half_axes.y, p), cp = std::pow(half_axes.z, p);
        const double area = 4.0 * std::numbers::pi * std::pow((ap * bp + ap * cp + bp * cp) / 3.0, 1.0 / p);
        const auto n = rng.poisson(spec.density * area);
        for (std::uint64_t i = 0; i < n; ++i) {
            Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
            const double len = dir.norm();
            if (len < 1e-12) {
                dir = {1.0, 0.0, 0.0};
            } else {
                dir = dir / len;
            }
            add_point(rng,
                      center + Vec3{half_axes.x * dir.x, half_axes.y * dir.y, half_axes.z * dir.z}, cls, instance);
        }
    }

    void box(Rng& rng, const Vec3& center, const Vec3& size, int cls, int instance) {
        const Vec3 h = size / 2.0;
        const Vec3 o = center - h;
        rect(rng, o, {size.x, 0, 0}, {0, size.y, 0}, cls, instance);                                   // bottom
        rect(rng, {o.x, o.y, o.z + size.z}, {size.x, 0, 0}, {0, size.y, 0}, cls, instance);            // top
        rect(rng, o, {size.x, 0, 0}, {0, 0, size.z}, cls, instance);                                   // y-
        rect(rng, {o.x, o.y + size.y, o.z}, {size.x, 0, 0}, {0, 0, size.z}, cls, instance);            // y+
        rect(rng, o, {0, size.y, 0}, {0, 0, size.z}, cls, instance);                                   // x-
        rect(rng, {o.x + size.x, o.y, o.z}, {0, size.y, 0}, {0, 0, size.z}, cls, instance);            // x+
    }
};

struct Footprint {
    double x, y, radius;
};

} // namespace

Taxonomy default_taxonomy() {
    Taxonomy tax;
    tax.class_names = {"ground", "building", "barrier", "pole", "car", "pedestrian", "tree", "trash_can"};
    tax.stuff_mask = {true, true, true, false, false, false, false, false};
    return tax;
}

PointCloud generate_scene(const SceneSpec& spec) {
    if (spec.density <= 0.0) throw std::invalid_argument("generate_scene: density must be > 0");
    if (spec.grounds < 0 || spec.buildings < 0 || spec.barriers < 0 || spec.poles < 0 || spec.cars < 0 ||
        spec.pedestrians < 0 || spec.trees < 0 || spec.trash_cans < 0)
        throw std::invalid_argument("generate_scene: negative count");

    SceneBuilder scene(spec);
    const Rng master(spec.seed);
    const double ex = spec.extent.x, ey = spec.extent.y;
    const double base_z = spec.allow_contact ? 0.0 : spec.clearance;

    // Stuff surfaces. Ground strips tile the floor; facades line the y
    // borders; barriers are low interior walls.
    for (int g = 0; g < spec.grounds; ++g) {
        Rng rng = master.fork(scene.next_object++);
        const double y0 = ey * g / spec.grounds;
        scene.rect(rng, {0, y0, 0}, {ex, 0, 0}, {0, ey / spec.grounds, 0}, kGround, kNoInstance);
    }
    std::vector<Footprint> occupied;
    for (int b = 0; b < spec.buildings; ++b) {
        Rng rng = master.fork(scene.next_object++);
        const double h = rng.uniform(6.0, std::min(10.0, spec.extent.z));
        const double y = (b % 2 == 0) ? 0.0 : ey;
        scene.rect(rng, {0, y, base_z}, {ex, 0, 0}, {0, 0, h - base_z}, kBuilding, kNoInstance);
    }
    for (int b = 0; b < spec.barriers; ++b) {
        Rng rng = master.fork(scene.next_object++);
        const double len = rng.uniform(3.0, 6.0);
        const double margin = 2.0 + spec.clearance;
        const double x = rng.uniform(margin, std::max(margin + 0.1, ex - margin - len));
        const double y = rng.uniform(margin, std::max(margin + 0.1, ey - margin));
        scene.rect(rng, {x, y, base_z}, {len, 0, 0}, {0, 0, 1.0}, kBarrier, kNoInstance);
        occupied.push_back({x + len / 2.0, y, len / 2.0 + 0.2});
    }

    // Things placement: rejection sampling on xy footprints, everything at
    // least `clearance` apart (plus a small slack for the surface jitter).
    int instance_id = 0;
    const double slack = 8.0 * spec.jitter_sigma;
    auto place = [&](Rng& rng, double radius) -> Vec3 {
        const double margin = spec.clearance + radius + 0.3;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const double x = rng.uniform(margin, std::max(margin + 0.1, ex - margin));
            const double y = rng.uniform(margin, std::max(margin + 0.1, ey - margin));
            bool ok = true;
            for (const auto& f : occupied) {
                const double dx = x - f.x, dy = y - f.y;
                const double need = radius + f.radius + spec.clearance + slack;
                if (dx * dx + dy * dy < need * need) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                occupied.push_back({x, y, radius});
                return {x, y, 0.0};
            }
        }
        throw std::invalid_argument("generate_scene: could not place object, scene too crowded");
    };

    for (int i = 0; i < spec.poles; ++i) {
        Rng rng = master.fork(scene.next_object++);
        const double r = rng.uniform(0.06, 0.12);
        const double h = rng.uniform(3.0, 6.0);
        const Vec3 at = place(rng, r);
        scene.cylinder(rng, {at.x, at.y, base_z}, r, h, kPole, instance_id++);
    }
    for (int i = 0; i < spec.cars; ++i) {
        Rng rng = master.fork(scene.next_object++);
        const Vec3 size{rng.uniform(3.8, 4.6), rng.uniform(1.7, 2.0), rng.uniform(1.4, 1.6)};
        const double r = std::hypot(size.x, size.y) / 2.0;
        const Vec3 at = place(rng, r);
        scene.box(rng, {at.x, at.y, base_z + size.z / 2.0}, size, kCar, instance_id++);
    }
    for (int i = 0; i < spec.pedestrians; ++i) {
        Rng rng = master.fork(scene.next_object++);
        const Vec3 half{0.25, 0.25, rng.uniform(0.8, 0.95)};
        const Vec3 at = place(rng, half.x);
        scene.ellipsoid(rng, {at.x, at.y, base_z + half.z}, half, kPedestrian, instance_id++);
    }
    for (int i = 0; i < spec.trees; ++i) {
        Rng rng = master.fork(scene.next_object++);
        const double trunk_r = rng.uniform(0.12, 0.2);
        const double trunk_h = rng.uniform(2.0, 3.0);
        const double crown_r = rng.uniform(1.0, 1.6);
        const Vec3 at = place(rng, crown_r);
        scene.cylinder(rng, {at.x, at.y, base_z}, trunk_r, trunk_h, kTree, instance_id);
        scene.sphere_shell(rng, {at.x, at.y, base_z + trunk_h + crown_r * 0.7}, crown_r, kTree, instance_id);
        ++instance_id;
    }
    for (int i = 0; i < spec.trash_cans; ++i) {
        Rng rng = master.fork(scene.next_object++);
        const double r = rng.uniform(0.25, 0.35);
        const double h = rng.uniform(0.9, 1.2);
        const Vec3 at = place(rng, r);
        scene.cylinder(rng, {at.x, at.y, base_z}, r, h, kTrashCan, instance_id++);
    }

    return std::move(scene.cloud);
}

PredictionSet simulate_predictions(const PointCloud& cloud, const NoiseSpec& noise, std::size_t n_classes,
                                   std::size_t emb_dim) {
    if (!cloud.semantic || !cloud.instance)
        throw std::invalid_argument("simulate_predictions: cloud must carry gt semantic and instance labels");
    const std::size_t n = cloud.size();
    const Rng master(noise.seed);

    // Class probabilities: confident softmax rows around a possibly flipped label.
    Matrix probs(n, n_classes);
    {
        Rng rng = master.fork(1);
        const double hot = std::exp(kSoftmaxLogit);
        const double denom = hot + static_cast<double>(n_classes - 1);
        for (std::size_t i = 0; i < n; ++i) {
            int label = (*cloud.semantic)[i];
            if (noise.sem_confusion > 0.0 && rng.uniform() < noise.sem_confusion && n_classes > 1) {
                const auto shift = 1 + static_cast<int>(rng.below(n_classes - 1));
                label = (label + shift) % static_cast<int>(n_classes);
            }
            auto row = probs.row(i);
            for (std::size_t c = 0; c < n_classes; ++c) row[c] = 1.0 / denom;
            row[static_cast<std::size_t>(label)] = hot / denom;
        }
    }

    // Instance codes on a base-B integer lattice scaled by emb_sep: distinct
    // codes differ in some digit, so both L1 and L2 separation are >= emb_sep.
    // Stuff classes get pseudo-codes past the instance range so embeddings
    // exist for every point.
    int max_instance = -1;
    for (int id : *cloud.instance) max_instance = std::max(max_instance, id);
    const std::size_t n_codes = static_cast<std::size_t>(max_instance + 1) + n_classes;
    std::size_t base = 2;
    while (std::pow(static_cast<double>(base), static_cast<double>(emb_dim)) < static_cast<double>(n_codes)) ++base;
    auto code_coord = [&](std::size_t code, std::size_t d) {
        std::size_t v = code;
        for (std::size_t k = 0; k < d; ++k) v /= base;
        return static_cast<double>(v % base) * noise.emb_sep;
    };

    Matrix embeddings(n, emb_dim);
    {
        Rng rng = master.fork(2);
        for (std::size_t i = 0; i < n; ++i) {
            const int id = (*cloud.instance)[i];
            const std::size_t code = id >= 0 ? static_cast<std::size_t>(id)
                                             : static_cast<std::size_t>(max_instance + 1) +
                                                   static_cast<std::size_t>((*cloud.semantic)[i]);
            auto row = embeddings.row(i);
            for (std::size_t d = 0; d < emb_dim; ++d) row[d] = code_coord(code, d) + rng.normal(0.0, noise.emb_sigma);
        }
    }

    // Offsets: instance centroid minus position; zero target for stuff.
    std::map<int, std::pair<Vec3, std::size_t>> sums;
    for (std::size_t i = 0; i < n; ++i) {
        const int id = (*cloud.instance)[i];
        if (id < 0) continue;
        auto& [sum, count] = sums[id];
        sum += cloud.positions[i];
        ++count;
    }
    std::vector<Vec3> offsets(n);
    {
        Rng rng = master.fork(3);
        for (std::size_t i = 0; i < n; ++i) {
            const int id = (*cloud.instance)[i];
            Vec3 target{0.0, 0.0, 0.0};
            if (id >= 0) {
                const auto& [sum, count] = sums[id];
                target = sum / static_cast<double>(count) - cloud.positions[i];
            }
            offsets[i] = target + Vec3{rng.normal(0.0, noise.off_sigma), rng.normal(0.0, noise.off_sigma),
                                       rng.normal(0.0, noise.off_sigma)};
        }
    }

    PredictionSet preds;
    preds.class_probs = std::move(probs);
    preds.embeddings = std::move(embeddings);
    preds.offsets = std::move(offsets);
    return preds;
}

// ---------------------------------------------------------------------------
// Independent quadratic oracle. Deliberately shares no code with
// panoptic::metrics: instances are rebuilt from scratch and every IoU comes
// from a sorted-vector intersection.
// ---------------------------------------------------------------------------

namespace {

using IndexSet = std::vector<std::uint32_t>;

struct OracleInstances {
    std::vector<std::vector<IndexSet>> per_class;
};

std::size_t intersection_size(const IndexSet& a, const IndexSet& b) {
    std::size_t i = 0, j = 0, n = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j])
            ++i;
        else if (b[j] < a[i])
            ++j;
        else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

OracleInstances oracle_build(const SegmentationResult& result, const Taxonomy& tax, const std::vector<bool>& keep) {
    const std::size_t c = tax.num_classes();
    OracleInstances out;
    out.per_class.resize(c);

    std::map<int, IndexSet> by_id;
    for (std::size_t i = 0; i < result.size(); ++i) {
        if (!keep[i]) continue;
        if (result.instance[i] == kNoInstance) continue;
        by_id[result.instance[i]].push_back(static_cast<std::uint32_t>(i));
    }

    std::vector<int> effective(result.semantic);
    struct Group {
        std::uint32_t first;
        IndexSet members;
        int cls;
    };
    std::vector<Group> groups;
    for (auto& [id, members] : by_id) {
        std::map<int, std::size_t> votes;
        for (std::uint32_t p : members) {
            const int s = result.semantic[p];
            if (s >= 0 && static_cast<std::size_t>(s) < c) ++votes[s];
        }
        int cls = -1;
        std::size_t best = 0;
        for (const auto& [label, count] : votes) {
            if (count > best) { // std::map ascending: first max wins the tie
                best = count;
                cls = label;
            }
        }
        if (cls < 0) continue;
        for (std::uint32_t p : members) effective[p] = cls;
        groups.push_back({members.front(), std::move(members), cls});
    }
    std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.first < b.first; });
    for (auto& g : groups)
        if (tax.is_thing(static_cast<std::size_t>(g.cls))) out.per_class[static_cast<std::size_t>(g.cls)].push_back(std::move(g.members));

    for (std::size_t cls = 0; cls < c; ++cls) {
        if (!tax.is_stuff(cls)) continue;
        IndexSet members;
        for (std::size_t i = 0; i < result.size(); ++i)
            if (keep[i] && effective[i] == static_cast<int>(cls)) members.push_back(static_cast<std::uint32_t>(i));
        if (!members.empty()) out.per_class[cls].push_back(std::move(members));
    }
    return out;
}

metrics::Score oracle_mean(const std::vector<metrics::Score>& v) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : v)
        if (s) {
            sum += *s;
            ++n;
        }
    return n == 0 ? metrics::Score{} : metrics::Score{sum / static_cast<double>(n)};
}

} // namespace

metrics::MetricsReport oracle_metrics(const SegmentationResult& gt, const SegmentationResult& pred,
                                      const Taxonomy& taxonomy) {
    if (gt.size() != pred.size()) throw std::invalid_argument("oracle_metrics: length mismatch");
    if (gt.size() > 10000) throw std::invalid_argument("oracle_metrics: oracle is quadratic, refusing > 1e4 points");
    const std::size_t c = taxonomy.num_classes();

    std::vector<bool> keep(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) keep[i] = !taxonomy.is_ignored(gt.semantic[i]);

    metrics::MetricsReport report;
    report.taxonomy = taxonomy;

    // Semantic scores by direct confusion counting.
    {
        std::vector<std::size_t> tp(c, 0), in_gt(c, 0), in_pred(c, 0);
        std::size_t n = 0, hit = 0;
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (!keep[i]) continue;
            ++n;
            const int g = gt.semantic[i], p = pred.semantic[i];
            if (g >= 0 && static_cast<std::size_t>(g) < c) ++in_gt[static_cast<std::size_t>(g)];
            if (p >= 0 && static_cast<std::size_t>(p) < c) ++in_pred[static_cast<std::size_t>(p)];
            if (g == p && g >= 0 && static_cast<std::size_t>(g) < c) {
                ++hit;
                ++tp[static_cast<std::size_t>(g)];
            }
        }
        auto& sem = report.semantic;
        if (n > 0) sem.oacc = static_cast<double>(hit) / static_cast<double>(n);
        sem.per_class_iou.resize(c);
        for (std::size_t k = 0; k < c; ++k) {
            if (in_gt[k] + in_pred[k] == 0) {
                ++sem.skipped_classes;
                continue;
            }
            sem.per_class_iou[k] =
                static_cast<double>(tp[k]) / static_cast<double>(in_gt[k] + in_pred[k] - tp[k]);
        }
        sem.miou = oracle_mean(sem.per_class_iou);
    }

    const OracleInstances gt_inst = oracle_build(gt, taxonomy, keep);
    const OracleInstances pred_inst = oracle_build(pred, taxonomy, keep);

    std::vector<metrics::Score> covs, wcovs, precs, recs;
    std::vector<metrics::Score> pqs, pq_daggers, rqs, sqs;
    std::vector<metrics::Score> t_pq, t_rq, t_sq, s_pq, s_rq, s_sq;

    for (std::size_t cls = 0; cls < c; ++cls) {
        const auto& gs = gt_inst.per_class[cls];
        const auto& ps = pred_inst.per_class[cls];

        // All-pairs IoU table.
        std::vector<std::vector<double>> iou(gs.size(), std::vector<double>(ps.size(), 0.0));
        for (std::size_t j = 0; j < gs.size(); ++j)
            for (std::size_t k = 0; k < ps.size(); ++k) {
                const std::size_t inter = intersection_size(gs[j], ps[k]);
                if (inter > 0)
                    iou[j][k] = static_cast<double>(inter) /
                                static_cast<double>(gs[j].size() + ps[k].size() - inter);
            }

        std::vector<double> gt_max(gs.size(), 0.0), pred_max(ps.size(), 0.0);
        for (std::size_t j = 0; j < gs.size(); ++j)
            for (std::size_t k = 0; k < ps.size(); ++k) {
                gt_max[j] = std::max(gt_max[j], iou[j][k]);
                pred_max[k] = std::max(pred_max[k], iou[j][k]);
            }

        // Greedy one-to-one matching, (IoU desc, gt asc, pred asc).
        struct Cand {
            double iou;
            std::size_t j, k;
        };
        std::vector<Cand> cands;
        for (std::size_t j = 0; j < gs.size(); ++j)
            for (std::size_t k = 0; k < ps.size(); ++k)
                if (iou[j][k] > 0.0) cands.push_back({iou[j][k], j, k});
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.iou != b.iou) return a.iou > b.iou;
            if (a.j != b.j) return a.j < b.j;
            return a.k < b.k;
        });
        std::vector<bool> jused(gs.size(), false), kused(ps.size(), false);
        std::vector<Cand> matched;
        for (const auto& cand : cands) {
            if (jused[cand.j] || kused[cand.k]) continue;
            jused[cand.j] = kused[cand.k] = true;
            matched.push_back(cand);
        }
        std::size_t n_val = 0;
        double val_iou_sum = 0.0;
        for (const auto& cand : matched)
            if (cand.iou >= 0.5) {
                ++n_val;
                val_iou_sum += cand.iou;
            }

        if (taxonomy.is_thing(cls)) {
            metrics::Score cov, wcov, prec, rec;
            if (!gs.empty()) {
                double sum = 0.0, wsum = 0.0, total = 0.0;
                for (std::size_t j = 0; j < gs.size(); ++j) {
                    sum += gt_max[j];
                    wsum += static_cast<double>(gs[j].size()) * gt_max[j];
                    total += static_cast<double>(gs[j].size());
                }
                cov = sum / static_cast<double>(gs.size());
                wcov = wsum / total;
                rec = static_cast<double>(n_val) / static_cast<double>(gs.size());
            }
            if (!ps.empty()) prec = static_cast<double>(n_val) / static_cast<double>(ps.size());
            covs.push_back(cov);
            wcovs.push_back(wcov);
            precs.push_back(prec);
            recs.push_back(rec);
            report.instance.per_class.emplace(static_cast<int>(cls),
                                              metrics::InstanceClassScores{cov, wcov, prec, rec});
        }

        metrics::PanopticClassScores pano;
        if (!gs.empty() || !ps.empty()) {
            if (n_val > 0) {
                const double prec = static_cast<double>(n_val) / static_cast<double>(ps.size());
                const double rec = static_cast<double>(n_val) / static_cast<double>(gs.size());
                pano.rq = 2.0 * prec * rec / (prec + rec);
                pano.sq = val_iou_sum / static_cast<double>(n_val);
            } else {
                pano.rq = 0.0;
                pano.sq = 0.0;
            }
            pano.pq = *pano.sq * *pano.rq;
            if (taxonomy.is_stuff(cls)) {
                pano.pq_dagger = (!gs.empty() && !ps.empty()) ? iou[0][0] : 0.0;
            } else {
                pano.pq_dagger = pano.pq;
            }
        }
        pqs.push_back(pano.pq);
        pq_daggers.push_back(pano.pq_dagger);
        rqs.push_back(pano.rq);
        sqs.push_back(pano.sq);
        (taxonomy.is_thing(cls) ? t_pq : s_pq).push_back(pano.pq);
        (taxonomy.is_thing(cls) ? t_rq : s_rq).push_back(pano.rq);
        (taxonomy.is_thing(cls) ? t_sq : s_sq).push_back(pano.sq);
        report.panoptic.per_class.emplace(static_cast<int>(cls), pano);
    }

    report.instance.mcov = oracle_mean(covs);
    report.instance.mwcov = oracle_mean(wcovs);
    report.instance.mprec = oracle_mean(precs);
    report.instance.mrec = oracle_mean(recs);
    if (report.instance.mprec && report.instance.mrec) {
        const double p = *report.instance.mprec, r = *report.instance.mrec;
        report.instance.f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    report.panoptic.pq = oracle_mean(pqs);
    report.panoptic.pq_dagger = oracle_mean(pq_daggers);
    report.panoptic.rq = oracle_mean(rqs);
    report.panoptic.sq = oracle_mean(sqs);
    report.panoptic.things = {oracle_mean(t_pq), oracle_mean(t_rq), oracle_mean(t_sq)};
    report.panoptic.stuff = {oracle_mean(s_pq), oracle_mean(s_rq), oracle_mean(s_sq)};
    return report;
}

} // namespace panoptic::synth
