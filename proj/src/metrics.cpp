#include "panoptic/metrics.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_map>

namespace panoptic::metrics {

namespace {

Score mean_of_defined(const std::vector<Score>& values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

} // namespace

std::size_t MatchResult::n_valid(double threshold) const {
    std::size_t n = 0;
    for (const auto& m : matches)
        if (m.iou >= threshold) ++n;
    return n;
}

SemanticSection semantic_metrics(std::span<const int> gt_sem, std::span<const int> pred_sem,
                                 const Taxonomy& taxonomy) {
    if (gt_sem.size() != pred_sem.size()) throw std::invalid_argument("semantic_metrics: length mismatch");

    const std::size_t c = taxonomy.num_classes();
    std::vector<std::size_t> tp(c, 0), gt_count(c, 0), pred_count(c, 0);
    std::size_t kept = 0, correct = 0;

    for (std::size_t i = 0; i < gt_sem.size(); ++i) {
        const int g = gt_sem[i];
        if (taxonomy.is_ignored(g)) continue;
        ++kept;
        const int p = pred_sem[i];
        const bool g_in = g >= 0 && static_cast<std::size_t>(g) < c;
        const bool p_in = p >= 0 && static_cast<std::size_t>(p) < c;
        if (g_in) ++gt_count[static_cast<std::size_t>(g)];
        if (p_in) ++pred_count[static_cast<std::size_t>(p)];
        if (g == p && g_in) {
            ++correct;
            ++tp[static_cast<std::size_t>(g)];
        }
    }

    SemanticSection out;
    out.oacc = kept > 0 ? Score(static_cast<double>(correct) / static_cast<double>(kept)) : std::nullopt;
    out.per_class_iou.resize(c);
    for (std::size_t i = 0; i < c; ++i) {
        const std::size_t denom = gt_count[i] + pred_count[i] - tp[i];
        if (gt_count[i] + pred_count[i] > 0)
            out.per_class_iou[i] = static_cast<double>(tp[i]) / static_cast<double>(denom);
        else
            ++out.skipped_classes;
    }
    out.miou = mean_of_defined(out.per_class_iou);
    return out;
}

ClassInstances build_instances(const SegmentationResult& result, const Taxonomy& taxonomy,
                               const std::vector<bool>& keep) {
    const std::size_t n = result.size();
    if (result.instance.size() != n) throw std::invalid_argument("build_instances: semantic/instance length mismatch");
    if (!keep.empty() && keep.size() != n) throw std::invalid_argument("build_instances: keep mask length mismatch");
    const std::size_t c = taxonomy.num_classes();

    // Group points by instance id, in ascending smallest-member order.
    std::unordered_map<int, std::size_t> group_of;
    std::vector<std::vector<std::uint32_t>> groups;
    for (std::size_t i = 0; i < n; ++i) {
        if (!keep.empty() && !keep[i]) continue;
        const int id = result.instance[i];
        if (id == kNoInstance) continue;
        auto [it, inserted] = group_of.try_emplace(id, groups.size());
        if (inserted) groups.emplace_back();
        groups[it->second].push_back(static_cast<std::uint32_t>(i));
    }

    // Majority vote decides each group's class; the vote overwrites the
    // members' semantic labels for everything downstream.
    std::vector<int> effective(result.semantic);
    std::vector<int> group_class(groups.size(), -1);
    std::vector<std::size_t> votes(c);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        std::fill(votes.begin(), votes.end(), 0);
        for (std::uint32_t p : groups[g]) {
            const int s = result.semantic[p];
            if (s >= 0 && static_cast<std::size_t>(s) < c) ++votes[static_cast<std::size_t>(s)];
        }
        std::size_t best = 0, best_votes = 0;
        for (std::size_t k = 0; k < c; ++k) {
            if (votes[k] > best_votes) {
                best_votes = votes[k];
                best = k;
            }
        }
        if (best_votes == 0) continue; // no classifiable member, group dropped
        group_class[g] = static_cast<int>(best);
        for (std::uint32_t p : groups[g]) effective[p] = static_cast<int>(best);
    }

    ClassInstances out;
    out.per_class.resize(c);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const int cls = group_class[g];
        if (cls >= 0 && taxonomy.is_thing(static_cast<std::size_t>(cls)))
            out.per_class[static_cast<std::size_t>(cls)].push_back(std::move(groups[g]));
    }
    for (std::size_t cls = 0; cls < c; ++cls) {
        if (!taxonomy.is_stuff(cls)) continue;
        std::vector<std::uint32_t> members;
        for (std::size_t i = 0; i < n; ++i) {
            if (!keep.empty() && !keep[i]) continue;
            if (effective[i] == static_cast<int>(cls)) members.push_back(static_cast<std::uint32_t>(i));
        }
        if (!members.empty()) out.per_class[cls].push_back(std::move(members));
    }
    return out;
}

MatchResult match_max_iou(const InstanceSet& gt, const InstanceSet& pred) {
    MatchResult out;
    out.gt_max_iou.assign(gt.size(), 0.0);
    out.pred_max_iou.assign(pred.size(), 0.0);
    out.gt_argmax.assign(gt.size(), -1);
    out.pred_argmax.assign(pred.size(), -1);
    out.gt_sizes.resize(gt.size());
    out.pred_sizes.resize(pred.size());
    for (std::size_t j = 0; j < gt.size(); ++j) out.gt_sizes[j] = gt[j].size();
    for (std::size_t k = 0; k < pred.size(); ++k) out.pred_sizes[k] = pred[k].size();
    if (gt.empty() && pred.empty()) return out;

    // Overlap counts via point -> gt-instance lookup, one scan per pred point.
    std::unordered_map<std::uint32_t, int> gt_of;
    for (std::size_t j = 0; j < gt.size(); ++j)
        for (std::uint32_t p : gt[j]) gt_of.emplace(p, static_cast<int>(j));

    std::vector<MatchResult::Pair> pairs;
    std::unordered_map<int, std::size_t> overlap;
    for (std::size_t k = 0; k < pred.size(); ++k) {
        overlap.clear();
        for (std::uint32_t p : pred[k]) {
            auto it = gt_of.find(p);
            if (it != gt_of.end()) ++overlap[it->second];
        }
        for (const auto& [j, inter] : overlap) {
            const std::size_t uni = gt[static_cast<std::size_t>(j)].size() + pred[k].size() - inter;
            const double iou = static_cast<double>(inter) / static_cast<double>(uni);
            pairs.push_back({iou, j, static_cast<int>(k)});
            // Ties resolve to the lower opposing index for determinism.
            int& g_arg = out.gt_argmax[static_cast<std::size_t>(j)];
            double& g_max = out.gt_max_iou[static_cast<std::size_t>(j)];
            if (iou > g_max || (iou == g_max && (g_arg == -1 || static_cast<int>(k) < g_arg))) {
                g_max = iou;
                g_arg = static_cast<int>(k);
            }
            int& p_arg = out.pred_argmax[k];
            double& p_max = out.pred_max_iou[k];
            if (iou > p_max || (iou == p_max && (p_arg == -1 || j < p_arg))) {
                p_max = iou;
                p_arg = j;
            }
        }
    }

    // Greedy one-to-one assignment, deterministic ordering.
    std::sort(pairs.begin(), pairs.end(), [](const MatchResult::Pair& a, const MatchResult::Pair& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.gt != b.gt) return a.gt < b.gt;
        return a.pred < b.pred;
    });
    std::vector<bool> gt_used(gt.size(), false), pred_used(pred.size(), false);
    for (const auto& pair : pairs) {
        if (gt_used[static_cast<std::size_t>(pair.gt)] || pred_used[static_cast<std::size_t>(pair.pred)]) continue;
        gt_used[static_cast<std::size_t>(pair.gt)] = true;
        pred_used[static_cast<std::size_t>(pair.pred)] = true;
        out.matches.push_back(pair);
    }
    return out;
}

InstanceSection instance_metrics(const Matching& matching, const Taxonomy& taxonomy, double validity_threshold) {
    const std::size_t c = taxonomy.num_classes();
    if (matching.size() != c) throw std::invalid_argument("instance_metrics: matching size != class count");

    InstanceSection out;
    std::vector<Score> covs, wcovs, precs, recs;
    for (std::size_t cls = 0; cls < c; ++cls) {
        if (!taxonomy.is_thing(cls)) continue;
        const MatchResult& m = matching[cls];
        InstanceClassScores scores;
        const std::size_t n_gt = m.n_gt(), n_pre = m.n_pred();
        if (n_gt > 0) {
            double iou_sum = 0.0, weighted = 0.0, total_size = 0.0;
            for (std::size_t j = 0; j < n_gt; ++j) {
                iou_sum += m.gt_max_iou[j];
                weighted += static_cast<double>(m.gt_sizes[j]) * m.gt_max_iou[j];
                total_size += static_cast<double>(m.gt_sizes[j]);
            }
            scores.cov = iou_sum / static_cast<double>(n_gt);
            scores.wcov = weighted / total_size;
        }
        const auto n_val = static_cast<double>(m.n_valid(validity_threshold));
        if (n_pre > 0) scores.prec = n_val / static_cast<double>(n_pre);
        if (n_gt > 0) scores.rec = n_val / static_cast<double>(n_gt);

        covs.push_back(scores.cov);
        wcovs.push_back(scores.wcov);
        precs.push_back(scores.prec);
        recs.push_back(scores.rec);
        out.per_class.emplace(static_cast<int>(cls), scores);
    }

    out.mcov = mean_of_defined(covs);
    out.mwcov = mean_of_defined(wcovs);
    out.mprec = mean_of_defined(precs);
    out.mrec = mean_of_defined(recs);
    if (out.mprec && out.mrec) {
        const double p = *out.mprec, r = *out.mrec;
        out.f1 = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
    }
    return out;
}

PanopticSection panoptic_metrics(const Matching& matching, const Taxonomy& taxonomy, double validity_threshold) {
    const std::size_t c = taxonomy.num_classes();
    if (matching.size() != c) throw std::invalid_argument("panoptic_metrics: matching size != class count");

    PanopticSection out;
    std::vector<Score> pqs, pq_daggers, rqs, sqs;
    std::vector<Score> thing_pqs, thing_rqs, thing_sqs, stuff_pqs, stuff_rqs, stuff_sqs;

    for (std::size_t cls = 0; cls < c; ++cls) {
        const MatchResult& m = matching[cls];
        PanopticClassScores scores;
        const std::size_t n_gt = m.n_gt(), n_pre = m.n_pred();
        if (n_gt > 0 || n_pre > 0) {
            double iou_sum = 0.0;
            std::size_t n_val = 0;
            for (const auto& pair : m.matches) {
                if (pair.iou >= validity_threshold) {
                    iou_sum += pair.iou;
                    ++n_val;
                }
            }
            if (n_val > 0) {
                const double prec = static_cast<double>(n_val) / static_cast<double>(n_pre);
                const double rec = static_cast<double>(n_val) / static_cast<double>(n_gt);
                scores.rq = 2.0 * prec * rec / (prec + rec);
                scores.sq = iou_sum / static_cast<double>(n_val);
            } else {
                // Populated class with no valid match scores zero, not null.
                scores.rq = 0.0;
                scores.sq = 0.0;
            }
            scores.pq = *scores.sq * *scores.rq;
            if (taxonomy.is_stuff(cls)) {
                // Plain whole-class IoU; at most one instance exists per side.
                double iou = 0.0;
                if (n_gt > 0 && n_pre > 0) iou = m.gt_max_iou[0];
                scores.pq_dagger = iou;
            } else {
                scores.pq_dagger = scores.pq;
            }
        }

        pqs.push_back(scores.pq);
        pq_daggers.push_back(scores.pq_dagger);
        rqs.push_back(scores.rq);
        sqs.push_back(scores.sq);
        if (taxonomy.is_thing(cls)) {
            thing_pqs.push_back(scores.pq);
            thing_rqs.push_back(scores.rq);
            thing_sqs.push_back(scores.sq);
        } else {
            stuff_pqs.push_back(scores.pq);
            stuff_rqs.push_back(scores.rq);
            stuff_sqs.push_back(scores.sq);
        }
        out.per_class.emplace(static_cast<int>(cls), scores);
    }

    out.pq = mean_of_defined(pqs);
    out.pq_dagger = mean_of_defined(pq_daggers);
    out.rq = mean_of_defined(rqs);
    out.sq = mean_of_defined(sqs);
    out.things = {mean_of_defined(thing_pqs), mean_of_defined(thing_rqs), mean_of_defined(thing_sqs)};
    out.stuff = {mean_of_defined(stuff_pqs), mean_of_defined(stuff_rqs), mean_of_defined(stuff_sqs)};
    return out;
}

MetricsReport evaluate(const SegmentationResult& gt, const SegmentationResult& pred, const Taxonomy& taxonomy) {
    if (gt.size() != pred.size() || gt.instance.size() != gt.size() || pred.instance.size() != pred.size())
        throw std::invalid_argument("evaluate: ground truth / prediction length mismatch");

    std::vector<bool> keep(gt.size(), true);
    if (taxonomy.ignore_label) {
        for (std::size_t i = 0; i < gt.size(); ++i) keep[i] = !taxonomy.is_ignored(gt.semantic[i]);
    }

    MetricsReport report;
    report.taxonomy = taxonomy;
    report.semantic = semantic_metrics(gt.semantic, pred.semantic, taxonomy);

    const ClassInstances gt_inst = build_instances(gt, taxonomy, keep);
    const ClassInstances pred_inst = build_instances(pred, taxonomy, keep);
    Matching matching(taxonomy.num_classes());
    for (std::size_t cls = 0; cls < taxonomy.num_classes(); ++cls)
        matching[cls] = match_max_iou(gt_inst.per_class[cls], pred_inst.per_class[cls]);

    report.instance = instance_metrics(matching, taxonomy);
    report.panoptic = panoptic_metrics(matching, taxonomy);
    return report;
}

} // namespace panoptic::metrics
