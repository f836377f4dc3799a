#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "panoptic/bench.hpp"
#include "panoptic/cluster.hpp"
#include "panoptic/core/log.hpp"
#include "panoptic/io.hpp"
#include "panoptic/losses.hpp"
#include "panoptic/metrics.hpp"
#include "panoptic/model.hpp"
#include "panoptic/pipeline.hpp"
#include "panoptic/sampling.hpp"
#include "panoptic/synth.hpp"

namespace {

using namespace panoptic;

// ---------------------------------------------------------------------------
// Shared option plumbing
// ---------------------------------------------------------------------------

struct CommonOpts {
    PipelineConfig config;
    std::string mode = "embed";
    unsigned threads = 0;
    std::string taxonomy_path;
    CLI::Option* th_d_opt = nullptr;
};

void add_common_flags(CLI::App* sub, CommonOpts& o) {
    sub->set_config("--config", "", "flat 'key = value' file; command-line flags override it");
    sub->add_option("--voxel-size", o.config.d, "voxel grid size d for downsampling (m)")->capture_default_str();
    sub->add_option("--radius", o.config.r, "input sphere radius R (m)")->capture_default_str();
    sub->add_option("--stride", o.config.s, "sphere stride s (m)")->capture_default_str();
    sub->add_option("--bandwidth", o.config.bandwidth, "mean-shift bandwidth Bw")->capture_default_str();
    o.th_d_opt = sub->add_option("--th-d", o.config.th_d, "instance clustering distance threshold (default 1.5*voxel-size)");
    sub->add_option("--th-n", o.config.th_n, "minimum instance point count Th_n")->capture_default_str();
    sub->add_option("--th-bm", o.config.th_bm, "block merging IoU threshold Th_bm")->capture_default_str();
    sub->add_option("--sphere-points", o.config.k, "fixed per-sphere point count k")->capture_default_str();
    sub->add_option("--feature-dim", o.config.feature_dim, "input feature dimension K (3,4,6,7)")->capture_default_str();
    sub->add_option("--emb-dim", o.config.embedding_dim, "embedding dimension T")->capture_default_str();
    sub->add_option("--w-e", o.config.w_e, "embedding loss weight")->capture_default_str();
    sub->add_option("--w-o", o.config.w_o, "offset loss weight")->capture_default_str();
    sub->add_option("--w-r", o.config.w_r, "regularizer weight (metadata only)")->capture_default_str();
    sub->add_option("--mode", o.mode, "instance feature to cluster")->check(CLI::IsMember({"embed", "offset"}));
    sub->add_option("--seed", o.config.seed, "random seed")->capture_default_str();
    sub->add_option("--threads", o.threads, "parallelism cap (0 = hardware)")->capture_default_str();
    sub->add_option("--taxonomy", o.taxonomy_path,
                    "taxonomy file: one '<name> thing|stuff' per line, optional 'ignore <label>'");
}

pipeline::Options finalize(CommonOpts& o) {
    if (o.th_d_opt != nullptr && o.th_d_opt->count() == 0) o.config.th_d = 1.5 * o.config.d;
    pipeline::Options opts;
    opts.config = o.config;
    opts.mode = o.mode == "offset" ? pipeline::Mode::offset : pipeline::Mode::embed;
    opts.threads = o.threads;
    return opts;
}

Taxonomy load_taxonomy(const std::string& path) {
    if (path.empty()) return synth::default_taxonomy();
    std::ifstream in(path);
    if (!in) throw io::IoError("cannot open taxonomy file " + path);
    Taxonomy tax;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string name, kind;
        if (!(ls >> name) || name.empty() || name[0] == '#') continue;
        if (name == "ignore") {
            int label = 0;
            if (!(ls >> label)) throw io::IoError("taxonomy: bad ignore line '" + line + "'");
            tax.ignore_label = label;
            continue;
        }
        if (!(ls >> kind) || (kind != "thing" && kind != "stuff"))
            throw io::IoError("taxonomy: expected '<name> thing|stuff', got '" + line + "'");
        tax.class_names.push_back(name);
        tax.stuff_mask.push_back(kind == "stuff");
    }
    if (!tax.valid()) throw io::IoError("taxonomy: invalid class list in " + path);
    return tax;
}

SegmentationResult result_from_cloud(const PointCloud& cloud, const std::string& role) {
    if (!cloud.has_semantic() || !cloud.has_instance())
        throw std::invalid_argument(role + " cloud must carry sem and ins properties");
    return {*cloud.semantic, *cloud.instance};
}

void print_report_summary(const metrics::MetricsReport& report) {
    auto fmt = [](const metrics::Score& s) {
        if (!s) return std::string("  n/a");
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%5.3f", *s);
        return std::string(buf);
    };
    std::cout << "oAcc " << fmt(report.semantic.oacc) << "  mIoU " << fmt(report.semantic.miou) << "  PQ "
              << fmt(report.panoptic.pq) << "  PQ+ " << fmt(report.panoptic.pq_dagger) << "  RQ "
              << fmt(report.panoptic.rq) << "  SQ " << fmt(report.panoptic.sq) << "  F1 "
              << fmt(report.instance.f1) << "\n";
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int run_synth(const CommonOpts& common, const synth::SceneSpec& spec, const synth::NoiseSpec& noise,
              const std::string& out_cloud, const std::string& out_preds, bool ascii) {
    const Taxonomy tax = load_taxonomy(common.taxonomy_path);
    const PointCloud cloud = synth::generate_scene(spec);
    log::info("synth: " + std::to_string(cloud.size()) + " points, " + std::to_string(spec.things_count()) +
              " things instances");
    io::write_ply(cloud, out_cloud, !ascii);
    if (!out_preds.empty()) {
        const PredictionSet preds =
            synth::simulate_predictions(cloud, noise, tax.num_classes(), common.config.embedding_dim);
        io::write_predictions(preds, out_preds);
    }
    return 0;
}

int run_downsample(CommonOpts& common, const std::string& in, const std::string& out, const std::string& preds_in,
                   const std::string& preds_out, bool ascii) {
    finalize(common);
    const PointCloud cloud = io::read_ply(in);
    auto [sub, kept] = sampling::voxel_downsample(cloud, common.config.d, common.config.seed);
    log::info("downsample: " + std::to_string(cloud.size()) + " -> " + std::to_string(sub.size()) + " points");
    io::write_ply(sub, out, !ascii);
    if (!preds_in.empty()) {
        if (preds_out.empty()) throw std::invalid_argument("--predictions requires --predictions-out");
        const PredictionSet preds = io::read_predictions(preds_in);
        if (preds.size() != cloud.size())
            throw std::invalid_argument("prediction count " + std::to_string(preds.size()) +
                                        " != cloud point count " + std::to_string(cloud.size()));
        PredictionSet sliced;
        if (preds.class_probs) {
            Matrix m(kept.size(), preds.class_probs->cols());
            for (std::size_t r = 0; r < kept.size(); ++r) {
                const auto src = preds.class_probs->row(kept[r]);
                std::copy(src.begin(), src.end(), m.row(r).begin());
            }
            sliced.class_probs = std::move(m);
        }
        if (preds.embeddings) {
            Matrix m(kept.size(), preds.embeddings->cols());
            for (std::size_t r = 0; r < kept.size(); ++r) {
                const auto src = preds.embeddings->row(kept[r]);
                std::copy(src.begin(), src.end(), m.row(r).begin());
            }
            sliced.embeddings = std::move(m);
        }
        if (preds.offsets) {
            std::vector<Vec3> offs;
            offs.reserve(kept.size());
            for (auto r : kept) offs.push_back((*preds.offsets)[r]);
            sliced.offsets = std::move(offs);
        }
        io::write_predictions(sliced, preds_out);
    }
    return 0;
}

int run_tile(CommonOpts& common, const std::string& in, const std::string& out) {
    finalize(common);
    const PointCloud cloud = io::read_ply(in);
    const auto spheres = sampling::tile_spheres(cloud, common.config.r, common.config.s, 3, common.threads);

    std::vector<std::size_t> multiplicity(cloud.size(), 0);
    nlohmann::json centers = nlohmann::json::array();
    nlohmann::json sizes = nlohmann::json::array();
    for (const auto& sphere : spheres) {
        centers.push_back({sphere.center.x, sphere.center.y, sphere.center.z});
        sizes.push_back(sphere.point_indices.size());
        for (auto idx : sphere.point_indices) ++multiplicity[idx];
    }
    std::size_t uncovered = 0, max_mult = 0;
    for (auto m : multiplicity) {
        if (m == 0) ++uncovered;
        max_mult = std::max(max_mult, m);
    }
    nlohmann::json j{{"spheres", spheres.size()},
                     {"radius", common.config.r},
                     {"stride", common.config.s},
                     {"points", cloud.size()},
                     {"uncovered_points", uncovered},
                     {"max_multiplicity", max_mult},
                     {"centers", centers},
                     {"sizes", sizes}};
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream f(out);
        if (!f) throw io::IoError("cannot open " + out + " for writing");
        f << j.dump(2) << "\n";
    }
    return 0;
}

int run_cluster(CommonOpts& common, const std::string& in, const std::string& preds_path, const std::string& out,
                bool ascii) {
    const pipeline::Options opts = finalize(common);
    const Taxonomy tax = load_taxonomy(common.taxonomy_path);
    PointCloud cloud = io::read_ply(in);
    const PredictionSet preds = io::read_predictions(preds_path);
    if (preds.size() != cloud.size())
        throw std::invalid_argument("prediction count " + std::to_string(preds.size()) + " != cloud point count " +
                                    std::to_string(cloud.size()));

    // Whole cloud as one batch: argmax semantics, then one clustering pass.
    if (!preds.has_probs()) throw std::invalid_argument("cluster: predictions lack class probabilities");
    std::vector<int> semantic(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto row = preds.class_probs->row(i);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c)
            if (row[c] > row[best]) best = c;
        semantic[i] = static_cast<int>(best);
    }
    std::vector<std::uint32_t> things;
    for (std::uint32_t i = 0; i < cloud.size(); ++i)
        if (tax.is_thing(static_cast<std::size_t>(semantic[i]))) things.push_back(i);

    std::vector<int> instance(cloud.size(), kNoInstance);
    if (!things.empty()) {
        if (opts.mode == pipeline::Mode::offset) {
            if (!preds.has_offsets()) throw std::invalid_argument("cluster: offset mode needs offsets");
            std::vector<Vec3> shifted(things.size());
            std::vector<int> sem(things.size());
            for (std::size_t i = 0; i < things.size(); ++i) {
                shifted[i] = cloud.positions[things[i]] + (*preds.offsets)[things[i]];
                sem[i] = semantic[things[i]];
            }
            const auto labels =
                cluster::connected_components(shifted, sem, opts.config.th_d, opts.config.th_n);
            for (std::size_t i = 0; i < things.size(); ++i) instance[things[i]] = labels[i];
        } else {
            if (!preds.has_embeddings()) throw std::invalid_argument("cluster: embed mode needs embeddings");
            int label_base = 0;
            for (std::size_t cls = 0; cls < tax.num_classes(); ++cls) {
                if (tax.is_stuff(cls)) continue;
                std::vector<std::uint32_t> rows;
                for (auto idx : things)
                    if (semantic[idx] == static_cast<int>(cls)) rows.push_back(idx);
                if (rows.empty()) continue;
                Matrix emb(rows.size(), preds.embeddings->cols());
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    const auto src = preds.embeddings->row(rows[r]);
                    std::copy(src.begin(), src.end(), emb.row(r).begin());
                }
                const auto labels = cluster::mean_shift(emb, opts.config.bandwidth, opts.config.ms_max_iter,
                                                        opts.config.ms_tol, opts.config.seed, common.threads);
                int max_label = -1;
                for (std::size_t r = 0; r < rows.size(); ++r) {
                    instance[rows[r]] = label_base + labels[r];
                    max_label = std::max(max_label, labels[r]);
                }
                label_base += max_label + 1;
            }
            std::map<int, std::size_t> cluster_sizes;
            for (int l : instance)
                if (l != kNoInstance) ++cluster_sizes[l];
            for (int& l : instance)
                if (l != kNoInstance && cluster_sizes[l] <= opts.config.th_n) l = kNoInstance;
        }
    }
    auto [ids, count] = canonicalize_ids(std::move(instance));
    log::info("cluster: " + std::to_string(count) + " instances");
    cloud.semantic = std::move(semantic);
    cloud.instance = std::move(ids);
    io::write_ply(cloud, out, !ascii);
    return 0;
}

int run_merge(CommonOpts& common, const std::string& in, const std::string& preds_path, const std::string& out,
              bool ascii) {
    const pipeline::Options opts = finalize(common);
    const Taxonomy tax = load_taxonomy(common.taxonomy_path);
    PointCloud cloud = io::read_ply(in);
    const PredictionSet preds = io::read_predictions(preds_path);
    const SegmentationResult result = pipeline::segment_cloud(cloud, preds, tax, opts);
    cloud.semantic = result.semantic;
    cloud.instance = result.instance;
    io::write_ply(cloud, out, !ascii);
    return 0;
}

int run_upsample(CommonOpts& common, const std::string& full_path, const std::string& sub_path,
                 const std::string& out, bool ascii) {
    finalize(common);
    PointCloud full = io::read_ply(full_path);
    const PointCloud sub = io::read_ply(sub_path);
    const SegmentationResult sub_result = result_from_cloud(sub, "sub");
    const SegmentationResult full_result =
        sampling::upsample_labels(full, sub, sub_result, 3.0 * common.config.th_d, common.threads);
    full.semantic = full_result.semantic;
    full.instance = full_result.instance;
    io::write_ply(full, out, !ascii);
    return 0;
}

int run_eval(const CommonOpts& common, const std::string& gt_path, const std::string& pred_path,
             const std::string& report_path) {
    const Taxonomy tax = load_taxonomy(common.taxonomy_path);
    const PointCloud gt_cloud = io::read_ply(gt_path);
    const PointCloud pred_cloud = io::read_ply(pred_path);
    if (gt_cloud.size() != pred_cloud.size())
        throw std::invalid_argument("eval: gt has " + std::to_string(gt_cloud.size()) + " points, prediction has " +
                                    std::to_string(pred_cloud.size()));
    const auto report =
        metrics::evaluate(result_from_cloud(gt_cloud, "gt"), result_from_cloud(pred_cloud, "prediction"), tax);
    if (!report_path.empty()) io::write_report(report, report_path);
    print_report_summary(report);
    return 0;
}

int run_loss(const CommonOpts& common, const std::string& cloud_path, const std::string& preds_path,
             const std::string& out) {
    const Taxonomy tax = load_taxonomy(common.taxonomy_path);
    const PointCloud cloud = io::read_ply(cloud_path);
    const PredictionSet preds = io::read_predictions(preds_path);
    if (preds.size() != cloud.size())
        throw std::invalid_argument("loss: prediction count " + std::to_string(preds.size()) +
                                    " != cloud point count " + std::to_string(cloud.size()));
    if (!cloud.has_semantic()) throw std::invalid_argument("loss: cloud lacks sem labels");

    losses::LossBreakdown parts;
    nlohmann::json j;

    if (preds.has_probs()) {
        // Ignore-labeled points carry no semantic target.
        std::vector<std::uint32_t> rows;
        for (std::uint32_t i = 0; i < cloud.size(); ++i)
            if (!tax.is_ignored((*cloud.semantic)[i])) rows.push_back(i);
        Matrix probs(rows.size(), preds.class_probs->cols());
        std::vector<int> labels(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto src = preds.class_probs->row(rows[r]);
            std::copy(src.begin(), src.end(), probs.row(r).begin());
            labels[r] = (*cloud.semantic)[rows[r]];
        }
        parts.semantic = losses::cross_entropy(probs, labels);
        j["l_s"] = parts.semantic;
    } else {
        j["l_s"] = nullptr;
    }

    // Instance losses run over the instance-bearing points only.
    std::vector<std::uint32_t> inst_rows;
    if (cloud.has_instance())
        for (std::uint32_t i = 0; i < cloud.size(); ++i)
            if ((*cloud.instance)[i] != kNoInstance) inst_rows.push_back(i);

    std::vector<int> inst_ids;
    if (!inst_rows.empty()) {
        inst_ids.reserve(inst_rows.size());
        for (auto i : inst_rows) inst_ids.push_back((*cloud.instance)[i]);
        inst_ids = canonicalize_ids(std::move(inst_ids)).first;
    }

    if (preds.has_embeddings() && !inst_rows.empty()) {
        Matrix emb(inst_rows.size(), preds.embeddings->cols());
        for (std::size_t r = 0; r < inst_rows.size(); ++r) {
            const auto src = preds.embeddings->row(inst_rows[r]);
            std::copy(src.begin(), src.end(), emb.row(r).begin());
        }
        parts.embedding = losses::embedding_loss(emb, inst_ids);
        j["l_e"] = {{"var", parts.embedding.var},
                    {"dist", parts.embedding.dist},
                    {"reg", parts.embedding.reg},
                    {"total", parts.embedding.total}};
    } else {
        j["l_e"] = nullptr;
    }

    if (preds.has_offsets() && !inst_rows.empty()) {
        std::vector<Vec3> offs, pos;
        offs.reserve(inst_rows.size());
        pos.reserve(inst_rows.size());
        for (auto i : inst_rows) {
            offs.push_back((*preds.offsets)[i]);
            pos.push_back(cloud.positions[i]);
        }
        parts.offset = losses::offset_loss(offs, pos, inst_ids);
        j["l_o"] = {{"reg", parts.offset.reg}, {"dir", parts.offset.dir}, {"total", parts.offset.total}};
    } else {
        j["l_o"] = nullptr;
    }

    const double total = losses::total_loss(parts, common.config.w_e, common.config.w_o, common.config.w_r);
    j["weights"] = {{"w_e", common.config.w_e}, {"w_o", common.config.w_o}, {"w_r", common.config.w_r}};
    j["total"] = total;

    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream f(out);
        if (!f) throw io::IoError("cannot open " + out + " for writing");
        f << j.dump(2) << "\n";
    }
    return 0;
}

int run_pipeline_cmd(CommonOpts& common, const std::string& cloud_path, const std::string& preds_path,
                     const std::string& out_ply, const std::string& out_report, bool preds_on_full, bool ascii) {
    pipeline::Options opts = finalize(common);
    opts.predictions_on_full_cloud = preds_on_full;
    const Taxonomy tax = load_taxonomy(common.taxonomy_path);
    PointCloud cloud = io::read_ply(cloud_path);
    const PredictionSet preds = io::read_predictions(preds_path);

    const auto output = pipeline::run(cloud, preds, tax, opts);

    if (!out_ply.empty()) {
        PointCloud labeled;
        labeled.positions = cloud.positions;
        labeled.colors = cloud.colors;
        labeled.semantic = output.full_result.semantic;
        labeled.instance = output.full_result.instance;
        io::write_ply(labeled, out_ply, !ascii);
    }
    if (output.report) {
        if (!out_report.empty()) io::write_report(*output.report, out_report);
        print_report_summary(*output.report);
    } else if (!out_report.empty()) {
        log::warn("pipeline: input cloud has no gt labels, report not written");
    }
    return 0;
}

int run_bench(const CommonOpts& common, std::size_t points, const std::string& out) {
    const auto result = bench::run(points, common.config.seed, common.threads == 0 ? 1 : common.threads);
    char line[160];
    std::printf("%-18s %12s %10s %12s\n", "stage", "points", "seconds", "sec/Mpts");
    std::snprintf(line, sizeof(line), "%-18s %12zu %10.3f %12.3f", "embed clustering", result.points,
                  result.embed_seconds, result.embed_sec_per_million());
    std::printf("%s\n", line);
    std::snprintf(line, sizeof(line), "%-18s %12zu %10.3f %12.3f", "offset clustering", result.points,
                  result.offset_seconds, result.offset_sec_per_million());
    std::printf("%s\n", line);
    std::snprintf(line, sizeof(line), "%-18s %12zu %10.3f %12.3f", "block merging", result.points,
                  result.merge_seconds, result.merge_sec_per_million());
    std::printf("%s\n", line);
    if (!out.empty()) {
        nlohmann::json j{{"points", result.points},
                         {"embed", {{"seconds", result.embed_seconds}, {"sec_per_million", result.embed_sec_per_million()}}},
                         {"offset", {{"seconds", result.offset_seconds}, {"sec_per_million", result.offset_sec_per_million()}}},
                         {"block_merging", {{"seconds", result.merge_seconds}, {"sec_per_million", result.merge_sec_per_million()}}}};
        std::ofstream f(out);
        if (!f) throw io::IoError("cannot open " + out + " for writing");
        f << j.dump(2) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"panoptic segmentation toolkit for mobile-mapping point clouds"};
    app.require_subcommand(1);
    int rc = 0;

    // synth
    CommonOpts common_synth;
    synth::SceneSpec scene;
    synth::NoiseSpec noise;
    std::string synth_cloud = "scene.ply", synth_preds;
    bool synth_ascii = false;
    {
        auto* sub = app.add_subcommand("synth", "generate a synthetic scene and optional predictions");
        add_common_flags(sub, common_synth);
        sub->add_option("--extent-x", scene.extent.x)->capture_default_str();
        sub->add_option("--extent-y", scene.extent.y)->capture_default_str();
        sub->add_option("--extent-z", scene.extent.z)->capture_default_str();
        sub->add_option("--density", scene.density, "points per m^2 of surface")->capture_default_str();
        sub->add_option("--grounds", scene.grounds)->capture_default_str();
        sub->add_option("--buildings", scene.buildings)->capture_default_str();
        sub->add_option("--barriers", scene.barriers)->capture_default_str();
        sub->add_option("--poles", scene.poles)->capture_default_str();
        sub->add_option("--cars", scene.cars)->capture_default_str();
        sub->add_option("--pedestrians", scene.pedestrians)->capture_default_str();
        sub->add_option("--trees", scene.trees)->capture_default_str();
        sub->add_option("--trash-cans", scene.trash_cans)->capture_default_str();
        sub->add_option("--jitter", scene.jitter_sigma, "surface jitter sigma (m)")->capture_default_str();
        sub->add_option("--clearance", scene.clearance, "minimum object separation (m)")->capture_default_str();
        sub->add_flag("--allow-contact", scene.allow_contact, "let objects touch the ground");
        sub->add_option("--sem-confusion", noise.sem_confusion, "semantic flip probability")->capture_default_str();
        sub->add_option("--emb-sigma", noise.emb_sigma, "embedding noise sigma")->capture_default_str();
        sub->add_option("--emb-sep", noise.emb_sep, "instance code separation")->capture_default_str();
        sub->add_option("--off-sigma", noise.off_sigma, "offset noise sigma (m)")->capture_default_str();
        sub->add_option("--out-cloud", synth_cloud, "output PLY path")->capture_default_str();
        sub->add_option("--out-predictions", synth_preds, "output PPRD path (omit to skip)");
        sub->add_flag("--ascii", synth_ascii, "write ASCII PLY");
        sub->callback([&] {
            scene.seed = common_synth.config.seed;
            noise.seed = common_synth.config.seed;
            rc = run_synth(common_synth, scene, noise, synth_cloud, synth_preds, synth_ascii);
        });
    }

    // downsample
    CommonOpts common_down;
    std::string down_in, down_out, down_preds_in, down_preds_out;
    bool down_ascii = false;
    {
        auto* sub = app.add_subcommand("downsample", "voxel-grid downsample a cloud (labels carried along)");
        add_common_flags(sub, common_down);
        sub->add_option("--in", down_in, "input PLY")->required();
        sub->add_option("--out", down_out, "output PLY")->required();
        sub->add_option("--predictions", down_preds_in, "full-cloud PPRD to slice to the kept points");
        sub->add_option("--predictions-out", down_preds_out, "output PPRD for the sliced predictions");
        sub->add_flag("--ascii", down_ascii, "write ASCII PLY");
        sub->callback(
            [&] { rc = run_downsample(common_down, down_in, down_out, down_preds_in, down_preds_out, down_ascii); });
    }

    // tile
    CommonOpts common_tile;
    std::string tile_in, tile_out;
    {
        auto* sub = app.add_subcommand("tile", "sphere tiling summary (coverage, multiplicity) as JSON");
        add_common_flags(sub, common_tile);
        sub->add_option("--in", tile_in, "input PLY")->required();
        sub->add_option("--out", tile_out, "output JSON (default stdout)");
        sub->callback([&] { rc = run_tile(common_tile, tile_in, tile_out); });
    }

    // cluster
    CommonOpts common_cluster;
    std::string cl_in, cl_preds, cl_out;
    bool cl_ascii = false;
    {
        auto* sub = app.add_subcommand("cluster", "cluster one cloud as a single batch (no sphere tiling)");
        add_common_flags(sub, common_cluster);
        sub->add_option("--in", cl_in, "input PLY")->required();
        sub->add_option("--predictions", cl_preds, "PPRD aligned with the cloud")->required();
        sub->add_option("--out", cl_out, "output PLY with sem/ins")->required();
        sub->add_flag("--ascii", cl_ascii, "write ASCII PLY");
        sub->callback([&] { rc = run_cluster(common_cluster, cl_in, cl_preds, cl_out, cl_ascii); });
    }

    // merge
    CommonOpts common_merge;
    std::string mg_in, mg_preds, mg_out;
    bool mg_ascii = false;
    {
        auto* sub = app.add_subcommand(
            "merge", "sphere tiling, probability averaging, per-sphere clustering and block merging");
        add_common_flags(sub, common_merge);
        sub->add_option("--in", mg_in, "downsampled PLY")->required();
        sub->add_option("--predictions", mg_preds, "PPRD aligned with the cloud")->required();
        sub->add_option("--out", mg_out, "output PLY with sem/ins")->required();
        sub->add_flag("--ascii", mg_ascii, "write ASCII PLY");
        sub->callback([&] { rc = run_merge(common_merge, mg_in, mg_preds, mg_out, mg_ascii); });
    }

    // upsample
    CommonOpts common_up;
    std::string up_full, up_sub, up_out;
    bool up_ascii = false;
    {
        auto* sub = app.add_subcommand("upsample", "nearest-neighbor label transfer from a sub cloud to the full cloud");
        add_common_flags(sub, common_up);
        sub->add_option("--full", up_full, "raw PLY")->required();
        sub->add_option("--sub", up_sub, "labeled subsampled PLY")->required();
        sub->add_option("--out", up_out, "output PLY")->required();
        sub->add_flag("--ascii", up_ascii, "write ASCII PLY");
        sub->callback([&] { rc = run_upsample(common_up, up_full, up_sub, up_out, up_ascii); });
    }

    // eval
    CommonOpts common_eval;
    std::string ev_gt, ev_pred, ev_report;
    {
        auto* sub = app.add_subcommand("eval", "semantic / instance / panoptic metrics for a labeled pair");
        add_common_flags(sub, common_eval);
        sub->add_option("--gt", ev_gt, "ground-truth PLY with sem/ins")->required();
        sub->add_option("--pred", ev_pred, "prediction PLY with sem/ins")->required();
        sub->add_option("--report", ev_report, "output JSON report");
        sub->callback([&] { rc = run_eval(common_eval, ev_gt, ev_pred, ev_report); });
    }

    // loss
    CommonOpts common_loss;
    std::string lo_cloud, lo_preds, lo_out;
    {
        auto* sub = app.add_subcommand("loss", "evaluate the training losses on a labeled cloud + predictions");
        add_common_flags(sub, common_loss);
        sub->add_option("--in", lo_cloud, "labeled PLY")->required();
        sub->add_option("--predictions", lo_preds, "PPRD aligned with the cloud")->required();
        sub->add_option("--out", lo_out, "output JSON (default stdout)");
        sub->callback([&] { rc = run_loss(common_loss, lo_cloud, lo_preds, lo_out); });
    }

    // pipeline
    CommonOpts common_pipe;
    std::string pi_cloud, pi_preds, pi_out_ply, pi_out_report;
    bool pi_preds_full = false, pi_ascii = false;
    {
        auto* sub = app.add_subcommand("pipeline", "full run: downsample, segment, upsample, evaluate");
        add_common_flags(sub, common_pipe);
        sub->add_option("--in", pi_cloud, "raw PLY (gt labels enable the report)")->required();
        sub->add_option("--predictions", pi_preds, "PPRD")->required();
        sub->add_option("--out", pi_out_ply, "output PLY with the full-cloud labeling");
        sub->add_option("--report", pi_out_report, "output JSON report");
        sub->add_flag("--predictions-on-full", pi_preds_full,
                      "prediction rows align with the raw cloud instead of the downsampled one");
        sub->add_flag("--ascii", pi_ascii, "write ASCII PLY");
        sub->callback([&] {
            rc = run_pipeline_cmd(common_pipe, pi_cloud, pi_preds, pi_out_ply, pi_out_report, pi_preds_full, pi_ascii);
        });
    }

    // bench
    CommonOpts common_bench;
    std::size_t bench_points = 1000000;
    std::string bench_out;
    {
        auto* sub = app.add_subcommand("bench", "clustering / merging throughput on synthetic data");
        add_common_flags(sub, common_bench);
        sub->add_option("--points", bench_points, "workload size")->capture_default_str();
        sub->add_option("--out", bench_out, "output JSON");
        sub->callback([&] { rc = run_bench(common_bench, bench_points, bench_out); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const io::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
