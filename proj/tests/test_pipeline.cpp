#include <doctest.h>

#include "helpers.hpp"
#include "panoptic/io.hpp"
#include "panoptic/pipeline.hpp"
#include "panoptic/sampling.hpp"
#include "panoptic/synth.hpp"

using namespace panoptic;

namespace {

// Small zero-noise scene; positions quantized to float as if loaded from disk.
PointCloud small_scene(std::uint64_t seed, double density = 60.0) {
    synth::SceneSpec spec;
    spec.extent = {18.0, 18.0, 9.0};
    spec.density = density;
    spec.poles = 3;
    spec.cars = 1;
    spec.pedestrians = 2;
    spec.trees = 1;
    spec.trash_cans = 2;
    spec.seed = seed;
    PointCloud cloud = synth::generate_scene(spec);
    for (auto& p : cloud.positions) {
        p.x = static_cast<float>(p.x);
        p.y = static_cast<float>(p.y);
        p.z = static_cast<float>(p.z);
    }
    return cloud;
}

pipeline::Options default_options(pipeline::Mode mode) {
    pipeline::Options opt;
    opt.mode = mode;
    opt.predictions_on_full_cloud = true;
    opt.threads = 1;
    return opt;
}

void check_all_ones(const metrics::MetricsReport& report) {
    REQUIRE(report.panoptic.pq.has_value());
    CHECK(*report.panoptic.pq == 1.0);
    CHECK(*report.panoptic.pq_dagger == 1.0);
    CHECK(*report.panoptic.rq == 1.0);
    CHECK(*report.panoptic.sq == 1.0);
    CHECK(*report.semantic.oacc == 1.0);
    CHECK(*report.instance.f1 == 1.0);
    for (const auto& [cls, scores] : report.panoptic.per_class)
        if (scores.pq) CHECK(*scores.pq == 1.0);
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("zero-noise scene scores PQ 1.0 in both modes") {
    const PointCloud cloud = small_scene(42);
    const Taxonomy tax = synth::default_taxonomy();
    synth::NoiseSpec noise;
    const PredictionSet preds = synth::simulate_predictions(cloud, noise, tax.num_classes(), 5);

    for (const auto mode : {pipeline::Mode::embed, pipeline::Mode::offset}) {
        const auto out = pipeline::run(cloud, preds, tax, default_options(mode));
        REQUIRE(out.report.has_value());
        check_all_ones(*out.report);
    }
}

TEST_CASE("mismatched prediction count is rejected") {
    const PointCloud cloud = small_scene(1);
    const Taxonomy tax = synth::default_taxonomy();
    synth::NoiseSpec noise;
    PredictionSet preds = synth::simulate_predictions(cloud, noise, tax.num_classes(), 5);

    pipeline::Options opt = default_options(pipeline::Mode::embed);
    opt.predictions_on_full_cloud = false; // now counts must match the downsampled cloud
    CHECK_THROWS_AS(pipeline::run(cloud, preds, tax, opt), std::invalid_argument);
}

TEST_CASE("pipeline equals the stepwise composition") {
    const PointCloud cloud = small_scene(7);
    const Taxonomy tax = synth::default_taxonomy();
    synth::NoiseSpec noise;
    noise.emb_sigma = 0.05; // mild noise so the test is not trivially all-ones
    noise.off_sigma = 0.01;
    noise.seed = 3;
    const PredictionSet preds = synth::simulate_predictions(cloud, noise, tax.num_classes(), 5);
    const pipeline::Options opt = default_options(pipeline::Mode::embed);

    const auto whole = pipeline::run(cloud, preds, tax, opt);

    // Stepwise: downsample -> slice -> segment -> upsample -> evaluate.
    auto [sub, kept] = sampling::voxel_downsample(cloud, opt.config.d, opt.config.seed);
    PredictionSet sliced;
    {
        Matrix probs(kept.size(), preds.class_probs->cols());
        Matrix emb(kept.size(), preds.embeddings->cols());
        std::vector<Vec3> offs(kept.size());
        for (std::size_t r = 0; r < kept.size(); ++r) {
            auto ps = preds.class_probs->row(kept[r]);
            std::copy(ps.begin(), ps.end(), probs.row(r).begin());
            auto es = preds.embeddings->row(kept[r]);
            std::copy(es.begin(), es.end(), emb.row(r).begin());
            offs[r] = (*preds.offsets)[kept[r]];
        }
        sliced.class_probs = std::move(probs);
        sliced.embeddings = std::move(emb);
        sliced.offsets = std::move(offs);
    }
    const auto sub_result = pipeline::segment_cloud(sub, sliced, tax, opt);
    const auto full_result = sampling::upsample_labels(cloud, sub, sub_result, 3.0 * opt.config.th_d, opt.threads);
    const SegmentationResult gt{*cloud.semantic, *cloud.instance};
    const auto report = metrics::evaluate(gt, full_result, tax);

    CHECK(whole.sub_result.semantic == sub_result.semantic);
    CHECK(whole.sub_result.instance == sub_result.instance);
    CHECK(whole.full_result.semantic == full_result.semantic);
    CHECK(whole.full_result.instance == full_result.instance);
    REQUIRE(whole.report.has_value());
    CHECK(io::report_to_json(*whole.report).dump(2) == io::report_to_json(report).dump(2));
}

TEST_CASE("output is independent of the thread count") {
    const PointCloud cloud = small_scene(11);
    const Taxonomy tax = synth::default_taxonomy();
    synth::NoiseSpec noise;
    noise.emb_sigma = 0.1;
    noise.seed = 5;
    const PredictionSet preds = synth::simulate_predictions(cloud, noise, tax.num_classes(), 5);

    pipeline::Options opt1 = default_options(pipeline::Mode::embed);
    pipeline::Options opt4 = opt1;
    opt4.threads = 4;
    const auto a = pipeline::run(cloud, preds, tax, opt1);
    const auto b = pipeline::run(cloud, preds, tax, opt4);
    CHECK(a.full_result.semantic == b.full_result.semantic);
    CHECK(a.full_result.instance == b.full_result.instance);
}

TEST_CASE("deterministic across repeated runs") {
    const PointCloud cloud = small_scene(19);
    const Taxonomy tax = synth::default_taxonomy();
    synth::NoiseSpec noise;
    noise.emb_sigma = 0.2;
    noise.seed = 9;
    const PredictionSet preds = synth::simulate_predictions(cloud, noise, tax.num_classes(), 5);
    const pipeline::Options opt = default_options(pipeline::Mode::offset);
    const auto a = pipeline::run(cloud, preds, tax, opt);
    const auto b = pipeline::run(cloud, preds, tax, opt);
    CHECK(a.full_result.instance == b.full_result.instance);
    CHECK(io::report_to_json(*a.report).dump() == io::report_to_json(*b.report).dump());
}

TEST_CASE("segment_cloud validates its inputs") {
    const PointCloud cloud = small_scene(2);
    const Taxonomy tax = synth::default_taxonomy();
    PredictionSet empty;
    CHECK_THROWS_AS(pipeline::segment_cloud(cloud, empty, tax, default_options(pipeline::Mode::embed)),
                    std::invalid_argument);

    synth::NoiseSpec noise;
    PredictionSet preds = synth::simulate_predictions(cloud, noise, tax.num_classes(), 5);
    preds.embeddings.reset();
    CHECK_THROWS_AS(pipeline::segment_cloud(cloud, preds, tax, default_options(pipeline::Mode::embed)),
                    std::invalid_argument);
}

} // TEST_SUITE
