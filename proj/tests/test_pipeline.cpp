#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "tracediff/grid_io.hpp"
#include "tracediff/pipeline/bundle.hpp"
#include "tracediff/pipeline/config.hpp"
#include "tracediff/pipeline/dataset.hpp"
#include "tracediff/pipeline/evaluate.hpp"
#include "tracediff/pipeline/run.hpp"
#include "tracediff/pipeline/segmentation.hpp"
#include "tracediff/pipeline/training.hpp"
#include "tracediff/pipeline/translate.hpp"
#include "tracediff/similarity.hpp"

using namespace tracediff;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "tracediff_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

PipelineConfig tiny_config() {
    PipelineConfig cfg;
    cfg.seed = 11;
    cfg.image_size = 16;
    cfg.n_per_domain = 6;
    cfg.k_steps = 10;
    cfg.beta_end = 0.2;
    cfg.n_samples = 2;
    cfg.diffusion_steps = 6;
    cfg.deform_steps = 4;
    cfg.denoiser_net.base_channels = 4;
    cfg.denoiser_net.depth = 2;
    cfg.regnet_net.base_channels = 4;
    cfg.regnet_net.depth = 2;
    return cfg;
}

Image2D mask_of(int h, int w, int r0, int r1, int c0, int c1) {
    Image2D m(h, w);
    for (int r = r0; r < r1; ++r)
        for (int c = c0; c < c1; ++c) m(r, c) = 1.0f;
    return m;
}

}  // namespace

TEST_CASE("config text round trip") {
    PipelineConfig cfg = tiny_config();
    cfg.reverse_noise = ReverseNoise::Posterior;
    cfg.pairing = Pairing::Fixed;
    cfg.lambda1 = 0.1;
    cfg.regnet_net.velocity_scale = 0.3;
    const PipelineConfig back = parse_config(format_config(cfg));
    CHECK(back.to_map() == cfg.to_map());

    CHECK_THROWS_AS(parse_config("no_such_key = 3\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("k_steps = banana\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("k_steps = 0\n"), ConfigError);
    CHECK(parse_config("# comment\nlambda1 = 0.1\n").lambda1 == 0.1);
    CHECK(PipelineConfig{}.diffusion_lr == 1e-4);
    CHECK(PipelineConfig{}.deform_lr == 2e-4);
    CHECK(PipelineConfig{}.batch_size == 3);
    CHECK(PipelineConfig{}.n_samples == 50);
}

TEST_CASE("warmup scales to run length") {
    PipelineConfig cfg;
    cfg.diffusion_steps = 2000;
    CHECK(cfg.effective_diffusion_warmup() == 200);
    cfg.diffusion_steps = 1000000;
    CHECK(cfg.effective_diffusion_warmup() == 10000);
}

TEST_CASE("dataset generation") {
    const Dataset a = generate_dataset(8, 5);
    const Dataset b = generate_dataset(8, 5);
    const fs::path d1 = fresh_dir("ds1"), d2 = fresh_dir("ds2");
    write_dataset(d1, a);
    write_dataset(d2, b);
    for (const char* f : {"A/images.plsg", "A/masks.plsg", "A/cases.txt", "B/images.plsg", "B/masks.plsg", "B/cases.txt"}) {
        CHECK(read_file_bytes(d1 / f) == read_file_bytes(d2 / f));
    }
    const Dataset back = read_dataset(d1);
    CHECK(back.a.size() == 8);
    CHECK(back.a[3].image == a.a[3].image);
    CHECK(back.b[5].mask == a.b[5].mask);
    CHECK(back.b[5].id == "B005");

    for (const auto* set : {&a.a, &a.b}) {
        for (const SyntheticCase& c : *set) {
            double area = 0.0;
            for (float v : c.mask.data()) area += v;
            CHECK(std::abs(area - M_PI * c.params.ra * c.params.rb) <= 0.03 * M_PI * c.params.ra * c.params.rb);
            CHECK(c.mask == rasterize_ellipse(64, c.params));
            for (float v : c.image.data()) CHECK((v >= 0.0f && v <= 1.0f));
        }
    }
    CHECK(a.b[0].params.ra >= 8.0 * 1.4);
    CHECK(bhattacharyya_distance(intensity_histogram(images_of(a.a)), intensity_histogram(images_of(a.b))) > 0.3);
    CHECK_THROWS(generate_dataset(0, 1));
    DatasetSpec bad;
    bad.radius_min = 20;
    bad.radius_max = 10;
    CHECK_THROWS(generate_dataset(2, 1, bad));
}

TEST_CASE("mask metrics") {
    const Image2D m = mask_of(8, 8, 2, 5, 2, 6);
    const MaskMetrics same = mask_metrics(m, m);
    CHECK(same.dice == 1.0);
    CHECK(same.miou == 1.0);
    CHECK(same.accuracy == 1.0);

    // |A| = |B| = 3, |A n B| = 2: intersection is half the union
    Image2D a(1, 4), b(1, 4);
    a(0, 0) = a(0, 1) = a(0, 2) = 1.0f;
    b(0, 1) = b(0, 2) = b(0, 3) = 1.0f;
    const MaskMetrics h = mask_metrics(a, b);
    CHECK(h.dice == doctest::Approx(2.0 / 3.0));
    CHECK(h.iou == doctest::Approx(0.5));

    CHECK(mask_metrics(Image2D(3, 3), Image2D(3, 3)).dice == 1.0);
    CHECK_THROWS(mask_metrics(a, Image2D(2, 2)));
}

TEST_CASE("segmenter") {
    const Dataset d = generate_dataset(30, 3);
    const Split b = split_cases(d.b, 0.2);
    const SegModel seg = fit_segmenter(b.train);
    std::vector<MaskMetrics> clean, raw;
    for (const SyntheticCase& c : b.test) clean.push_back(mask_metrics(segment(seg, c.image), c.mask));
    for (const SyntheticCase& c : d.a) raw.push_back(mask_metrics(segment(seg, c.image), c.mask));
    CHECK(mean_metrics(clean).dice >= 0.95);
    CHECK(mean_metrics(raw).dice < mean_metrics(clean).dice - 0.3);
    CHECK(segment(seg, d.a[0].image) == segment(seg, d.a[0].image));
    CHECK_THROWS(fit_segmenter({}));

    const SegModel net = fit_segmenter(b.train, SegmenterKind::Net, 4, 150);
    std::vector<MaskMetrics> nm;
    for (const SyntheticCase& c : b.test) nm.push_back(mask_metrics(segment(net, c.image), c.mask));
    CHECK(mean_metrics(nm).dice >= 0.9);
}

TEST_CASE("largest component") {
    Image2D m = mask_of(10, 10, 1, 5, 1, 5);
    m(8, 8) = 1.0f;
    CHECK(largest_component(m) == mask_of(10, 10, 1, 5, 1, 5));
    CHECK(largest_component(Image2D(3, 3)) == Image2D(3, 3));
}

TEST_CASE("diffusion training") {
    PipelineConfig cfg = tiny_config();
    cfg.image_size = 32;
    const Dataset d = generate_dataset(6, 2, DatasetSpec::for_size(32));
    const std::vector<Image2D> targets = images_of(d.b);

    // zero-init output: first loss is the folded-normal mean
    cfg.diffusion_steps = 1;
    cfg.batch_size = 8;
    CHECK(train_diffusion(targets, cfg).losses[0] == doctest::Approx(std::sqrt(2.0 / M_PI)).epsilon(0.02));

    // resume reproduces the trajectory exactly
    cfg = tiny_config();
    const std::vector<Image2D> small = images_of(generate_dataset(6, 2, DatasetSpec::for_size(16)).b);
    const TrainResult full = train_diffusion(small, cfg);
    TrainOptions first;
    first.stop_after = 3;
    const TrainResult part = train_diffusion(small, cfg, first);
    const Checkpoint reread = decode_checkpoint(encode_checkpoint(part.checkpoint));
    TrainOptions rest;
    rest.resume = &reread;
    const TrainResult tail = train_diffusion(small, cfg, rest);
    std::vector<double> joined = part.losses;
    joined.insert(joined.end(), tail.losses.begin(), tail.losses.end());
    CHECK(joined == full.losses);
    CHECK(tail.checkpoint.params == full.checkpoint.params);
    CHECK(levels_from_meta(full.checkpoint).size() == 2);
}

TEST_CASE("deformation training resumes exactly and rejects a mismatched schedule") {
    const PipelineConfig cfg = tiny_config();
    const Dataset d = generate_dataset(6, 4, DatasetSpec::for_size(16));
    const Checkpoint diff = train_diffusion(images_of(d.b), cfg).checkpoint;
    const PairSource pairs = make_pairs(images_of(d.a), images_of(d.b), cfg);
    const TrainResult full = train_deformation(pairs, diff, cfg);
    TrainOptions first;
    first.stop_after = 2;
    const TrainResult part = train_deformation(pairs, diff, cfg, first);
    TrainOptions rest;
    rest.resume = &part.checkpoint;
    const TrainResult tail = train_deformation(pairs, diff, cfg, rest);
    CHECK(tail.checkpoint.params == full.checkpoint.params);

    PipelineConfig other = cfg;
    other.k_steps = 20;
    CHECK_THROWS(train_deformation(pairs, diff, other));
}

TEST_CASE("untrained models translate with the identity field") {
    const PipelineConfig cfg = tiny_config();
    const Dataset d = generate_dataset(6, 4, DatasetSpec::for_size(16));
    TrainOptions none;
    none.stop_after = 0;
    const Checkpoint diff = train_diffusion(images_of(d.b), cfg, none).checkpoint;
    const Checkpoint reg = train_deformation(make_pairs(images_of(d.a), images_of(d.b), cfg), diff, cfg, none).checkpoint;
    const Translator models{cfg, diff, reg};
    const TraceBundle b = translate("A000", d.a[0].image, models, 5);
    CHECK(b.forward_field == DeformationField::identity(16, 16));
    CHECK(b.inverse_field == DeformationField::identity(16, 16));
    CHECK(b.structure_deformed == b.structure_source);
    CHECK(b.translated.same_shape(b.source));

    const fs::path d1 = fresh_dir("bundle_a"), d2 = fresh_dir("bundle_b");
    write_bundle(d1 / "A000", b);
    write_bundle(d2 / "A000", translate("A000", d.a[0].image, models, 5));
    for (const auto& f : fs::directory_iterator(d1 / "A000")) {
        CHECK(read_file_bytes(f.path()) == read_file_bytes(d2 / "A000" / f.path().filename()));
    }

    const Translator swapped{cfg, reg, diff};
    try {
        translate("A000", d.a[0].image, swapped, 5);
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "checkpoints");
    }
    CHECK_THROWS_AS(translate("A000", Image2D(16, 16, 0.5f), models, 5), StageError);
}

TEST_CASE("bundles verify checksums and diagnostics") {
    TraceBundle b;
    b.case_id = "X1";
    Rng rng(2);
    for (Image2D* img : {&b.source, &b.translated, &b.structure_source, &b.structure_deformed}) {
        *img = Image2D(16, 16);
        for (float& v : img->data()) v = static_cast<float>(rng.uniform());
    }
    VectorField2D v(16, 16);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) v.ux()(r, c) = static_cast<float>(std::sin(r / 4.0));
    b.forward_field = integrate(v);
    b.inverse_field = inverse(v);
    const fs::path dir = fresh_dir("bundle_c") / "X1";
    write_bundle(dir, b);
    const TraceBundle back = read_bundle(dir);
    CHECK(back.forward_field == b.forward_field);
    CHECK(back.case_id == "X1");
    CHECK(back.meta.count("diag.residual_max") == 1);

    auto bytes = read_file_bytes(dir / "translated.pgm");
    bytes.back() ^= 1;
    write_file_bytes(dir / "translated.pgm", bytes);
    CHECK_THROWS_AS(read_bundle(dir), BundleError);

    TraceBundle bad = b;
    bad.inverse_field = b.forward_field;
    CHECK_THROWS_AS(write_bundle(fresh_dir("bundle_d") / "X1", bad), BundleError);
    CHECK_FALSE(fs::exists(fresh_dir("bundle_d") / "X1"));
}

TEST_CASE("evaluation with ground truth as prediction scores 1") {
    const Dataset d = generate_dataset(4, 6);
    SegModel seg = fit_segmenter(d.b);
    std::vector<TraceBundle> bundles;
    std::map<std::string, Image2D> masks;
    for (const SyntheticCase& c : d.b) {
        TraceBundle b;
        b.case_id = c.id;
        b.source = c.image;
        b.translated = c.image;
        b.forward_field = b.inverse_field = DeformationField::identity(64, 64);
        bundles.push_back(b);
        // the segmenter's own output on the image stands in for the ground truth
        masks[c.id] = segment(seg, c.image);
    }
    const EvaluationReport r = evaluate_traceability(bundles, seg, masks, images_of(d.b));
    CHECK(r.traced.dice == 1.0);
    CHECK(r.traced.miou == 1.0);
    CHECK(r.traced.accuracy == 1.0);
    CHECK(r.bhattacharyya_translated == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.format().find("aggregate traced") != std::string::npos);

    masks.erase(d.b[0].id);
    CHECK_THROWS(evaluate_traceability(bundles, seg, masks, images_of(d.b)));
    CHECK_THROWS(evaluate_traceability({}, seg, masks, images_of(d.b)));
}

TEST_CASE("tiny pipeline run is deterministic") {
    const PipelineConfig cfg = tiny_config();
    const fs::path a = fresh_dir("run_a"), b = fresh_dir("run_b");
    const RunArtifacts ra = run_pipeline(cfg, a);
    run_pipeline(cfg, b);
    CHECK(read_file_bytes(a / "report.txt") == read_file_bytes(b / "report.txt"));
    for (const auto& e : fs::recursive_directory_iterator(a / "bundles")) {
        if (e.is_regular_file()) CHECK(read_file_bytes(e.path()) == read_file_bytes(b / fs::relative(e.path(), a)));
    }
    CHECK(ra.bundles.size() == 2);
    CHECK(read_bundles(a / "bundles").size() == 2);
}
